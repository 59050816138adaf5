//! Reference samplers: standard top-k/top-p sampling, greedy decoding and
//! DoLa-low contrastive decoding.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LedError, Result};
use crate::prob::{
    categorical_from_uniform, nucleus_len, temperature_softmax, top_k_select, LogitRow, ProbRow,
    RandomStream,
};

/// Probability floor inside the logarithms of [`jensen_shannon`] and the
/// DoLa contrast.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub temperature: f64,
    /// Clamped to the vocabulary size.
    pub top_k: usize,
    pub top_p: f64,
    /// Argmax decoding, the zero-temperature limit.
    pub greedy: bool,
    /// Head-set threshold relative to the final top-1 probability.
    pub dola_alpha: f64,
    /// Premature layer candidates as 0-based bottom-up layer indices. Empty
    /// means [`dola_low_layers`] of the model at hand.
    pub dola_candidate_layers: Vec<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            top_k: 20,
            top_p: 0.95,
            greedy: false,
            dola_alpha: 0.1,
            dola_candidate_layers: Vec::new(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if self.top_k == 0 {
            return invalid("top_k must be at least 1");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return invalid(format!("top_p must lie in (0, 1], got {}", self.top_p));
        }
        if !(0.0..=1.0).contains(&self.dola_alpha) {
            return invalid(format!(
                "dola_alpha must lie in [0, 1], got {}",
                self.dola_alpha
            ));
        }
        Ok(())
    }
}

/// A renormalized distribution over a truncated support, most probable
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated {
    pub ids: Vec<usize>,
    pub probs: Vec<f64>,
}

impl Truncated {
    pub fn prob_of(&self, token: usize) -> f64 {
        self.ids
            .iter()
            .position(|&id| id == token)
            .map_or(0.0, |i| self.probs[i])
    }

    fn draw(&self, rng: &mut RandomStream) -> usize {
        let slot = categorical_from_uniform(&self.probs, rng.next_uniform())
            .expect("truncated support has positive mass");
        self.ids[slot]
    }
}

/// Keeps the top `top_k` entries, then the shortest prefix reaching
/// `top_p`, and renormalizes.
pub fn truncate(probs: &[f64], top_k: usize, top_p: f64) -> Result<Truncated> {
    let top = top_k_select(probs, top_k.min(probs.len()))?;
    let keep = nucleus_len(&top.probs, top_p).max(1);
    let mass: f64 = top.probs[..keep].iter().sum();
    if mass <= 0.0 {
        return Err(LedError::DegenerateInput(
            "truncated support has zero mass".into(),
        ));
    }
    Ok(Truncated {
        ids: top.ids[..keep].to_vec(),
        probs: top.probs[..keep].iter().map(|p| p / mass).collect(),
    })
}

/// The exact law of [`standard_sample`].
pub fn standard_distribution(
    final_logits: &LogitRow,
    config: &BaselineConfig,
) -> Result<Truncated> {
    config.validate()?;
    if config.greedy {
        return Ok(Truncated {
            ids: vec![greedy(final_logits)],
            probs: vec![1.0],
        });
    }
    let p = temperature_softmax(final_logits, config.temperature)?;
    truncate(p.values(), config.top_k, config.top_p)
}

/// Temperature softmax, top-k, top-p, renormalize, draw. One uniform is
/// consumed, greedy included.
pub fn standard_sample(
    final_logits: &LogitRow,
    config: &BaselineConfig,
    rng: &mut RandomStream,
) -> Result<usize> {
    Ok(standard_distribution(final_logits, config)?.draw(rng))
}

/// Argmax; ties go to the smaller id.
pub fn greedy(final_logits: &LogitRow) -> usize {
    let v = final_logits.values();
    let mut best = 0;
    for (i, &z) in v.iter().enumerate().skip(1) {
        if z > v[best] {
            best = i;
        }
    }
    best
}

fn kl_to(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .map(|(&a, &b)| a * (a.max(LOG_FLOOR).ln() - b.max(LOG_FLOOR).ln()))
        .sum()
}

/// Jensen-Shannon divergence in nats against the midpoint mixture.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * (kl_to(p, &m) + kl_to(q, &m))
}

/// Every other layer from the lower half of an `n_layers` stack.
pub fn dola_low_layers(n_layers: usize) -> Vec<usize> {
    (0..n_layers / 2).step_by(2).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DolaChoice {
    /// Bottom-up index of the premature layer contrasted against.
    pub premature_layer: usize,
    pub divergences: Vec<(usize, f64)>,
    pub head: Vec<usize>,
    pub dist: Truncated,
}

/// Exact law of [`dola_step`].
///
/// `posteriors` holds one row per layer, bottom-up, with the final layer
/// last.
pub fn dola_distribution(posteriors: &[ProbRow], config: &BaselineConfig) -> Result<DolaChoice> {
    config.validate()?;
    let n = posteriors.len();
    if n < 2 {
        return invalid("DoLa needs the final layer and at least one premature layer");
    }
    let final_row = posteriors[n - 1].values();
    if posteriors.iter().any(|p| p.len() != final_row.len()) {
        return Err(LedError::Shape("posterior rows differ in length".into()));
    }
    let candidates = if config.dola_candidate_layers.is_empty() {
        dola_low_layers(n)
    } else {
        config.dola_candidate_layers.clone()
    };
    if candidates.is_empty() {
        return invalid("no premature layer candidates");
    }
    if let Some(&bad) = candidates.iter().find(|&&l| l >= n - 1) {
        return invalid(format!(
            "premature layer {bad} is not below the final layer {}",
            n - 1
        ));
    }

    let divergences: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&l| (l, jensen_shannon(final_row, posteriors[l].values())))
        .collect();
    let mut chosen = divergences[0];
    for &d in &divergences[1..] {
        if d.1 > chosen.1 {
            chosen = d;
        }
    }
    let premature = posteriors[chosen.0].values();

    let top1 = final_row.iter().copied().fold(0.0, f64::max);
    let head: Vec<usize> = (0..final_row.len())
        .filter(|&v| final_row[v] >= config.dola_alpha * top1)
        .collect();
    let scores: Vec<f64> = head
        .iter()
        .map(|&v| final_row[v].max(LOG_FLOOR).ln() - premature[v].max(LOG_FLOOR).ln())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut contrast = vec![0.0; final_row.len()];
    for (&v, e) in head.iter().zip(&exps) {
        contrast[v] = e / z;
    }
    let dist = truncate(&contrast, config.top_k, config.top_p)?;

    Ok(DolaChoice {
        premature_layer: chosen.0,
        divergences,
        head,
        dist,
    })
}

pub fn dola_step(
    posteriors: &[ProbRow],
    config: &BaselineConfig,
    rng: &mut RandomStream,
) -> Result<usize> {
    Ok(dola_distribution(posteriors, config)?.dist.draw(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits_for(p: &[f64]) -> LogitRow {
        LogitRow::new(p.iter().map(|x| x.ln()).collect()).unwrap()
    }

    fn probs(v: &[f64]) -> ProbRow {
        ProbRow::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn nucleus_example() {
        let cfg = BaselineConfig {
            temperature: 1.0,
            top_k: 4,
            top_p: 0.8,
            ..BaselineConfig::default()
        };
        let t = standard_distribution(&logits_for(&[0.5, 0.3, 0.15, 0.05]), &cfg).unwrap();
        assert_eq!(t.ids, vec![0, 1]);
        assert!((t.probs[0] - 0.625).abs() < 1e-12);
        assert!((t.probs[1] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn top_k_one_is_argmax() {
        let cfg = BaselineConfig {
            top_k: 1,
            top_p: 0.1,
            ..BaselineConfig::default()
        };
        let logits = LogitRow::new(vec![0.2, 1.5, -0.3, 1.4]).unwrap();
        let mut rng = RandomStream::new(0, 0);
        for _ in 0..50 {
            assert_eq!(standard_sample(&logits, &cfg, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn greedy_flag_and_ties() {
        assert_eq!(greedy(&LogitRow::new(vec![1.0, 2.0, 2.0]).unwrap()), 1);
        assert_eq!(greedy(&LogitRow::new(vec![0.0, 0.0, 9.0, 0.0]).unwrap()), 2);
        let cfg = BaselineConfig {
            greedy: true,
            ..BaselineConfig::default()
        };
        let logits = LogitRow::new(vec![0.3, 0.1, 0.7]).unwrap();
        let mut rng = RandomStream::new(1, 0);
        assert_eq!(standard_sample(&logits, &cfg, &mut rng).unwrap(), 2);
        assert_eq!(rng.counter(), 1);
    }

    #[test]
    fn baseline_rejects_bad_config() {
        let logits = LogitRow::new(vec![0.0, 1.0]).unwrap();
        for cfg in [
            BaselineConfig {
                top_p: 0.0,
                ..BaselineConfig::default()
            },
            BaselineConfig {
                top_k: 0,
                ..BaselineConfig::default()
            },
            BaselineConfig {
                temperature: -1.0,
                ..BaselineConfig::default()
            },
        ] {
            assert!(matches!(
                standard_distribution(&logits, &cfg),
                Err(LedError::InvalidConfig(_))
            ));
        }
        let masked = LogitRow::new(vec![f64::NEG_INFINITY; 3]).unwrap();
        assert!(matches!(
            standard_distribution(&masked, &BaselineConfig::default()),
            Err(LedError::DegenerateInput(_))
        ));
    }

    #[test]
    fn jsd_bounds() {
        assert!(jensen_shannon(&[0.3, 0.7], &[0.3, 0.7]).abs() < 1e-15);
        let disjoint = jensen_shannon(&[1.0, 0.0], &[0.0, 1.0]);
        assert!((disjoint - std::f64::consts::LN_2).abs() < 1e-9);
        let a = jensen_shannon(&[0.2, 0.8], &[0.6, 0.4]);
        let b = jensen_shannon(&[0.6, 0.4], &[0.2, 0.8]);
        assert!((a - b).abs() < 1e-15);
    }

    fn dola_cfg(layers: Vec<usize>) -> BaselineConfig {
        BaselineConfig {
            dola_candidate_layers: layers,
            ..BaselineConfig::default()
        }
    }

    #[test]
    fn dola_uniform_over_head_when_layers_agree() {
        let f = probs(&[0.7, 0.2, 0.05, 0.05]);
        let stack = vec![f.clone(), f.clone(), f];
        let choice = dola_distribution(&stack, &dola_cfg(vec![0, 1])).unwrap();
        assert_eq!(choice.head, vec![0, 1]);
        assert_eq!(choice.dist.ids, vec![0, 1]);
        assert!((choice.dist.probs[0] - 0.5).abs() < 1e-12);
        assert_eq!(choice.premature_layer, 0);
        assert!(choice.divergences.iter().all(|(_, d)| d.abs() < 1e-15));
    }

    #[test]
    fn dola_two_token_contrast() {
        let stack = vec![probs(&[0.4, 0.6]), probs(&[0.6, 0.4])];
        let choice = dola_distribution(&stack, &dola_cfg(vec![0])).unwrap();
        // softmax(ln 1.5, ln(2/3)) = 1.5 / (1.5 + 2/3)
        assert!((choice.dist.prob_of(0) - 0.6923).abs() < 1e-4);
        assert!((choice.dist.prob_of(0) - 1.5 / (1.5 + 2.0 / 3.0)).abs() < 1e-12);
        assert!((choice.dist.prob_of(1) - 0.3077).abs() < 1e-4);
    }

    #[test]
    fn dola_picks_most_divergent_layer() {
        let f = probs(&[0.7, 0.2, 0.1]);
        let near = probs(&[0.6, 0.3, 0.1]);
        let far = probs(&[0.1, 0.1, 0.8]);
        let stack = vec![near, far, f];
        let choice = dola_distribution(&stack, &dola_cfg(vec![0, 1])).unwrap();
        assert_eq!(choice.premature_layer, 1);
    }

    #[test]
    fn dola_one_hot_off_head_is_additive_constant() {
        // premature mass sits on token 2, outside the head, so the contrast
        // is log p^L plus a constant on the head
        let f = probs(&[0.6, 0.3, 0.1 * 0.5, 0.1 * 0.5]);
        let stack = vec![probs(&[0.0, 0.0, 1.0, 0.0]), f];
        let cfg = BaselineConfig {
            top_p: 1.0,
            dola_alpha: 0.2,
            ..dola_cfg(vec![0])
        };
        let choice = dola_distribution(&stack, &cfg).unwrap();
        assert_eq!(choice.head, vec![0, 1]);
        assert!((choice.dist.prob_of(0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dola_candidate_validation() {
        let f = probs(&[0.5, 0.5]);
        let stack = vec![f.clone(), f];
        assert!(dola_distribution(&stack, &dola_cfg(vec![1])).is_err());
        assert!(dola_distribution(&stack[..1], &dola_cfg(vec![])).is_err());
    }

    #[test]
    fn dola_low_bucket() {
        assert_eq!(dola_low_layers(40), vec![0, 2, 4, 6, 8, 10, 12, 14, 16, 18]);
        assert_eq!(dola_low_layers(8), vec![0, 2]);
        assert_eq!(dola_low_layers(2), vec![0]);
    }
}
