//! Latent exploration decoding.
//!
//! One step runs: temperature softmax on each of the last `d` layer rows,
//! gather every row at the final layer's top-k ids (flooring at `eps`),
//! accumulate from the final row downwards, pick the accumulated row with the
//! largest entropy, then flip a gate that explores with probability
//! `1 - top1(final)`.
//!
//! Rows are ordered final-first: row 0 is the last layer, row `i` is `i`
//! layers below it. Cumulative sums therefore run over row prefixes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LedError, Result};
use crate::prob::{
    categorical_from_uniform, entropy, nucleus_len, temperature_softmax, top_k_select, LogitRow,
    ProbRow, RandomStream,
};

/// Uniform draws consumed by [`led_step`], whatever the branch.
pub const LED_DRAWS_PER_STEP: u64 = 2;

/// Layerwise logits for one decode step, final layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLogits {
    layers: Vec<LogitRow>,
    think: bool,
    step_id: u64,
}

impl StepLogits {
    pub fn new(layers: Vec<LogitRow>, think: bool, step_id: u64) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(LedError::Shape(
                "a step needs at least the final layer".into(),
            ));
        };
        let vocab = first.len();
        if let Some(i) = layers.iter().position(|r| r.len() != vocab) {
            return Err(LedError::Shape(format!(
                "layer row {i} has {} entries, row 0 has {vocab}",
                layers[i].len()
            )));
        }
        Ok(Self {
            layers,
            think,
            step_id,
        })
    }

    pub fn layers(&self) -> &[LogitRow] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn vocab(&self) -> usize {
        self.layers[0].len()
    }

    pub fn think(&self) -> bool {
        self.think
    }

    pub fn step_id(&self) -> u64 {
        self.step_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedConfig {
    pub temperature: f64,
    pub k: usize,
    pub depth: usize,
    /// Floor on gathered probabilities, applied before accumulation.
    pub eps: f64,
    /// Floor inside the entropy logarithm.
    pub entropy_clamp: f64,
    /// Explore only inside the thinking span.
    pub think_only: bool,
    /// When off, every gated step explores.
    pub exploit_gate: bool,
    /// Renormalize each gathered row before accumulation.
    pub renorm_topk: bool,
    /// Pass latent hidden states through the final norm. Read by the toy
    /// model when it produces early-exit rows; the sampler ignores it.
    pub latent_layernorm: bool,
    /// Nucleus cut on the final row, applied before taking top-k.
    pub top_p: Option<f64>,
}

impl Default for LedConfig {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            k: 8,
            depth: 8,
            eps: 1e-6,
            entropy_clamp: 1e-9,
            think_only: true,
            exploit_gate: true,
            renorm_topk: false,
            latent_layernorm: false,
            top_p: None,
        }
    }
}

impl LedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if self.k == 0 {
            return invalid("k must be at least 1");
        }
        if self.depth == 0 {
            return invalid("depth must be at least 1");
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return invalid(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.entropy_clamp.is_finite() && self.entropy_clamp > 0.0) {
            return invalid(format!(
                "entropy_clamp must be positive, got {}",
                self.entropy_clamp
            ));
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return invalid(format!("top_p must lie in (0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// Layer posteriors gathered at the final layer's top-k ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredStack {
    topk_ids: Vec<usize>,
    /// `probs[i][j] = p^{L-i}(topk_ids[j])`, floored at eps.
    probs: Vec<Vec<f64>>,
    /// Row 0 before flooring; the exploitation branch samples from it.
    final_topk: Vec<f64>,
}

impl FilteredStack {
    /// Builds a stack from rows that were already gathered at `topk_ids`.
    pub fn from_gathered(topk_ids: Vec<usize>, gathered: Vec<Vec<f64>>, eps: f64) -> Result<Self> {
        let k = topk_ids.len();
        if k == 0 || gathered.is_empty() {
            return Err(LedError::Shape("empty filtered stack".into()));
        }
        for (i, row) in gathered.iter().enumerate() {
            if row.len() != k {
                return Err(LedError::Shape(format!(
                    "gathered row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(LedError::DegenerateInput(format!(
                    "gathered row {i} holds {v}"
                )));
            }
        }
        let final_topk = gathered[0].clone();
        if final_topk.iter().sum::<f64>() <= 0.0 {
            return Err(LedError::DegenerateInput(
                "final top-k has zero mass".into(),
            ));
        }
        let probs = gathered
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.max(eps)).collect())
            .collect();
        Ok(Self {
            topk_ids,
            probs,
            final_topk,
        })
    }

    pub fn topk_ids(&self) -> &[usize] {
        &self.topk_ids
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn final_topk(&self) -> &[f64] {
        &self.final_topk
    }

    pub fn depth(&self) -> usize {
        self.probs.len()
    }

    pub fn k(&self) -> usize {
        self.topk_ids.len()
    }
}

/// Gathers every row at the top-`k` ids of row 0.
pub fn filter_topk(posteriors: &[ProbRow], k: usize, eps: f64) -> Result<FilteredStack> {
    let Some(final_row) = posteriors.first() else {
        return Err(LedError::Shape("no posteriors".into()));
    };
    let top = top_k_select(final_row.values(), k)?;
    let gathered = posteriors
        .iter()
        .map(|row| {
            if row.len() != final_row.len() {
                return Err(LedError::Shape("posterior rows differ in length".into()));
            }
            Ok(top.ids.iter().map(|&id| row.values()[id]).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    FilteredStack::from_gathered(top.ids, gathered, eps)
}

/// Row `i` is the normalized sum of rows `0..=i` of the stack.
pub fn aggregate_cumulative(stack: &FilteredStack, renorm_topk: bool) -> Vec<Vec<f64>> {
    let k = stack.k();
    let mut running = vec![0.0; k];
    let mut out = Vec::with_capacity(stack.depth());
    for row in stack.probs() {
        if renorm_topk {
            let s: f64 = row.iter().sum();
            running
                .iter_mut()
                .zip(row)
                .for_each(|(acc, v)| *acc += v / s);
        } else {
            running.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
        }
        let total: f64 = running.iter().sum();
        out.push(running.iter().map(|v| v / total).collect());
    }
    out
}

/// The max-entropy aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub depth: usize,
    pub dist: Vec<f64>,
    pub entropies: Vec<f64>,
}

/// Picks the aggregate with the largest entropy; ties go to the smallest
/// depth index.
pub fn select_exploration(aggregates: &[Vec<f64>], entropy_clamp: f64) -> Exploration {
    let entropies: Vec<f64> = aggregates
        .iter()
        .map(|row| entropy(row, entropy_clamp))
        .collect();
    let mut best = 0;
    for (i, &h) in entropies.iter().enumerate().skip(1) {
        if h > entropies[best] {
            best = i;
        }
    }
    Exploration {
        depth: best,
        dist: aggregates[best].clone(),
        entropies,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Explore,
    Exploit,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Explore => "explore",
            Branch::Exploit => "exploit",
        }
    }
}

/// Explores with probability `1 - final_top1` (always, when the exploit
/// gate is off). Consumes one draw either way.
pub fn decide_branch(final_top1: f64, rng: &mut RandomStream, config: &LedConfig) -> Branch {
    let u = rng.next_uniform();
    if !config.exploit_gate || u < 1.0 - final_top1.clamp(0.0, 1.0) {
        Branch::Explore
    } else {
        Branch::Exploit
    }
}

/// The exact token law of one LED step, before any draw.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLaw {
    pub topk_ids: Vec<usize>,
    pub exploration: Exploration,
    /// Final top-k renormalized, floors not applied.
    pub exploit_dist: Vec<f64>,
    pub final_top1: f64,
    /// Whether the gate is consulted at all (false outside the thinking span
    /// when `think_only` is set).
    pub gated: bool,
    /// Probability that the exploration branch is taken.
    pub gate_prob: f64,
    pub requested_depth: usize,
    pub used_depth: usize,
}

impl StepLaw {
    /// Mixture over the top-k slots.
    pub fn slot_probs(&self) -> Vec<f64> {
        let g = self.gate_prob;
        self.exploration
            .dist
            .iter()
            .zip(&self.exploit_dist)
            .map(|(e, x)| g * e + (1.0 - g) * x)
            .collect()
    }

    /// Probability of emitting `token`; zero outside the candidate set.
    pub fn token_prob(&self, token: usize) -> f64 {
        self.topk_ids
            .iter()
            .position(|&id| id == token)
            .map_or(0.0, |slot| self.slot_probs()[slot])
    }
}

/// Exact law for a stack that is already filtered.
pub fn law_from_stack(
    stack: &FilteredStack,
    final_top1: f64,
    think: bool,
    requested_depth: usize,
    config: &LedConfig,
) -> StepLaw {
    let aggregates = aggregate_cumulative(stack, config.renorm_topk);
    let exploration = select_exploration(&aggregates, config.entropy_clamp);
    let final_sum: f64 = stack.final_topk().iter().sum();
    let exploit_dist = stack.final_topk().iter().map(|v| v / final_sum).collect();
    let gated = think || !config.think_only;
    let gate_prob = match (gated, config.exploit_gate) {
        (false, _) => 0.0,
        (true, false) => 1.0,
        (true, true) => 1.0 - final_top1.clamp(0.0, 1.0),
    };
    StepLaw {
        topk_ids: stack.topk_ids().to_vec(),
        exploration,
        exploit_dist,
        final_top1,
        gated,
        gate_prob,
        requested_depth,
        used_depth: stack.depth(),
    }
}

/// Computes the exact law of [`led_step`] for a step.
pub fn step_law(step: &StepLogits, config: &LedConfig) -> Result<StepLaw> {
    config.validate()?;
    let used = config.depth.min(step.depth());
    let posteriors = step.layers()[..used]
        .iter()
        .map(|row| temperature_softmax(row, config.temperature))
        .collect::<Result<Vec<_>>>()?;
    let mut k = config.k;
    if k > step.vocab() {
        return invalid(format!("k = {k} exceeds vocabulary size {}", step.vocab()));
    }
    if let Some(top_p) = config.top_p {
        let ranked = top_k_select(posteriors[0].values(), k)?;
        k = k.min(nucleus_len(&ranked.probs, top_p));
    }
    let stack = filter_topk(&posteriors, k, config.eps)?;
    let top1 = stack.final_topk()[0];
    Ok(law_from_stack(
        &stack,
        top1,
        step.think(),
        config.depth,
        config,
    ))
}

/// Per-step record of what LED did.
#[derive(Debug, Clone, PartialEq)]
pub struct LedDecision {
    pub step_id: u64,
    pub think: bool,
    pub token_id: usize,
    pub branch: Branch,
    /// 0 is the final-only aggregate.
    pub selected_depth: usize,
    pub gated: bool,
    pub gate_prob: f64,
    pub entropies: Vec<f64>,
    pub final_top1: f64,
    pub topk_ids: Vec<usize>,
    pub explore_dist: Vec<f64>,
    pub exploit_dist: Vec<f64>,
    pub warning: Option<String>,
}

/// Draws from a law: the first uniform picks the slot, the second drives the
/// gate. Both are consumed on every step.
pub fn sample_law(
    law: StepLaw,
    step_id: u64,
    think: bool,
    config: &LedConfig,
    rng: &mut RandomStream,
) -> LedDecision {
    let u_token = rng.next_uniform();
    let branch = if law.gated {
        decide_branch(law.final_top1, rng, config)
    } else {
        rng.next_uniform();
        Branch::Exploit
    };
    let dist = match branch {
        Branch::Explore => &law.exploration.dist,
        Branch::Exploit => &law.exploit_dist,
    };
    let slot = categorical_from_uniform(dist, u_token)
        .expect("aggregates are strictly positive by construction");
    let warning = (law.used_depth < law.requested_depth).then(|| {
        format!(
            "depth {} clamped to {} available layers",
            law.requested_depth, law.used_depth
        )
    });
    LedDecision {
        step_id,
        think,
        token_id: law.topk_ids[slot],
        branch,
        selected_depth: law.exploration.depth,
        gated: law.gated,
        gate_prob: law.gate_prob,
        entropies: law.exploration.entropies,
        final_top1: law.final_top1,
        topk_ids: law.topk_ids,
        explore_dist: law.exploration.dist,
        exploit_dist: law.exploit_dist,
        warning,
    }
}

pub fn led_step(
    step: &StepLogits,
    config: &LedConfig,
    rng: &mut RandomStream,
) -> Result<LedDecision> {
    let law = step_law(step, config)?;
    Ok(sample_law(law, step.step_id(), step.think(), config, rng))
}

/// Runs [`led_step`] over a sequence of steps sharing one stream.
pub fn led_decode(
    steps: &[StepLogits],
    config: &LedConfig,
    rng: &mut RandomStream,
) -> Result<(Vec<usize>, Vec<LedDecision>)> {
    let decisions = steps
        .iter()
        .map(|s| led_step(s, config, rng))
        .collect::<Result<Vec<_>>>()?;
    let tokens = decisions.iter().map(|d| d.token_id).collect();
    Ok((tokens, decisions))
}
