//! Layerwise statistics over recorded posteriors and pass@n metrics.
//!
//! Layer traces are indexed bottom-up: `trace[step][layer]` is a full
//! vocabulary distribution, and the last layer of each step is the final one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LedError, Result};
use crate::led::{Branch, LedDecision};
use crate::prob::{entropy, top_k_select, DEFAULT_ENTROPY_CLAMP};

/// Per-step posteriors for every layer, bottom-up.
pub type LayerTrace = Vec<Vec<f64>>;

fn check_traces(traces: &[LayerTrace]) -> Result<(usize, usize)> {
    let first = traces
        .first()
        .and_then(|t| t.first())
        .ok_or_else(|| LedError::DegenerateInput("no posteriors to analyse".into()))?;
    let layers = traces[0].len();
    let vocab = first.len();
    if vocab == 0 {
        return Err(LedError::Shape("empty posterior row".into()));
    }
    for (s, t) in traces.iter().enumerate() {
        if t.len() != layers || t.iter().any(|r| r.len() != vocab) {
            return Err(LedError::Shape(format!(
                "step {s} does not match the {layers} x {vocab} layout of step 0"
            )));
        }
    }
    Ok((layers, vocab))
}

/// Mean entropy per layer in nats, or divided by `ln V` when `normalize`.
pub fn entropy_by_layer(traces: &[LayerTrace], normalize: bool) -> Result<Vec<f64>> {
    let (layers, vocab) = check_traces(traces)?;
    if normalize && vocab < 2 {
        return invalid("normalized entropy needs a vocabulary of at least 2");
    }
    let scale = if normalize { (vocab as f64).ln() } else { 1.0 };
    let n = traces.len() as f64;
    Ok((0..layers)
        .map(|l| {
            traces
                .iter()
                .map(|t| entropy(&t[l], DEFAULT_ENTROPY_CLAMP))
                .sum::<f64>()
                / n
                / scale
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageMatrix {
    pub k_values: Vec<usize>,
    /// `ratios[i][l]` for `k_values[i]` and layer `l` (bottom-up).
    pub ratios: Vec<Vec<f64>>,
}

/// Mean mass each layer places on the final layer's top-k ids.
pub fn topk_coverage(traces: &[LayerTrace], k_set: &[usize]) -> Result<CoverageMatrix> {
    let (layers, vocab) = check_traces(traces)?;
    if let Some(&k) = k_set.iter().find(|&&k| k == 0 || k > vocab) {
        return invalid(format!("coverage k = {k} outside 1..={vocab}"));
    }
    let mut ratios = vec![vec![0.0; layers]; k_set.len()];
    for t in traces {
        let order = top_k_select(&t[layers - 1], vocab)?.ids;
        for (i, &k) in k_set.iter().enumerate() {
            for (l, row) in t.iter().enumerate() {
                ratios[i][l] += order[..k].iter().map(|&id| row[id]).sum::<f64>();
            }
        }
    }
    let n = traces.len() as f64;
    ratios.iter_mut().flatten().for_each(|r| *r /= n);
    Ok(CoverageMatrix {
        k_values: k_set.to_vec(),
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGrid {
    pub temperatures: Vec<f64>,
    pub n_values: Vec<usize>,
    /// `accuracy[t][n]`.
    pub accuracy: Vec<Vec<f64>>,
}

impl AccuracyGrid {
    pub fn new(
        temperatures: Vec<f64>,
        n_values: Vec<usize>,
        accuracy: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if accuracy.len() != temperatures.len()
            || accuracy.iter().any(|r| r.len() != n_values.len())
        {
            return Err(LedError::Shape(format!(
                "accuracy grid must be {} x {}",
                temperatures.len(),
                n_values.len()
            )));
        }
        Ok(Self {
            temperatures,
            n_values,
            accuracy,
        })
    }
}

/// Temperature-index coefficient of the least-squares plane
/// `acc ~ a * t_index + b * n_index + c`.
pub fn alpha_slope(grid: &AccuracyGrid) -> Result<f64> {
    let rows = grid.accuracy.len();
    let cols = grid.accuracy.first().map_or(0, Vec::len);
    if grid.accuracy.iter().any(|r| r.len() != cols) {
        return Err(LedError::Shape("accuracy grid is ragged".into()));
    }
    if rows < 2 || cols < 2 {
        return Err(LedError::DegenerateInput(format!(
            "a {rows} x {cols} grid does not determine a plane"
        )));
    }
    if grid.accuracy.iter().flatten().any(|a| !a.is_finite()) {
        return Err(LedError::DegenerateInput(
            "accuracy grid holds a non-finite value".into(),
        ));
    }
    // On a full rectangular grid the centred indices are orthogonal, so the
    // normal equations decouple.
    let t_mean = (rows - 1) as f64 / 2.0;
    let sxx: f64 = (0..rows).map(|i| (i as f64 - t_mean).powi(2)).sum::<f64>() * cols as f64;
    let sxy: f64 = grid
        .accuracy
        .iter()
        .enumerate()
        .map(|(i, r)| (i as f64 - t_mean) * r.iter().sum::<f64>())
        .sum();
    Ok(sxy / sxx)
}

/// `cells[attempt][question]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<bool>>", into = "Vec<Vec<bool>>")]
pub struct CorrectnessMatrix {
    cells: Vec<Vec<bool>>,
}

impl TryFrom<Vec<Vec<bool>>> for CorrectnessMatrix {
    type Error = LedError;

    fn try_from(cells: Vec<Vec<bool>>) -> Result<Self> {
        Self::new(cells)
    }
}

impl From<CorrectnessMatrix> for Vec<Vec<bool>> {
    fn from(m: CorrectnessMatrix) -> Self {
        m.cells
    }
}

impl CorrectnessMatrix {
    pub fn new(cells: Vec<Vec<bool>>) -> Result<Self> {
        let q = cells.first().map_or(0, Vec::len);
        if cells.is_empty() || q == 0 {
            return Err(LedError::Shape("correctness matrix is empty".into()));
        }
        if cells.iter().any(|r| r.len() != q) {
            return Err(LedError::Shape(
                "correctness matrix is not rectangular".into(),
            ));
        }
        Ok(Self { cells })
    }

    /// Builds the matrix from one column of attempt outcomes per question.
    pub fn from_columns(columns: &[Vec<bool>]) -> Result<Self> {
        let a = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != a) {
            return Err(LedError::Shape(
                "questions have different attempt counts".into(),
            ));
        }
        Self::new(
            (0..a)
                .map(|m| columns.iter().map(|c| c[m]).collect())
                .collect(),
        )
    }

    pub fn attempts(&self) -> usize {
        self.cells.len()
    }

    pub fn questions(&self) -> usize {
        self.cells[0].len()
    }

    pub fn get(&self, attempt: usize, question: usize) -> bool {
        self.cells[attempt][question]
    }

    pub fn successes(&self, question: usize) -> usize {
        self.cells.iter().filter(|r| r[question]).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Prefix,
    #[default]
    Unbiased,
}

/// `1 - C(a - c, n) / C(a, n)`.
pub fn unbiased_pass_at_n(a: usize, c: usize, n: usize) -> f64 {
    if a - c < n {
        return 1.0;
    }
    1.0 - (0..n)
        .map(|i| (a - c - i) as f64 / (a - i) as f64)
        .product::<f64>()
}

pub fn pass_at_n(matrix: &CorrectnessMatrix, n: usize, estimator: Estimator) -> Result<f64> {
    let a = matrix.attempts();
    if n == 0 || n > a {
        return invalid(format!("n = {n} outside 1..={a}"));
    }
    let q = matrix.questions();
    let total: f64 = (0..q)
        .map(|j| match estimator {
            Estimator::Prefix => f64::from(u8::from((0..n).any(|m| matrix.get(m, j)))),
            Estimator::Unbiased => unbiased_pass_at_n(a, matrix.successes(j), n),
        })
        .sum();
    Ok(total / q as f64)
}

/// The slice of a decision the statistics read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub think: bool,
    pub gated: bool,
    pub branch: Branch,
    pub selected_depth: usize,
    pub gate_prob: f64,
}

impl From<&LedDecision> for DecisionSummary {
    fn from(d: &LedDecision) -> Self {
        Self {
            think: d.think,
            gated: d.gated,
            branch: d.branch,
            selected_depth: d.selected_depth,
            gate_prob: d.gate_prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionStats {
    pub steps: usize,
    pub gated_steps: usize,
    pub explored_steps: usize,
    /// Explored over gated steps; 0 when nothing was gated.
    pub exploration_rate: f64,
    /// Selected depth over explored steps.
    pub depth_histogram: BTreeMap<usize, usize>,
    /// Mean gate probability over gated steps.
    pub mean_gate_prob: f64,
}

pub fn decision_stats(decisions: &[DecisionSummary]) -> DecisionStats {
    let gated: Vec<_> = decisions.iter().filter(|d| d.gated).collect();
    let explored: Vec<_> = decisions
        .iter()
        .filter(|d| d.branch == Branch::Explore)
        .collect();
    let mut depth_histogram = BTreeMap::new();
    for d in &explored {
        *depth_histogram.entry(d.selected_depth).or_insert(0) += 1;
    }
    let ratio = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
    DecisionStats {
        steps: decisions.len(),
        gated_steps: gated.len(),
        explored_steps: explored.len(),
        exploration_rate: ratio(
            gated.iter().filter(|d| d.branch == Branch::Explore).count() as f64,
            gated.len(),
        ),
        depth_histogram,
        mean_gate_prob: ratio(gated.iter().map(|d| d.gate_prob).sum(), gated.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn uniform_and_one_hot_entropy() {
        let uniform = vec![vec![vec![0.25; 4]; 3]; 2];
        for h in entropy_by_layer(&uniform, true).unwrap() {
            close(h, 1.0, 1e-12);
        }
        let hot = vec![vec![vec![0.0, 1.0, 0.0, 0.0]; 3]];
        for h in entropy_by_layer(&hot, true).unwrap() {
            close(h, 0.0, 1e-12);
        }
    }

    #[test]
    fn hand_averaged_entropy() {
        let traces = vec![vec![vec![0.5, 0.5]], vec![vec![1.0, 0.0]]];
        let h = entropy_by_layer(&traces, false).unwrap();
        close(h[0], 2f64.ln() / 2.0, 1e-12);
    }

    #[test]
    fn entropy_input_errors() {
        assert!(entropy_by_layer(&[], false).is_err());
        assert!(entropy_by_layer(&[vec![vec![1.0]]], true).is_err());
        assert!(entropy_by_layer(&[vec![vec![1.0]]], false).is_ok());
        assert!(entropy_by_layer(&[vec![vec![0.5, 0.5]], vec![vec![1.0]]], false).is_err());
    }

    #[test]
    fn coverage_examples() {
        let trace = vec![vec![vec![0.1, 0.2, 0.6, 0.1], vec![0.5, 0.3, 0.1, 0.1]]];
        let m = topk_coverage(&trace, &[2, 4]).unwrap();
        close(m.ratios[0][0], 0.3, 1e-12);
        close(m.ratios[0][1], 0.8, 1e-12);
        close(m.ratios[1][0], 1.0, 1e-12);
        assert!(topk_coverage(&trace, &[5]).is_err());
        assert!(topk_coverage(&trace, &[0]).is_err());
    }

    #[test]
    fn planar_and_constant_grids() {
        let plane: Vec<Vec<f64>> = (0..3)
            .map(|t| {
                (0..5)
                    .map(|n| 50.0 + 2.0 * t as f64 + 3.0 * n as f64)
                    .collect()
            })
            .collect();
        let temps = vec![0.6, 1.0, 1.4];
        let ns = vec![1, 2, 4, 8, 16];
        let g = AccuracyGrid::new(temps.clone(), ns.clone(), plane).unwrap();
        close(alpha_slope(&g).unwrap(), 2.0, 1e-12);
        let flat = AccuracyGrid::new(temps, ns, vec![vec![7.0; 5]; 3]).unwrap();
        close(alpha_slope(&flat).unwrap(), 0.0, 1e-12);
        let thin = AccuracyGrid::new(vec![1.0], vec![1, 2, 3], vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(alpha_slope(&thin).is_err());
        assert!(AccuracyGrid::new(vec![1.0], vec![1], vec![vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn pass_at_n_examples() {
        let all = CorrectnessMatrix::new(vec![vec![true; 3]; 16]).unwrap();
        for n in 1..=16 {
            assert_eq!(pass_at_n(&all, n, Estimator::Prefix).unwrap(), 1.0);
            assert_eq!(pass_at_n(&all, n, Estimator::Unbiased).unwrap(), 1.0);
        }
        let col: Vec<bool> = (0..16).map(|m| m % 4 == 3).collect();
        let one = CorrectnessMatrix::from_columns(&[col]).unwrap();
        close(
            pass_at_n(&one, 1, Estimator::Unbiased).unwrap(),
            0.25,
            1e-15,
        );
        assert_eq!(pass_at_n(&one, 1, Estimator::Prefix).unwrap(), 0.0);
        assert_eq!(
            pass_at_n(&one, 16, Estimator::Prefix).unwrap(),
            pass_at_n(&one, 16, Estimator::Unbiased).unwrap()
        );
        assert!(pass_at_n(&one, 17, Estimator::Unbiased).is_err());
        assert!(pass_at_n(&one, 0, Estimator::Prefix).is_err());
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(CorrectnessMatrix::new(vec![vec![true], vec![true, false]]).is_err());
        assert!(CorrectnessMatrix::new(vec![]).is_err());
        let parsed: std::result::Result<CorrectnessMatrix, _> =
            serde_json::from_str("[[true],[false,true]]");
        assert!(parsed.is_err());
    }

    #[test]
    fn decision_rates() {
        let d = |branch, gated| DecisionSummary {
            think: true,
            gated,
            branch,
            selected_depth: 3,
            gate_prob: 0.25,
        };
        let exploit = vec![d(Branch::Exploit, true); 5];
        assert_eq!(decision_stats(&exploit).exploration_rate, 0.0);
        let explore = vec![d(Branch::Explore, true); 5];
        let s = decision_stats(&explore);
        assert_eq!(s.exploration_rate, 1.0);
        assert_eq!(s.depth_histogram[&3], 5);
        close(s.mean_gate_prob, 0.25, 1e-15);
        let s = decision_stats(&[d(Branch::Exploit, false)]);
        assert_eq!((s.steps, s.gated_steps, s.exploration_rate), (1, 0, 0.0));
    }
}
