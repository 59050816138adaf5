//! Probability and randomness primitives shared by every sampler.
//!
//! Everything here works in `f64`, whatever precision the logits arrived in.

use std::cmp::Ordering;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, LedError, Result};

/// Floor applied inside the logarithm of [`entropy`].
pub const DEFAULT_ENTROPY_CLAMP: f64 = 1e-9;

/// Tolerance on `|sum - 1|` for rows flagged as normalized.
pub const NUCLEUS_TOL: f64 = 1e-12;

pub const NORMALIZATION_TOL: f64 = 1e-9;

/// One row of logits over the vocabulary.
///
/// Entries are finite or `-inf`; `-inf` marks a token that can never be
/// emitted (it gets exactly zero mass after softmax). `NaN` and `+inf` are
/// rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitRow(Vec<f64>);

impl LogitRow {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LedError::Shape("empty logit row".into()));
        }
        if let Some(i) = values
            .iter()
            .position(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(LedError::DegenerateInput(format!(
                "logit {i} is {}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A row of non-negative weights, optionally known to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRow {
    values: Vec<f64>,
    normalized: bool,
}

impl ProbRow {
    /// Wraps a distribution; fails unless entries are non-negative and sum to
    /// one within [`NORMALIZATION_TOL`].
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        check_weights(&values)?;
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LedError::DegenerateInput(format!(
                "row sums to {sum}, expected 1"
            )));
        }
        Ok(Self {
            values,
            normalized: true,
        })
    }

    pub fn unnormalized(values: Vec<f64>) -> Result<Self> {
        check_weights(&values)?;
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Divides by the row sum.
    pub fn renormalized(&self) -> Result<Self> {
        let sum: f64 = self.values.iter().sum();
        if sum <= 0.0 {
            return Err(LedError::DegenerateInput("row has zero mass".into()));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / sum).collect(),
            normalized: true,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_weights(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(LedError::Shape("empty probability row".into()));
    }
    match values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(i) => Err(LedError::DegenerateInput(format!(
            "weight {i} is {}",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// `softmax(logits / tau)`, computed with the max subtracted first.
pub fn temperature_softmax(logits: &LogitRow, tau: f64) -> Result<ProbRow> {
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("temperature must be positive, got {tau}"));
    }
    let max = logits
        .values()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(LedError::DegenerateInput("every logit is -inf".into()));
    }
    let mut exps: Vec<f64> = logits
        .values()
        .iter()
        .map(|&z| ((z - max) / tau).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    for e in exps.iter_mut() {
        *e /= sum;
    }
    Ok(ProbRow {
        values: exps,
        normalized: true,
    })
}

/// Shannon entropy in nats. Entries below `clamp` are floored inside the
/// logarithm only, so zero entries contribute nothing.
pub fn entropy(p: &[f64], clamp: f64) -> f64 {
    -p.iter().map(|&x| x * x.max(clamp).ln()).sum::<f64>()
}

/// Orders by descending probability, then ascending id.
pub fn rank_order(p: &[f64], a: usize, b: usize) -> Ordering {
    p[b].total_cmp(&p[a]).then(a.cmp(&b))
}

/// The `k` most probable entries of a row, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub ids: Vec<usize>,
    pub probs: Vec<f64>,
}

pub fn top_k_select(p: &[f64], k: usize) -> Result<TopK> {
    let n = p.len();
    if k == 0 || k > n {
        return invalid(format!("top-k needs 1 <= k <= {n}, got {k}"));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    if k < n {
        ids.select_nth_unstable_by(k - 1, |&a, &b| rank_order(p, a, b));
        ids.truncate(k);
    }
    ids.sort_unstable_by(|&a, &b| rank_order(p, a, b));
    let probs = ids.iter().map(|&i| p[i]).collect();
    Ok(TopK { ids, probs })
}

/// Length of the shortest prefix of `sorted_desc` whose mass reaches
/// `top_p`. The entry that crosses the threshold is included; `top_p >= 1`
/// keeps everything. Sums within `NUCLEUS_TOL` of the threshold count as
/// reaching it, so round-off from the softmax does not pull in an extra token.
pub fn nucleus_len(sorted_desc: &[f64], top_p: f64) -> usize {
    if top_p >= 1.0 {
        return sorted_desc.len();
    }
    let mut cumulative = 0.0;
    for (i, &p) in sorted_desc.iter().enumerate() {
        cumulative += p;
        if cumulative + NUCLEUS_TOL >= top_p {
            return i + 1;
        }
    }
    sorted_desc.len()
}

/// Inverse-CDF lookup of `u` in `[0, 1)` against unnormalized weights.
pub fn categorical_from_uniform(weights: &[f64], u: f64) -> Result<usize> {
    check_weights(weights)?;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(LedError::DegenerateInput("all weights are zero".into()));
    }
    let target = u * total;
    let mut cumulative = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cumulative += w;
        if cumulative > target {
            return Ok(i);
        }
    }
    // rounding left `target` at or past the final cumulative sum
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

/// Draws an index with probability `weights[i] / sum(weights)` using exactly
/// one uniform from `rng`.
pub fn sample_categorical(weights: &[f64], rng: &mut RandomStream) -> Result<usize> {
    check_weights(weights)?;
    if weights.iter().all(|&w| w == 0.0) {
        return Err(LedError::DegenerateInput("all weights are zero".into()));
    }
    categorical_from_uniform(weights, rng.next_uniform())
}

/// Counter-based random stream keyed by `(seed, stream_id, counter)`.
///
/// Draw `counter` of a stream is a pure function of the triple, so any
/// draw can be replayed without replaying its predecessors, and streams
/// with different ids are independent ChaCha8 streams under the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
        }
    }

    pub fn with_counter(self, counter: u64) -> Self {
        Self { counter, ..self }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// The 64-bit word at `(seed, stream_id, counter)`.
    pub fn word_at(seed: u64, stream_id: u64, counter: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        rng.set_word_pos(u128::from(counter) * 2);
        rng.next_u64()
    }

    pub fn next_u64(&mut self) -> u64 {
        let word = Self::word_at(self.seed, self.stream_id, self.counter);
        self.counter += 1;
        word
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }
}
