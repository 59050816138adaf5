//! Memoryless layerwise scenarios with a sharp final layer and flatter
//! latent layers, plus an exact oracle for sampler success probabilities.
//!
//! Every step's layer posteriors are fixed up front, so a sampler's
//! probability of emitting the correct token at a step does not depend on
//! what it emitted before. An attempt succeeds when every branching step
//! emits its correct token; its success probability is the product of those
//! per-step probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::standard_distribution;
use crate::error::{invalid, LedError, Result};
use crate::led::{step_law, Branch, LedConfig, StepLogits};
use crate::prob::{LogitRow, RandomStream};
use crate::sampler::{step_stream, SamplerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub vocab: usize,
    /// Layer rows per step, final first.
    pub depth: usize,
    pub steps: usize,
    pub branching_positions: Vec<usize>,
    /// Fixed answer key; drawn from the rng when absent.
    pub correct_tokens: Option<Vec<usize>>,
    /// Final-layer mass on the correct token at branching steps.
    pub final_correct_mass: f64,
    /// Latent-layer mass on the correct token at branching steps.
    pub latent_correct_mass: f64,
    /// Mass spread evenly over the tokens that are neither correct nor the
    /// distractor at branching steps. The distractor takes the rest.
    pub tail_mass: f64,
    /// Mass on the correct token at every layer of non-branching steps.
    pub off_branch_confidence: f64,
    /// Logits are `temperature * ln p`, so a sampler running at this
    /// temperature sees exactly the designed posteriors.
    pub temperature: f64,
    /// Steps from here on are outside the thinking span.
    pub answer_start: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            vocab: 64,
            depth: 8,
            steps: 20,
            branching_positions: vec![5, 12],
            correct_tokens: None,
            final_correct_mass: 0.05,
            latent_correct_mass: 0.45,
            tail_mass: 0.04,
            off_branch_confidence: 0.99,
            temperature: 0.6,
            answer_start: Some(18),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 3 {
            return invalid("scenario vocabulary needs at least 3 tokens");
        }
        if self.depth == 0 || self.steps == 0 {
            return invalid("depth and steps must be positive");
        }
        let open = |x: f64| x > 0.0 && x < 1.0;
        for (name, m) in [
            ("final_correct_mass", self.final_correct_mass),
            ("latent_correct_mass", self.latent_correct_mass),
            ("tail_mass", self.tail_mass),
            ("off_branch_confidence", self.off_branch_confidence),
        ] {
            if !open(m) {
                return invalid(format!("{name} must lie in (0, 1), got {m}"));
            }
        }
        for m in [self.final_correct_mass, self.latent_correct_mass] {
            if m + self.tail_mass >= 1.0 {
                return invalid("correct mass plus tail mass must stay below 1");
            }
        }
        let tail_each = self.tail_mass / (self.vocab - 2) as f64;
        if self.final_correct_mass <= tail_each
            || 1.0 - self.final_correct_mass - self.tail_mass <= tail_each
        {
            return invalid("correct token and distractor must outrank every tail token");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return invalid("temperature must be positive");
        }
        if let Some(&p) = self.branching_positions.iter().find(|&&p| p >= self.steps) {
            return invalid(format!(
                "branching position {p} is outside 0..{}",
                self.steps
            ));
        }
        if let Some(key) = &self.correct_tokens {
            if key.len() != self.steps || key.iter().any(|&t| t >= self.vocab) {
                return invalid("correct_tokens must hold one in-vocabulary id per step");
            }
        }
        Ok(())
    }
}

/// One step given by explicit per-layer distributions, final first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitStep {
    pub think: bool,
    pub correct: usize,
    pub branching: bool,
    pub layer_probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStep {
    pub logits: StepLogits,
    pub correct: usize,
    pub branching: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub steps: Vec<ScenarioStep>,
}

fn logits_of(p: &[f64], tau: f64) -> Result<LogitRow> {
    LogitRow::new(p.iter().map(|&x| tau * x.ln()).collect())
}

fn branching_row(
    vocab: usize,
    correct: usize,
    distractor: usize,
    correct_mass: f64,
    tail: f64,
) -> Vec<f64> {
    let mut row = vec![tail / (vocab - 2) as f64; vocab];
    row[correct] = correct_mass;
    row[distractor] = 1.0 - correct_mass - tail;
    row
}

fn confident_row(vocab: usize, correct: usize, confidence: f64) -> Vec<f64> {
    let mut row = vec![(1.0 - confidence) / (vocab - 1) as f64; vocab];
    row[correct] = confidence;
    row
}

impl ScenarioTrace {
    /// Builds a trace from explicit distributions; entries of zero become
    /// `-inf` logits.
    pub fn from_explicit(steps: &[ExplicitStep], temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return invalid("temperature must be positive");
        }
        let steps = steps
            .iter()
            .enumerate()
            .map(|(t, s)| {
                let rows = s
                    .layer_probs
                    .iter()
                    .map(|p| logits_of(p, temperature))
                    .collect::<Result<Vec<_>>>()?;
                let logits = StepLogits::new(rows, s.think, t as u64)?;
                if s.correct >= logits.vocab() {
                    return invalid(format!("step {t}: correct token outside the vocabulary"));
                }
                Ok(ScenarioStep {
                    logits,
                    correct: s.correct,
                    branching: s.branching,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { steps })
    }

    pub fn branching_steps(&self) -> impl Iterator<Item = &ScenarioStep> {
        self.steps.iter().filter(|s| s.branching)
    }
}

/// Draws the answer key (and one distractor per branching step) from `rng`
/// and lays out the per-layer posteriors.
pub fn generate_scenario(config: &ScenarioConfig, rng: &mut RandomStream) -> Result<ScenarioTrace> {
    config.validate()?;
    let v = config.vocab;
    let mut steps = Vec::with_capacity(config.steps);
    for t in 0..config.steps {
        let correct = match &config.correct_tokens {
            Some(key) => key[t],
            None => (rng.next_uniform() * v as f64) as usize % v,
        };
        let offset = 1 + (rng.next_uniform() * (v - 1) as f64) as usize % (v - 1);
        let distractor = (correct + offset) % v;
        let branching = config.branching_positions.contains(&t);
        let rows: Vec<Vec<f64>> = (0..config.depth)
            .map(|layer| {
                if !branching {
                    confident_row(v, correct, config.off_branch_confidence)
                } else if layer == 0 {
                    branching_row(
                        v,
                        correct,
                        distractor,
                        config.final_correct_mass,
                        config.tail_mass,
                    )
                } else {
                    branching_row(
                        v,
                        correct,
                        distractor,
                        config.latent_correct_mass,
                        config.tail_mass,
                    )
                }
            })
            .collect();
        let think = config.answer_start.is_none_or(|a| t < a);
        let logits = StepLogits::new(
            rows.iter()
                .map(|p| logits_of(p, config.temperature))
                .collect::<Result<_>>()?,
            think,
            t as u64,
        )?;
        steps.push(ScenarioStep {
            logits,
            correct,
            branching,
        });
    }
    Ok(ScenarioTrace { steps })
}

/// Exact probability that `sampler` emits `token` at `step`.
pub fn exact_token_prob(step: &StepLogits, token: usize, sampler: &SamplerSpec) -> Result<f64> {
    match sampler {
        SamplerSpec::Led(c) => Ok(step_law(step, c)?.token_prob(token)),
        SamplerSpec::Standard(c) => Ok(standard_distribution(&step.layers()[0], c)?.prob_of(token)),
        SamplerSpec::Greedy => Ok(f64::from(u8::from(
            crate::baselines::greedy(&step.layers()[0]) == token,
        ))),
        SamplerSpec::Dola(_) => Err(LedError::UnsupportedSampler(
            "the scenario oracle covers led, standard and greedy".into(),
        )),
    }
}

/// Product over branching steps of the exact correct-token probability.
pub fn exact_success_prob(trace: &ScenarioTrace, sampler: &SamplerSpec) -> Result<f64> {
    trace
        .branching_steps()
        .map(|s| exact_token_prob(&s.logits, s.correct, sampler))
        .product()
}

/// `1 - (1 - p)^n`: at least one success in `n` independent attempts.
pub fn pass_at_n_exact(p: f64, n: usize) -> f64 {
    1.0 - (1.0 - p).powi(n as i32)
}

/// Stream id of attempt `attempt` on question `question`.
pub fn attempt_stream(seed: u64, question: u64, attempt: u64) -> RandomStream {
    RandomStream::new(seed, (question << 32) | attempt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttemptTrace {
    pub tokens: Vec<usize>,
    pub decisions: Vec<crate::led::LedDecision>,
    pub success: bool,
}

/// One attempt: every step sampled from its own slot of `rng`.
pub fn run_attempt(
    trace: &ScenarioTrace,
    sampler: &SamplerSpec,
    rng: RandomStream,
) -> Result<AttemptTrace> {
    let mut tokens = Vec::with_capacity(trace.steps.len());
    let mut decisions = Vec::new();
    let mut success = true;
    for (t, step) in trace.steps.iter().enumerate() {
        let outcome = sampler.sample_step(&step.logits, &mut step_stream(rng, t as u64))?;
        if step.branching && outcome.token != step.correct {
            success = false;
        }
        tokens.push(outcome.token);
        decisions.extend(outcome.decision);
    }
    Ok(AttemptTrace {
        tokens,
        decisions,
        success,
    })
}

/// Per-attempt summary kept by [`run_experiment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptSummary {
    pub success: bool,
    pub gated_steps: u32,
    pub explored_steps: u32,
    pub gate_prob_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub attempts: Vec<AttemptSummary>,
}

impl ExperimentResult {
    pub fn successes(&self) -> Vec<bool> {
        self.attempts.iter().map(|a| a.success).collect()
    }

    pub fn success_rate(&self) -> f64 {
        self.attempts.iter().filter(|a| a.success).count() as f64 / self.attempts.len() as f64
    }

    /// Explored over gated steps, across all attempts.
    pub fn exploration_rate(&self) -> f64 {
        let gated: u32 = self.attempts.iter().map(|a| a.gated_steps).sum();
        let explored: u32 = self.attempts.iter().map(|a| a.explored_steps).sum();
        if gated == 0 {
            0.0
        } else {
            f64::from(explored) / f64::from(gated)
        }
    }
}

/// `attempts` independent attempts on streams `attempt_stream(seed,
/// question, m)`, run in parallel.
pub fn run_experiment(
    trace: &ScenarioTrace,
    sampler: &SamplerSpec,
    attempts: usize,
    seed: u64,
    question: u64,
) -> Result<ExperimentResult> {
    if attempts == 0 {
        return invalid("attempts must be at least 1");
    }
    sampler.validate()?;
    let attempts = (0..attempts as u64)
        .into_par_iter()
        .map(|m| {
            let a = run_attempt(trace, sampler, attempt_stream(seed, question, m))?;
            let gated: Vec<_> = a.decisions.iter().filter(|d| d.gated).collect();
            Ok(AttemptSummary {
                success: a.success,
                gated_steps: gated.len() as u32,
                explored_steps: gated.iter().filter(|d| d.branch == Branch::Explore).count() as u32,
                gate_prob_sum: gated.iter().map(|d| d.gate_prob).sum(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { attempts })
}

/// Ablation rows reported by the harness, in table order.
pub const ABLATION_VARIANTS: &[&str] = &[
    "default",
    "no-think-only",
    "latent-layernorm",
    "renorm-topk",
    "no-exploitation",
    "d1",
    "d2",
    "d4",
    "d8",
    "d12",
    "d16",
];

/// The LED configuration of ablation variant `name`, derived from `base`.
pub fn ablation_variant(name: &str, base: &LedConfig) -> Result<LedConfig> {
    let mut c = base.clone();
    match name {
        "default" => {}
        "no-think-only" => c.think_only = false,
        "latent-layernorm" => c.latent_layernorm = true,
        "renorm-topk" => c.renorm_topk = true,
        "no-exploitation" => c.exploit_gate = false,
        "no-topk-filtering" => {
            return invalid(
                "no-topk-filtering is not supported: sampling latent posteriors over the full \
                 vocabulary degenerates into repetitive output",
            )
        }
        other => match other
            .strip_prefix('d')
            .and_then(|d| d.parse::<usize>().ok())
        {
            Some(d) if d >= 1 => c.depth = d,
            _ => return invalid(format!("unknown ablation variant {other:?}")),
        },
    }
    c.validate()?;
    Ok(c)
}
