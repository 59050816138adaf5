//! A closed set of per-step samplers with a shared rng layout.
//!
//! Each decode step `t` owns the draws `[DRAWS_PER_STEP * t, DRAWS_PER_STEP * (t + 1))`
//! of an attempt's stream. LED uses both; the baselines use the first. With
//! that layout LED at depth 1 and standard top-k sampling see the same token
//! uniform at every step, so their sequences coincide under a shared seed.

use serde::{Deserialize, Serialize};

use crate::baselines::{dola_step, greedy, standard_sample, BaselineConfig};
use crate::error::{LedError, Result};
use crate::led::{led_step, LedConfig, LedDecision, StepLogits, LED_DRAWS_PER_STEP};
use crate::prob::{temperature_softmax, RandomStream};

pub const DRAWS_PER_STEP: u64 = LED_DRAWS_PER_STEP;

/// The stream positioned at the first draw of step `t`.
pub fn step_stream(base: RandomStream, t: u64) -> RandomStream {
    base.with_counter(DRAWS_PER_STEP * t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplerSpec {
    Led(LedConfig),
    Standard(BaselineConfig),
    Greedy,
    Dola(BaselineConfig),
}

impl SamplerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerSpec::Led(_) => "led",
            SamplerSpec::Standard(_) => "standard",
            SamplerSpec::Greedy => "greedy",
            SamplerSpec::Dola(_) => "dola",
        }
    }

    /// Layer rows the sampler reads, final-first, for a model with
    /// `n_layers` layers.
    pub fn rows_needed(&self, n_layers: usize) -> usize {
        match self {
            SamplerSpec::Led(c) => c.depth.min(n_layers),
            SamplerSpec::Standard(_) | SamplerSpec::Greedy => 1,
            SamplerSpec::Dola(_) => n_layers,
        }
    }

    /// Whether latent rows should pass through the final norm.
    pub fn latent_layernorm(&self) -> bool {
        matches!(self, SamplerSpec::Led(c) if c.latent_layernorm)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerSpec::Led(c) => c.validate(),
            SamplerSpec::Standard(c) | SamplerSpec::Dola(c) => c.validate(),
            SamplerSpec::Greedy => Ok(()),
        }
    }

    /// Samples one step with `rng` positioned at the step's first draw.
    pub fn sample_step(&self, step: &StepLogits, rng: &mut RandomStream) -> Result<StepOutcome> {
        match self {
            SamplerSpec::Led(c) => {
                let d = led_step(step, c, rng)?;
                Ok(StepOutcome {
                    token: d.token_id,
                    decision: Some(d),
                })
            }
            SamplerSpec::Standard(c) => Ok(StepOutcome::plain(standard_sample(
                &step.layers()[0],
                c,
                rng,
            )?)),
            SamplerSpec::Greedy => Ok(StepOutcome::plain(greedy(&step.layers()[0]))),
            SamplerSpec::Dola(c) => {
                if step.depth() < 2 {
                    return Err(LedError::Shape(
                        "DoLa needs every layer row of the step".into(),
                    ));
                }
                // bottom-up for the DoLa layer indexing
                let posteriors = step
                    .layers()
                    .iter()
                    .rev()
                    .map(|row| temperature_softmax(row, c.temperature))
                    .collect::<Result<Vec<_>>>()?;
                Ok(StepOutcome::plain(dola_step(&posteriors, c, rng)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub token: usize,
    /// Present for LED steps.
    pub decision: Option<LedDecision>,
}

impl StepOutcome {
    fn plain(token: usize) -> Self {
        Self {
            token,
            decision: None,
        }
    }
}
