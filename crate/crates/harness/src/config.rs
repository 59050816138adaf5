//! Run configuration. Values come from the built-in defaults, then the JSON
//! config file, then command-line flags; later sources win.

use std::path::{Path, PathBuf};

use led_core::baselines::BaselineConfig;
use led_core::led::LedConfig;
use led_core::sampler::SamplerSpec;
use led_core::synthetic::{ExplicitStep, ScenarioConfig};
use led_core::toy::{ThinkSpan, ToyConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, json_at, usage, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplerName {
    Led,
    Standard,
    Greedy,
    Dola,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sampler: SamplerName,
    pub led: LedConfig,
    pub baseline: BaselineConfig,
    /// Samplers compared by the synthetic command.
    pub samplers: Vec<SamplerName>,
    pub scenario: ScenarioConfig,
    /// Explicit scenario steps; replaces `scenario` when set.
    pub scenario_file: Option<PathBuf>,
    pub questions: usize,
    pub attempts: usize,
    pub n_values: Vec<usize>,
    pub toy: ToyConfig,
    pub weights: Option<PathBuf>,
    pub prompt: Vec<usize>,
    pub max_new: usize,
    pub think_span: Option<ThinkSpan>,
    /// Ablation rows; empty means all.
    pub variants: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sampler: SamplerName::Led,
            led: LedConfig::default(),
            baseline: BaselineConfig::default(),
            samplers: vec![SamplerName::Led, SamplerName::Standard, SamplerName::Greedy],
            scenario: ScenarioConfig::default(),
            scenario_file: None,
            questions: 1,
            attempts: 16,
            n_values: vec![1, 2, 4, 8, 16],
            toy: ToyConfig::default(),
            weights: None,
            prompt: vec![1, 2, 3],
            max_new: 32,
            think_span: None,
            variants: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.is_file() {
            return usage(format!("config file {} not found", path.display()));
        }
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        serde_json::from_str(&text).map_err(json_at(path))
    }

    pub fn spec(&self, name: SamplerName) -> SamplerSpec {
        match name {
            SamplerName::Led => SamplerSpec::Led(self.led.clone()),
            SamplerName::Standard => SamplerSpec::Standard(self.baseline.clone()),
            SamplerName::Greedy => SamplerSpec::Greedy,
            SamplerName::Dola => SamplerSpec::Dola(self.baseline.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.attempts == 0 {
            return usage("attempts must be at least 1");
        }
        if self.questions == 0 {
            return usage("questions must be at least 1");
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n == 0 || n > self.attempts) {
            return usage(format!("n = {n} must lie in 1..={}", self.attempts));
        }
        self.led.validate()?;
        self.baseline.validate()?;
        Ok(())
    }
}

/// Explicit scenario file: per-step layer distributions, final first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub temperature: f64,
    pub steps: Vec<ExplicitStep>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return usage(format!("scenario file {} not found", path.display()));
        }
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        serde_json::from_str(&text).map_err(json_at(path))
    }
}
