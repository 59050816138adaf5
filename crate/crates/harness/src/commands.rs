//! The subcommands, as library functions the binary and the tests share.

use std::fs;
use std::path::{Path, PathBuf};

use led_core::analysis::{
    alpha_slope, decision_stats, entropy_by_layer, pass_at_n, topk_coverage, AccuracyGrid,
    CorrectnessMatrix, DecisionStats, DecisionSummary, Estimator, LayerTrace,
};
use led_core::led::LedConfig;
use led_core::prob::{temperature_softmax, LogitRow, RandomStream};
use led_core::sampler::SamplerSpec;
use led_core::synthetic::{
    ablation_variant, exact_success_prob, generate_scenario, pass_at_n_exact, run_experiment,
    ScenarioTrace, ABLATION_VARIANTS,
};
use led_core::toy::{generate, GenerateOptions, ToyConfig, ToyWeights};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SamplerName, ScenarioFile};
use crate::error::{io_at, json_at, usage, Result};
use crate::metrics::Table;
use crate::row;
use crate::trace::{read_all, write_jsonl, LayerRecord, TraceRecord};

/// Stream of question `q`'s scenario draw; attempt streams count up from 0.
fn scenario_stream(seed: u64, question: u64) -> RandomStream {
    RandomStream::new(seed, u64::MAX - question)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(json_at(path))? + "\n";
    fs::write(path, text).map_err(io_at(path))
}

pub fn cmd_toy_init(out: &Path, config: &ToyConfig, seed: u64) -> Result<u32> {
    let weights = ToyWeights::init(*config, seed)?;
    weights.save(out)?;
    Ok(weights.checksum())
}

#[derive(Debug, Clone, Default)]
pub struct ToyRunOutputs {
    pub tokens: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub layers: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenOutput {
    pub sampler: SamplerName,
    pub seed: u64,
    pub prompt: Vec<usize>,
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyRunSummary {
    pub sampler: SamplerName,
    pub steps: usize,
    pub tokens: Vec<usize>,
    /// Present for LED runs.
    pub decision_stats: Option<DecisionStats>,
}

pub fn cmd_toy_run(cfg: &RunConfig, out: &ToyRunOutputs) -> Result<ToyRunSummary> {
    let Some(path) = &cfg.weights else {
        return usage("toy-run needs a weight file");
    };
    if !path.is_file() {
        return usage(format!("weight file {} not found", path.display()));
    }
    cfg.validate()?;
    if cfg.prompt.is_empty() {
        return usage("prompt must hold at least one token");
    }
    let weights = ToyWeights::load(path)?;
    let spec = cfg.spec(cfg.sampler);
    let options = GenerateOptions {
        max_new: cfg.max_new,
        think_span: cfg.think_span,
        record_all_layers: out.layers.is_some(),
    };
    let generation = generate(
        &weights,
        &cfg.prompt,
        &spec,
        &options,
        RandomStream::new(cfg.seed, 0),
    )?;
    let decisions: Vec<_> = generation
        .outcomes
        .iter()
        .filter_map(|o| o.decision.as_ref())
        .collect();
    let records: Vec<TraceRecord> = decisions.iter().map(|d| TraceRecord::from(*d)).collect();
    let stats = matches!(spec, SamplerSpec::Led(_)).then(|| {
        decision_stats(
            &records
                .iter()
                .map(DecisionSummary::from)
                .collect::<Vec<_>>(),
        )
    });
    let tokens = generation.new_tokens().to_vec();

    if let Some(p) = &out.tokens {
        write_json(
            p,
            &TokenOutput {
                sampler: cfg.sampler,
                seed: cfg.seed,
                prompt: cfg.prompt.clone(),
                tokens: tokens.clone(),
            },
        )?;
    }
    if let Some(p) = &out.trace {
        write_jsonl(p, &records)?;
    }
    if let Some(p) = &out.layers {
        let layers: Vec<LayerRecord> = generation
            .steps
            .iter()
            .map(|s| LayerRecord {
                step_id: s.step_id(),
                think: s.think(),
                layer_logits: s
                    .layers()
                    .iter()
                    .rev()
                    .map(|r| r.values().iter().map(|&v| v as f32).collect())
                    .collect(),
            })
            .collect();
        write_jsonl(p, &layers)?;
    }
    let summary = ToyRunSummary {
        sampler: cfg.sampler,
        steps: generation.steps.len(),
        tokens,
        decision_stats: stats,
    };
    if let Some(p) = &out.summary {
        write_json(p, &summary)?;
    }
    Ok(summary)
}

fn scenario_traces(cfg: &RunConfig) -> Result<Vec<ScenarioTrace>> {
    if let Some(path) = &cfg.scenario_file {
        let file = ScenarioFile::load(path)?;
        return Ok(vec![ScenarioTrace::from_explicit(
            &file.steps,
            file.temperature,
        )?]);
    }
    (0..cfg.questions as u64)
        .map(|q| {
            Ok(generate_scenario(
                &cfg.scenario,
                &mut scenario_stream(cfg.seed, q),
            )?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassRow {
    pub label: String,
    pub n: usize,
    pub exact: f64,
    pub empirical_unbiased: f64,
    pub empirical_prefix: f64,
}

fn pass_rows(
    cfg: &RunConfig,
    traces: &[ScenarioTrace],
    label: &str,
    spec: &SamplerSpec,
) -> Result<Vec<PassRow>> {
    let exact: Vec<f64> = traces
        .iter()
        .map(|t| exact_success_prob(t, spec))
        .collect::<led_core::Result<_>>()?;
    let columns: Vec<Vec<bool>> = traces
        .iter()
        .enumerate()
        .map(|(q, t)| Ok(run_experiment(t, spec, cfg.attempts, cfg.seed, q as u64)?.successes()))
        .collect::<Result<_>>()?;
    let matrix = CorrectnessMatrix::from_columns(&columns)?;
    cfg.n_values
        .iter()
        .map(|&n| {
            Ok(PassRow {
                label: label.to_string(),
                n,
                exact: exact.iter().map(|&p| pass_at_n_exact(p, n)).sum::<f64>()
                    / exact.len() as f64,
                empirical_unbiased: pass_at_n(&matrix, n, Estimator::Unbiased)?,
                empirical_prefix: pass_at_n(&matrix, n, Estimator::Prefix)?,
            })
        })
        .collect()
}

pub fn cmd_synthetic(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<PassRow>> {
    cfg.validate()?;
    if cfg.samplers.is_empty() {
        return usage("no samplers selected");
    }
    let traces = scenario_traces(cfg)?;
    let mut rows = Vec::new();
    for &name in &cfg.samplers {
        let label = serde_json::to_value(name)
            .unwrap()
            .as_str()
            .unwrap()
            .to_string();
        rows.extend(pass_rows(cfg, &traces, &label, &cfg.spec(name))?);
    }
    if let Some(path) = out {
        let mut t = Table::new(&[
            "sampler",
            "n",
            "exact_pass",
            "empirical_unbiased",
            "empirical_prefix",
        ]);
        for r in &rows {
            t.push(row![
                r.label.clone(),
                r.n,
                r.exact,
                r.empirical_unbiased,
                r.empirical_prefix
            ]);
        }
        t.write(path)?;
    }
    Ok(rows)
}

/// Depth of the scenario the ablation runs on, so every depth row is real.
pub const ABLATION_MIN_DEPTH: usize = 16;

pub fn cmd_ablate(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<PassRow>> {
    cfg.validate()?;
    let names: Vec<String> = if cfg.variants.is_empty() {
        ABLATION_VARIANTS.iter().map(|s| s.to_string()).collect()
    } else {
        cfg.variants.clone()
    };
    let variants = names
        .iter()
        .map(|n| Ok((n.clone(), ablation_variant(n, &cfg.led)?)))
        .collect::<Result<Vec<(String, LedConfig)>>>()?;
    let mut run = cfg.clone();
    run.scenario.depth = run.scenario.depth.max(ABLATION_MIN_DEPTH);
    let traces = scenario_traces(&run)?;
    let mut rows = Vec::new();
    let mut depths = Vec::new();
    for (name, led) in &variants {
        let r = pass_rows(&run, &traces, name, &SamplerSpec::Led(led.clone()))?;
        depths.extend(std::iter::repeat_n(led.depth, r.len()));
        rows.extend(r);
    }
    if let Some(path) = out {
        let mut t = Table::new(&[
            "variant",
            "depth",
            "n",
            "exact_pass",
            "empirical_unbiased",
            "empirical_prefix",
        ]);
        for (r, d) in rows.iter().zip(&depths) {
            t.push(row![
                r.label.clone(),
                *d,
                r.n,
                r.exact,
                r.empirical_unbiased,
                r.empirical_prefix
            ]);
        }
        t.write(path)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub traces: Option<PathBuf>,
    pub layers: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub normalize: bool,
    pub temperature: f64,
    pub k_values: Vec<usize>,
    pub out_dir: PathBuf,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            traces: None,
            layers: None,
            grid: None,
            normalize: true,
            temperature: 1.0,
            k_values: vec![1, 2, 4, 8, 16],
            out_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeSummary {
    pub entropy: Option<Vec<f64>>,
    pub coverage: Option<Vec<Vec<f64>>>,
    pub alpha: Option<f64>,
    pub decision_stats: Option<DecisionStats>,
}

pub fn cmd_analyze(opts: &AnalyzeOptions) -> Result<AnalyzeSummary> {
    if opts.traces.is_none() && opts.layers.is_none() && opts.grid.is_none() {
        return usage("analyze needs --traces, --layers or --grid");
    }
    fs::create_dir_all(&opts.out_dir).map_err(io_at(&opts.out_dir))?;
    let mut summary = AnalyzeSummary {
        entropy: None,
        coverage: None,
        alpha: None,
        decision_stats: None,
    };

    if let Some(path) = &opts.layers {
        let records: Vec<LayerRecord> = read_all(path)?;
        let traces: Vec<LayerTrace> = records
            .iter()
            .map(|r| {
                r.layer_logits
                    .iter()
                    .map(|row| {
                        Ok(
                            temperature_softmax(&LogitRow::from_f32(row)?, opts.temperature)?
                                .into_values(),
                        )
                    })
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let entropy = entropy_by_layer(&traces, opts.normalize)?;
        let mut t = Table::new(&["layer", "entropy"]);
        for (l, h) in entropy.iter().enumerate() {
            t.push(row![l + 1, *h]);
        }
        t.write(&opts.out_dir.join("entropy.csv"))?;

        let coverage = topk_coverage(&traces, &opts.k_values)?;
        let mut t = Table::new(&["k", "layer", "coverage"]);
        for (k, row) in coverage.k_values.iter().zip(&coverage.ratios) {
            for (l, r) in row.iter().enumerate() {
                t.push(row![*k, l + 1, *r]);
            }
        }
        t.write(&opts.out_dir.join("coverage.csv"))?;
        summary.entropy = Some(entropy);
        summary.coverage = Some(coverage.ratios);
    }

    if let Some(path) = &opts.traces {
        let records: Vec<TraceRecord> = read_all(path)?;
        let stats = decision_stats(
            &records
                .iter()
                .map(DecisionSummary::from)
                .collect::<Vec<_>>(),
        );
        write_json(&opts.out_dir.join("decisions.json"), &stats)?;
        summary.decision_stats = Some(stats);
    }

    if let Some(path) = &opts.grid {
        if !path.is_file() {
            return usage(format!("grid file {} not found", path.display()));
        }
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        let grid: AccuracyGrid = serde_json::from_str(&text).map_err(json_at(path))?;
        let grid = AccuracyGrid::new(grid.temperatures, grid.n_values, grid.accuracy)?;
        let alpha = alpha_slope(&grid)?;
        let mut t = Table::new(&["alpha"]);
        t.push(row![alpha]);
        t.write(&opts.out_dir.join("alpha.csv"))?;
        summary.alpha = Some(alpha);
    }
    Ok(summary)
}
