//! JSON-lines trace files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use led_core::analysis::DecisionSummary;
use led_core::led::{Branch, LedDecision};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, json_at, usage, HarnessError, Result};

/// One LED decision, as written to a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step_id: u64,
    pub think: bool,
    pub branch: Branch,
    pub selected_depth: usize,
    pub gated: bool,
    pub gate_prob: f64,
    pub final_top1: f64,
    pub entropies: Vec<f64>,
    pub token_id: usize,
    pub topk_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl From<&LedDecision> for TraceRecord {
    fn from(d: &LedDecision) -> Self {
        Self {
            step_id: d.step_id,
            think: d.think,
            branch: d.branch,
            selected_depth: d.selected_depth,
            gated: d.gated,
            gate_prob: d.gate_prob,
            final_top1: d.final_top1,
            entropies: d.entropies.clone(),
            token_id: d.token_id,
            topk_ids: d.topk_ids.clone(),
            warning: d.warning.clone(),
        }
    }
}

impl From<&TraceRecord> for DecisionSummary {
    fn from(r: &TraceRecord) -> Self {
        Self {
            think: r.think,
            gated: r.gated,
            branch: r.branch,
            selected_depth: r.selected_depth,
            gate_prob: r.gate_prob,
        }
    }
}

/// Logits of every layer at one step, bottom-up, for offline analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub step_id: u64,
    pub think: bool,
    pub layer_logits: Vec<Vec<f32>>,
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_at(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(json_at(path))?;
        w.write_all(b"\n").map_err(io_at(path))?;
    }
    w.flush().map_err(io_at(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(io_at(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_at(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// `path` itself, or the `.jsonl` files directly inside it in name order.
pub fn jsonl_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.exists() {
        return usage(format!("{} does not exist", path.display()));
    }
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_at(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return usage(format!("no .jsonl traces in {}", path.display()));
    }
    Ok(files)
}

pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for f in jsonl_inputs(path)? {
        out.extend(read_jsonl(&f)?);
    }
    if out.is_empty() {
        return usage(format!("{} holds no records", path.display()));
    }
    Ok(out)
}
