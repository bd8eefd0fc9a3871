//! Per-run metrics CSV, run metadata and sweep summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::spec::ExperimentSpec;
use crate::error::{Error, Result};
use crate::trainer::{EpochMetrics, LayerCalibration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunMetadata {
    pub run_id: String,
    pub cell_index: usize,
    pub cell_label: String,
    pub cell: BTreeMap<String, Value>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<usize>,
    pub spec: ExperimentSpec,
    #[serde(default)]
    pub adc_calibration: Vec<LayerCalibration>,
    pub final_accuracy: f64,
    pub events_per_epoch: Vec<Vec<u64>>,
    pub fingerprint: String,
    pub wall_clock_seconds: f64,
}

/// SHA-256 over the resolved spec, seed and subset size.
pub fn spec_fingerprint(spec: &ExperimentSpec, seed: u64, subset: Option<usize>) -> String {
    let doc = serde_json::json!({ "spec": spec, "seed": seed, "subset": subset });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

fn csv_header(layers: usize) -> Vec<String> {
    let mut h = vec![
        "epoch".to_string(),
        "trainLoss".to_string(),
        "testAccuracy".to_string(),
    ];
    h.extend((1..=layers).map(|l| format!("eventsLayer{l}")));
    h
}

pub fn csv_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("{run_id}.csv"))
}

pub fn metadata_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("{run_id}.json"))
}

/// Writes `<run_id>.csv` and `<run_id>.json` into `dir`.
pub fn write_metrics(
    dir: &Path,
    run_id: &str,
    metrics: &[EpochMetrics],
    meta: &RunMetadata,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let layers = meta.spec.trainer.layer_sizes.len().saturating_sub(1);
    let csv = csv_path(dir, run_id);
    let mut w = csv::Writer::from_path(&csv).map_err(|e| csv_error(&csv, e))?;
    w.write_record(csv_header(layers)).map_err(|e| csv_error(&csv, e))?;
    for m in metrics {
        let mut row = vec![
            m.epoch.to_string(),
            m.train_loss.to_string(),
            m.test_accuracy.to_string(),
        ];
        row.extend(m.programming_events.iter().map(u64::to_string));
        w.write_record(&row).map_err(|e| csv_error(&csv, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv, e))?;

    let json = metadata_path(dir, run_id);
    let text = serde_json::to_string_pretty(meta)?;
    std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    Ok((csv, json))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::DataFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let bad = |message: String| Error::DataFormat {
        path: path.to_path_buf(),
        message,
    };
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 3 || header.iter().take(3).ne(["epoch", "trainLoss", "testAccuracy"]) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_err = |i: usize| bad(format!("row {}: bad value `{}`", line + 1, field(i)));
        out.push(EpochMetrics {
            epoch: field(0).parse().map_err(|_| parse_err(0))?,
            train_loss: field(1).parse().map_err(|_| parse_err(1))?,
            test_accuracy: field(2).parse().map_err(|_| parse_err(2))?,
            programming_events: (3..rec.len())
                .map(|i| field(i).parse().map_err(|_| parse_err(i)))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// Final accuracies of every seed in one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepCell {
    pub cell_index: usize,
    pub cell_label: String,
    pub cell: BTreeMap<String, Value>,
    pub seeds: Vec<u64>,
    pub finals: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Groups the run metadata files in `run_dir` by sweep cell.
pub fn summarize_sweep(run_dir: &Path) -> Result<Vec<SweepCell>> {
    let entries = std::fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::DataFormat {
            path: run_dir.to_path_buf(),
            message: "no run metadata files found".into(),
        });
    }
    let mut metas = Vec::with_capacity(files.len());
    for path in files {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: RunMetadata = serde_json::from_str(&text).map_err(|e| Error::DataFormat {
            path: path.clone(),
            message: e.to_string(),
        })?;
        metas.push(meta);
    }
    Ok(summarize_runs(&metas))
}

/// Groups run metadata by sweep cell, ordered by cell index.
pub fn summarize_runs(metas: &[RunMetadata]) -> Vec<SweepCell> {
    let mut cells: BTreeMap<(usize, String), SweepCell> = BTreeMap::new();
    for meta in metas {
        let cell = cells
            .entry((meta.cell_index, meta.cell_label.clone()))
            .or_insert_with(|| SweepCell {
                cell_index: meta.cell_index,
                cell_label: meta.cell_label.clone(),
                cell: meta.cell.clone(),
                seeds: Vec::new(),
                finals: Vec::new(),
                mean: 0.0,
                std: 0.0,
            });
        cell.seeds.push(meta.seed);
        cell.finals.push(meta.final_accuracy);
    }
    cells
        .into_values()
        .map(|mut c| {
            (c.mean, c.std) = mean_and_std(&c.finals);
            c
        })
        .collect()
}

/// One row per cell with a column per sweep coordinate.
pub fn write_summary_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let axes: BTreeSet<&String> = cells.iter().flat_map(|c| c.cell.keys()).collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["cell".to_string()];
    header.extend(axes.iter().map(|a| a.to_string()));
    header.extend(["runs", "meanAccuracy", "stdAccuracy"].map(String::from));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for c in cells {
        let mut row = vec![c.cell_label.clone()];
        for a in &axes {
            row.push(match c.cell.get(*a) {
                Some(Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
                None => String::new(),
            });
        }
        row.push(c.finals.len().to_string());
        row.push(c.mean.to_string());
        row.push(c.std.to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
