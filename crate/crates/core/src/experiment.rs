//! Runs resolved experiment specs end to end and persists their artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::dataio::metrics::{
    spec_fingerprint, summarize_runs, write_metrics, write_summary_csv, RunMetadata, SweepCell,
};
use crate::dataio::{Dataset, ExperimentSpec, RunSpec};
use crate::error::Result;
use crate::numerics::{RandomStream, StreamPurpose};
use crate::trainer::{EpochMetrics, LayerCalibration, Network, UpdateScheme};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub calibration: Vec<LayerCalibration>,
    pub final_accuracy: f64,
    pub wall_clock_seconds: f64,
}

/// ADC ranges observed on a floating-point reference network trained from
/// the same initialization for `referenceEpochs` epochs.
pub fn reference_adc_ranges(run: &RunSpec, train: &Dataset) -> Result<Vec<LayerCalibration>> {
    let mut cfg = run.network_config();
    cfg.update_scheme = UpdateScheme::FloatingPoint;
    let settings = run.spec.adc_calibration;
    let mut reference = Network::build(cfg, run.device()?, Default::default())?;
    reference.initialize_weights(&mut RandomStream::for_purpose(run.seed, StreamPurpose::Init))?;
    for epoch in 0..settings.reference_epochs {
        reference.train_epoch(train, epoch)?;
    }
    reference.observe_adc_ranges(&train.truncated(settings.samples))
}

/// Builds, calibrates and trains one network.
pub fn execute_run(
    run: &RunSpec,
    train: &Dataset,
    test: &Dataset,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunOutcome> {
    let start = Instant::now();
    let hw = run.hardware();
    let mut net = Network::build(run.network_config(), run.device()?, hw)?;
    net.initialize_weights(&mut RandomStream::for_purpose(run.seed, StreamPurpose::Init))?;
    let calibration = if hw.adc_bits.is_some() {
        let cal = reference_adc_ranges(run, train)?;
        net.apply_adc_calibration(&cal)?;
        cal
    } else {
        Vec::new()
    };
    let metrics = net.train_with(train, test, on_epoch)?;
    let final_accuracy = match metrics.last() {
        Some(m) => m.test_accuracy,
        None => net.evaluate(test)?,
    };
    Ok(RunOutcome {
        metrics,
        calibration,
        final_accuracy,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_metadata(
    run: &RunSpec,
    cell_index: usize,
    subset: Option<usize>,
    outcome: &RunOutcome,
) -> RunMetadata {
    RunMetadata {
        run_id: run.run_id.clone(),
        cell_index,
        cell_label: run.cell_label.clone(),
        cell: run.cell.clone(),
        seed: run.seed,
        subset,
        spec: run.spec.clone(),
        adc_calibration: outcome.calibration.clone(),
        final_accuracy: outcome.final_accuracy,
        events_per_epoch: outcome
            .metrics
            .iter()
            .map(|m| m.programming_events.clone())
            .collect(),
        fingerprint: spec_fingerprint(&run.spec, run.seed, subset),
        wall_clock_seconds: outcome.wall_clock_seconds,
    }
}

/// Progress callbacks for [`run_experiment`].
pub trait Progress {
    fn run_started(&mut self, _index: usize, _total: usize, _run: &RunSpec) {}
    fn epoch_done(&mut self, _run: &RunSpec, _metrics: &EpochMetrics) {}
    fn run_done(&mut self, _run: &RunSpec, _meta: &RunMetadata) {}
}

pub struct Quiet;
impl Progress for Quiet {}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs_dir: PathBuf,
    pub summary_path: PathBuf,
    pub cells: Vec<SweepCell>,
    pub runs: Vec<RunMetadata>,
}

/// Expands `spec`, trains every run and writes `runs/<id>.csv`,
/// `runs/<id>.json` and `summary.csv` under `out_dir`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    train: &Dataset,
    test: &Dataset,
    out_dir: &Path,
    subset: Option<usize>,
    progress: &mut dyn Progress,
) -> Result<ExperimentReport> {
    let (train, test) = match subset {
        Some(n) => (train.truncated(n), test.truncated(n)),
        None => (train.clone(), test.clone()),
    };
    let runs = spec.expand()?;
    let runs_dir = out_dir.join("runs");
    let mut cell_index = 0;
    let mut last_label: Option<&str> = None;
    let mut metas = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        if last_label.is_some_and(|l| l != run.cell_label) {
            cell_index += 1;
        }
        last_label = Some(&run.cell_label);
        progress.run_started(k, runs.len(), run);
        let outcome = execute_run(run, &train, &test, |m| progress.epoch_done(run, m))?;
        let meta = run_metadata(run, cell_index, subset, &outcome);
        write_metrics(&runs_dir, &run.run_id, &outcome.metrics, &meta)?;
        progress.run_done(run, &meta);
        metas.push(meta);
    }
    let cells = summarize_runs(&metas);
    let summary_path = out_dir.join("summary.csv");
    write_summary_csv(&summary_path, &cells)?;
    Ok(ExperimentReport {
        runs_dir,
        summary_path,
        cells,
        runs: metas,
    })
}
