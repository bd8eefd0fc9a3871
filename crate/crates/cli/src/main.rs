//! `memtrain`: runs the committed experiment specs and custom specs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use memtrain_core::dataio::metrics::write_summary_csv;
use memtrain_core::dataio::{load_mnist_dir, summarize_sweep, ExperimentSpec, RunMetadata, RunSpec};
use memtrain_core::experiment::{run_experiment, Progress};
use memtrain_core::presets::preset;
use memtrain_core::trainer::EpochMetrics;
use memtrain_core::Error;

#[derive(Parser)]
#[command(name = "memtrain", version, about = "Mixed-precision training on simulated resistive-memory crossbars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Floating-point reference network.
    Baseline(RunArgs),
    /// Linear devices: update granularity × programming stochasticity.
    #[command(name = "fig3-granularity")]
    Fig3Granularity(RunArgs),
    /// 8-bit potentiation with coarser depression.
    #[command(name = "fig5-asymmetry")]
    Fig5Asymmetry(RunArgs),
    /// Exponential non-linear devices.
    #[command(name = "fig6-nonlinearity")]
    Fig6Nonlinearity(RunArgs),
    /// Read noise on a 4-bit device.
    #[command(name = "fig7a-readnoise")]
    Fig7aReadnoise(RunArgs),
    /// DAC and ADC resolution on a 4-bit device.
    #[command(name = "fig7b-converters")]
    Fig7bConverters(RunArgs),
    /// PCM differential pairs with refresh.
    #[command(name = "fig8-pcm")]
    Fig8Pcm(RunArgs),
    /// One PCM device per synapse.
    #[command(name = "pcm-single")]
    PcmSingle(RunArgs),
    /// Runs a spec file.
    Custom {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Recomputes the summary table of a finished experiment directory.
    Summarize {
        /// Directory holding `runs/` (or the runs directory itself).
        dir: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Directory with the four MNIST IDX files [env: MNIST_DIR, default: data/mnist].
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Root for artifacts; each experiment writes into `<out-dir>/<name>`.
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds for every sweep cell.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override the number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Truncate both train and test sets to the first N examples.
    #[arg(long)]
    subset: Option<usize>,
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn classify(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Json(_) => Failure::Usage(e.into()),
            Error::Io { .. } | Error::DataFormat { .. } => Failure::Data(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

struct Reporter;

impl Progress for Reporter {
    fn run_started(&mut self, index: usize, total: usize, run: &RunSpec) {
        eprintln!("[{}/{}] {}", index + 1, total, run.run_id);
    }

    fn epoch_done(&mut self, _run: &RunSpec, m: &EpochMetrics) {
        let events: Vec<String> = m.programming_events.iter().map(u64::to_string).collect();
        eprintln!(
            "  epoch {:>2}  loss {:.5}  accuracy {:.4}  events {}",
            m.epoch,
            m.train_loss,
            m.test_accuracy,
            events.join("/")
        );
    }

    fn run_done(&mut self, _run: &RunSpec, meta: &RunMetadata) {
        eprintln!(
            "  final accuracy {:.4} ({:.1} s)",
            meta.final_accuracy, meta.wall_clock_seconds
        );
    }
}

fn run(spec: ExperimentSpec, args: RunArgs) -> Result<(), Failure> {
    let mut spec = spec;
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    if let Some(seeds) = args.seeds {
        spec.seeds = seeds;
    }
    if let Some(epochs) = args.epochs {
        spec.trainer.epochs = epochs;
    }
    spec.validate().map_err(Failure::classify)?;
    spec.expand().map_err(Failure::classify)?;

    let data_dir = args
        .data_dir
        .or_else(|| std::env::var_os("MNIST_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"));
    let (train, test) = load_mnist_dir(&data_dir)
        .with_context(|| format!("loading MNIST from {}", data_dir.display()))
        .map_err(Failure::Data)?;

    let name = match (&spec.output_dir, spec.name.as_str()) {
        (Some(dir), _) => dir.clone(),
        (None, "") => PathBuf::from("custom"),
        (None, name) => PathBuf::from(name),
    };
    let out_dir = args.out_dir.join(name);
    let report = run_experiment(&spec, &train, &test, &out_dir, args.subset, &mut Reporter)
        .map_err(Failure::classify)?;

    println!("cell,runs,meanAccuracy,stdAccuracy");
    for c in &report.cells {
        println!("{},{},{:.4},{:.4}", c.cell_label, c.finals.len(), c.mean, c.std);
    }
    eprintln!("artifacts in {}", out_dir.display());
    Ok(())
}

fn summarize(dir: &Path) -> Result<(), Failure> {
    let runs = dir.join("runs");
    let (runs, out) = if runs.is_dir() {
        (runs, dir.join("summary.csv"))
    } else {
        (dir.to_path_buf(), dir.join("summary.csv"))
    };
    let cells = summarize_sweep(&runs).map_err(Failure::classify)?;
    write_summary_csv(&out, &cells).map_err(Failure::classify)?;
    println!("cell,runs,meanAccuracy,stdAccuracy");
    for c in &cells {
        println!("{},{},{:.4},{:.4}", c.cell_label, c.finals.len(), c.mean, c.std);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let named = |name: &str, args: RunArgs| -> Result<(), Failure> {
        run(preset(name).map_err(Failure::classify)?, args)
    };
    match cli.command {
        Command::Baseline(a) => named("baseline", a),
        Command::Fig3Granularity(a) => named("fig3-granularity", a),
        Command::Fig5Asymmetry(a) => named("fig5-asymmetry", a),
        Command::Fig6Nonlinearity(a) => named("fig6-nonlinearity", a),
        Command::Fig7aReadnoise(a) => named("fig7a-readnoise", a),
        Command::Fig7bConverters(a) => named("fig7b-converters", a),
        Command::Fig8Pcm(a) => named("fig8-pcm", a),
        Command::PcmSingle(a) => named("pcm-single", a),
        Command::Custom { spec, run: a } => {
            let spec = ExperimentSpec::load(&spec).map_err(|e| match e {
                Error::Io { .. } => Failure::Usage(e.into()),
                other => Failure::classify(other),
            })?;
            run(spec, a)
        }
        Command::Summarize { dir } => summarize(&dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("data error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
