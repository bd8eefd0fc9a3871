//! Dataset loading, experiment specifications and metrics output.

pub mod metrics;
pub mod mnist;
pub mod spec;

pub use metrics::{read_metrics_csv, summarize_sweep, write_metrics, RunMetadata, SweepCell};
pub use mnist::{load_mnist_dir, load_mnist_idx, Dataset};
pub use spec::{ExperimentSpec, RunSpec};
