//! Configuration, persistence, orchestration and sweeps.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod split;
pub mod sweep;
pub mod tensor_io;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, verify_checksums, RunDir};
pub use metrics::{confusion_matrix, ConfusionMatrix, MetricsReport};
pub use split::{split_dataset, split_indices, Split};
pub use sweep::{sweep_interval, sweep_upload, IntervalRow, UploadRow};
pub use tensor_io::{Manifest, TensorData, TensorFile};
