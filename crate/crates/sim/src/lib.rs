//! Experiment harness for MIMO deep JSCC with quality-adaptive CSI feedback:
//! configuration, dataset loading, file formats, and the figure sweeps.

pub mod cifar;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{SimError, SimResult};
pub use pipeline::{Figure, MetricsRecord, Workspace};
