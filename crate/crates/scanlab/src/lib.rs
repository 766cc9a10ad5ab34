//! Batch experiments over the kicked-rotor echo engine: configuration,
//! parameter scans, power-law fits and CSV/SVG output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod experiments;
pub mod fit;
pub mod output;

pub use config::{ExperimentKind, ScanConfig};
pub use error::ScanError;
pub use experiment::{registry, run_experiment, Experiment, RunContext};
pub use fit::{loglog_fit, FitResult};
pub use output::Artifacts;
