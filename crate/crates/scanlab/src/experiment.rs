//! The experiment registry and the worker pool that runs scan points.

use rayon::prelude::*;

use crate::config::{ExperimentKind, ScanConfig};
use crate::error::ScanError;
use crate::experiments;
use crate::output::Artifacts;

/// One runnable experiment. Implementations compute everything in memory;
/// writing files is left to the caller.
pub trait Experiment: Send + Sync {
    fn kind(&self) -> ExperimentKind;

    fn name(&self) -> &'static str {
        self.kind().name()
    }

    fn description(&self) -> &'static str;

    fn run(&self, cfg: &ScanConfig, ctx: &RunContext) -> Result<Artifacts, ScanError>;
}

pub fn registry() -> Vec<Box<dyn Experiment>> {
    vec![
        Box::new(experiments::echo_series::EchoSeriesExperiment),
        Box::new(experiments::coupling_scan::CouplingScan),
        Box::new(experiments::hbar_scan::HbarScan),
        Box::new(experiments::equilibrate::Equilibrate),
        Box::new(experiments::bipartite::Bipartite),
        Box::new(experiments::rmt_check::RmtCheck),
    ]
}

pub fn find(kind: ExperimentKind) -> Box<dyn Experiment> {
    registry().into_iter().find(|e| e.kind() == kind).expect("every kind is registered")
}

/// Validates `cfg` for `kind` and runs it on `workers` threads.
pub fn run_experiment(kind: ExperimentKind, cfg: &ScanConfig, workers: usize) -> Result<Artifacts, ScanError> {
    cfg.validate(kind)?;
    let ctx = RunContext::new(workers)?;
    find(kind).run(cfg, &ctx)
}

pub struct RunContext {
    pool: rayon::ThreadPool,
}

impl RunContext {
    /// Also switches the dense kernels to sequential mode, so that results do
    /// not depend on `workers`.
    pub fn new(workers: usize) -> Result<Self, ScanError> {
        kickecho::linalg::use_sequential_kernels();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| ScanError::Config(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Applies `f` to every item on the pool. Results come back in item
    /// order; the first failing item in that order decides the error.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>, ScanError>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R, ScanError> + Sync + Send,
    {
        let results: Vec<Result<R, ScanError>> = self.pool.install(|| items.par_iter().map(&f).collect());
        results.into_iter().collect()
    }
}
