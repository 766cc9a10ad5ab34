use crate::config::{ExperimentKind, ScanConfig};
use crate::error::ScanError;
use crate::experiment::{Experiment, RunContext};
use crate::output::{Artifacts, Mark, Plot};

use super::common::{echo_point, grid, series_table, PointNeeds};

/// `F(t)` at each configured environment for the pair perturbation
/// `epsilon_nm`.
pub struct EchoSeriesExperiment;

impl Experiment for EchoSeriesExperiment {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::EchoSeries
    }

    fn description(&self) -> &'static str {
        "decoherence function F(t) for each environment in torus_dims or hbar_list"
    }

    fn run(&self, cfg: &ScanConfig, ctx: &RunContext) -> Result<Artifacts, ScanError> {
        let points = grid(cfg, true);
        let needs = PointNeeds { prediction: false, localization: false };
        let runs = ctx.map(&points, |&p| echo_point(cfg, p, cfg.base_shift, cfg.base_shift + cfg.epsilon_nm, needs))?;
        let mut art = Artifacts::default();
        let mut plot = Plot::new("decoherence function", "t (kicks)", "F", false, true);
        for run in &runs {
            let label = run.point.label();
            let name = format!("series_{label}.csv");
            art.add_table(name, series_table(&run.series));
            art.add_result(format!("{label}.dim"), run.dim);
            art.add_result(format!("{label}.mean_F"), run.stats.mean_f);
            art.add_result(format!("{label}.std_F"), run.stats.std_f);
            let pts = run.series.times().iter().zip(run.series.decoherence()).map(|(&t, &f)| (t as f64, f)).collect();
            plot = plot.with(&format!("hbar_eff = {:.4}", run.point.hbar()), pts, Mark::Line);
        }
        art.add_plot("series.svg", plot.to_svg());
        Ok(art)
    }
}
