use std::collections::BTreeMap;

use kickecho::bipartite::{
    assemble_bipartite_rho_t, equilibrium_decomposition, family_negativity, negativity, sudden_death_threshold,
    two_qubit_spec,
};
use kickecho::echo::mean_std;
use kickecho::linalg::DensityMatrix;
use kickecho::reduced::EchoMap;

use crate::config::{ExperimentKind, ScanConfig};
use crate::error::{Context, ScanError};
use crate::experiment::{Experiment, RunContext};
use crate::output::{Artifacts, Check, Mark, Plot, Table};

use super::common::{echo_point, grid, series_table, PointNeeds};

pub const NEGATIVITY_HEADER: [&str; 5] = ["time_kicks", "F", "negativity", "family_negativity", "entangled"];

/// Allowed gap between the bisected and the analytic sudden-death root.
pub const ROOT_TOL: f64 = 1e-10;
/// Allowed gap between the trajectory negativity and the family formula.
pub const FAMILY_MATCH_TOL: f64 = 1e-9;

/// Two qubits in identical environments, prepared in a maximally entangled
/// state, with local couplings `s = (0, 1)`.
pub struct Bipartite;

impl Experiment for Bipartite {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Bipartite
    }

    fn description(&self) -> &'static str {
        "negativity of two decohering qubits, sudden-death threshold and equilibrium decomposition"
    }

    fn run(&self, cfg: &ScanConfig, _ctx: &RunContext) -> Result<Artifacts, ScanError> {
        let point = grid(cfg, false)[0];
        let needs = PointNeeds { prediction: false, localization: false };
        let run = echo_point(cfg, point, cfg.base_shift, cfg.base_shift + cfg.g_bar, needs)?;
        let spec = two_qubit_spec(cfg.omega_c).context(|| "two-qubit system")?;
        let mut echoes = EchoMap::new();
        echoes.insert(1, 0, run.series.clone());

        let mut art = Artifacts::default();
        let mut table = Table::new(&NEGATIVITY_HEADER);
        let mut worst_family = 0.0f64;
        let mut death_time = None;
        for (&t, &big_f) in run.series.times().iter().zip(run.series.decoherence()) {
            let rho = assemble_bipartite_rho_t(&spec, &echoes, &echoes, t).context(|| format!("joint state at t = {t}"))?;
            let neg = negativity(&rho, spec.dims()).context(|| format!("negativity at t = {t}"))?;
            let fam = family_negativity(big_f.clamp(0.0, 1.0)).context(|| format!("family negativity at t = {t}"))?;
            worst_family = worst_family.max((neg.negativity - fam.negativity).abs());
            if !neg.entangled && death_time.is_none() {
                death_time = Some(t);
            }
            table.push(vec![
                t.to_string(),
                big_f.to_string(),
                neg.negativity.to_string(),
                fam.negativity.to_string(),
                u8::from(neg.entangled).to_string(),
            ]);
        }

        let sd = sudden_death_threshold();
        let root_gap = (sd.f_star - sd.closed_form).abs();
        art.add_result("environment", point.label());
        art.add_result("dim", run.dim);
        art.add_result("sudden_death.f_star", sd.f_star);
        art.add_result("sudden_death.bracket_width", sd.bracket_width);
        art.add_result("sudden_death.closed_form", sd.closed_form);
        art.add_result("sudden_death.quoted_value", sd.quoted_value);
        art.add_result("sudden_death.quoted_minus_f_star", sd.quoted_value - sd.f_star);
        art.add_result("sudden_death.f_star_fourth_root", sd.f_star.powf(0.25));
        art.add_result(
            "sudden_death.note",
            "the quoted critical value is the fourth root of the computed threshold, not the threshold itself",
        );
        art.add_result("death_time", death_time.map_or("none".to_string(), |t| t.to_string()));
        art.checks.push(Check::new("sudden_death_root", root_gap <= ROOT_TOL, format!("|F* - (3 - 2 sqrt 2)| = {root_gap:.3e}")));
        art.checks.push(Check::new(
            "family_negativity",
            worst_family <= FAMILY_MATCH_TOL,
            format!("largest deviation {worst_family:.3e}"),
        ));

        let window: Vec<f64> = run.series.decoherence()[cfg.window_start as usize..].to_vec();
        let (mean_f, _) = mean_std(&window);
        let decomp = equilibrium_decomposition(&spec, &BTreeMap::from([((1, 0), mean_f)]))
            .context(|| "equilibrium decomposition")?;
        let eq = DensityMatrix::from_matrix(decomp.total()).context(|| "equilibrium state")?;
        let eq_neg = negativity(&eq, spec.dims()).context(|| "equilibrium negativity")?;
        art.add_result("equilibrium.mean_F", mean_f);
        art.add_result("equilibrium.correction_norm", decomp.correction_norm);
        art.add_result("equilibrium.negativity", eq_neg.negativity);

        let col = |name| table.column(name).unwrap_or_default();
        let t: Vec<f64> = run.series.times().iter().map(|&t| t as f64).collect();
        let svg = Plot::new("two-qubit entanglement", "t (kicks)", "", false, false)
            .with("F", t.iter().copied().zip(col("F")).collect(), Mark::Line)
            .with("negativity", t.iter().copied().zip(col("negativity")).collect(), Mark::Line)
            .to_svg();
        art.add_table("series.csv", series_table(&run.series));
        art.add_table("negativity.csv", table);
        art.add_plot("negativity.svg", svg);
        Ok(art)
    }
}
