use kickecho::echo::{basis_weights, spectral_decompose};
use kickecho::rmt::{cue_moment_oracle, predict_constants_in};
use kickecho::rotor::FloquetOperator;

use crate::config::{ExperimentKind, Omega0, ScanConfig};
use crate::error::{Context, ScanError};
use crate::experiment::{Experiment, RunContext};
use crate::output::{Artifacts, Check, Mark, Plot, Table};

use super::common::{grid, omega0_ensemble, params, EnvPoint};
use super::coupling_scan::C_G_TOL;

pub const RMT_HEADER: [&str; 5] = ["quantity", "measured", "stderr", "target", "z_score"];
pub const WEIGHTS_HEADER: [&str; 2] = ["rank", "weight"];
/// Sampled CUE moments must lie within this many standard errors.
pub const Z_TOL: f64 = 3.0;

/// CUE overlap moments and the constants of the initial environment state.
pub struct RmtCheck;

impl Experiment for RmtCheck {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::RmtCheck
    }

    fn description(&self) -> &'static str {
        "sampled CUE overlap moments and the RMT constants C, G of the initial state"
    }

    fn run(&self, cfg: &ScanConfig, _ctx: &RunContext) -> Result<Artifacts, ScanError> {
        let mut art = Artifacts::default();
        let cue = cue_moment_oracle(cfg.rmt_dim, cfg.rmt_samples, cfg.seed).context(|| "CUE sampling")?;
        let (z2, z4) = cue.z_scores();
        let mut rmt = Table::new(&RMT_HEADER);
        rmt.push(vec![
            "abs2".into(),
            cue.mean_abs2.to_string(),
            cue.stderr_abs2.to_string(),
            cue.target_abs2().to_string(),
            z2.to_string(),
        ]);
        rmt.push(vec![
            "abs4".into(),
            cue.mean_abs4.to_string(),
            cue.stderr_abs4.to_string(),
            cue.target_abs4().to_string(),
            z4.to_string(),
        ]);
        art.checks.push(Check::new("cue_abs2", z2.abs() < Z_TOL, format!("z = {z2:.3}")));
        art.checks.push(Check::new("cue_abs4", z4.abs() < Z_TOL, format!("z = {z4:.3}")));

        let point = grid(cfg, false)[0];
        let dim = match point {
            EnvPoint::Torus(n) => n,
            EnvPoint::Lattice(_) => cfg.lattice_dim,
        };
        if dim == 0 || dim > cfg.spectral_cap {
            return Err(ScanError::Config(format!(
                "rmt-check diagonalizes the environment; dimension {dim} must lie in 1 ..= spectral_cap"
            )));
        }
        let op = FloquetOperator::new(params(cfg, point, dim, cfg.base_shift)?).context(|| point.label())?;
        let ens = omega0_ensemble(cfg, &op)?;
        let u = op.dense_unitary().context(|| "dense Floquet operator")?;
        let decomp = spectral_decompose(&u).context(|| "Floquet spectrum")?;
        let rho = ens.to_density_matrix();
        let inputs = predict_constants_in(&rho, decomp.vectors(), cfg.neff_cutoff).context(|| "RMT constants")?;
        let (c, g) = (inputs.c(), inputs.g());
        rmt.push(vec!["C".into(), c.to_string(), "NaN".into(), g.to_string(), "NaN".into()]);
        art.add_result("environment", point.label());
        art.add_result("N_eff", inputs.n_eff);
        art.add_result("R_inv", inputs.r_inv);
        art.add_result("C", c);
        art.add_result("G", g);
        art.add_result("G_double_sum", inputs.g_double_sum());
        if cfg.omega0 == Omega0::MomentumZero {
            let rel = (c - g).abs() / g;
            art.checks.push(Check::new("c_equals_g", rel <= C_G_TOL, format!("|C - G| / G = {rel:.4}")));
        }

        let mut w = basis_weights(&rho, decomp.vectors());
        w.sort_by(|a, b| b.total_cmp(a));
        let mut weights = Table::new(&WEIGHTS_HEADER);
        for (i, x) in w.iter().enumerate() {
            weights.push(vec![(i + 1).to_string(), x.to_string()]);
        }
        let pts = w.iter().enumerate().map(|(i, &x)| ((i + 1) as f64, x)).collect();
        let svg = Plot::new("initial-state weights in the Floquet basis", "rank", "weight", true, true)
            .with("weight", pts, Mark::Points)
            .to_svg();
        art.add_table("rmt.csv", rmt);
        art.add_table("weights.csv", weights);
        art.add_plot("weights.svg", svg);
        Ok(art)
    }
}
