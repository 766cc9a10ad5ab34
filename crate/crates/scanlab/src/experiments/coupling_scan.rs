use crate::config::{ExperimentKind, Omega0, ScanConfig};
use crate::error::ScanError;
use crate::experiment::{Experiment, RunContext};
use crate::output::{Artifacts, Check, Mark, Plot, Table, SCAN_HEADER};

use super::common::{echo_point, grid, scan_row, PointNeeds, PointRun};

/// Coupling eigenvalue of the unperturbed level; the perturbed level sits
/// one unit above, so the pair perturbation equals `g`.
pub const S_M: f64 = 1.0;
pub const S_N: f64 = 2.0;

/// Measured statistics must lie within this factor of the prediction.
pub const PREDICTION_FACTOR: f64 = 2.0;
/// Allowed relative difference of `C` and `G` for a momentum eigenstate.
pub const C_G_TOL: f64 = 0.15;

/// Indices of the points in the last decade of the coupling grid, the
/// operational region III.
pub fn region_iii(g: &[f64]) -> Vec<usize> {
    let g_max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..g.len()).filter(|&i| g[i] >= g_max / 10.0 * (1.0 - 1e-12)).collect()
}

/// Whether `mean_F` changes by less than `std_F` across the region.
pub fn region_is_flat(runs: &[PointRun], idx: &[usize]) -> (bool, f64, f64) {
    let means: Vec<f64> = idx.iter().map(|&i| runs[i].stats.mean_f).collect();
    let spread = means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - means.iter().copied().fold(f64::INFINITY, f64::min);
    let min_std = idx.iter().map(|&i| runs[i].stats.std_f).fold(f64::INFINITY, f64::min);
    (spread < min_std, spread, min_std)
}

fn within_factor(measured: f64, predicted: f64, factor: f64) -> bool {
    let r = measured / predicted;
    r.is_finite() && r <= factor && r >= 1.0 / factor
}

/// `F` statistics against the overall coupling `g` at one environment.
pub struct CouplingScan;

impl Experiment for CouplingScan {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::CouplingScan
    }

    fn description(&self) -> &'static str {
        "long-time mean and spread of F against the coupling g_bar, with RMT predictions"
    }

    fn run(&self, cfg: &ScanConfig, ctx: &RunContext) -> Result<Artifacts, ScanError> {
        let point = grid(cfg, false)[0];
        let needs = PointNeeds { prediction: true, localization: true };
        let runs = ctx.map(&cfg.g_list, |&g| {
            echo_point(cfg, point, cfg.base_shift + g * S_M, cfg.base_shift + g * S_N, needs)
        })?;

        let mut art = Artifacts::default();
        let mut scan = Table::new(&SCAN_HEADER);
        for (g, run) in cfg.g_list.iter().zip(&runs) {
            scan.push(scan_row(*g, run));
        }
        art.add_result("environment", point.label());
        art.add_result("dim", runs[0].dim);

        let region = region_iii(&cfg.g_list);
        let (flat, spread, min_std) = region_is_flat(&runs, &region);
        art.add_result("region_iii.g_min", cfg.g_list[region[0]]);
        art.add_result("region_iii.points", region.len());
        art.add_result("region_iii.mean_spread", spread);
        art.checks.push(Check::new(
            "region_iii_flat",
            flat,
            format!("mean_F spread {spread:.3e} vs smallest std_F {min_std:.3e} over the last decade"),
        ));

        let mut mean_ok = true;
        let mut std_ok = true;
        let mut worst = (1.0f64, 1.0f64);
        for &i in &region {
            let Some(p) = runs[i].prediction else { continue };
            let (rm, rs) = (runs[i].stats.mean_f / p.mean, runs[i].stats.std_f / p.std);
            mean_ok &= within_factor(runs[i].stats.mean_f, p.mean, PREDICTION_FACTOR);
            std_ok &= within_factor(runs[i].stats.std_f, p.std, PREDICTION_FACTOR);
            if (rm.ln()).abs() > worst.0.ln().abs() || !rm.is_finite() {
                worst.0 = rm;
            }
            if (rs.ln()).abs() > worst.1.ln().abs() || !rs.is_finite() {
                worst.1 = rs;
            }
        }
        art.checks.push(Check::new("region_iii_mean", mean_ok, format!("worst measured / predicted {:.3}", worst.0)));
        art.checks.push(Check::new("region_iii_std", std_ok, format!("worst measured / predicted {:.3}", worst.1)));

        if let Some(p) = runs.last().and_then(|r| r.prediction) {
            let (c, g) = (p.inputs.c(), p.inputs.g());
            art.add_result("C", c);
            art.add_result("G", g);
            art.add_result("N_eff", p.inputs.n_eff);
            if cfg.omega0 == Omega0::MomentumZero {
                let rel = (c - g).abs() / g;
                art.checks.push(Check::new("c_equals_g", rel <= C_G_TOL, format!("|C - G| / G = {rel:.4}")));
            }
        }

        let col = |name| scan.column(name).unwrap_or_default();
        let x = cfg.g_list.clone();
        let svg = Plot::new(&format!("echo regimes at {}", point.label()), "g_bar", "F", true, true)
            .with("mean F", x.iter().copied().zip(col("mean_F")).collect(), Mark::Points)
            .with("std F", x.iter().copied().zip(col("std_F")).collect(), Mark::Points)
            .with("C / N_eff", x.iter().copied().zip(col("predicted_mean")).collect(), Mark::Line)
            .with("G / N_eff", x.iter().copied().zip(col("predicted_std")).collect(), Mark::Line)
            .to_svg();
        art.add_table("scan.csv", scan);
        art.add_plot("scan.svg", svg);
        Ok(art)
    }
}
