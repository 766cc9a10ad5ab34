use crate::config::{ExperimentKind, GeometryKind, ScanConfig};
use crate::error::{Context, ScanError};
use crate::experiment::{Experiment, RunContext};
use crate::fit::{loglog_fit, FitResult};
use crate::output::{Artifacts, Check, Mark, Plot, Table, SCAN_HEADER};

use super::common::{echo_point, grid, scan_row, PointNeeds};

/// Expected log-log slope and tolerance of `<F>` and `Delta F` against
/// `hbar_eff`: linear on the torus, quadratic under localization.
pub fn expected_slope(geometry: GeometryKind) -> (f64, f64) {
    match geometry {
        GeometryKind::Torus => (1.0, 0.15),
        GeometryKind::Lattice => (2.0, 0.25),
    }
}

/// Lattices must hold this many localization lengths.
pub const LATTICE_MARGIN: f64 = 16.0;

pub const LATTICE_HEADER: [&str; 6] =
    ["param_value", "lattice_dim", "localization_length", "diffusion", "relaxation_time", "diffusive_length"];

/// Fits of the `mean_F` and `std_F` columns against `param_value`.
pub fn scan_fits(scan: &Table) -> Result<(FitResult, FitResult), ScanError> {
    let col = |name: &str| scan.column(name).ok_or_else(|| ScanError::Config(format!("scan table lacks {name}")));
    let x = col("param_value")?;
    let mean = loglog_fit(&x, &col("mean_F")?).context(|| "fit of mean_F")?;
    let std = loglog_fit(&x, &col("std_F")?).context(|| "fit of std_F")?;
    Ok((mean, std))
}

pub fn fit_points(fit: &FitResult, x: &[f64]) -> Vec<(f64, f64)> {
    x.iter().map(|&v| (v, fit.predict(v))).collect()
}

/// Window statistics of `F` against `hbar_eff` with power-law fits.
pub struct HbarScan;

impl Experiment for HbarScan {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::HbarScan
    }

    fn description(&self) -> &'static str {
        "long-time mean and spread of F against hbar_eff, with log-log slope fits"
    }

    fn run(&self, cfg: &ScanConfig, ctx: &RunContext) -> Result<Artifacts, ScanError> {
        let points = grid(cfg, true);
        let needs = PointNeeds { prediction: true, localization: true };
        let runs = ctx.map(&points, |&p| echo_point(cfg, p, cfg.base_shift, cfg.base_shift + cfg.epsilon_nm, needs))?;

        let mut scan = Table::new(&SCAN_HEADER);
        let mut lattice = Table::new(&LATTICE_HEADER);
        let mut art = Artifacts::default();
        let mut margin_ok = true;
        let mut worst_margin = f64::INFINITY;
        for run in &runs {
            let h = run.point.hbar();
            scan.push(scan_row(h, run));
            if let Some(loc) = run.localization {
                lattice.push(vec![
                    h.to_string(),
                    run.dim.to_string(),
                    loc.localization_length.to_string(),
                    loc.diffusion.to_string(),
                    loc.relaxation_time.to_string(),
                    loc.diffusive_length().to_string(),
                ]);
                let margin = run.dim as f64 / loc.localization_length;
                worst_margin = worst_margin.min(margin);
                margin_ok &= margin >= LATTICE_MARGIN;
            }
        }
        let (fit_mean, fit_std) = scan_fits(&scan)?;
        art.add_fit("fit_mean", &fit_mean);
        art.add_fit("fit_std", &fit_std);

        let (target, tol) = expected_slope(cfg.geometry);
        art.checks.push(Check::new(
            "slope_mean",
            fit_mean.slope_within(target, tol),
            format!("{:.4} +- {:.4}, expected {target} +- {tol}", fit_mean.slope, fit_mean.slope_stderr),
        ));
        art.checks.push(Check::new(
            "slope_std",
            fit_std.slope_within(target, tol),
            format!("{:.4} +- {:.4}, expected {target} +- {tol}", fit_std.slope, fit_std.slope_stderr),
        ));
        if cfg.geometry == GeometryKind::Lattice {
            art.add_result("min_lattice_over_J", worst_margin);
            art.checks.push(Check::new(
                "lattice_margin",
                margin_ok,
                format!("smallest M / J = {worst_margin:.2}, need >= {LATTICE_MARGIN}"),
            ));
        }

        let x: Vec<f64> = runs.iter().map(|r| r.point.hbar()).collect();
        let col = |name| scan.column(name).unwrap_or_default();
        let svg = Plot::new("long-time echo statistics", "hbar_eff", "F", true, true)
            .with("mean F", x.iter().copied().zip(col("mean_F")).collect(), Mark::Points)
            .with("std F", x.iter().copied().zip(col("std_F")).collect(), Mark::Points)
            .with(&format!("fit slope {:.3}", fit_mean.slope), fit_points(&fit_mean, &x), Mark::Line)
            .with(&format!("fit slope {:.3}", fit_std.slope), fit_points(&fit_std, &x), Mark::Line)
            .to_svg();
        art.add_table("scan.csv", scan);
        if cfg.geometry == GeometryKind::Lattice {
            art.add_table("lattice.csv", lattice);
        }
        art.add_table("fit_mean.csv", Table::fit(&fit_mean));
        art.add_table("fit_std.csv", Table::fit(&fit_std));
        art.add_plot("scan.svg", svg);
        Ok(art)
    }
}
