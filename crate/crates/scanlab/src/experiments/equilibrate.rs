use std::collections::BTreeSet;

use kickecho::echo::allegiance_map;
use kickecho::linalg::C64;
use kickecho::reduced::{cat_state_spec, equilibration_report, reduced_trajectory, EchoMap, EquilibrationReport};
use kickecho::rotor::FloquetOperator;

use crate::config::{ExperimentKind, GeometryKind, ScanConfig};
use crate::error::{Context, ScanError};
use crate::experiment::{Experiment, RunContext};
use crate::fit::loglog_fit;
use crate::output::{Artifacts, Check, Mark, Plot, Table, EQUILIBRATE_HEADER};

use super::common::{grid, omega0_ensemble, params, sized, EnvPoint};
use super::hbar_scan::fit_points;

/// Expected slope and tolerance of the time-averaged Hilbert-Schmidt
/// distance against `hbar_eff`.
pub fn expected_slope(geometry: GeometryKind) -> (f64, f64) {
    match geometry {
        GeometryKind::Torus => (0.5, 0.15),
        GeometryKind::Lattice => (1.0, 0.25),
    }
}

pub const DHS_HEADER: [&str; 5] = ["param_value", "mean_hs_dist", "mean_trace_dist", "purity_floor", "dim"];

pub struct EquilibrationRun {
    pub point: EnvPoint,
    pub dim: usize,
    pub report: EquilibrationReport,
}

/// Cat-state central system coupled through `s_n = n` with level shifts
/// `base_shift + g_bar n`, evolved over `0 ..= t_max`.
pub fn equilibrate_point(cfg: &ScanConfig, point: EnvPoint) -> Result<EquilibrationRun, ScanError> {
    let label = point.label();
    let spec = cat_state_spec(C64::new(cfg.alpha_sq.sqrt(), 0.0), cfg.omega_c, cfg.cat_cutoff)
        .context(|| "cat-state central system")?;
    let pairs = spec.needed_pairs();
    let levels: Vec<usize> = pairs.iter().flat_map(|&(n, m)| [n, m]).collect::<BTreeSet<_>>().into_iter().collect();
    let local = |n: usize| levels.binary_search(&n).expect("level of a needed pair");
    let local_pairs: Vec<(usize, usize)> = pairs.iter().map(|&(n, m)| (local(n), local(m))).collect();
    let times: Vec<u64> = (0..=cfg.t_max()).collect();

    let (report, dim) = sized(cfg, point, |dim| {
        let ops = levels
            .iter()
            .map(|&n| {
                let shift = cfg.base_shift + cfg.g_bar * spec.couplings()[n];
                FloquetOperator::new(params(cfg, point, dim, shift)?).context(|| label.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ens = omega0_ensemble(cfg, &ops[0])?;
        let series = allegiance_map(&ops, &local_pairs, &ens, cfg.t_max())
            .context(|| format!("echo map at {label}, dimension {dim}"))?;
        let mut echoes = EchoMap::new();
        for (&(n, m), s) in pairs.iter().zip(series) {
            echoes.insert(n, m, s);
        }
        let traj = reduced_trajectory(&spec, &echoes, &times).context(|| format!("reduced state at {label}"))?;
        equilibration_report(&traj, &spec, &echoes, cfg.window_start).context(|| format!("distances at {label}"))
    })?;
    Ok(EquilibrationRun { point, dim, report })
}

pub fn trajectory_table(report: &EquilibrationReport) -> Table {
    let mut t = Table::new(&EQUILIBRATE_HEADER);
    for p in &report.points {
        t.push(vec![
            p.time.to_string(),
            p.trace_dist.to_string(),
            p.hs_dist.to_string(),
            p.purity.to_string(),
            p.bound_rhs.to_string(),
        ]);
    }
    t
}

/// Relaxation of a cat state toward its equilibrium across environments.
pub struct Equilibrate;

impl Experiment for Equilibrate {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Equilibrate
    }

    fn description(&self) -> &'static str {
        "distance of a decohering cat state from equilibrium, with bound checks and hbar_eff scaling"
    }

    fn run(&self, cfg: &ScanConfig, ctx: &RunContext) -> Result<Artifacts, ScanError> {
        let points = grid(cfg, true);
        let runs = ctx.map(&points, |&p| equilibrate_point(cfg, p))?;
        let mut art = Artifacts::default();
        let mut summary = Table::new(&DHS_HEADER);
        let mut series_plot = Plot::new("distance from equilibrium", "t (kicks)", "D_HS", false, true);
        let (mut bound, mut purity, mut pops, mut expansion) = (true, true, true, true);
        for run in &runs {
            let r = &run.report;
            let h = run.point.hbar();
            summary.push(vec![
                h.to_string(),
                r.mean_hs_dist.to_string(),
                r.mean_trace_dist.to_string(),
                r.purity_floor.to_string(),
                run.dim.to_string(),
            ]);
            bound &= r.bound_holds;
            purity &= r.purity_bound_holds;
            pops &= r.populations_conserved;
            expansion &= r.expansion_holds;
            let pts = r.points.iter().map(|p| (p.time as f64, p.hs_dist)).collect();
            series_plot = series_plot.with(&format!("hbar_eff = {h:.4}"), pts, Mark::Line);
            art.add_table(format!("equilibrate_{}.csv", run.point.label()), trajectory_table(r));
        }
        let n_times: usize = runs.iter().map(|r| r.report.points.len()).sum();
        art.checks.push(Check::new("trace_bound", bound, format!("{n_times} sampled times")));
        art.checks.push(Check::new("purity_floor", purity, format!("{n_times} sampled times")));
        art.checks.push(Check::new("populations_constant", pops, format!("{n_times} sampled times")));
        art.checks.push(Check::new("hs_expansion", expansion, format!("{n_times} sampled times")));

        let x = summary.column("param_value").unwrap_or_default();
        let y = summary.column("mean_hs_dist").unwrap_or_default();
        let mut scan_plot = Plot::new("time-averaged distance", "hbar_eff", "mean D_HS", true, true)
            .with("mean D_HS", x.iter().copied().zip(y.iter().copied()).collect(), Mark::Points);
        if runs.len() >= 3 {
            let fit = loglog_fit(&x, &y).context(|| "fit of mean_hs_dist")?;
            let (target, tol) = expected_slope(cfg.geometry);
            art.add_fit("fit_hs", &fit);
            art.checks.push(Check::new(
                "slope_hs",
                fit.slope_within(target, tol),
                format!("{:.4} +- {:.4}, expected {target} +- {tol}", fit.slope, fit.slope_stderr),
            ));
            scan_plot = scan_plot.with(&format!("fit slope {:.3}", fit.slope), fit_points(&fit, &x), Mark::Line);
            art.add_table("fit_hs.csv", Table::fit(&fit));
        }
        art.add_table("dhs_scan.csv", summary);
        art.add_plot("equilibrate.svg", series_plot.to_svg());
        art.add_plot("dhs_scan.svg", scan_plot.to_svg());
        Ok(art)
    }
}
