//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p scanlab --test acceptance -- 1 4` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use kickecho::echo::{
    allegiance_series, allegiance_series_ensemble, brute_force_mean_f, brute_force_mean_f2, echo_stats, exact_mean_f,
    exact_mean_f2, overlap_data, spectral_decompose, NEFF_CUTOFF,
};
use kickecho::linalg::{DensityMatrix, Ensemble};
use kickecho::reduced::EchoMap;
use kickecho::rotor::{Coupling, Evolver, FloquetOperator, RotorParams};
use scanlab::output::Check;
use scanlab::{run_experiment, Artifacts, ExperimentKind, ScanConfig};

/// Samples in the time-domain window of the spectral oracle.
const ORACLE_WINDOW: u64 = 5000;
const ORACLE_SIGMAS: f64 = 3.0;
const BRUTE_TOL: f64 = 1e-10;
const UNIT_TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(checks: &[&Check]) -> Outcome {
    Outcome {
        passed: checks.iter().all(|c| c.passed),
        detail: checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; "),
    }
}

fn check<'a>(art: &'a Artifacts, name: &str) -> &'a Check {
    art.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("run has no check {name}"))
}

fn run(kind: ExperimentKind, text: &str) -> Artifacts {
    let cfg = ScanConfig::parse(text).expect("acceptance config parses");
    run_experiment(kind, &cfg, 1).unwrap_or_else(|e| panic!("{kind}: {e}"))
}

fn torus_pair(n: usize, shift: f64, eps: f64) -> (FloquetOperator, FloquetOperator) {
    let op = |s| FloquetOperator::new(RotorParams::torus(n, 5.0, Coupling::Linear, s).unwrap()).unwrap();
    (op(shift), op(shift + eps))
}

fn spectral_oracle() -> Outcome {
    let mut details = Vec::new();
    let mut passed = true;
    for n in [32, 64, 128] {
        let (u, v) = torus_pair(n, 0.1, 0.1);
        let omega = DensityMatrix::pure(&u.momentum_state(0).unwrap());
        let du = spectral_decompose(&u.dense_unitary().unwrap()).unwrap();
        let dv = spectral_decompose(&v.dense_unitary().unwrap()).unwrap();
        let data = overlap_data(&du, &dv, &omega, NEFF_CUTOFF).unwrap();
        let mean = exact_mean_f(&data).unwrap();
        let std = (exact_mean_f2(&data).unwrap() - mean * mean).sqrt();
        let stats = echo_stats(&allegiance_series(&u, &v, &omega, 500 + ORACLE_WINDOW - 1).unwrap(), 500).unwrap();
        let zm = (stats.mean_f - mean) / stats.mean_stderr;
        let zs = (stats.std_f - std) / stats.std_stderr;
        passed &= zm.abs() < ORACLE_SIGMAS && zs.abs() < ORACLE_SIGMAS;
        details.push(format!("N={n} z_mean={zm:.2} z_std={zs:.2}"));
    }
    let mut worst = 0.0f64;
    for (n, shift, eps) in [(8, 0.3, 0.7), (8, -0.4, 1.3), (16, 0.3, 0.7), (16, 1.1, 0.2)] {
        let (u, v) = torus_pair(n, shift, eps);
        let omega = DensityMatrix::pure(&u.momentum_state(0).unwrap());
        let du = spectral_decompose(&u.dense_unitary().unwrap()).unwrap();
        let dv = spectral_decompose(&v.dense_unitary().unwrap()).unwrap();
        let data = overlap_data(&du, &dv, &omega, NEFF_CUTOFF).unwrap();
        worst = worst.max((exact_mean_f2(&data).unwrap() - brute_force_mean_f2(&data).unwrap()).abs());
        worst = worst.max((exact_mean_f(&data).unwrap() - brute_force_mean_f(&data).unwrap()).abs());
    }
    passed &= worst <= BRUTE_TOL;
    details.push(format!("nine-set vs brute force max |diff| = {worst:.2e}"));
    Outcome { passed, detail: details.join("; ") }
}

fn decoupled_identity() -> Outcome {
    let mut worst = 0.0f64;
    let (u, _) = torus_pair(64, 0.1, 0.0);
    let omega = DensityMatrix::pure(&u.momentum_state(0).unwrap());
    let series = allegiance_series(&u, &u, &omega, 2000).unwrap();
    worst = worst.max(series.decoherence().iter().map(|f| (f - 1.0).abs()).fold(0.0, f64::max));
    let p = RotorParams::centered_lattice(0.3, 8192, 5.0, Coupling::Linear, 0.1).unwrap();
    let op = FloquetOperator::new(p).unwrap();
    let ens = Ensemble::pure(op.momentum_state(0).unwrap());
    let series = allegiance_series_ensemble(&op, &op, &ens, 2000).unwrap();
    worst = worst.max(series.decoherence().iter().map(|f| (f - 1.0).abs()).fold(0.0, f64::max));
    let mut ev = Evolver::new(&op, &op.momentum_state(0).unwrap()).unwrap();
    for _ in 0..2000 {
        ev.step().unwrap();
    }
    let drift = (kickecho::linalg::inner(ev.amplitudes(), ev.amplitudes()).re - 1.0).abs();
    let map = EchoMap::new();
    for t in [0, 1, 1000] {
        worst = worst.max((map.f(3, 3, t).unwrap() - 1.0).norm());
    }
    Outcome { passed: worst <= UNIT_TOL, detail: format!("max |F - 1| = {worst:.2e}; norm drift of the evolved lattice state {drift:.2e}") }
}

fn determinism() -> Outcome {
    let small = "torus_n = 64\ntorus_dims = 16, 32, 64\nwindow_start = 500\nwindow_len = 500\n\
                 g_list = logspace:0.01:1:4\nrmt_dim = 8\nrmt_samples = 1000\n";
    let mut differing = Vec::new();
    for kind in ExperimentKind::ALL {
        let a = run(kind, small);
        let b = run(kind, small);
        let csv = |art: &Artifacts| art.tables.iter().map(|(n, t)| (n.clone(), t.to_csv())).collect::<Vec<_>>();
        if csv(&a) != csv(&b) || a.tables.is_empty() {
            differing.push(kind.name());
        }
    }
    Outcome {
        passed: differing.is_empty(),
        detail: if differing.is_empty() { "all six subcommands".into() } else { format!("differ: {differing:?}") },
    }
}

const LATTICE: &str = "geometry = lattice\n";

fn main() -> ExitCode {
    kickecho::linalg::use_sequential_kernels();
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| selected.is_empty() || selected.contains(&id);

    // Equilibrate runs serve two criteria.
    let equilibrate = if wanted(3) || wanted(8) {
        let t = Instant::now();
        let torus = catch_unwind(|| run(ExperimentKind::Equilibrate, ""));
        let lattice = catch_unwind(|| run(ExperimentKind::Equilibrate, LATTICE));
        eprintln!("equilibrate runs took {:.0} s", t.elapsed().as_secs_f64());
        Some((torus, lattice))
    } else {
        None
    };
    let eq = |f: &dyn Fn(&Artifacts, &Artifacts) -> Outcome| match &equilibrate {
        Some((Ok(t), Ok(l))) => f(t, l),
        _ => Outcome { passed: false, detail: "equilibrate run failed".into() },
    };

    type Criterion<'a> = (u32, &'a str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "torus scaling", Box::new(|| {
            let art = run(ExperimentKind::HbarScan, "");
            outcome(&[check(&art, "slope_mean"), check(&art, "slope_std")])
        })),
        (2, "localization scaling", Box::new(|| {
            let art = run(ExperimentKind::HbarScan, LATTICE);
            outcome(&[check(&art, "slope_mean"), check(&art, "slope_std"), check(&art, "lattice_margin")])
        })),
        (3, "equilibration scaling", Box::new(|| {
            eq(&|t, l| {
                let mut o = outcome(&[check(t, "slope_hs"), check(l, "slope_hs")]);
                o.detail = format!("torus {}; lattice {}", check(t, "slope_hs").detail, check(l, "slope_hs").detail);
                o
            })
        })),
        (4, "spectral vs time-domain oracle", Box::new(spectral_oracle)),
        (5, "decoupled identity", Box::new(decoupled_identity)),
        (6, "CUE moments", Box::new(|| {
            let art = run(ExperimentKind::RmtCheck, "");
            outcome(&[check(&art, "cue_abs2"), check(&art, "cue_abs4")])
        })),
        (7, "RMT prediction consistency", Box::new(|| {
            let art = run(ExperimentKind::CouplingScan, "");
            outcome(&[check(&art, "region_iii_mean"), check(&art, "region_iii_std"), check(&art, "c_equals_g")])
        })),
        (8, "inequality suite", Box::new(|| {
            eq(&|t, l| {
                let names = ["trace_bound", "purity_floor", "populations_constant"];
                let checks: Vec<&Check> = names.iter().flat_map(|n| [check(t, n), check(l, n)]).collect();
                outcome(&checks)
            })
        })),
        (9, "sudden death", Box::new(|| {
            let art = run(ExperimentKind::Bipartite, "");
            let mut o = outcome(&[check(&art, "sudden_death_root")]);
            let recorded = art.result("sudden_death.quoted_value").is_some()
                && art.result("sudden_death.quoted_minus_f_star").is_some();
            o.passed &= recorded;
            o.detail = format!(
                "{}; F* = {}; quoted value {} recorded: {recorded}",
                o.detail,
                art.result("sudden_death.f_star").unwrap_or("?"),
                art.result("sudden_death.quoted_value").unwrap_or("?"),
            );
            o
        })),
        (10, "determinism", Box::new(determinism)),
    ];

    let mut failed = 0;
    for (id, name, f) in &criteria {
        if !wanted(*id) {
            continue;
        }
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome { passed: false, detail: format!("panicked: {}", msg.unwrap_or_default()) }
        });
        failed += usize::from(!o.passed);
        println!(
            "criterion {id} ({name}): {} [{:.0} s] {}",
            if o.passed { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
