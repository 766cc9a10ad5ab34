use std::collections::BTreeMap;

use kickecho::bipartite::{
    equilibrium_decomposition, family_negativity, negativity, sudden_death_threshold, two_qubit_spec,
};
use kickecho::echo::{allegiance_map, allegiance_series, echo_stats};
use kickecho::linalg::{DensityMatrix, Ensemble, C64};
use kickecho::random::random_density_matrix;
use kickecho::reduced::{
    cat_state_spec, equilibration_report, reduced_trajectory, CentralSpec, EchoMap, EquilibrationReport,
};
use kickecho::rotor::{Coupling, FloquetOperator, RotorParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn torus(n: usize, shift: f64) -> FloquetOperator {
    FloquetOperator::new(RotorParams::torus(n, 5.0, Coupling::Linear, shift).unwrap()).unwrap()
}

/// Echo map of `spec` with level shifts `base + g s_n` on a torus.
fn echo_map(spec: &CentralSpec, n: usize, base: f64, g: f64, t_max: u64) -> EchoMap {
    let ops: Vec<FloquetOperator> = spec.couplings().iter().map(|s| torus(n, base + g * s)).collect();
    let ens = Ensemble::pure(ops[0].momentum_state(0).unwrap());
    let pairs = spec.needed_pairs();
    let mut map = EchoMap::new();
    for (&(a, b), s) in pairs.iter().zip(allegiance_map(&ops, &pairs, &ens, t_max).unwrap()) {
        map.insert(a, b, s);
    }
    map
}

fn report(spec: &CentralSpec, n: usize, g: f64, t_max: u64, window_start: u64) -> EquilibrationReport {
    let echoes = echo_map(spec, n, 0.1, g, t_max);
    let times: Vec<u64> = (0..=t_max).collect();
    let traj = reduced_trajectory(spec, &echoes, &times).unwrap();
    equilibration_report(&traj, spec, &echoes, window_start).unwrap()
}

#[test]
fn cat_truncation_size_and_trace() {
    let spec = cat_state_spec(C64::new(2.0, 0.0), 1.0, 1e-10).unwrap();
    assert!((18..=24).contains(&spec.n_c()), "N_c = {}", spec.n_c());
    let total: f64 = spec.a().diagonal_entries().iter().sum();
    assert!((total - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn inequality_suite_holds_for_random_initial_states(dim in 2usize..6, rank in 1usize..4, seed in 0u64..500, g in 0.01f64..1.0) {
        let a = random_density_matrix(dim, rank.min(dim), &mut ChaCha8Rng::seed_from_u64(seed));
        let energies = (0..dim).map(|k| 0.7 * k as f64 + 0.13 * (k * k) as f64).collect();
        let couplings = (0..dim).map(|k| k as f64).collect();
        let spec = CentralSpec::new(energies, couplings, a).unwrap();
        let r = report(&spec, 32, g, 300, 100);
        prop_assert!(r.all_checks_pass());
        for p in &r.points {
            prop_assert!(p.trace_dist <= (dim as f64).sqrt() / 2.0 * p.hs_dist + 1e-9);
            prop_assert!(p.purity >= spec.purity_floor() - 1e-9);
        }
    }
}

#[test]
fn smaller_hbar_relaxes_closer_to_equilibrium() {
    let spec = cat_state_spec(C64::new(2.0, 0.0), 1.0, 1e-10).unwrap();
    // hbar_eff = 2 pi / N: 0.39 and 0.012.
    let coarse = report(&spec, 16, 0.1, 2500, 500);
    let fine = report(&spec, 512, 0.1, 2500, 500);
    assert!(fine.mean_hs_dist < coarse.mean_hs_dist, "{} vs {}", fine.mean_hs_dist, coarse.mean_hs_dist);
}

#[test]
fn negativity_vanishes_below_the_threshold() {
    let sd = sudden_death_threshold();
    assert!((sd.f_star - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-10);
    assert!(family_negativity(sd.f_star + 0.01).unwrap().entangled);
    assert_eq!(family_negativity(sd.f_star - 0.01).unwrap().negativity, 0.0);
    let full = family_negativity(1.0).unwrap();
    assert_eq!(full.beta, Some(-2.0));
    assert!((full.negativity - 0.5).abs() < 1e-12);
}

#[test]
fn equilibrium_correction_halves_with_hbar_on_the_torus() {
    let spec = two_qubit_spec(1.0).unwrap();
    let norm = |n: usize| {
        let (u, v) = (torus(n, 0.1), torus(n, 0.2));
        let omega = DensityMatrix::pure(&u.momentum_state(0).unwrap());
        let mean = echo_stats(&allegiance_series(&u, &v, &omega, 5499).unwrap(), 500).unwrap().mean_f;
        equilibrium_decomposition(&spec, &BTreeMap::from([((1, 0), mean)])).unwrap().correction_norm
    };
    let ratio = norm(512) / norm(256);
    assert!((ratio / 0.5 - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn strongly_dephased_pair_is_separable() {
    let spec = two_qubit_spec(1.0).unwrap();
    let decomp = equilibrium_decomposition(&spec, &BTreeMap::from([((1, 0), 0.01)])).unwrap();
    let rho = DensityMatrix::from_matrix(decomp.total()).unwrap();
    assert!(!negativity(&rho, (2, 2)).unwrap().entangled);
}
