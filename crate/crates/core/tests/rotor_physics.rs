use std::f64::consts::PI;

use kickecho::echo::spectral_decompose;
use kickecho::linalg::{Ensemble, StateVector, C64};
use kickecho::random::random_state;
use kickecho::rotor::{
    estimate_localization_ensemble, momentum_populations, momentum_variance, Coupling, Evolver, FloquetOperator,
    RotorParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn torus(n: usize, k: f64, shift: f64) -> FloquetOperator {
    FloquetOperator::new(RotorParams::torus(n, k, Coupling::Linear, shift).unwrap()).unwrap()
}

fn evolve(op: &FloquetOperator, psi: &StateVector, steps: usize) -> Vec<C64> {
    let mut ev = Evolver::new(op, psi).unwrap();
    for _ in 0..steps {
        ev.step().unwrap();
    }
    ev.amplitudes().to_vec()
}

/// One period by naive DFT sums: free phase in momentum, then the kick in
/// angle on the grid `2 pi k / N`.
fn naive_floquet(n: usize, k: f64, shift: f64) -> Vec<Vec<C64>> {
    let hbar = 2.0 * PI / n as f64;
    let j_min = -(n as i64) / 2;
    let free: Vec<C64> = (0..n)
        .map(|i| {
            let j = (j_min + i as i64) as f64;
            C64::from_polar(1.0, -(hbar * j * j / 2.0 + shift * j))
        })
        .collect();
    let kick: Vec<C64> =
        (0..n).map(|q| C64::from_polar(1.0, -k * (2.0 * PI * q as f64 / n as f64).cos() / hbar)).collect();
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| {
                    let s: C64 = (0..n)
                        .map(|q| {
                            let phase = 2.0 * PI * ((c as f64 - r as f64) * q as f64) / n as f64;
                            kick[q] * C64::from_polar(1.0, phase)
                        })
                        .sum();
                    s * free[c] / n as f64
                })
                .collect()
        })
        .collect()
}

#[test]
fn fft_step_matches_naive_dft() {
    for &(n, k, shift) in &[(8, 5.0, 0.1), (16, 2.3, -0.7), (32, 7.0, 1.9)] {
        let op = torus(n, k, shift);
        let oracle = naive_floquet(n, k, shift);
        for c in 0..n {
            let out = op.apply_step(&StateVector::basis(n, c)).unwrap();
            for r in 0..n {
                assert!((out.amplitudes()[r] - oracle[r][c]).norm() < 1e-10, "n={n} r={r} c={c}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evolution_preserves_norm(log_n in 3u32..8, k in 0.0f64..12.0, shift in -3.0f64..3.0, seed in 0u64..1000) {
        let n = 1usize << log_n;
        let op = torus(n, k, shift);
        let psi = random_state(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let out = evolve(&op, &psi, 50);
        let norm: f64 = out.iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_shift_is_two_pi_periodic(k in 0.5f64..10.0, shift in -3.0f64..3.0, seed in 0u64..1000) {
        let n = 32;
        let psi = random_state(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = evolve(&torus(n, k, shift), &psi, 10);
        let b = evolve(&torus(n, k, shift + 2.0 * PI), &psi, 10);
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-9);
    }

    #[test]
    fn lattice_evolution_preserves_norm(hbar in 0.3f64..1.5, shift in -1.0f64..1.0) {
        let p = RotorParams::centered_lattice(hbar, 1024, 5.0, Coupling::Linear, shift).unwrap();
        let op = FloquetOperator::new(p).unwrap();
        let out = evolve(&op, &op.momentum_state(0).unwrap(), 40);
        let norm: f64 = out.iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_kick_of_momentum_zero_keeps_unit_norm() {
    let op = torus(64, 5.0, 0.1);
    let out = op.apply_step(&op.momentum_state(0).unwrap()).unwrap();
    assert!((out.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn dense_operator_is_unitary() {
    let u = torus(64, 5.0, 0.1).dense_unitary().unwrap();
    assert!(u.deviation() < 1e-9);
}

fn variance_after(params: RotorParams, steps: u64) -> Vec<f64> {
    let op = FloquetOperator::new(params).unwrap();
    let mut ev = Evolver::new(&op, &op.momentum_state(0).unwrap()).unwrap();
    let mut out = Vec::new();
    for _ in 0..steps {
        ev.step().unwrap();
        let pops = momentum_populations(&[(1.0, ev.amplitudes())]);
        out.push(momentum_variance(&pops, &params.geometry, params.hbar));
    }
    out
}

#[test]
fn momentum_variance_saturates_under_localization() {
    let p = RotorParams::centered_lattice(0.5, 2048, 5.0, Coupling::Linear, 0.1).unwrap();
    let v = variance_after(p, 2000);
    let early_rate = v[9] / 10.0;
    let late_rate = (v[1999] - v[999]) / 1000.0;
    assert!(late_rate.abs() < 0.01 * early_rate, "early {early_rate} late {late_rate}");
}

#[test]
fn stronger_kick_diffuses_faster() {
    let d = |k: f64| {
        let p = RotorParams::centered_lattice(0.25, 8192, k, Coupling::Linear, 0.1).unwrap();
        variance_after(p, 10)[9] / 10.0
    };
    let (d5, d10) = (d(5.0), d(10.0));
    assert!(d10 > d5);
    // Quasilinear estimate D = K^2 / 2 as a loose bound.
    for (k, dk) in [(5.0, d5), (10.0, d10)] {
        let ql = k * k / 2.0;
        assert!(dk > 0.5 * ql && dk < 1.5 * ql, "K = {k}: D = {dk}, K^2/2 = {ql}");
    }
}

fn localization(hbar: f64, dim: usize) -> kickecho::rotor::LocalizationEstimate {
    let p = RotorParams::centered_lattice(hbar, dim, 5.0, Coupling::Linear, 0.1).unwrap();
    let op = FloquetOperator::new(p).unwrap();
    let ens = Ensemble::pure(op.momentum_state(0).unwrap());
    estimate_localization_ensemble(p, &ens, 40000).unwrap()
}

#[test]
fn localization_length_matches_diffusive_estimate() {
    let loc = localization(0.083, 65536);
    let rel = loc.relation_residual();
    assert!(rel.abs() < 0.2, "J = {}, sqrt(D t_R) / hbar = {}", loc.localization_length, loc.diffusive_length());
}

#[test]
fn localization_length_scales_as_inverse_hbar_squared() {
    let j1 = localization(0.1, 65536).localization_length;
    let j2 = localization(0.2, 16384).localization_length;
    let ratio = j1 / j2;
    assert!((ratio / 4.0 - 1.0).abs() < 0.25, "J(0.1) / J(0.2) = {ratio}");
}

/// Nearest-neighbor spacings of a chaotic torus spectrum follow level
/// repulsion rather than Poisson statistics.
#[test]
fn chaotic_spacings_are_closer_to_wigner_than_poisson() {
    let n = 64;
    let decomp = spectral_decompose(&torus(n, 5.0, 0.1).dense_unitary().unwrap()).unwrap();
    let mut phases: Vec<f64> = decomp.eigenphases().iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
    phases.sort_by(f64::total_cmp);
    let mean = 2.0 * PI / n as f64;
    let spacings: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { phases[i + 1] - phases[i] } else { phases[0] + 2.0 * PI - phases[i] } / mean)
        .collect();
    let edges = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, f64::INFINITY];
    let wigner_cdf = |s: f64| 1.0 - (-PI * s * s / 4.0).exp();
    let poisson_cdf = |s: f64| 1.0 - (-s).exp();
    let chi2 = |cdf: &dyn Fn(f64) -> f64| {
        edges
            .windows(2)
            .map(|w| {
                let observed = spacings.iter().filter(|&&s| s >= w[0] && s < w[1]).count() as f64;
                let expected = n as f64 * (cdf(w[1]) - cdf(w[0]));
                (observed - expected).powi(2) / expected
            })
            .sum::<f64>()
    };
    let (cw, cp) = (chi2(&wigner_cdf), chi2(&poisson_cdf));
    assert!(cw < cp, "chi2 Wigner {cw} vs Poisson {cp}");
}
