//! Seeded random states and Haar unitaries.

use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CMat, DensityMatrix, StateVector, UnitaryMatrix, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    // Fill column by column so the draw order is independent of faer's layout.
    let mut m = Mat::<C64>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = gaussian(rng);
        }
    }
    m
}

/// Uniformly distributed pure state.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    let amps = (0..dim).map(|_| gaussian(rng)).collect();
    StateVector::normalized(amps).expect("gaussian vector is almost surely nonzero")
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of `diag(R)` moved into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> UnitaryMatrix {
    let z = ginibre(dim, dim, rng);
    let qr = z.qr();
    let r = qr.R();
    let mut q = qr.compute_Q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    UnitaryMatrix::new(q).expect("QR factor is unitary")
}

/// Random mixed state of the given rank (induced measure).
pub fn random_density_matrix<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let x = ginibre(dim, rank, rng);
    let mut rho = &x * x.adjoint();
    let tr: f64 = (0..dim).map(|i| rho[(i, i)].re).sum();
    for j in 0..dim {
        for i in 0..dim {
            rho[(i, j)] /= tr;
        }
    }
    // Symmetrize away rounding.
    let herm = Mat::from_fn(dim, dim, |i, j| (rho[(i, j)] + rho[(j, i)].conj()) * 0.5);
    DensityMatrix::from_matrix(herm).expect("X X^dagger is a valid state")
}
