//! Random-matrix predictions for the long-time echo statistics.
//!
//! Treating the eigenbasis overlap matrix as a CUE member gives
//! `<F> = C / N_eff` and `Delta F = G / N_eff` with constants fixed by the
//! initial environment state in the unperturbed eigenbasis.

use faer::MatRef;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::echo::{effective_count, mean_std, NEFF_CUTOFF};
use crate::linalg::{basis_matrix, check_orthonormal, DensityMatrix, LinalgError, StateVector, C64};
use crate::random::random_unitary;

/// Smallest `N_eff` for which the large-dimension predictions are returned.
pub const MIN_NEFF: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmtError {
    #[error("N_eff = {0} is outside large-N validity (need at least {MIN_NEFF})")]
    OutsideValidity(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = RmtError> = std::result::Result<T, E>;

/// Inputs of the closed-form constants `C` and `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmtInputs {
    pub n_eff: usize,
    /// `sum_l omega_ll^2` over the effective subspace.
    pub r_inv: f64,
    /// `Tr[omega^2]` over the effective subspace.
    pub tr_omega_sq: f64,
    /// `phi = R_inv + Tr[omega^2]`, the value the Gaussian average produces.
    pub phi: f64,
    /// `sum_l sum_k (omega_ll^2 + |omega_kl|^2)`, kept for comparison only.
    pub phi_double_sum: f64,
    /// `sum_l omega_ll^4` over the effective subspace.
    pub sum_w4: f64,
    /// Environment degrees of freedom; one for the kicked rotor.
    pub gamma: u32,
}

impl RmtInputs {
    pub fn c(&self) -> f64 {
        self.r_inv + self.tr_omega_sq
    }

    pub fn g(&self) -> f64 {
        (2.0 * self.r_inv * self.r_inv - 2.0 * self.sum_w4 + self.phi * self.phi).max(0.0).sqrt()
    }

    /// `G` evaluated with [`RmtInputs::phi_double_sum`] in place of `phi`.
    pub fn g_double_sum(&self) -> f64 {
        (2.0 * self.r_inv * self.r_inv - 2.0 * self.sum_w4 + self.phi_double_sum.powi(2))
            .max(0.0)
            .sqrt()
    }
}

/// Constants of `omega0` in the orthonormal `basis` with the default `N_eff`
/// cutoff.
pub fn predict_constants(omega0: &DensityMatrix, basis: &[StateVector]) -> Result<RmtInputs> {
    check_orthonormal(basis)?;
    if basis[0].dim() != omega0.dim() {
        return Err(LinalgError::DimensionMismatch { expected: omega0.dim(), found: basis[0].dim() }.into());
    }
    predict_constants_in(omega0, basis_matrix(basis).as_ref(), NEFF_CUTOFF)
}

/// As [`predict_constants`], with the basis as matrix columns (assumed
/// orthonormal) and an explicit cutoff.
pub fn predict_constants_in(omega0: &DensityMatrix, basis: MatRef<'_, C64>, cutoff: f64) -> Result<RmtInputs> {
    if basis.nrows() != omega0.dim() {
        return Err(LinalgError::DimensionMismatch { expected: omega0.dim(), found: basis.nrows() }.into());
    }
    let w = basis.adjoint() * omega0.elements() * basis;
    let n = basis.ncols();
    let diag: Vec<f64> = (0..n).map(|l| w[(l, l)].re).collect();
    let n_eff = effective_count(&diag, cutoff);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[b].total_cmp(&diag[a]).then(a.cmp(&b)));
    let kept = &order[..n_eff];
    let r_inv: f64 = kept.iter().map(|&l| diag[l] * diag[l]).sum();
    let sum_w4: f64 = kept.iter().map(|&l| diag[l].powi(4)).sum();
    let tr_omega_sq: f64 = kept
        .iter()
        .flat_map(|&k| kept.iter().map(move |&l| (k, l)))
        .map(|(k, l)| w[(k, l)].norm_sqr())
        .sum();
    let phi_double_sum = n_eff as f64 * r_inv + tr_omega_sq;
    Ok(RmtInputs {
        n_eff,
        r_inv,
        tr_omega_sq,
        phi: r_inv + tr_omega_sq,
        phi_double_sum,
        sum_w4,
        gamma: 1,
    })
}

/// Constants estimated without diagonalization from the return overlap
/// `P(t)` of [`crate::echo::allegiance_with_return`], averaged over
/// `t >= window_start`.
///
/// The time average of `P` is `R_inv`. For a pure state the average of `P^2`
/// is `2 R_inv^2 - sum_l omega_ll^4`; for a mixed state `sum_l omega_ll^4` is
/// dropped, a relative error of order `1 / N_eff` in `G`.
pub fn time_domain_inputs(
    return_overlap: &[f64],
    window_start: usize,
    pure: bool,
    n_eff: usize,
    tr_omega_sq: f64,
) -> Result<RmtInputs> {
    let window = return_overlap
        .get(window_start..)
        .filter(|w| !w.is_empty())
        .ok_or_else(|| RmtError::InvalidInput(format!("window start {window_start} beyond the series")))?;
    let k = window.len() as f64;
    let r_inv = window.iter().sum::<f64>() / k;
    let sum_w4 = if pure {
        let m2 = window.iter().map(|p| p * p).sum::<f64>() / k;
        (2.0 * r_inv * r_inv - m2).clamp(0.0, r_inv)
    } else {
        0.0
    };
    Ok(RmtInputs {
        n_eff,
        r_inv,
        tr_omega_sq,
        phi: r_inv + tr_omega_sq,
        phi_double_sum: n_eff as f64 * r_inv + tr_omega_sq,
        sum_w4,
        gamma: 1,
    })
}

/// `(C / N_eff, G / N_eff)`.
pub fn predicted_mean_std(inputs: &RmtInputs) -> Result<(f64, f64)> {
    if inputs.n_eff < MIN_NEFF {
        return Err(RmtError::OutsideValidity(inputs.n_eff));
    }
    let n = inputs.n_eff as f64;
    Ok((inputs.c() / n, inputs.g() / n))
}

/// Sampled overlap moments of Haar unitaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueMoments {
    pub dim: usize,
    pub samples: usize,
    pub mean_abs2: f64,
    pub stderr_abs2: f64,
    pub mean_abs4: f64,
    pub stderr_abs4: f64,
}

impl CueMoments {
    /// Gaussian-model value `1/N`.
    pub fn target_abs2(&self) -> f64 {
        1.0 / self.dim as f64
    }

    /// Gaussian-model value `2/N^2`.
    pub fn target_abs4(&self) -> f64 {
        2.0 / (self.dim * self.dim) as f64
    }

    /// Exact Haar value `2/(N(N+1))`.
    pub fn haar_abs4(&self) -> f64 {
        2.0 / (self.dim * (self.dim + 1)) as f64
    }

    /// Deviations from the Gaussian model in units of the standard error.
    pub fn z_scores(&self) -> (f64, f64) {
        (
            (self.mean_abs2 - self.target_abs2()) / self.stderr_abs2,
            (self.mean_abs4 - self.target_abs4()) / self.stderr_abs4,
        )
    }
}

/// Samples per independently seeded stream.
pub const CUE_BLOCK: usize = 1000;

/// Draws `samples` Haar unitaries and records one matrix entry of each, the
/// position cycling over the matrix, so each sample is independent.
pub fn cue_moment_oracle(dim: usize, samples: usize, seed: u64) -> Result<CueMoments> {
    if dim < 8 {
        return Err(RmtError::InvalidInput(format!("dimension {dim} below 8")));
    }
    if samples < 100 {
        return Err(RmtError::InvalidInput(format!("{samples} samples, need at least 100")));
    }
    let mut abs2 = Vec::with_capacity(samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..samples {
        if s % CUE_BLOCK == 0 {
            rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((s / CUE_BLOCK) as u64);
        }
        let u = random_unitary(dim, &mut rng);
        let (i, j) = (s % dim, (s / dim) % dim);
        abs2.push(u.elements()[(i, j)].norm_sqr());
    }
    let abs4: Vec<f64> = abs2.iter().map(|x| x * x).collect();
    let stats = |xs: &[f64]| {
        let (m, sd) = mean_std(xs);
        let n = xs.len() as f64;
        (m, sd * (n / (n - 1.0)).sqrt() / n.sqrt())
    };
    let (mean_abs2, stderr_abs2) = stats(&abs2);
    let (mean_abs4, stderr_abs4) = stats(&abs4);
    Ok(CueMoments { dim, samples, mean_abs2, stderr_abs2, mean_abs4, stderr_abs4 })
}
