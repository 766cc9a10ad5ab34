//! Two uncoupled central systems, each dephased by its own copy of the
//! environment.
//!
//! Basis index of `|n1 n2>` is `n1 * d2 + n2`. Because the environments are
//! uncoupled the joint echo factorizes into the local allegiance amplitudes.

use std::collections::BTreeMap;

use faer::Mat;
use thiserror::Error;

use crate::linalg::{self, CMat, DensityMatrix, LinalgError, StateVector, C64};
use crate::reduced::{CentralSpec, EchoMap, ReducedError, ENERGY_TOL};

/// Negativities at or below this are reported as exactly zero.
pub const NEGATIVITY_TOL: f64 = 1e-12;
/// Agreement required between the closed form and the eigenvalue sum.
pub const FAMILY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BipartiteError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Reduced(#[from] ReducedError),
    #[error("subsystem dimensions {d1} x {d2} do not match state dimension {dim}")]
    DimensionMismatch { d1: usize, d2: usize, dim: usize },
    #[error("assembled state is not positive (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("central systems are not identical")]
    NotIdentical,
    #[error("degenerate gaps: e_{0} - e_{1} + e_{2} - e_{3} = 0")]
    DegenerateGaps(usize, usize, usize, usize),
    #[error("closed-form negativity {closed} disagrees with eigenvalue sum {computed}")]
    FamilyMismatch { closed: f64, computed: f64 },
    #[error("missing mean decoherence for pair ({0}, {1})")]
    MissingMean(usize, usize),
    #[error("F = {0} outside [0, 1]")]
    OutOfRange(f64),
}

pub type Result<T, E = BipartiteError> = std::result::Result<T, E>;

/// Joint initial state together with the two local central systems.
#[derive(Debug, Clone)]
pub struct BipartiteSpec {
    /// Local system 1; its coefficient matrix is the marginal of `rho0`.
    pub spec1: CentralSpec,
    pub spec2: CentralSpec,
    /// `A_{n1 m1 n2 m2}` as a matrix on the product space.
    pub rho0: DensityMatrix,
    /// Both environments use the same rotor parameters.
    pub shared_env: bool,
}

impl BipartiteSpec {
    pub fn new(
        energies1: Vec<f64>,
        couplings1: Vec<f64>,
        energies2: Vec<f64>,
        couplings2: Vec<f64>,
        rho0: DensityMatrix,
        shared_env: bool,
    ) -> Result<Self> {
        let (d1, d2) = (energies1.len(), energies2.len());
        if d1 * d2 != rho0.dim() {
            return Err(BipartiteError::DimensionMismatch { d1, d2, dim: rho0.dim() });
        }
        let (m1, m2) = marginals(&rho0, d1, d2);
        let spec1 = CentralSpec::new(energies1, couplings1, DensityMatrix::from_matrix(m1)?)?;
        let spec2 = CentralSpec::new(energies2, couplings2, DensityMatrix::from_matrix(m2)?)?;
        Ok(Self { spec1, spec2, rho0, shared_env })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.spec1.n_c(), self.spec2.n_c())
    }
}

fn marginals(rho: &DensityMatrix, d1: usize, d2: usize) -> (CMat, CMat) {
    let m1 = Mat::from_fn(d1, d1, |i, j| (0..d2).map(|k| rho.get(i * d2 + k, j * d2 + k)).sum());
    let m2 = Mat::from_fn(d2, d2, |i, j| (0..d1).map(|k| rho.get(k * d2 + i, k * d2 + j)).sum());
    (m1, m2)
}

/// `(|00> + |01> + |10> - |11>) / 2`.
pub fn psi_c() -> StateVector {
    let h = C64::new(0.5, 0.0);
    StateVector::from_amplitudes(vec![h, h, h, -h]).expect("normalized")
}

/// Two qubits with `e_0 = omega/2`, `e_1 = -omega/2`, coupling eigenvalues
/// `s = (0, 1)` and identical environments, prepared in [`psi_c`].
pub fn two_qubit_spec(omega: f64) -> Result<BipartiteSpec> {
    let e = vec![0.5 * omega, -0.5 * omega];
    let s = vec![0.0, 1.0];
    BipartiteSpec::new(e.clone(), s.clone(), e, s, DensityMatrix::pure(&psi_c()), true)
}

/// Joint state at kick `t` from the two local echo maps.
pub fn assemble_bipartite_rho_t(
    spec: &BipartiteSpec,
    echoes1: &EchoMap,
    echoes2: &EchoMap,
    t: u64,
) -> Result<DensityMatrix> {
    let (d1, d2) = spec.dims();
    let e1 = spec.spec1.energies();
    let e2 = spec.spec2.energies();
    let dim = d1 * d2;
    let mut rho = Mat::<C64>::zeros(dim, dim);
    for n1 in 0..d1 {
        for n2 in 0..d2 {
            for m1 in 0..d1 {
                for m2 in 0..d2 {
                    let (r, c) = (n1 * d2 + n2, m1 * d2 + m2);
                    let a = spec.rho0.get(r, c);
                    if a.norm() < crate::reduced::COEFF_TOL {
                        continue;
                    }
                    let phase = -(e1[n1] - e1[m1] + e2[n2] - e2[m2]) * t as f64;
                    rho[(r, c)] = a
                        * C64::from_polar(1.0, phase)
                        * echoes1.f(n1, m1, t)?
                        * echoes2.f(n2, m2, t)?;
                }
            }
        }
    }
    match DensityMatrix::from_matrix(rho) {
        Ok(state) => Ok(state),
        Err(LinalgError::NotPositive(min)) => Err(BipartiteError::NotPositive(min)),
        Err(e) => Err(e.into()),
    }
}

/// Partial transpose over the second subsystem.
pub fn partial_transpose(rho: &DensityMatrix, dims: (usize, usize)) -> Result<CMat> {
    let (d1, d2) = dims;
    if d1 * d2 != rho.dim() {
        return Err(BipartiteError::DimensionMismatch { d1, d2, dim: rho.dim() });
    }
    let dim = d1 * d2;
    Ok(Mat::from_fn(dim, dim, |r, c| {
        let (n1, n2) = (r / d2, r % d2);
        let (m1, m2) = (c / d2, c % d2);
        rho.get(n1 * d2 + m2, m1 * d2 + n2)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativityResult {
    /// `beta = -F - 2 sqrt(F) + 1`, for states of the two-qubit echo family.
    pub beta: Option<f64>,
    pub negativity: f64,
    pub entangled: bool,
}

fn negativity_and_min(rho: &DensityMatrix, dims: (usize, usize)) -> Result<(f64, f64)> {
    let pt = partial_transpose(rho, dims)?;
    let values = linalg::hermitian_eigenvalues(pt.as_ref())?;
    let neg = values.iter().map(|l| (l.abs() - l) / 2.0).sum::<f64>();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((neg, min))
}

/// `sum_j (|l_j| - l_j) / 2` over the partial-transpose spectrum.
pub fn negativity(rho: &DensityMatrix, dims: (usize, usize)) -> Result<NegativityResult> {
    let (neg, _) = negativity_and_min(rho, dims)?;
    let entangled = neg > NEGATIVITY_TOL;
    Ok(NegativityResult { beta: None, negativity: if entangled { neg } else { 0.0 }, entangled })
}

/// The evolved two-qubit state with `f_01(t) exp(-i omega t)` replaced by
/// `sqrt(F)`; the local phase does not affect entanglement.
pub fn two_qubit_family(f: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&f) {
        return Err(BipartiteError::OutOfRange(f));
    }
    let x = f.sqrt();
    let rows = [
        [1.0, x, x, -f],
        [x, 1.0, f, -x],
        [x, f, 1.0, -x],
        [-f, -x, -x, 1.0],
    ];
    Ok(DensityMatrix::from_matrix(Mat::from_fn(4, 4, |i, j| C64::new(rows[i][j] / 4.0, 0.0)))?)
}

pub fn family_beta(f: f64) -> f64 {
    -f - 2.0 * f.sqrt() + 1.0
}

/// Negativity of [`two_qubit_family`] cross-checked against `(|beta| - beta)/8`.
pub fn family_negativity(f: f64) -> Result<NegativityResult> {
    let rho = two_qubit_family(f)?;
    let mut result = negativity(&rho, (2, 2))?;
    let beta = family_beta(f);
    let closed = (beta.abs() - beta) / 8.0;
    if (closed - result.negativity).abs() > FAMILY_TOL {
        return Err(BipartiteError::FamilyMismatch { closed, computed: result.negativity });
    }
    result.beta = Some(beta);
    Ok(result)
}

/// Root of the family negativity in `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuddenDeath {
    pub f_star: f64,
    pub bracket_width: f64,
    /// `3 - 2 sqrt(2)`, where `beta` vanishes.
    pub closed_form: f64,
    /// `sqrt(sqrt(2) - 1)`, a quoted critical value. It equals
    /// `f_star^(1/4)`, not `f_star`.
    pub quoted_value: f64,
}

/// Bisects the sign of the smallest partial-transpose eigenvalue along the
/// two-qubit family.
pub fn sudden_death_threshold() -> SuddenDeath {
    let min_eig = |f: f64| {
        let rho = two_qubit_family(f).expect("F in range");
        negativity_and_min(&rho, (2, 2)).expect("2 x 2 state").1
    };
    // Separable (min >= 0) at F = 0, entangled at F = 1.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if min_eig(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    SuddenDeath {
        f_star: 0.5 * (lo + hi),
        bracket_width: hi - lo,
        closed_form: 3.0 - 2.0 * 2f64.sqrt(),
        quoted_value: (2f64.sqrt() - 1.0).sqrt(),
    }
}

/// Verifies that `e_f - e_j + e_k - e_l = 0` has only the trivial solutions.
pub fn check_nondegenerate_gaps(energies: &[f64]) -> Result<()> {
    let n = energies.len();
    for f in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let trivial = (f == j && k == l) || (f == l && k == j);
                    if !trivial && (energies[f] - energies[j] + energies[k] - energies[l]).abs() <= ENERGY_TOL {
                        return Err(BipartiteError::DegenerateGaps(f, j, k, l));
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EquilibriumDecomposition {
    /// `sum A_{n1 n1 n2 n2} |n1><n1| (x) |n2><n2|`.
    pub separable: DensityMatrix,
    /// `sum_{n1 != n2} A_{n1 n2 n2 n1} <F_{n1 n2}> |n1><n2| (x) |n2><n1|`.
    pub correction: CMat,
    /// Trace norm of the correction.
    pub correction_norm: f64,
}

impl EquilibriumDecomposition {
    pub fn total(&self) -> CMat {
        self.separable.elements() + &self.correction
    }
}

/// Time-averaged joint state split into its separable diagonal and the
/// echo-weighted correction. `mean_f` maps unordered pairs to `<F_{n1 n2}>`.
pub fn equilibrium_decomposition(
    spec: &BipartiteSpec,
    mean_f: &BTreeMap<(usize, usize), f64>,
) -> Result<EquilibriumDecomposition> {
    let (d1, d2) = spec.dims();
    if d1 != d2 || spec.spec1.energies() != spec.spec2.energies() {
        return Err(BipartiteError::NotIdentical);
    }
    check_nondegenerate_gaps(spec.spec1.energies())?;
    let d = d1;
    let dim = d * d;
    let diag: Vec<f64> = (0..dim).map(|r| spec.rho0.get(r, r).re).collect();
    let separable = DensityMatrix::diagonal(&diag)?;
    let mut correction = Mat::<C64>::zeros(dim, dim);
    for n1 in 0..d {
        for n2 in 0..d {
            if n1 == n2 {
                continue;
            }
            let (r, c) = (n1 * d + n2, n2 * d + n1);
            let a = spec.rho0.get(r, c);
            if a.norm() < crate::reduced::COEFF_TOL {
                continue;
            }
            let f = mean_f
                .get(&(n1, n2))
                .or_else(|| mean_f.get(&(n2, n1)))
                .ok_or(BipartiteError::MissingMean(n1.max(n2), n1.min(n2)))?;
            correction[(r, c)] = a * *f;
        }
    }
    let values = linalg::hermitian_eigenvalues(correction.as_ref())?;
    let correction_norm = values.iter().map(|v| v.abs()).sum();
    Ok(EquilibriumDecomposition { separable, correction, correction_norm })
}
