//! Dense complex states and operators.
//!
//! Everything here is stored densely: evolved chaotic states have no useful
//! sparsity, and the largest operators built by this crate stay below a few
//! thousand levels.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

/// Normalization tolerance for [`StateVector`].
pub const NORM_TOL: f64 = 1e-10;
/// Hermiticity and trace tolerance for [`DensityMatrix`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for a density matrix.
pub const PSD_TOL: f64 = -1e-8;
/// Maximum element of `U^dagger U - I` accepted for a unitary.
pub const UNITARY_TOL: f64 = 1e-9;
/// Maximum Gram deviation accepted for an orthonormal basis.
pub const GRAM_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension must be positive")]
    EmptyDimension,
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("matrix is not unitary (max |U^dag U - I| = {0:e})")]
    NotUnitary(f64),
    #[error("basis is not orthonormal (max Gram deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
}

pub type Result<T, E = LinalgError> = std::result::Result<T, E>;

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(LinalgError::EmptyDimension);
        }
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(LinalgError::NotNormalized(norm));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(LinalgError::EmptyDimension);
        }
        let norm = l2_norm(&amplitudes);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(LinalgError::NotNormalized(norm));
        }
        let inv = 1.0 / norm;
        amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(Self { amplitudes })
    }

    /// The computational basis ket `|index>`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dim {dim}");
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self { amplitudes }
    }

    /// Skips the norm check; used by propagators whose output is unitary by
    /// construction.
    pub(crate) fn from_evolved(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.amplitudes)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        assert_eq!(self.dim(), other.dim(), "inner product of mismatched states");
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// Column matrix view, useful for dense algebra.
    pub fn to_column(&self) -> CMat {
        Mat::from_fn(self.dim(), 1, |i, _| self.amplitudes[i])
    }
}

/// `sum_i conj(a_i) b_i`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn l2_norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// A weighted set of orthonormal pure states: the spectral form of a mixed
/// state with negligible eigenvalues discarded.
#[derive(Debug, Clone)]
pub struct Ensemble {
    weights: Vec<f64>,
    states: Vec<StateVector>,
}

impl Ensemble {
    pub fn pure(state: StateVector) -> Self {
        Self { weights: vec![1.0], states: vec![state] }
    }

    /// Weights must be non-negative and sum to one; states must share a
    /// dimension. Orthogonality is the caller's responsibility.
    pub fn new(weights: Vec<f64>, states: Vec<StateVector>) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(LinalgError::InvalidEnsemble(format!(
                "{} weights for {} states",
                weights.len(),
                states.len()
            )));
        }
        let dim = states[0].dim();
        if let Some(bad) = states.iter().find(|s| s.dim() != dim) {
            return Err(LinalgError::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(LinalgError::InvalidEnsemble("negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > HERMITIAN_TOL {
            return Err(LinalgError::BadTrace(total));
        }
        Ok(Self { weights, states })
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &StateVector)> {
        self.weights.iter().copied().zip(self.states.iter())
    }

    /// `dim x len` matrix whose columns are `sqrt(w_k) |chi_k>`, so that
    /// `X X^dagger` is the density matrix.
    pub fn weighted_columns(&self) -> CMat {
        Mat::from_fn(self.dim(), self.len(), |i, k| {
            self.states[k].amplitudes()[i] * self.weights[k].sqrt()
        })
    }

    pub fn to_density_matrix(&self) -> DensityMatrix {
        let x = self.weighted_columns();
        DensityMatrix { elements: &x * x.adjoint() }
    }
}

/// A finite-dimensional mixed state.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    elements: CMat,
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace and positivity.
    pub fn from_matrix(elements: CMat) -> Result<Self> {
        let (rows, cols) = (elements.nrows(), elements.ncols());
        if rows != cols {
            return Err(LinalgError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(LinalgError::EmptyDimension);
        }
        let herm = hermiticity_deviation(elements.as_ref());
        if herm > HERMITIAN_TOL {
            return Err(LinalgError::NotHermitian(herm));
        }
        let trace = trace(elements.as_ref());
        if (trace.re - 1.0).abs() > HERMITIAN_TOL || trace.im.abs() > HERMITIAN_TOL {
            return Err(LinalgError::BadTrace(trace.re));
        }
        let min = hermitian_eigenvalues(elements.as_ref())?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min < PSD_TOL {
            return Err(LinalgError::NotPositive(min));
        }
        Ok(Self { elements })
    }

    pub fn pure(state: &StateVector) -> Self {
        let col = state.to_column();
        Self { elements: &col * col.adjoint() }
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        Self::from_matrix(Mat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(weights[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        assert!(dim > 0);
        let w = 1.0 / dim as f64;
        Self {
            elements: Mat::from_fn(dim, dim, |i, j| {
                if i == j {
                    C64::new(w, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> MatRef<'_, C64> {
        self.elements.as_ref()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.elements[(row, col)]
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.elements[(i, i)].re).collect()
    }

    /// Eigenvalues in nondecreasing order with the matching eigenvectors as
    /// columns.
    pub fn eigen(&self) -> Result<(Vec<f64>, CMat)> {
        let evd = self
            .elements
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| LinalgError::Eigensolver(format!("{e:?}")))?;
        let values = evd.S().column_vector().iter().map(|z| z.re).collect();
        Ok((values, evd.U().to_owned()))
    }

    /// Spectral ensemble keeping eigenvectors whose weight exceeds `cutoff`.
    /// Kept weights are renormalized to sum to one.
    pub fn ensemble(&self, cutoff: f64) -> Result<Ensemble> {
        let (values, vectors) = self.eigen()?;
        let mut weights = Vec::new();
        let mut states = Vec::new();
        for (k, &w) in values.iter().enumerate().rev() {
            if w > cutoff {
                let amps: Vec<C64> = vectors.col(k).iter().copied().collect();
                states.push(StateVector::normalized(amps)?);
                weights.push(w);
            }
        }
        if states.is_empty() {
            return Err(LinalgError::InvalidEnsemble("no eigenvalue above cutoff".into()));
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ensemble::new(weights, states)
    }

    /// `U rho U^dagger`.
    pub fn conjugated(&self, u: &UnitaryMatrix) -> Result<Self> {
        check_dims(self.dim(), u.dim())?;
        Ok(Self { elements: u.elements() * self.elements() * u.elements().adjoint() })
    }
}

/// A unitary operator.
#[derive(Debug, Clone)]
pub struct UnitaryMatrix {
    elements: CMat,
}

impl UnitaryMatrix {
    pub fn new(elements: CMat) -> Result<Self> {
        let (rows, cols) = (elements.nrows(), elements.ncols());
        if rows != cols {
            return Err(LinalgError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(LinalgError::EmptyDimension);
        }
        let dev = unitarity_deviation(elements.as_ref());
        if dev >= UNITARY_TOL {
            return Err(LinalgError::NotUnitary(dev));
        }
        Ok(Self { elements })
    }

    pub fn identity(dim: usize) -> Self {
        Self { elements: Mat::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> MatRef<'_, C64> {
        self.elements.as_ref()
    }

    pub fn apply(&self, psi: &StateVector) -> StateVector {
        assert_eq!(psi.dim(), self.dim());
        let out = self.elements() * psi.to_column();
        StateVector::from_evolved(out.col(0).iter().copied().collect())
    }

    pub fn adjoint(&self) -> Self {
        Self { elements: self.elements.adjoint().to_owned() }
    }

    /// `max |U^dagger U - I|`.
    pub fn deviation(&self) -> f64 {
        unitarity_deviation(self.elements())
    }
}

pub fn unitarity_deviation(u: MatRef<'_, C64>) -> f64 {
    let prod = u.adjoint() * u;
    let n = prod.nrows();
    let mut dev = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((prod[(i, j)] - target).norm());
        }
    }
    dev
}

pub fn hermiticity_deviation(m: MatRef<'_, C64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Keeps dense kernels on the calling thread, for callers that parallelize
/// at a coarser grain.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

pub fn trace(m: MatRef<'_, C64>) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Eigenvalues of a Hermitian matrix (lower triangle is read).
pub fn hermitian_eigenvalues(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LinalgError::Eigensolver(format!("{e:?}")))
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(LinalgError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Half the absolute eigenvalue sum of `a - b`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let diff = a.elements() - b.elements();
    let values = hermitian_eigenvalues(diff.as_ref())?;
    Ok(0.5 * values.iter().map(|v| v.abs()).sum::<f64>())
}

/// `sqrt(Tr[(a - b)^2])`.
pub fn hs_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    // Tr[X^2] = sum |X_ij|^2 for Hermitian X.
    let diff = a.elements() - b.elements();
    Ok(diff.squared_norm_l2().sqrt())
}

/// `Tr[rho^2]`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.elements().squared_norm_l2()
}

/// Largest Gram-matrix deviation from the identity; errors above [`GRAM_TOL`].
pub fn check_orthonormal(basis: &[StateVector]) -> Result<f64> {
    let Some(first) = basis.first() else {
        return Err(LinalgError::EmptyDimension);
    };
    let dim = first.dim();
    if let Some(bad) = basis.iter().find(|s| s.dim() != dim) {
        return Err(LinalgError::DimensionMismatch { expected: dim, found: bad.dim() });
    }
    let cols = basis_matrix(basis);
    let gram = cols.adjoint() * &cols;
    let n = basis.len();
    let mut dev = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).norm());
        }
    }
    if dev > GRAM_TOL {
        return Err(LinalgError::NotOrthonormal(dev));
    }
    Ok(dev)
}

/// Stacks kets as the columns of a matrix.
pub fn basis_matrix(basis: &[StateVector]) -> CMat {
    let dim = basis.first().map_or(0, StateVector::dim);
    Mat::from_fn(dim, basis.len(), |i, k| basis[k].amplitudes()[i])
}

/// `sum_l |<l|rho|l>|^2` in the supplied orthonormal basis.
pub fn inverse_participation_ratio(rho: &DensityMatrix, basis: &[StateVector]) -> Result<f64> {
    check_orthonormal(basis)?;
    check_dims(rho.dim(), basis[0].dim())?;
    let v = basis_matrix(basis);
    let rv = rho.elements() * &v;
    let mut total = 0.0;
    for l in 0..basis.len() {
        let diag: C64 = (0..v.nrows()).map(|i| v[(i, l)].conj() * rv[(i, l)]).sum();
        total += diag.norm_sqr();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density_matrix, random_state, random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn trace_distance_examples() {
        let a = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityMatrix::diagonal(&[0.0, 1.0]).unwrap();
        assert!(trace_distance(&a, &a).unwrap().abs() < 1e-14);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-14);
        let p = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();
        let q = DensityMatrix::diagonal(&[0.25, 0.75]).unwrap();
        assert!((trace_distance(&p, &q).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hs_distance_examples() {
        let a = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityMatrix::diagonal(&[0.0, 1.0]).unwrap();
        assert_eq!(hs_distance(&a, &a).unwrap(), 0.0);
        assert!((hs_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn hs_distance_dominates_trace_distance_on_random_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_density_matrix(4, 4, &mut rng);
        let b = random_density_matrix(4, 4, &mut rng);
        // Oracle: eigendecomposition of the difference, summed by hand.
        let diff = a.elements() - b.elements();
        let evals = hermitian_eigenvalues(diff.as_ref()).unwrap();
        let td: f64 = 0.5 * evals.iter().map(|v| v.abs()).sum::<f64>();
        let hs: f64 = evals.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((trace_distance(&a, &b).unwrap() - td).abs() < 1e-12);
        assert!((hs_distance(&a, &b).unwrap() - hs).abs() < 1e-12);
        assert!(hs >= (2.0 / 4f64.sqrt()) * td - 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = DensityMatrix::maximally_mixed(2);
        let b = DensityMatrix::maximally_mixed(3);
        assert!(matches!(trace_distance(&a, &b), Err(LinalgError::DimensionMismatch { .. })));
        assert!(matches!(hs_distance(&a, &b), Err(LinalgError::DimensionMismatch { .. })));
    }

    #[test]
    fn purity_examples() {
        let psi = StateVector::normalized(vec![c(1.0), C64::new(0.0, 1.0), c(-2.0)]).unwrap();
        assert!((purity(&DensityMatrix::pure(&psi)) - 1.0).abs() < 1e-14);
        assert!((purity(&DensityMatrix::maximally_mixed(5)) - 0.2).abs() < 1e-14);
        let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.2]).unwrap();
        assert!((purity(&rho) - 0.38).abs() < 1e-14);
    }

    #[test]
    fn ipr_examples() {
        let basis: Vec<_> = (0..3).map(|i| StateVector::basis(3, i)).collect();
        let rho = DensityMatrix::diagonal(&[1.0, 0.0, 0.0]).unwrap();
        assert!((inverse_participation_ratio(&rho, &basis).unwrap() - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary(4, &mut rng);
        let rotated: Vec<_> = (0..4)
            .map(|k| StateVector::from_amplitudes(u.elements().col(k).iter().copied().collect()).unwrap())
            .collect();
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!((inverse_participation_ratio(&mixed, &rotated).unwrap() - 0.25).abs() < 1e-12);

        let half = DensityMatrix::diagonal(&[0.5, 0.5]).unwrap();
        let eig: Vec<_> = (0..2).map(|i| StateVector::basis(2, i)).collect();
        assert!((inverse_participation_ratio(&half, &eig).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ipr_rejects_non_orthonormal_basis() {
        let rho = DensityMatrix::maximally_mixed(2);
        let skew = vec![
            StateVector::basis(2, 0),
            StateVector::normalized(vec![c(1.0), c(1.0)]).unwrap(),
        ];
        assert!(matches!(
            inverse_participation_ratio(&rho, &skew),
            Err(LinalgError::NotOrthonormal(_))
        ));
    }

    #[test]
    fn constructors_reject_invalid_input() {
        let non_herm = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { c(0.3) } else if i == j { c(0.5) } else { c(0.0) });
        assert!(matches!(DensityMatrix::from_matrix(non_herm), Err(LinalgError::NotHermitian(_))));
        assert!(matches!(DensityMatrix::diagonal(&[0.5, 0.6]), Err(LinalgError::BadTrace(_))));
        assert!(matches!(DensityMatrix::diagonal(&[1.5, -0.5]), Err(LinalgError::NotPositive(_))));
        // Within the PSD tolerance.
        assert!(DensityMatrix::diagonal(&[1.0 + 5e-9, -5e-9]).is_ok());
        assert!(StateVector::from_amplitudes(vec![c(1.0), c(1.0)]).is_err());
        let not_unitary = Mat::from_fn(2, 2, |i, j| if i == j { c(1.0) } else { c(0.1) });
        assert!(matches!(UnitaryMatrix::new(not_unitary), Err(LinalgError::NotUnitary(_))));
    }

    #[test]
    fn ensemble_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = random_density_matrix(5, 3, &mut rng);
        let ens = rho.ensemble(1e-12).unwrap();
        assert_eq!(ens.len(), 3);
        let back = ens.to_density_matrix();
        let diff = (rho.elements() - back.elements()).norm_max();
        assert!(diff < 1e-12, "{diff}");
        let psi = random_state(5, &mut rng);
        assert_eq!(DensityMatrix::pure(&psi).ensemble(1e-12).unwrap().len(), 1);
    }
}
