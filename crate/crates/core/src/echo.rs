//! Allegiance amplitudes, decoherence functions and their time averages.
//!
//! For an echo pair the unperturbed propagator `U_m` and the perturbed one
//! `U_n` give `f(t) = Tr[U_m^dagger(t) U_n(t) omega]` and `F = |f|^2`. Long-time
//! statistics come either from a sampled window or exactly from the Floquet
//! spectra, where with `U psi_l = exp(i xi_l) psi_l`
//!
//! ```text
//! f(t) = sum_{l l'} a_{l l'} exp(i (xi~_{l'} - xi_l) t),
//! a_{l l'} = O_{l l'} B_{l' l},  O_{l l'} = <psi_l|psi~_{l'}>,  B_{l' l} = <psi~_{l'}|omega|psi_l>.
//! ```

use std::f64::consts::PI;

use faer::{Mat, MatRef};
use thiserror::Error;

use crate::linalg::{CMat, DensityMatrix, Ensemble, LinalgError, StateVector, UnitaryMatrix, C64};
use crate::rotor::{Evolver, FloquetOperator, RotorError};

/// Weight below which eigenvectors of a mixed initial state are dropped.
pub const ENSEMBLE_CUTOFF: f64 = 1e-12;
/// Default `N_eff` cumulative-weight cutoff.
pub const NEFF_CUTOFF: f64 = 1e-6;
/// Smallest eigenphase gap accepted as non-degenerate.
pub const GAP_TOL: f64 = 1e-9;
/// Minimum number of samples in a statistics window.
pub const MIN_WINDOW: usize = 500;
/// Batches used for the standard errors of windowed statistics.
pub const STAT_BATCHES: usize = 20;
/// Largest matrix handled by [`spectral_decompose`].
pub const SPECTRAL_CAP: usize = 4096;
/// Largest dimension accepted by [`exact_mean_f2`].
pub const MEAN_F2_CAP: usize = 256;
/// Largest dimension accepted by the brute-force references.
pub const BRUTE_FORCE_CAP: usize = 16;
/// Reconstruction tolerance of a spectral decomposition.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EchoError {
    #[error(transparent)]
    Rotor(#[from] RotorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("window holds {samples} samples, need at least {required}")]
    WindowTooShort { samples: usize, required: usize },
    #[error("degenerate {spectrum} spectrum: eigenphases {first} and {second} are {gap:e} apart")]
    Degenerate { spectrum: &'static str, first: usize, second: usize, gap: f64 },
    #[error("dimension {dim} exceeds the cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("spectral reconstruction error {0:e}")]
    Reconstruction(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = EchoError> = std::result::Result<T, E>;

/// Allegiance amplitudes `f(t)` and decoherence function `F(t) = |f(t)|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSeries {
    times: Vec<u64>,
    f: Vec<C64>,
    decoherence: Vec<f64>,
}

impl EchoSeries {
    /// Builds a series over consecutive kicks `0, 1, ...` from amplitudes.
    pub fn from_amplitudes(f: Vec<C64>) -> Self {
        let times = (0..f.len() as u64).collect();
        let decoherence = f.iter().map(|z| z.norm_sqr()).collect();
        Self { times, f, decoherence }
    }

    /// The conjugate series `f_mn = conj(f_nm)`.
    pub fn conjugate(&self) -> Self {
        Self {
            times: self.times.clone(),
            f: self.f.iter().map(|z| z.conj()).collect(),
            decoherence: self.decoherence.clone(),
        }
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn f(&self) -> &[C64] {
        &self.f
    }

    /// `F(t)`.
    pub fn decoherence(&self) -> &[f64] {
        &self.decoherence
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn t_max(&self) -> u64 {
        self.times.last().copied().unwrap_or(0)
    }

    /// A series that is identically one, as for a pair with no perturbation.
    pub fn unit(t_max: u64) -> Self {
        Self::from_amplitudes(vec![C64::new(1.0, 0.0); t_max as usize + 1])
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(EchoError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `f(t) = Tr[U_unpert^dagger(t) U_pert(t) omega0]` for `t = 0 ..= t_max`.
pub fn allegiance_series(
    unpert: &FloquetOperator,
    pert: &FloquetOperator,
    omega0: &DensityMatrix,
    t_max: u64,
) -> Result<EchoSeries> {
    check_dim(unpert.dim(), omega0.dim())?;
    allegiance_series_ensemble(unpert, pert, &omega0.ensemble(ENSEMBLE_CUTOFF)?, t_max)
}

/// As [`allegiance_series`] for an initial state given by its ensemble.
/// Identical propagators give the unit series without evolving.
pub fn allegiance_series_ensemble(
    unpert: &FloquetOperator,
    pert: &FloquetOperator,
    omega0: &Ensemble,
    t_max: u64,
) -> Result<EchoSeries> {
    if t_max < 1 {
        return Err(EchoError::InvalidInput("t_max must be at least 1".into()));
    }
    check_dim(unpert.dim(), pert.dim())?;
    check_dim(unpert.dim(), omega0.dim())?;
    if unpert.params() == pert.params() {
        return Ok(EchoSeries::unit(t_max));
    }
    let mut f = vec![C64::new(0.0, 0.0); t_max as usize + 1];
    for (w, chi) in omega0.iter() {
        let mut a = Evolver::new(pert, chi)?;
        let mut b = Evolver::new(unpert, chi)?;
        f[0] += w * chi.inner(chi);
        for slot in f.iter_mut().skip(1) {
            a.step()?;
            b.step()?;
            *slot += w * crate::linalg::inner(b.amplitudes(), a.amplitudes());
        }
    }
    Ok(EchoSeries::from_amplitudes(f))
}

/// An echo series together with `P(t) = Tr[omega U_m(t) omega U_m^dagger(t)]`,
/// the return overlap of the initial state under the unperturbed propagator.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoRun {
    pub series: EchoSeries,
    pub return_overlap: Vec<f64>,
}

/// As [`allegiance_series_ensemble`], also recording the return overlap.
pub fn allegiance_with_return(
    unpert: &FloquetOperator,
    pert: &FloquetOperator,
    omega0: &Ensemble,
    t_max: u64,
) -> Result<EchoRun> {
    if t_max < 1 {
        return Err(EchoError::InvalidInput("t_max must be at least 1".into()));
    }
    check_dim(unpert.dim(), pert.dim())?;
    check_dim(unpert.dim(), omega0.dim())?;
    let len = t_max as usize + 1;
    let mut f = vec![C64::new(0.0, 0.0); len];
    let mut ret = vec![0.0; len];
    let states = omega0.states();
    let weights = omega0.weights();
    let identical = unpert.params() == pert.params();
    for (k, chi) in states.iter().enumerate() {
        let w = weights[k];
        let mut a = Evolver::new(pert, chi)?;
        let mut b = Evolver::new(unpert, chi)?;
        f[0] += w;
        ret[0] += w * w;
        for t in 1..len {
            a.step()?;
            b.step()?;
            f[t] += if identical { C64::new(w, 0.0) } else { w * crate::linalg::inner(b.amplitudes(), a.amplitudes()) };
            for (w2, chi2) in weights.iter().zip(states) {
                ret[t] += w * w2 * crate::linalg::inner(chi2.amplitudes(), b.amplitudes()).norm_sqr();
            }
        }
    }
    Ok(EchoRun { series: EchoSeries::from_amplitudes(f), return_overlap: ret })
}

/// Echo series for several `(n, m)` pairs sharing one set of conditional
/// propagators: `f_nm(t) = sum_k w_k <U_m^t chi_k | U_n^t chi_k>`. Each level
/// is evolved once per ensemble member.
pub fn allegiance_map(
    ops: &[FloquetOperator],
    pairs: &[(usize, usize)],
    omega0: &Ensemble,
    t_max: u64,
) -> Result<Vec<EchoSeries>> {
    if t_max < 1 {
        return Err(EchoError::InvalidInput("t_max must be at least 1".into()));
    }
    let Some(first) = ops.first() else {
        return Err(EchoError::InvalidInput("no propagators".into()));
    };
    for op in ops {
        check_dim(first.dim(), op.dim())?;
    }
    check_dim(first.dim(), omega0.dim())?;
    if let Some(&(n, m)) = pairs.iter().find(|&&(n, m)| n >= ops.len() || m >= ops.len()) {
        return Err(EchoError::InvalidInput(format!("pair ({n}, {m}) out of range")));
    }
    let len = t_max as usize + 1;
    let identical: Vec<bool> = pairs.iter().map(|&(n, m)| ops[n].params() == ops[m].params()).collect();
    let mut f = vec![vec![C64::new(0.0, 0.0); len]; pairs.len()];
    // Overlaps of all levels at once as the Gram matrix of the evolved states.
    let mut block = faer::Mat::<C64>::zeros(first.dim(), ops.len());
    for (w, chi) in omega0.iter() {
        let mut evs = ops.iter().map(|op| Evolver::new(op, chi)).collect::<Result<Vec<_>, _>>()?;
        for series in f.iter_mut() {
            series[0] += w;
        }
        for t in 1..len {
            for (l, ev) in evs.iter_mut().enumerate() {
                ev.step()?;
                block.col_as_slice_mut(l).copy_from_slice(ev.amplitudes());
            }
            let gram = block.adjoint() * &block;
            for ((series, &(n, m)), &same) in f.iter_mut().zip(pairs).zip(&identical) {
                series[t] += if same { C64::new(w, 0.0) } else { w * gram[(m, n)] };
            }
        }
    }
    Ok(f.into_iter().map(EchoSeries::from_amplitudes).collect())
}

/// Windowed statistics of `F`, with batch-means standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoStats {
    pub mean_f: f64,
    pub std_f: f64,
    pub window_start: u64,
    pub window_len: usize,
    pub mean_stderr: f64,
    pub std_stderr: f64,
}

/// Mean and standard deviation of `F` over `[window_start, t_max]`.
pub fn echo_stats(series: &EchoSeries, window_start: u64) -> Result<EchoStats> {
    let start = series.times().partition_point(|&t| t < window_start);
    let window = &series.decoherence()[start..];
    if window.len() < MIN_WINDOW {
        return Err(EchoError::WindowTooShort { samples: window.len(), required: MIN_WINDOW });
    }
    let (mean, std) = mean_std(window);
    let batch = window.len() / STAT_BATCHES;
    let mut batch_means = Vec::with_capacity(STAT_BATCHES);
    let mut batch_stds = Vec::with_capacity(STAT_BATCHES);
    for chunk in window.chunks_exact(batch).take(STAT_BATCHES) {
        batch_means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
        let v = chunk.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / chunk.len() as f64;
        batch_stds.push(v.sqrt());
    }
    let se = |xs: &[f64]| mean_std(xs).1 * (xs.len() as f64 / (xs.len() - 1) as f64).sqrt() / (xs.len() as f64).sqrt();
    Ok(EchoStats {
        mean_f: mean,
        std_f: std,
        window_start,
        window_len: window.len(),
        mean_stderr: se(&batch_means),
        std_stderr: se(&batch_stds),
    })
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

/// Maps an angle to `[-pi, pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        -PI
    } else {
        y
    }
}

/// Eigenphases (ascending, in `[-pi, pi)`) and orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    eigenphases: Vec<f64>,
    eigenvectors: CMat,
}

impl SpectralDecomp {
    pub fn dim(&self) -> usize {
        self.eigenphases.len()
    }

    pub fn eigenphases(&self) -> &[f64] {
        &self.eigenphases
    }

    /// Eigenvectors as matrix columns, in eigenphase order.
    pub fn vectors(&self) -> MatRef<'_, C64> {
        self.eigenvectors.as_ref()
    }

    pub fn eigenvector(&self, l: usize) -> StateVector {
        StateVector::normalized(self.eigenvectors.col(l).iter().copied().collect())
            .expect("eigenvectors are normalized")
    }

    pub fn eigenvectors(&self) -> Vec<StateVector> {
        (0..self.dim()).map(|l| self.eigenvector(l)).collect()
    }

    /// `sum_l exp(i xi_l) |psi_l><psi_l|`.
    pub fn reconstruct(&self) -> CMat {
        let n = self.dim();
        let scaled = Mat::from_fn(n, n, |i, l| {
            self.eigenvectors[(i, l)] * C64::from_polar(1.0, self.eigenphases[l])
        });
        &scaled * self.eigenvectors.adjoint()
    }

    /// Smallest circular gap between consecutive eigenphases and the pair
    /// attaining it.
    pub fn min_gap(&self) -> (f64, usize, usize) {
        let n = self.dim();
        if n < 2 {
            return (2.0 * PI, 0, 0);
        }
        let mut best = (self.eigenphases[0] + 2.0 * PI - self.eigenphases[n - 1], n - 1, 0);
        for l in 1..n {
            let gap = self.eigenphases[l] - self.eigenphases[l - 1];
            if gap < best.0 {
                best = (gap, l - 1, l);
            }
        }
        best
    }

    fn check_nondegenerate(&self, spectrum: &'static str) -> Result<()> {
        let (gap, first, second) = self.min_gap();
        if gap <= GAP_TOL {
            return Err(EchoError::Degenerate { spectrum, first, second, gap });
        }
        Ok(())
    }
}

/// Full eigendecomposition of a unitary.
pub fn spectral_decompose(u: &UnitaryMatrix) -> Result<SpectralDecomp> {
    let n = u.dim();
    if n > SPECTRAL_CAP {
        return Err(EchoError::TooLarge { dim: n, cap: SPECTRAL_CAP });
    }
    let evd = u
        .elements()
        .eigen()
        .map_err(|e| LinalgError::Eigensolver(format!("{e:?}")))?;
    let values = evd.S().column_vector();
    let vectors = evd.U();
    let mut order: Vec<(f64, usize)> = (0..n).map(|l| (wrap_phase(values[l].arg()), l)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sorted = Mat::from_fn(n, n, |i, k| vectors[(i, order[k].1)]);
    // Eigenvectors of a normal matrix are orthogonal; QR removes the
    // eigensolver's residual skew without reordering.
    let qr = sorted.qr();
    let r = qr.R();
    let mut q = qr.compute_Q();
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
    }
    let decomp = SpectralDecomp { eigenphases: order.iter().map(|p| p.0).collect(), eigenvectors: q };
    let rec = decomp.reconstruct();
    let mut err = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            err = err.max((rec[(i, j)] - u.elements()[(i, j)]).norm());
        }
    }
    if err > RECONSTRUCTION_TOL {
        return Err(EchoError::Reconstruction(err));
    }
    Ok(decomp)
}

/// Overlaps between two Floquet eigenbases weighted by the initial state.
#[derive(Debug, Clone)]
pub struct OverlapData {
    /// `O[(l, l')] = <psi_l|psi~_l'>`.
    pub o: CMat,
    /// `B[(l', l)] = sum_k omega_kl conj(O_kl')`, with `omega_kl` in the
    /// unperturbed eigenbasis.
    pub b: CMat,
    pub n_eff: usize,
    unpert: SpectralDecomp,
    pert: SpectralDecomp,
}

impl OverlapData {
    pub fn dim(&self) -> usize {
        self.o.nrows()
    }

    pub fn unperturbed(&self) -> &SpectralDecomp {
        &self.unpert
    }

    pub fn perturbed(&self) -> &SpectralDecomp {
        &self.pert
    }

    /// `a[(l, l')] = O_{l l'} B_{l' l}`, the coefficient of
    /// `exp(i (xi~_l' - xi_l) t)` in `f(t)`.
    pub fn amplitudes(&self) -> CMat {
        let n = self.dim();
        Mat::from_fn(n, n, |l, lp| self.o[(l, lp)] * self.b[(lp, l)])
    }

    /// `f(t)` evaluated from the spectral expansion.
    pub fn f_at(&self, t: u64) -> C64 {
        let a = self.amplitudes();
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for lp in 0..n {
            for l in 0..n {
                let phase = (self.pert.eigenphases[lp] - self.unpert.eigenphases[l]) * t as f64;
                acc += a[(l, lp)] * C64::from_polar(1.0, phase);
            }
        }
        acc
    }
}

/// Number of eigenvectors, taken by decreasing weight, needed to reach
/// cumulative weight `1 - cutoff`.
pub fn effective_count(weights: &[f64], cutoff: f64) -> usize {
    let mut w = weights.to_vec();
    w.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = w.iter().sum();
    let target = (1.0 - cutoff) * total;
    let mut acc = 0.0;
    for (k, x) in w.iter().enumerate() {
        acc += x;
        if acc >= target {
            return k + 1;
        }
    }
    w.len()
}

/// `<psi_l|omega|psi_l>` for every column of `vectors`.
pub fn basis_weights(omega0: &DensityMatrix, vectors: MatRef<'_, C64>) -> Vec<f64> {
    let wv = omega0.elements() * vectors;
    (0..vectors.ncols())
        .map(|l| {
            (0..vectors.nrows())
                .map(|i| vectors[(i, l)].conj() * wv[(i, l)])
                .sum::<C64>()
                .re
        })
        .collect()
}

pub fn overlap_data(
    unpert: &SpectralDecomp,
    pert: &SpectralDecomp,
    omega0: &DensityMatrix,
    weight_cutoff: f64,
) -> Result<OverlapData> {
    check_dim(unpert.dim(), pert.dim())?;
    check_dim(unpert.dim(), omega0.dim())?;
    let v = unpert.vectors();
    let vt = pert.vectors();
    let o = v.adjoint() * vt;
    let w = v.adjoint() * omega0.elements() * v;
    // B[(l', l)] = sum_k conj(O[(k, l')]) W[(k, l)]
    let b = o.adjoint() * &w;
    let n = unpert.dim();
    let w_unpert: Vec<f64> = (0..n).map(|l| w[(l, l)].re).collect();
    let w_pert = basis_weights(omega0, vt);
    let n_eff = effective_count(&w_unpert, weight_cutoff).max(effective_count(&w_pert, weight_cutoff));
    Ok(OverlapData { o, b, n_eff, unpert: unpert.clone(), pert: pert.clone() })
}

/// Exact infinite-time average `<F> = sum |a_{l l'}|^2`.
pub fn exact_mean_f(data: &OverlapData) -> Result<f64> {
    data.unpert.check_nondegenerate("unperturbed")?;
    data.pert.check_nondegenerate("perturbed")?;
    let a = data.amplitudes();
    Ok(a.squared_norm_l2())
}

/// Exact `<F^2>` from the nine surviving index-set families.
///
/// With `A: (l1 = l2, l3 = l4)` and `B: (l1 = l4, l3 = l2)` on each index set,
/// inclusion-exclusion of the surviving phase conditions gives
/// `2 P^2 + 2 Tr[(a^dagger a)^2] - 2 sum_l r_l^2 - 2 sum_l' c_l'^2 + sum |a|^4`
/// where `P = sum |a|^2`, `r` and `c` are the row and column sums of `|a|^2`.
pub fn exact_mean_f2(data: &OverlapData) -> Result<f64> {
    let n = data.dim();
    if n > MEAN_F2_CAP {
        return Err(EchoError::TooLarge { dim: n, cap: MEAN_F2_CAP });
    }
    data.unpert.check_nondegenerate("unperturbed")?;
    data.pert.check_nondegenerate("perturbed")?;
    let a = data.amplitudes();
    let mut p = 0.0;
    let mut quartic = 0.0;
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; n];
    for lp in 0..n {
        for l in 0..n {
            let x = a[(l, lp)].norm_sqr();
            p += x;
            quartic += x * x;
            rows[l] += x;
            cols[lp] += x;
        }
    }
    let m = a.adjoint() * &a;
    let t = m.squared_norm_l2();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    Ok(2.0 * p * p + 2.0 * t - 2.0 * sq(&rows) - 2.0 * sq(&cols) + quartic)
}

/// Phase tolerance of the brute-force references.
pub const BRUTE_PHASE_TOL: f64 = 1e-10;

fn circular_matches(sorted: &[(f64, usize)], target: f64, mut visit: impl FnMut(usize)) {
    // Phase sums live in [-2 pi, 2 pi]; a survivor differs by a multiple of 2 pi.
    for shift in [-4.0 * PI, -2.0 * PI, 0.0, 2.0 * PI, 4.0 * PI] {
        let t = target + shift;
        let lo = sorted.partition_point(|p| p.0 < t - BRUTE_PHASE_TOL);
        for p in &sorted[lo..] {
            if p.0 > t + BRUTE_PHASE_TOL {
                break;
            }
            visit(p.1);
        }
    }
}

/// `<F>` from all index pairs whose phase factor survives the time average,
/// tested numerically. Reference for small dimensions only.
pub fn brute_force_mean_f(data: &OverlapData) -> Result<f64> {
    let n = data.dim();
    if n > BRUTE_FORCE_CAP {
        return Err(EchoError::TooLarge { dim: n, cap: BRUTE_FORCE_CAP });
    }
    let a = data.amplitudes();
    let xi = data.unpert.eigenphases();
    let xt = data.pert.eigenphases();
    // F = sum a_{l1 l1'} conj(a_{l2 l2'}) exp(i (xt_l1' - xi_l1 - xt_l2' + xi_l2) t)
    let mut acc = C64::new(0.0, 0.0);
    for (l1, l1p, l2, l2p) in quadruples(n) {
        let phase = xt[l1p] - xi[l1] - xt[l2p] + xi[l2];
        if wrap_phase(phase).abs() < BRUTE_PHASE_TOL {
            acc += a[(l1, l1p)] * a[(l2, l2p)].conj();
        }
    }
    Ok(acc.re)
}

fn quadruples(n: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..n).flat_map(move |i| {
        (0..n).flat_map(move |j| (0..n).flat_map(move |k| (0..n).map(move |l| (i, j, k, l))))
    })
}

/// `<F^2>` by enumerating all unprimed and primed index quadruples and keeping
/// the pairs whose phase sum vanishes mod `2 pi`. Reference for small
/// dimensions only.
pub fn brute_force_mean_f2(data: &OverlapData) -> Result<f64> {
    let n = data.dim();
    if n > BRUTE_FORCE_CAP {
        return Err(EchoError::TooLarge { dim: n, cap: BRUTE_FORCE_CAP });
    }
    let a = data.amplitudes();
    let xi = data.unpert.eigenphases();
    let xt = data.pert.eigenphases();
    // F^2 = sum a_{1 1'} a*_{2 2'} a_{3 3'} a*_{4 4'} exp(i (S' - S) t),
    // S = xi_1 - xi_2 + xi_3 - xi_4, S' likewise on the perturbed phases.
    let encode = |q: (usize, usize, usize, usize)| ((q.0 * n + q.1) * n + q.2) * n + q.3;
    let decode = |mut c: usize| {
        let d = c % n;
        c /= n;
        let cc = c % n;
        c /= n;
        (c / n, c % n, cc, d)
    };
    let mut primed: Vec<(f64, usize)> = quadruples(n)
        .map(|q| (xt[q.0] - xt[q.1] + xt[q.2] - xt[q.3], encode(q)))
        .collect();
    primed.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut acc = C64::new(0.0, 0.0);
    for q in quadruples(n) {
        let s = xi[q.0] - xi[q.1] + xi[q.2] - xi[q.3];
        circular_matches(&primed, s, |code| {
            let (p1, p2, p3, p4) = decode(code);
            acc += a[(q.0, p1)] * a[(q.1, p2)].conj() * a[(q.2, p3)] * a[(q.3, p4)].conj();
        });
    }
    Ok(acc.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_state, random_unitary};
    use crate::rotor::{Coupling, RotorParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus_pair(n: usize, k: f64, shift: f64, eps: f64) -> (FloquetOperator, FloquetOperator) {
        let unpert = FloquetOperator::new(RotorParams::torus(n, k, Coupling::Linear, shift).unwrap()).unwrap();
        let pert = FloquetOperator::new(RotorParams::torus(n, k, Coupling::Linear, shift + eps).unwrap()).unwrap();
        (unpert, pert)
    }

    #[test]
    fn identical_propagators_give_unit_echo() {
        let (u, _) = torus_pair(64, 5.0, 0.1, 0.0);
        let rho = DensityMatrix::pure(&u.momentum_state(0).unwrap());
        let s = allegiance_series(&u, &u, &rho, 200).unwrap();
        assert!(s.f().iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-12));
        let st = echo_stats(&allegiance_series(&u, &u, &rho, 1200).unwrap(), 100).unwrap();
        assert!((st.mean_f - 1.0).abs() < 1e-12 && st.std_f < 1e-12);
    }

    #[test]
    fn series_invariants() {
        let (u, v) = torus_pair(64, 5.0, 0.1, 0.1);
        let rho = DensityMatrix::pure(&u.momentum_state(0).unwrap());
        let s = allegiance_series(&u, &v, &rho, 300).unwrap();
        assert_eq!(s.f()[0], C64::new(1.0, 0.0));
        for (z, big) in s.f().iter().zip(s.decoherence()) {
            assert!((z.norm_sqr() - big).abs() < 1e-12);
            assert!(*big >= 0.0 && *big <= 1.0 + 1e-10);
        }
        assert!(s.decoherence()[300] < 0.9);
    }

    #[test]
    fn allegiance_matches_trace_formula() {
        let (u, v) = torus_pair(16, 5.0, 0.1, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = crate::random::random_density_matrix(16, 3, &mut rng);
        let s = allegiance_series(&u, &v, &rho, 5).unwrap();
        let du = u.dense_unitary().unwrap();
        let dv = v.dense_unitary().unwrap();
        let (mut pu, mut pv) = (UnitaryMatrix::identity(16).elements().to_owned(), UnitaryMatrix::identity(16).elements().to_owned());
        for t in 1..=5 {
            pu = du.elements() * &pu;
            pv = dv.elements() * &pv;
            let echo = pu.adjoint() * &pv * rho.elements();
            let tr = crate::linalg::trace(echo.as_ref());
            assert!((tr - s.f()[t]).norm() < 1e-12);
        }
    }

    #[test]
    fn map_matches_pairwise_series() {
        let ops: Vec<_> = [0.0, 0.1, 0.25]
            .iter()
            .map(|&s| FloquetOperator::new(RotorParams::torus(32, 5.0, Coupling::Linear, s).unwrap()).unwrap())
            .collect();
        let ens = Ensemble::pure(ops[0].momentum_state(0).unwrap());
        let map = allegiance_map(&ops, &[(1, 0), (2, 1)], &ens, 50).unwrap();
        let direct = allegiance_series_ensemble(&ops[1], &ops[2], &ens, 50).unwrap();
        for (a, b) in map[1].f().iter().zip(direct.f()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn stats_window_checks() {
        let s = EchoSeries::unit(600);
        assert!(matches!(echo_stats(&s, 200), Err(EchoError::WindowTooShort { .. })));
        let st = echo_stats(&s, 100).unwrap();
        assert_eq!((st.mean_f, st.std_f, st.window_len), (1.0, 0.0, 501));
    }

    #[test]
    fn stats_of_alternating_series() {
        let f: Vec<C64> = (0..2000).map(|t| C64::new(if t % 2 == 0 { 1.0 } else { 0.0 }, 0.0)).collect();
        let st = echo_stats(&EchoSeries::from_amplitudes(f), 0).unwrap();
        assert!((st.mean_f - 0.5).abs() < 1e-12);
        assert!((st.std_f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_spectrum() {
        let d = spectral_decompose(&UnitaryMatrix::identity(5)).unwrap();
        assert!(d.eigenphases().iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn free_rotor_spectrum_is_free_phases() {
        let op = FloquetOperator::new(RotorParams::torus(4, 0.0, Coupling::Linear, 0.37).unwrap()).unwrap();
        let d = spectral_decompose(&op.dense_unitary().unwrap()).unwrap();
        let mut expected: Vec<f64> = op.free_phases().iter().map(|z| wrap_phase(z.arg())).collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in d.eigenphases().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_unitary(24, &mut rng);
        let d = spectral_decompose(&u).unwrap();
        crate::linalg::check_orthonormal(&d.eigenvectors()).unwrap();
        assert!(d.eigenphases().windows(2).all(|w| w[0] <= w[1]));
        assert!(d.eigenphases().iter().all(|x| (-PI..PI).contains(x)));
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        let d = spectral_decompose(&UnitaryMatrix::identity(3)).unwrap();
        let rho = DensityMatrix::maximally_mixed(3);
        let data = overlap_data(&d, &d, &rho, NEFF_CUTOFF).unwrap();
        match exact_mean_f(&data) {
            Err(EchoError::Degenerate { spectrum, first, second, .. }) => {
                assert_eq!(spectrum, "unperturbed");
                assert_ne!(first, second);
            }
            other => panic!("expected degeneracy error, got {other:?}"),
        }
    }

    #[test]
    fn unperturbed_pair_with_eigenstate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = spectral_decompose(&random_unitary(12, &mut rng)).unwrap();
        let rho = DensityMatrix::pure(&d.eigenvector(4));
        let data = overlap_data(&d, &d, &rho, NEFF_CUTOFF).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((data.o[(i, j)].norm() - id).abs() < 1e-10);
            }
        }
        assert!((exact_mean_f(&data).unwrap() - 1.0).abs() < 1e-10);
        assert!((exact_mean_f2(&data).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(data.n_eff, 1);
    }

    #[test]
    fn spectral_expansion_reproduces_series() {
        let (u, v) = torus_pair(32, 5.0, 0.1, 0.2);
        let rho = DensityMatrix::pure(&u.momentum_state(0).unwrap());
        let du = spectral_decompose(&u.dense_unitary().unwrap()).unwrap();
        let dv = spectral_decompose(&v.dense_unitary().unwrap()).unwrap();
        let data = overlap_data(&du, &dv, &rho, NEFF_CUTOFF).unwrap();
        let s = allegiance_series(&u, &v, &rho, 40).unwrap();
        for t in [0u64, 1, 7, 40] {
            assert!((data.f_at(t) - s.f()[t as usize]).norm() < 1e-9);
        }
    }

    #[test]
    fn nine_set_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 5, 8] {
            let du = spectral_decompose(&random_unitary(n, &mut rng)).unwrap();
            let dv = spectral_decompose(&random_unitary(n, &mut rng)).unwrap();
            let rho = DensityMatrix::pure(&random_state(n, &mut rng));
            let data = overlap_data(&du, &dv, &rho, NEFF_CUTOFF).unwrap();
            let mean = exact_mean_f(&data).unwrap();
            assert!((mean - brute_force_mean_f(&data).unwrap()).abs() < 1e-12);
            let m2 = exact_mean_f2(&data).unwrap();
            assert!((m2 - brute_force_mean_f2(&data).unwrap()).abs() < 1e-12);
            assert!(m2 >= mean * mean - 1e-12);
        }
    }

    #[test]
    fn effective_count_examples() {
        assert_eq!(effective_count(&[0.25; 4], 1e-6), 4);
        assert_eq!(effective_count(&[1.0, 0.0, 0.0], 1e-6), 1);
        assert_eq!(effective_count(&[0.1, 0.5, 0.4], 0.15), 2);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), -PI);
        assert!((wrap_phase(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-12);
        assert!((wrap_phase(-0.25) + 0.25).abs() < 1e-15);
    }
}
