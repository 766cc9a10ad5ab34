//! Reduced dynamics of the central system.
//!
//! In the joint eigenbasis `|n>` of the central Hamiltonian and coupling
//! operator the reduced state is `rho_nm(t) = A_nm exp(-i (e_n - e_m) t) f_nm(t)`:
//! populations never change and every coherence is damped by its own echo.

use std::collections::BTreeMap;

use faer::Mat;
use thiserror::Error;

use crate::echo::EchoSeries;
use crate::linalg::{self, CMat, DensityMatrix, LinalgError, C64};

/// Largest truncated cat state.
pub const CAT_CAP: usize = 128;
/// Coefficients below this magnitude need no echo.
pub const COEFF_TOL: f64 = 1e-12;
/// Tolerance of the population and distance checks.
pub const CHECK_TOL: f64 = 1e-9;
/// Smallest energy separation treated as non-degenerate.
pub const ENERGY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReducedError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("energies {first} and {second} are degenerate")]
    DegenerateEnergies { first: usize, second: usize },
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("cat state needs {needed} levels, above the cap {cap}")]
    TruncationTooLarge { needed: usize, cap: usize },
    #[error("missing echo series for pair ({0}, {1})")]
    MissingPair(usize, usize),
    #[error("time {t} outside echo series of length {len}")]
    TimeOutOfRange { t: u64, len: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = ReducedError> = std::result::Result<T, E>;

/// Central system in its preferred basis.
#[derive(Debug, Clone)]
pub struct CentralSpec {
    energies: Vec<f64>,
    couplings: Vec<f64>,
    a: DensityMatrix,
}

fn check_distinct(energies: &[f64]) -> Result<()> {
    for i in 0..energies.len() {
        for j in i + 1..energies.len() {
            if (energies[i] - energies[j]).abs() <= ENERGY_TOL {
                return Err(ReducedError::DegenerateEnergies { first: i, second: j });
            }
        }
    }
    Ok(())
}

impl CentralSpec {
    /// `a` is the initial central state `rho(0)` in the preferred basis.
    pub fn new(energies: Vec<f64>, couplings: Vec<f64>, a: DensityMatrix) -> Result<Self> {
        let n = a.dim();
        if energies.len() != n {
            return Err(ReducedError::LengthMismatch { what: "energies", expected: n, found: energies.len() });
        }
        if couplings.len() != n {
            return Err(ReducedError::LengthMismatch { what: "couplings", expected: n, found: couplings.len() });
        }
        check_distinct(&energies)?;
        Ok(Self { energies, couplings, a })
    }

    pub fn n_c(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn a(&self) -> &DensityMatrix {
        &self.a
    }

    /// Ordered pairs `n > m` whose coefficient is large enough to need an
    /// echo series.
    pub fn needed_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_c();
        (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .filter(|&(i, j)| self.a.get(i, j).norm() >= COEFF_TOL)
            .collect()
    }

    /// `sum_n A_nn^2`, the purity floor.
    pub fn purity_floor(&self) -> f64 {
        self.a.diagonal_entries().iter().map(|p| p * p).sum()
    }
}

/// Even cat state `N (|alpha> + |-alpha>)` in the number basis with
/// `e_n = omega_c (n + 1/2)` and number coupling `s_n = n`.
pub fn cat_state_spec(alpha: C64, omega_c: f64, weight_cutoff: f64) -> Result<CentralSpec> {
    let r2 = alpha.norm_sqr();
    if !(r2 > 0.0) || !r2.is_finite() {
        return Err(ReducedError::InvalidInput("|alpha| must be positive".into()));
    }
    if !(0.0..1.0).contains(&weight_cutoff) {
        return Err(ReducedError::InvalidInput(format!("weight cutoff {weight_cutoff} outside [0, 1)")));
    }
    // Even-n weights |alpha|^{2n} / n! / cosh(|alpha|^2), accumulated in logs.
    let ln_cosh = r2 + (0.5 * (1.0 + (-2.0 * r2).exp())).ln();
    let ln_r2 = r2.ln();
    let mut ln_fact = 0.0;
    let mut cumulative = 0.0;
    let mut n = 0usize;
    loop {
        if n > 0 {
            ln_fact += (n as f64).ln();
        }
        if n.is_multiple_of(2) {
            cumulative += (n as f64 * ln_r2 - ln_fact - ln_cosh).exp();
            if cumulative >= 1.0 - weight_cutoff {
                break;
            }
        }
        n += 1;
        if n >= CAT_CAP {
            return Err(ReducedError::TruncationTooLarge { needed: n + 1, cap: CAT_CAP });
        }
    }
    let n_c = n + 1;
    let mut amps = vec![C64::new(0.0, 0.0); n_c];
    let mut power = C64::new(1.0, 0.0);
    let mut ln_fact = 0.0;
    for (k, amp) in amps.iter_mut().enumerate() {
        if k > 0 {
            power *= alpha;
            ln_fact += (k as f64).ln();
        }
        if k % 2 == 0 {
            *amp = power * (-0.5 * ln_fact).exp();
        }
    }
    let state = linalg::StateVector::normalized(amps)?;
    let energies = (0..n_c).map(|k| omega_c * (k as f64 + 0.5)).collect();
    let couplings = (0..n_c).map(|k| k as f64).collect();
    CentralSpec::new(energies, couplings, DensityMatrix::pure(&state))
}

/// Echo series `f_nm` keyed by `n > m`; the reversed pair is the conjugate
/// and the diagonal is identically one.
#[derive(Debug, Clone, Default)]
pub struct EchoMap {
    series: BTreeMap<(usize, usize), EchoSeries>,
}

impl EchoMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `f_nm`; for `n < m` the conjugate is stored under `(m, n)`.
    pub fn insert(&mut self, n: usize, m: usize, series: EchoSeries) {
        if n > m {
            self.series.insert((n, m), series);
        } else if n < m {
            self.series.insert((m, n), series.conjugate());
        }
    }

    pub fn get(&self, n: usize, m: usize) -> Option<&EchoSeries> {
        self.series.get(&(n.max(m), n.min(m)))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.series.keys().copied()
    }

    /// `f_nm(t)`.
    pub fn f(&self, n: usize, m: usize, t: u64) -> Result<C64> {
        if n == m {
            return Ok(C64::new(1.0, 0.0));
        }
        let s = self.get(n, m).ok_or(ReducedError::MissingPair(n.max(m), n.min(m)))?;
        let z = *s
            .f()
            .get(t as usize)
            .ok_or(ReducedError::TimeOutOfRange { t, len: s.len() })?;
        Ok(if n > m { z } else { z.conj() })
    }

    /// Shortest series length, i.e. the number of times available for every pair.
    pub fn len(&self) -> usize {
        self.series.values().map(EchoSeries::len).min().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// `rho(t)` from the coefficients and echoes.
pub fn assemble_rho_t(spec: &CentralSpec, echoes: &EchoMap, t: u64) -> Result<DensityMatrix> {
    let n = spec.n_c();
    let mut rho = Mat::<C64>::zeros(n, n);
    for i in 0..n {
        rho[(i, i)] = spec.a.get(i, i);
        for j in 0..i {
            let a = spec.a.get(i, j);
            if a.norm() < COEFF_TOL {
                continue;
            }
            let phase = C64::from_polar(1.0, -(spec.energies[i] - spec.energies[j]) * t as f64);
            let z = a * phase * echoes.f(i, j, t)?;
            rho[(i, j)] = z;
            rho[(j, i)] = z.conj();
        }
    }
    Ok(DensityMatrix::from_matrix(rho)?)
}

#[derive(Debug, Clone)]
pub struct ReducedTrajectory {
    pub times: Vec<u64>,
    pub states: Vec<DensityMatrix>,
}

pub fn reduced_trajectory(spec: &CentralSpec, echoes: &EchoMap, times: &[u64]) -> Result<ReducedTrajectory> {
    let states = times
        .iter()
        .map(|&t| assemble_rho_t(spec, echoes, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedTrajectory { times: times.to_vec(), states })
}

/// Time-averaged state `diag(A_nn)`.
pub fn equilibrium_state(spec: &CentralSpec) -> Result<DensityMatrix> {
    check_distinct(&spec.energies)?;
    Ok(DensityMatrix::diagonal(&spec.a.diagonal_entries())?)
}

/// Diagnostics at one sampled time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibrationPoint {
    pub time: u64,
    pub trace_dist: f64,
    pub hs_dist: f64,
    pub purity: f64,
    /// `sqrt(N_c) / 2 * D_HS`.
    pub bound_rhs: f64,
    /// `sum_{n != m} |A_nm|^2 F_nm(t)`.
    pub hs_expansion: f64,
    /// Largest population drift from `A_nn`.
    pub population_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibrationReport {
    pub points: Vec<EquilibrationPoint>,
    pub purity_floor: f64,
    pub window_start: u64,
    pub mean_trace_dist: f64,
    pub mean_hs_dist: f64,
    pub bound_holds: bool,
    pub expansion_holds: bool,
    pub purity_bound_holds: bool,
    pub populations_conserved: bool,
}

impl EquilibrationReport {
    pub fn all_checks_pass(&self) -> bool {
        self.bound_holds && self.expansion_holds && self.purity_bound_holds && self.populations_conserved
    }
}

/// Distances to equilibrium along a trajectory with the bound checks.
/// Averages run over sampled times `>= window_start`.
pub fn equilibration_report(
    traj: &ReducedTrajectory,
    spec: &CentralSpec,
    echoes: &EchoMap,
    window_start: u64,
) -> Result<EquilibrationReport> {
    if traj.states.is_empty() {
        return Err(ReducedError::InvalidInput("empty trajectory".into()));
    }
    let eq = equilibrium_state(spec)?;
    let n = spec.n_c();
    let pops = spec.a.diagonal_entries();
    let floor = spec.purity_floor();
    let scale = (n as f64).sqrt() / 2.0;
    let mut points = Vec::with_capacity(traj.states.len());
    let (mut bound, mut expansion, mut purity_ok, mut conserved) = (true, true, true, true);
    for (&time, rho) in traj.times.iter().zip(&traj.states) {
        let trace_dist = linalg::trace_distance(rho, &eq)?;
        let hs_dist = linalg::hs_distance(rho, &eq)?;
        let purity = linalg::purity(rho);
        let mut hs_expansion = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = spec.a.get(i, j);
                if i != j && a.norm() >= COEFF_TOL {
                    hs_expansion += a.norm_sqr() * echoes.f(i, j, time)?.norm_sqr();
                }
            }
        }
        let population_drift = rho
            .diagonal_entries()
            .iter()
            .zip(&pops)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let bound_rhs = scale * hs_dist;
        bound &= trace_dist <= bound_rhs + CHECK_TOL;
        expansion &= (hs_dist * hs_dist - hs_expansion).abs() <= CHECK_TOL;
        purity_ok &= purity >= floor - CHECK_TOL;
        conserved &= population_drift <= CHECK_TOL;
        points.push(EquilibrationPoint { time, trace_dist, hs_dist, purity, bound_rhs, hs_expansion, population_drift });
    }
    let window: Vec<&EquilibrationPoint> = points.iter().filter(|p| p.time >= window_start).collect();
    if window.is_empty() {
        return Err(ReducedError::InvalidInput(format!("no sampled time at or after {window_start}")));
    }
    let k = window.len() as f64;
    Ok(EquilibrationReport {
        mean_trace_dist: window.iter().map(|p| p.trace_dist).sum::<f64>() / k,
        mean_hs_dist: window.iter().map(|p| p.hs_dist).sum::<f64>() / k,
        points,
        purity_floor: floor,
        window_start,
        bound_holds: bound,
        expansion_holds: expansion,
        purity_bound_holds: purity_ok,
        populations_conserved: conserved,
    })
}

/// `exp(-i H t) A exp(i H t)` for the free central Hamiltonian.
pub fn free_evolution(spec: &CentralSpec, t: u64) -> CMat {
    let n = spec.n_c();
    Mat::from_fn(n, n, |i, j| {
        spec.a.get(i, j) * C64::from_polar(1.0, -(spec.energies[i] - spec.energies[j]) * t as f64)
    })
}
