//! Conditional Floquet propagators of the kicked-rotor environment.
//!
//! One period is `U = U_kick * U_free`: the free phase is applied in the
//! momentum representation, then the kick in the angle representation. The
//! angle grid is `theta_k = 2 pi k / M` and the transform pair is an unscaled
//! forward DFT with the `1/M` carried by the inverse.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use faer::Mat;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::linalg::{DensityMatrix, Ensemble, LinalgError, StateVector, UnitaryMatrix, C64};

/// Largest operator materialized by [`FloquetOperator::dense_unitary`].
pub const DENSE_CAP: usize = 4096;
/// Smallest lattice accepted.
pub const MIN_LATTICE: usize = 64;
/// Probability allowed in the outer band of a lattice before the truncation
/// is considered unfaithful.
pub const EDGE_MASS_TOL: f64 = 1e-8;
/// Fraction of lattice levels (per end) forming the guarded band.
pub const EDGE_FRACTION: f64 = 0.05;
/// Distance from `4 pi q / r` treated as a quantum resonance.
pub const RESONANCE_TOL: f64 = 1e-6;
/// Largest resonance denominator checked.
pub const RESONANCE_MAX_DENOM: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotorError {
    #[error("invalid rotor parameters: {0}")]
    InvalidParams(String),
    #[error("quantum resonance: hbar_eff = {hbar} is within {RESONANCE_TOL:e} of 4 pi {q}/{r}")]
    QuantumResonance { hbar: f64, q: u64, r: u32 },
    #[error("boundary spread: probability {mass:e} in the outer lattice band after {step} kicks")]
    BoundarySpread { mass: f64, step: u64 },
    #[error("dimension {dim} exceeds the dense cap {cap}; use time-domain evolution")]
    TooLarge { dim: usize, cap: usize },
    #[error("state dimension {found} does not match operator dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("localization estimate: {0}")]
    Localization(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T, E = RotorError> = std::result::Result<T, E>;

/// How the central system couples into the rotor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// `V = p`: the shift adds `shift * p` to the free Hamiltonian.
    Linear,
    /// `V = cos(theta)` kicks: the shift adds to the kick amplitude.
    Kicked,
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coupling::Linear => "linear",
            Coupling::Kicked => "kicked",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Phase space closed on the torus; momenta `j = -N/2 .. N/2-1`.
    Torus { dim: usize },
    /// Truncated momentum lattice `j = p_min ..= p_max` standing in for the
    /// cylinder.
    Lattice { dim: usize, p_min: i64, p_max: i64 },
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match *self {
            Geometry::Torus { dim } | Geometry::Lattice { dim, .. } => dim,
        }
    }

    /// Momentum quantum number of storage index 0.
    pub fn j_min(&self) -> i64 {
        match *self {
            Geometry::Torus { dim } => -(dim as i64) / 2,
            Geometry::Lattice { p_min, .. } => p_min,
        }
    }

    pub fn momentum_numbers(&self) -> impl Iterator<Item = i64> {
        let start = self.j_min();
        (0..self.dim() as i64).map(move |a| start + a)
    }

    /// Storage index of momentum quantum number `j`, if on the grid.
    pub fn index_of(&self, j: i64) -> Option<usize> {
        let a = j - self.j_min();
        (a >= 0 && (a as usize) < self.dim()).then_some(a as usize)
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, Geometry::Lattice { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorParams {
    /// Dimensionless kick strength `K`.
    pub kick: f64,
    pub hbar: f64,
    pub coupling: Coupling,
    /// `s_m * g` for linear coupling, the kick increment for kicked coupling.
    pub shift: f64,
    pub geometry: Geometry,
}

impl RotorParams {
    /// Torus of dimension `dim`; `hbar = 2 pi / dim`.
    pub fn torus(dim: usize, kick: f64, coupling: Coupling, shift: f64) -> Result<Self> {
        let p = Self { kick, hbar: 2.0 * PI / dim as f64, coupling, shift, geometry: Geometry::Torus { dim } };
        p.validate()?;
        Ok(p)
    }

    pub fn lattice(
        hbar: f64,
        p_min: i64,
        p_max: i64,
        kick: f64,
        coupling: Coupling,
        shift: f64,
    ) -> Result<Self> {
        let dim = usize::try_from(p_max - p_min + 1)
            .map_err(|_| RotorError::InvalidParams(format!("p_max {p_max} < p_min {p_min}")))?;
        let p = Self { kick, hbar, coupling, shift, geometry: Geometry::Lattice { dim, p_min, p_max } };
        p.validate()?;
        Ok(p)
    }

    /// Lattice of `dim` levels centered on `j = 0`.
    pub fn centered_lattice(hbar: f64, dim: usize, kick: f64, coupling: Coupling, shift: f64) -> Result<Self> {
        let p_min = -(dim as i64) / 2;
        Self::lattice(hbar, p_min, p_min + dim as i64 - 1, kick, coupling, shift)
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kick >= 0.0) || !self.kick.is_finite() {
            return Err(RotorError::InvalidParams(format!("kick strength {} must be >= 0", self.kick)));
        }
        if !(self.hbar > 0.0) || !self.hbar.is_finite() {
            return Err(RotorError::InvalidParams(format!("hbar_eff {} must be > 0", self.hbar)));
        }
        if !self.shift.is_finite() {
            return Err(RotorError::InvalidParams("shift must be finite".into()));
        }
        match self.geometry {
            Geometry::Torus { dim } => {
                if dim < 2 || !dim.is_power_of_two() {
                    return Err(RotorError::InvalidParams(format!("torus dimension {dim} must be a power of two")));
                }
                let expected = 2.0 * PI / dim as f64;
                if (self.hbar - expected).abs() > 1e-12 {
                    return Err(RotorError::InvalidParams(format!(
                        "torus of dimension {dim} requires hbar_eff = {expected}, got {}",
                        self.hbar
                    )));
                }
            }
            Geometry::Lattice { dim, p_min, p_max } => {
                if p_max < p_min || (p_max - p_min + 1) as usize != dim {
                    return Err(RotorError::InvalidParams(format!(
                        "lattice dimension {dim} inconsistent with [{p_min}, {p_max}]"
                    )));
                }
                if dim < MIN_LATTICE {
                    return Err(RotorError::InvalidParams(format!("lattice dimension {dim} below {MIN_LATTICE}")));
                }
            }
        }
        Ok(())
    }

    /// Kick amplitude actually applied each period.
    pub fn effective_kick(&self) -> f64 {
        match self.coupling {
            Coupling::Linear => self.kick,
            Coupling::Kicked => self.kick + self.shift,
        }
    }
}

/// Rejects `hbar` close to `4 pi q / r` with `r <= 8`.
pub fn check_resonance(hbar: f64) -> Result<()> {
    for r in 1..=RESONANCE_MAX_DENOM {
        let q = (hbar * r as f64 / (4.0 * PI)).round();
        if q >= 1.0 && (hbar - 4.0 * PI * q / r as f64).abs() < RESONANCE_TOL {
            return Err(RotorError::QuantumResonance { hbar, q: q as u64, r });
        }
    }
    Ok(())
}

/// Split-step one-period propagator.
#[derive(Clone)]
pub struct FloquetOperator {
    params: RotorParams,
    free_phases: Vec<C64>,
    kick_phases: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    edge_band: usize,
}

impl fmt::Debug for FloquetOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FloquetOperator").field("params", &self.params).finish_non_exhaustive()
    }
}

pub fn build_floquet(params: RotorParams) -> Result<FloquetOperator> {
    FloquetOperator::new(params)
}

impl FloquetOperator {
    pub fn new(params: RotorParams) -> Result<Self> {
        params.validate()?;
        if params.effective_kick() != 0.0 {
            check_resonance(params.hbar)?;
        }
        let dim = params.dim();
        let hbar = params.hbar;
        let linear_shift = match params.coupling {
            Coupling::Linear => params.shift,
            Coupling::Kicked => 0.0,
        };
        let free_phases = params
            .geometry
            .momentum_numbers()
            .map(|j| {
                let kinetic = match params.geometry {
                    // hbar j^2 / 2 = pi j^2 / N, reduced exactly in integers.
                    Geometry::Torus { dim } => {
                        let m = (j * j).rem_euclid(2 * dim as i64);
                        PI * m as f64 / dim as f64
                    }
                    Geometry::Lattice { .. } => 0.5 * hbar * (j * j) as f64,
                };
                C64::from_polar(1.0, -(kinetic + linear_shift * j as f64))
            })
            .collect();
        let kick = params.effective_kick();
        let kick_phases = (0..dim)
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / dim as f64;
                C64::from_polar(1.0, -kick * theta.cos() / hbar)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(dim);
        let inverse = planner.plan_fft_inverse(dim);
        let edge_band = match params.geometry {
            Geometry::Lattice { dim, .. } => ((dim as f64 * EDGE_FRACTION).ceil() as usize).max(1),
            Geometry::Torus { .. } => 0,
        };
        Ok(Self { params, free_phases, kick_phases, forward, inverse, edge_band })
    }

    pub fn params(&self) -> &RotorParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// Momentum-representation phases `exp(-i (p^2/2 + shift p)/hbar)`.
    pub fn free_phases(&self) -> &[C64] {
        &self.free_phases
    }

    /// Angle-representation phases `exp(-i K cos(theta)/hbar)`.
    pub fn kick_phases(&self) -> &[C64] {
        &self.kick_phases
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// One period applied in place, without the lattice edge check.
    pub fn step_unchecked(&self, amps: &mut [C64], scratch: &mut [C64]) {
        debug_assert_eq!(amps.len(), self.dim());
        for (a, p) in amps.iter_mut().zip(&self.free_phases) {
            *a *= p;
        }
        if self.params.effective_kick() == 0.0 {
            return;
        }
        self.inverse.process_with_scratch(amps, scratch);
        let inv_n = 1.0 / self.dim() as f64;
        for (a, p) in amps.iter_mut().zip(&self.kick_phases) {
            *a *= p * inv_n;
        }
        self.forward.process_with_scratch(amps, scratch);
    }

    /// Probability in the outer band of a lattice (zero on the torus).
    pub fn edge_mass(&self, amps: &[C64]) -> f64 {
        if self.edge_band == 0 {
            return 0.0;
        }
        let n = amps.len();
        amps[..self.edge_band]
            .iter()
            .chain(&amps[n - self.edge_band..])
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// One period in place; on a lattice, fails once the edge band holds more
    /// than [`EDGE_MASS_TOL`] of the probability.
    pub fn step(&self, amps: &mut [C64], scratch: &mut [C64], step_index: u64) -> Result<()> {
        self.step_unchecked(amps, scratch);
        let mass = self.edge_mass(amps);
        if mass > EDGE_MASS_TOL {
            return Err(RotorError::BoundarySpread { mass, step: step_index });
        }
        Ok(())
    }

    pub fn apply_step(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(RotorError::DimensionMismatch { expected: self.dim(), found: psi.dim() });
        }
        let mut amps = psi.amplitudes().to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len()];
        self.step(&mut amps, &mut scratch, 1)?;
        Ok(StateVector::from_evolved(amps))
    }

    /// Materializes the one-period unitary column by column.
    pub fn dense_unitary(&self) -> Result<UnitaryMatrix> {
        let n = self.dim();
        if n > DENSE_CAP {
            return Err(RotorError::TooLarge { dim: n, cap: DENSE_CAP });
        }
        let mut m = Mat::<C64>::zeros(n, n);
        let mut col = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len()];
        for j in 0..n {
            col.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            col[j] = C64::new(1.0, 0.0);
            self.step_unchecked(&mut col, &mut scratch);
            for (i, z) in col.iter().enumerate() {
                m[(i, j)] = *z;
            }
        }
        Ok(UnitaryMatrix::new(m)?)
    }

    /// The `|p = j hbar>` ket.
    pub fn momentum_state(&self, j: i64) -> Result<StateVector> {
        let idx = self
            .params
            .geometry
            .index_of(j)
            .ok_or_else(|| RotorError::InvalidParams(format!("momentum {j} is off the grid")))?;
        Ok(StateVector::basis(self.dim(), idx))
    }
}

/// A state being propagated kick by kick.
pub struct Evolver<'a> {
    op: &'a FloquetOperator,
    amps: Vec<C64>,
    scratch: Vec<C64>,
    kicks: u64,
}

impl<'a> Evolver<'a> {
    pub fn new(op: &'a FloquetOperator, psi: &StateVector) -> Result<Self> {
        if psi.dim() != op.dim() {
            return Err(RotorError::DimensionMismatch { expected: op.dim(), found: psi.dim() });
        }
        Ok(Self {
            op,
            amps: psi.amplitudes().to_vec(),
            scratch: vec![C64::new(0.0, 0.0); op.scratch_len()],
            kicks: 0,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        self.kicks += 1;
        self.op.step(&mut self.amps, &mut self.scratch, self.kicks)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn kicks(&self) -> u64 {
        self.kicks
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationEstimate {
    /// Participation ratio of the saturated momentum distribution, in levels.
    pub localization_length: f64,
    /// Early-time slope of the momentum variance (in `p^2` per kick).
    pub diffusion: f64,
    /// Kick count at which diffusion was detected to saturate.
    pub relaxation_time: f64,
    pub hbar: f64,
}

impl LocalizationEstimate {
    /// `sqrt(D_K t_R) / hbar`, the diffusive estimate of the width.
    pub fn diffusive_length(&self) -> f64 {
        (self.diffusion * self.relaxation_time).sqrt() / self.hbar
    }

    /// Relative mismatch between the measured width and the diffusive one.
    pub fn relation_residual(&self) -> f64 {
        (self.localization_length / self.diffusive_length() - 1.0).abs()
    }
}

/// Kicks used for the early-time diffusion fit.
pub const DIFFUSION_FIT_KICKS: usize = 10;
/// Saturation threshold: growth rate below this fraction of the early slope.
pub const SATURATION_FRACTION: f64 = 0.1;

/// Populations `P_j` of an ensemble in the momentum basis.
pub fn momentum_populations(states: &[(f64, &[C64])]) -> Vec<f64> {
    let n = states.first().map_or(0, |(_, a)| a.len());
    let mut pops = vec![0.0; n];
    for (w, amps) in states {
        for (p, a) in pops.iter_mut().zip(amps.iter()) {
            *p += w * a.norm_sqr();
        }
    }
    pops
}

/// Variance of `p = hbar j` under populations indexed from `geometry.j_min()`.
pub fn momentum_variance(pops: &[f64], geometry: &Geometry, hbar: f64) -> f64 {
    let (mut m1, mut m2) = (0.0, 0.0);
    for (j, p) in geometry.momentum_numbers().zip(pops) {
        let x = hbar * j as f64;
        m1 += p * x;
        m2 += p * x * x;
    }
    m2 - m1 * m1
}

pub fn participation_ratio(pops: &[f64]) -> f64 {
    let total: f64 = pops.iter().sum();
    total * total / pops.iter().map(|p| p * p).sum::<f64>()
}

/// Evolves `omega0` until momentum diffusion saturates and measures the
/// diffusion coefficient, relaxation time and localization length.
pub fn estimate_localization(
    params: RotorParams,
    omega0: &DensityMatrix,
    max_kicks: u64,
) -> Result<LocalizationEstimate> {
    if !params.geometry.is_lattice() {
        return Err(RotorError::Localization("requires lattice geometry".into()));
    }
    if params.kick < 5.0 {
        return Err(RotorError::Localization(format!("K = {} is outside the chaotic regime K >= 5", params.kick)));
    }
    let ensemble = omega0.ensemble(1e-12)?;
    estimate_localization_ensemble(params, &ensemble, max_kicks)
}

pub fn estimate_localization_ensemble(
    params: RotorParams,
    ensemble: &Ensemble,
    max_kicks: u64,
) -> Result<LocalizationEstimate> {
    let op = FloquetOperator::new(params)?;
    let mut evolvers = ensemble
        .states()
        .iter()
        .map(|s| Evolver::new(&op, s))
        .collect::<Result<Vec<_>>>()?;
    let weights = ensemble.weights();
    let populations = |evs: &[Evolver<'_>]| {
        let views: Vec<(f64, &[C64])> = weights.iter().copied().zip(evs.iter().map(|e| e.amplitudes())).collect();
        momentum_populations(&views)
    };

    let mut variance = vec![momentum_variance(&populations(&evolvers), &params.geometry, params.hbar)];
    let mut diffusion = None;
    let mut saturation = None;
    for t in 1..=max_kicks {
        for ev in evolvers.iter_mut() {
            ev.step()?;
        }
        variance.push(momentum_variance(&populations(&evolvers), &params.geometry, params.hbar));
        let t = t as usize;
        if t == DIFFUSION_FIT_KICKS {
            let slope = fit_slope(&variance[1..=t], 1);
            if !(slope > 0.0) {
                return Err(RotorError::Localization("no initial momentum diffusion".into()));
            }
            diffusion = Some(slope);
        }
        if let Some(d) = diffusion {
            if t >= 2 * DIFFUSION_FIT_KICKS {
                let half = t / 2;
                let rate = (variance[t] - variance[half]) / (t - half) as f64;
                if rate < SATURATION_FRACTION * d {
                    saturation = Some(t);
                    break;
                }
            }
        }
    }
    let (Some(diffusion), Some(t_r)) = (diffusion, saturation) else {
        return Err(RotorError::Localization(format!(
            "no saturation within {max_kicks} kicks; increase max_kicks or lattice"
        )));
    };

    // Width from populations averaged over [t_R, 3 t_R / 2].
    let extra = (t_r / 2).max(1) as u64;
    let mut avg = populations(&evolvers);
    let mut count = 1.0;
    for _ in 0..extra.min(max_kicks.saturating_sub(t_r as u64)) {
        for ev in evolvers.iter_mut() {
            ev.step()?;
        }
        for (a, p) in avg.iter_mut().zip(populations(&evolvers)) {
            *a += p;
        }
        count += 1.0;
    }
    avg.iter_mut().for_each(|a| *a /= count);
    Ok(LocalizationEstimate {
        localization_length: participation_ratio(&avg),
        diffusion,
        relaxation_time: t_r as f64,
        hbar: params.hbar,
    })
}

/// Least-squares slope of `ys` against `first_x, first_x + 1, ...`.
fn fit_slope(ys: &[f64], first_x: usize) -> f64 {
    let n = ys.len() as f64;
    let xs: Vec<f64> = (0..ys.len()).map(|i| (first_x + i) as f64).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
