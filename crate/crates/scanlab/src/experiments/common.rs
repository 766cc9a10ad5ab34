//! Environment construction and the per-point echo run shared by the scans.

use std::f64::consts::PI;

use kickecho::echo::{
    allegiance_series_ensemble, allegiance_with_return, echo_stats, spectral_decompose, EchoError, EchoSeries,
    EchoStats,
};
use kickecho::linalg::{Ensemble, StateVector};
use kickecho::random::random_state;
use kickecho::rmt::{predict_constants_in, predicted_mean_std, time_domain_inputs, RmtInputs};
use kickecho::rotor::{
    estimate_localization_ensemble, FloquetOperator, LocalizationEstimate, RotorError, RotorParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{GeometryKind, Omega0, ScanConfig};
use crate::error::{Context, PhysicsError, ScanError};
use crate::output::{Table, SERIES_HEADER};

/// Largest lattice reached by automatic doubling.
pub const MAX_LATTICE: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvPoint {
    Torus(usize),
    Lattice(f64),
}

impl EnvPoint {
    pub fn hbar(&self) -> f64 {
        match *self {
            EnvPoint::Torus(n) => 2.0 * PI / n as f64,
            EnvPoint::Lattice(h) => h,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            EnvPoint::Torus(n) => format!("N{n}"),
            EnvPoint::Lattice(h) => format!("hbar{h}"),
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, EnvPoint::Lattice(_))
    }
}

/// Scan points in config order; `multi` selects the list keys.
pub fn grid(cfg: &ScanConfig, multi: bool) -> Vec<EnvPoint> {
    match (cfg.geometry, multi) {
        (GeometryKind::Torus, true) => cfg.torus_dims.iter().map(|&n| EnvPoint::Torus(n)).collect(),
        (GeometryKind::Torus, false) => vec![EnvPoint::Torus(cfg.torus_n)],
        (GeometryKind::Lattice, true) => cfg.hbar_list.iter().map(|&h| EnvPoint::Lattice(h)).collect(),
        (GeometryKind::Lattice, false) => vec![EnvPoint::Lattice(cfg.hbar)],
    }
}

/// Power of two above `lattice_factor` times the diffusive estimate
/// `K^2 / (2 hbar^2)` of the localization length.
pub fn auto_lattice_dim(cfg: &ScanConfig, hbar: f64) -> usize {
    let j = cfg.k * cfg.k / (2.0 * hbar * hbar);
    ((cfg.lattice_factor * j).clamp(kickecho::rotor::MIN_LATTICE as f64, MAX_LATTICE as f64) as usize)
        .next_power_of_two()
}

pub fn params(cfg: &ScanConfig, point: EnvPoint, dim: usize, shift: f64) -> Result<RotorParams, ScanError> {
    match point {
        EnvPoint::Torus(n) => RotorParams::torus(n, cfg.k, cfg.coupling, shift),
        EnvPoint::Lattice(h) => RotorParams::centered_lattice(h, dim, cfg.k, cfg.coupling, shift),
    }
    .context(|| format!("rotor parameters at {}", point.label()))
}

fn is_boundary(e: &ScanError) -> bool {
    matches!(
        e,
        ScanError::Physics {
            source: PhysicsError::Rotor(RotorError::BoundarySpread { .. })
                | PhysicsError::Echo(EchoError::Rotor(RotorError::BoundarySpread { .. })),
            ..
        }
    )
}

/// Runs `f` at the dimension of `point`. An automatically sized lattice is
/// doubled while the wave packet reaches its edge band.
pub fn sized<R>(
    cfg: &ScanConfig,
    point: EnvPoint,
    f: impl Fn(usize) -> Result<R, ScanError>,
) -> Result<(R, usize), ScanError> {
    let mut dim = match point {
        EnvPoint::Torus(n) => return f(n).map(|r| (r, n)),
        EnvPoint::Lattice(_) if cfg.lattice_dim > 0 => return f(cfg.lattice_dim).map(|r| (r, cfg.lattice_dim)),
        EnvPoint::Lattice(h) => auto_lattice_dim(cfg, h),
    };
    loop {
        match f(dim) {
            Err(e) if is_boundary(&e) && dim < MAX_LATTICE => dim *= 2,
            other => return other.map(|r| (r, dim)),
        }
    }
}

pub fn omega0_is_pure(cfg: &ScanConfig) -> bool {
    !matches!(cfg.omega0, Omega0::MaximallyMixed(d) if d > 1)
}

pub fn omega0_ensemble(cfg: &ScanConfig, op: &FloquetOperator) -> Result<Ensemble, ScanError> {
    let ctx = || format!("initial environment state {}", cfg.omega0);
    match cfg.omega0 {
        Omega0::MomentumZero => Ok(Ensemble::pure(op.momentum_state(0).context(ctx)?)),
        Omega0::RandomPure(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(Ensemble::pure(random_state(op.dim(), &mut rng)))
        }
        Omega0::MaximallyMixed(d) => {
            if d > op.dim() {
                return Err(ScanError::Config(format!("maximally-mixed:{d} exceeds the dimension {}", op.dim())));
            }
            let lo = -((d / 2) as i64);
            let states = (lo..lo + d as i64)
                .map(|j| op.momentum_state(j))
                .collect::<Result<Vec<StateVector>, _>>()
                .context(ctx)?;
            Ensemble::new(vec![1.0 / d as f64; d], states).context(ctx)
        }
    }
}

/// RMT constants and the predicted window statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub inputs: RmtInputs,
    /// `C / N_eff`, NaN outside the validity range.
    pub mean: f64,
    pub std: f64,
    pub spectral: bool,
}

impl Prediction {
    fn from_inputs(inputs: RmtInputs, spectral: bool) -> Self {
        let (mean, std) = predicted_mean_std(&inputs).unwrap_or((f64::NAN, f64::NAN));
        Self { inputs, mean, std, spectral }
    }
}

/// Constants from the eigenbasis of the dense unperturbed Floquet operator.
pub fn spectral_prediction(cfg: &ScanConfig, unpert: &FloquetOperator, ens: &Ensemble) -> Result<Prediction, ScanError> {
    let ctx = || format!("spectral prediction at dimension {}", unpert.dim());
    let u = unpert.dense_unitary().context(ctx)?;
    let decomp = spectral_decompose(&u).context(ctx)?;
    let inputs = predict_constants_in(&ens.to_density_matrix(), decomp.vectors(), cfg.neff_cutoff).context(ctx)?;
    Ok(Prediction::from_inputs(inputs, true))
}

pub fn series_table(series: &EchoSeries) -> Table {
    let mut t = Table::new(&SERIES_HEADER);
    for ((time, f), big_f) in series.times().iter().zip(series.f()).zip(series.decoherence()) {
        t.push(vec![time.to_string(), f.re.to_string(), f.im.to_string(), big_f.to_string()]);
    }
    t
}

#[derive(Debug, Clone)]
pub struct PointRun {
    pub point: EnvPoint,
    pub dim: usize,
    pub series: EchoSeries,
    pub stats: EchoStats,
    pub prediction: Option<Prediction>,
    pub localization: Option<LocalizationEstimate>,
}

/// What [`echo_point`] computes besides the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointNeeds {
    pub prediction: bool,
    pub localization: bool,
}

/// Echo series between the propagators with shifts `unpert_shift` and
/// `pert_shift`, its window statistics and, on request, the RMT prediction
/// and the localization estimate.
pub fn echo_point(
    cfg: &ScanConfig,
    point: EnvPoint,
    unpert_shift: f64,
    pert_shift: f64,
    needs: PointNeeds,
) -> Result<PointRun, ScanError> {
    let label = point.label();
    let t_max = cfg.t_max();
    let ((series, stats, prediction, localization), dim) = sized(cfg, point, |dim| {
        let unpert = FloquetOperator::new(params(cfg, point, dim, unpert_shift)?).context(|| label.clone())?;
        let pert = FloquetOperator::new(params(cfg, point, dim, pert_shift)?).context(|| label.clone())?;
        let ens = omega0_ensemble(cfg, &unpert)?;
        let localization = if needs.localization && point.is_lattice() {
            Some(
                estimate_localization_ensemble(*unpert.params(), &ens, cfg.max_kicks)
                    .context(|| format!("localization estimate at {label}, M = {dim}"))?,
            )
        } else {
            None
        };
        let spectral = dim <= cfg.spectral_cap;
        let echo_ctx = || format!("echo series at {label}, dimension {dim}");
        let (series, prediction) = if needs.prediction && !spectral {
            let run = allegiance_with_return(&unpert, &pert, &ens, t_max).context(echo_ctx)?;
            let n_eff = match localization {
                Some(loc) => loc.localization_length.round() as usize,
                None => dim,
            };
            let tr_sq = ens.weights().iter().map(|w| w * w).sum();
            let inputs = time_domain_inputs(
                &run.return_overlap,
                cfg.window_start as usize,
                omega0_is_pure(cfg),
                n_eff,
                tr_sq,
            )
            .context(echo_ctx)?;
            (run.series, Some(Prediction::from_inputs(inputs, false)))
        } else {
            let series = allegiance_series_ensemble(&unpert, &pert, &ens, t_max).context(echo_ctx)?;
            let prediction =
                if needs.prediction { Some(spectral_prediction(cfg, &unpert, &ens)?) } else { None };
            (series, prediction)
        };
        let stats = echo_stats(&series, cfg.window_start).context(echo_ctx)?;
        Ok((series, stats, prediction, localization))
    })?;
    Ok(PointRun { point, dim, series, stats, prediction, localization })
}

/// A scan-schema row.
pub fn scan_row(param: f64, run: &PointRun) -> Vec<String> {
    let (n_eff, pm, ps) = match run.prediction {
        Some(p) => (p.inputs.n_eff.to_string(), p.mean, p.std),
        None => ("NaN".to_string(), f64::NAN, f64::NAN),
    };
    vec![
        param.to_string(),
        run.stats.mean_f.to_string(),
        run.stats.std_f.to_string(),
        n_eff,
        pm.to_string(),
        ps.to_string(),
    ]
}
