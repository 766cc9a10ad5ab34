//! Line-oriented `key = value` run configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use kickecho::rotor::{check_resonance, Coupling};

use crate::error::ScanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExperimentKind {
    EchoSeries,
    CouplingScan,
    HbarScan,
    Equilibrate,
    Bipartite,
    RmtCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::EchoSeries,
        ExperimentKind::CouplingScan,
        ExperimentKind::HbarScan,
        ExperimentKind::Equilibrate,
        ExperimentKind::Bipartite,
        ExperimentKind::RmtCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::EchoSeries => "echo-series",
            ExperimentKind::CouplingScan => "coupling-scan",
            ExperimentKind::HbarScan => "hbar-scan",
            ExperimentKind::Equilibrate => "equilibrate",
            ExperimentKind::Bipartite => "bipartite",
            ExperimentKind::RmtCheck => "rmt-check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Torus,
    Lattice,
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeometryKind::Torus => "torus",
            GeometryKind::Lattice => "lattice",
        })
    }
}

/// Initial environment state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Omega0 {
    /// `|p = 0><p = 0|`.
    MomentumZero,
    /// Random pure state over the whole environment, from the given seed.
    RandomPure(u64),
    /// Uniform mixture of `d` momentum levels centered on `p = 0`.
    MaximallyMixed(usize),
}

impl fmt::Display for Omega0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Omega0::MomentumZero => f.write_str("momentum-zero"),
            Omega0::RandomPure(s) => write!(f, "random-pure:{s}"),
            Omega0::MaximallyMixed(d) => write!(f, "maximally-mixed:{d}"),
        }
    }
}

impl FromStr for Omega0 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "momentum-zero" {
            return Ok(Omega0::MomentumZero);
        }
        if let Some(seed) = s.strip_prefix("random-pure:") {
            return seed.parse().map(Omega0::RandomPure).map_err(|e| format!("bad seed in `{s}`: {e}"));
        }
        if let Some(d) = s.strip_prefix("maximally-mixed:") {
            let d: usize = d.parse().map_err(|e| format!("bad dimension in `{s}`: {e}"))?;
            if d == 0 {
                return Err("maximally-mixed dimension must be positive".into());
            }
            return Ok(Omega0::MaximallyMixed(d));
        }
        Err(format!("unknown omega0 `{s}` (momentum-zero | random-pure:SEED | maximally-mixed:D)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub experiment: Option<ExperimentKind>,
    /// Kick strength `K`.
    pub k: f64,
    pub geometry: GeometryKind,
    /// Torus dimension for single-point experiments.
    pub torus_n: usize,
    /// Torus dimensions for multi-point experiments.
    pub torus_dims: Vec<usize>,
    /// Lattice `hbar_eff` for single-point experiments.
    pub hbar: f64,
    /// Lattice `hbar_eff` values for multi-point experiments.
    pub hbar_list: Vec<f64>,
    pub g_list: Vec<f64>,
    pub g_bar: f64,
    pub epsilon_nm: f64,
    /// Shift common to every conditional propagator.
    pub base_shift: f64,
    pub coupling: Coupling,
    pub omega0: Omega0,
    pub window_start: u64,
    pub window_len: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub alpha_sq: f64,
    pub omega_c: f64,
    pub spectral_cap: usize,
    /// Explicit lattice dimension; 0 sizes it from the localization estimate.
    pub lattice_dim: usize,
    pub lattice_factor: f64,
    pub max_kicks: u64,
    pub neff_cutoff: f64,
    pub cat_cutoff: f64,
    pub rmt_dim: usize,
    pub rmt_samples: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            k: 5.0,
            geometry: GeometryKind::Torus,
            torus_n: 256,
            torus_dims: vec![64, 128, 256, 512, 1024, 2048, 4096],
            hbar: 0.1,
            hbar_list: logspace(0.05, 0.5, 10),
            g_list: logspace(1e-4, 1.0, 21),
            g_bar: 0.1,
            epsilon_nm: 0.1,
            base_shift: 0.1,
            coupling: Coupling::Linear,
            omega0: Omega0::MomentumZero,
            window_start: 500,
            window_len: 5000,
            seed: 1,
            output_dir: PathBuf::from("out"),
            alpha_sq: 4.0,
            omega_c: 1.0,
            spectral_cap: 1024,
            lattice_dim: 0,
            lattice_factor: 32.0,
            max_kicks: 40000,
            neff_cutoff: 1e-6,
            cat_cutoff: 1e-10,
            rmt_dim: 32,
            rmt_samples: 10000,
        }
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("{key}: bad entry `{s}`: {e}")))
        .collect()
}

fn parse_real_list(key: &str, value: &str) -> Result<Vec<f64>, String> {
    if let Some(spec) = value.strip_prefix("logspace:") {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(format!("{key}: expected logspace:LO:HI:N"));
        };
        let lo: f64 = lo.trim().parse().map_err(|e| format!("{key}: {e}"))?;
        let hi: f64 = hi.trim().parse().map_err(|e| format!("{key}: {e}"))?;
        let n: usize = n.trim().parse().map_err(|e| format!("{key}: {e}"))?;
        if !(lo > 0.0 && hi > lo && n >= 1) {
            return Err(format!("{key}: logspace needs 0 < LO < HI and N >= 1"));
        }
        return Ok(logspace(lo, hi, n));
    }
    parse_list(key, value)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| format!("{key}: bad value `{value}`: {e}"))
}

fn fmt_list<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ScanConfig {
    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ScanError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ScanError::Config(format!("line {}: expected `key = value`", lineno + 1)));
            };
            cfg.set(key.trim(), value.trim())
                .map_err(|e| ScanError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "experiment" => self.experiment = Some(value.parse()?),
            "K" => self.k = parse_value(key, value)?,
            "geometry" => {
                self.geometry = match value {
                    "torus" => GeometryKind::Torus,
                    "lattice" => GeometryKind::Lattice,
                    _ => return Err(format!("geometry must be torus or lattice, got `{value}`")),
                }
            }
            "torus_n" => self.torus_n = parse_value(key, value)?,
            "torus_dims" => self.torus_dims = parse_list(key, value)?,
            "hbar" => self.hbar = parse_value(key, value)?,
            "hbar_list" => self.hbar_list = parse_real_list(key, value)?,
            "g_list" => self.g_list = parse_real_list(key, value)?,
            "g_bar" => self.g_bar = parse_value(key, value)?,
            "epsilon_nm" => self.epsilon_nm = parse_value(key, value)?,
            "base_shift" => self.base_shift = parse_value(key, value)?,
            "coupling" => {
                self.coupling = match value {
                    "linear" => Coupling::Linear,
                    "kicked" => Coupling::Kicked,
                    _ => return Err(format!("coupling must be linear or kicked, got `{value}`")),
                }
            }
            "omega0" => self.omega0 = value.parse()?,
            "window_start" => self.window_start = parse_value(key, value)?,
            "window_len" => self.window_len = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "alpha_sq" => self.alpha_sq = parse_value(key, value)?,
            "omega_c" => self.omega_c = parse_value(key, value)?,
            "spectral_cap" => self.spectral_cap = parse_value(key, value)?,
            "lattice_dim" => self.lattice_dim = parse_value(key, value)?,
            "lattice_factor" => self.lattice_factor = parse_value(key, value)?,
            "max_kicks" => self.max_kicks = parse_value(key, value)?,
            "neff_cutoff" => self.neff_cutoff = parse_value(key, value)?,
            "cat_cutoff" => self.cat_cutoff = parse_value(key, value)?,
            "rmt_dim" => self.rmt_dim = parse_value(key, value)?,
            "rmt_samples" => self.rmt_samples = parse_value(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Last kick of every series.
    pub fn t_max(&self) -> u64 {
        self.window_start + self.window_len - 1
    }

    /// Checks cross-field constraints for running `kind`.
    pub fn validate(&self, kind: ExperimentKind) -> Result<(), ScanError> {
        let err = |m: String| Err(ScanError::Config(m));
        if let Some(e) = self.experiment {
            if e != kind {
                return err(format!("config names experiment `{e}` but `{kind}` was requested"));
            }
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return err(format!("K = {} must be >= 0", self.k));
        }
        if self.window_len < kickecho::echo::MIN_WINDOW as u64 {
            return err(format!("window_len {} below {}", self.window_len, kickecho::echo::MIN_WINDOW));
        }
        if self.spectral_cap > kickecho::echo::SPECTRAL_CAP {
            return err(format!("spectral_cap {} above {}", self.spectral_cap, kickecho::echo::SPECTRAL_CAP));
        }
        if self.lattice_dim != 0 && self.lattice_dim < kickecho::rotor::MIN_LATTICE {
            return err(format!("lattice_dim {} below {}", self.lattice_dim, kickecho::rotor::MIN_LATTICE));
        }
        if !(self.lattice_factor >= 1.0) {
            return err("lattice_factor must be >= 1".into());
        }
        if !(self.neff_cutoff > 0.0 && self.neff_cutoff < 1.0) || !(self.cat_cutoff > 0.0 && self.cat_cutoff < 1.0) {
            return err("cutoffs must lie in (0, 1)".into());
        }
        let multi = matches!(kind, ExperimentKind::EchoSeries | ExperimentKind::HbarScan | ExperimentKind::Equilibrate);
        match self.geometry {
            GeometryKind::Torus => {
                let dims: &[usize] = if multi { &self.torus_dims } else { std::slice::from_ref(&self.torus_n) };
                if dims.is_empty() {
                    return err("torus_dims is empty".into());
                }
                for &n in dims {
                    if n < 2 || !n.is_power_of_two() {
                        return err(format!("torus dimension {n} must be a power of two"));
                    }
                    self.check_hbar(2.0 * std::f64::consts::PI / n as f64)?;
                }
            }
            GeometryKind::Lattice => {
                let hs: &[f64] = if multi { &self.hbar_list } else { std::slice::from_ref(&self.hbar) };
                if hs.is_empty() {
                    return err("hbar_list is empty".into());
                }
                for &h in hs {
                    if !(h > 0.0) || !h.is_finite() {
                        return err(format!("hbar_eff {h} must be > 0"));
                    }
                    self.check_hbar(h)?;
                }
            }
        }
        if self.geometry == GeometryKind::Lattice && matches!(self.omega0, Omega0::RandomPure(_)) {
            return err("random-pure initial states fill the whole lattice; use the torus".into());
        }
        match kind {
            ExperimentKind::HbarScan => {
                let n = match self.geometry {
                    GeometryKind::Torus => self.torus_dims.len(),
                    GeometryKind::Lattice => self.hbar_list.len(),
                };
                if n < 3 {
                    return err(format!("hbar-scan fits need at least 3 points, got {n}"));
                }
            }
            ExperimentKind::CouplingScan => {
                if self.g_list.is_empty() {
                    return err("g_list is empty".into());
                }
                if self.g_list.iter().any(|g| !(*g > 0.0)) {
                    return err("g_list entries must be positive".into());
                }
            }
            ExperimentKind::Equilibrate if !(self.alpha_sq > 0.0) => {
                return err("alpha_sq must be positive".into());
            }
            ExperimentKind::RmtCheck if self.rmt_dim < 8 || self.rmt_samples < 100 => {
                return err("rmt_dim must be >= 8 and rmt_samples >= 100".into());
            }
            _ => {}
        }
        Ok(())
    }

    fn check_hbar(&self, hbar: f64) -> Result<(), ScanError> {
        if self.k > 0.0 {
            check_resonance(hbar).map_err(|e| ScanError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Every parameter as `(key, value)` in configuration-file syntax.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("K", self.k.to_string()),
            ("geometry", self.geometry.to_string()),
            ("torus_n", self.torus_n.to_string()),
            ("torus_dims", fmt_list(&self.torus_dims)),
            ("hbar", self.hbar.to_string()),
            ("hbar_list", fmt_list(&self.hbar_list)),
            ("g_list", fmt_list(&self.g_list)),
            ("g_bar", self.g_bar.to_string()),
            ("epsilon_nm", self.epsilon_nm.to_string()),
            ("base_shift", self.base_shift.to_string()),
            ("coupling", self.coupling.to_string()),
            ("omega0", self.omega0.to_string()),
            ("window_start", self.window_start.to_string()),
            ("window_len", self.window_len.to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("alpha_sq", self.alpha_sq.to_string()),
            ("omega_c", self.omega_c.to_string()),
            ("spectral_cap", self.spectral_cap.to_string()),
            ("lattice_dim", self.lattice_dim.to_string()),
            ("lattice_factor", self.lattice_factor.to_string()),
            ("max_kicks", self.max_kicks.to_string()),
            ("neff_cutoff", self.neff_cutoff.to_string()),
            ("cat_cutoff", self.cat_cutoff.to_string()),
            ("rmt_dim", self.rmt_dim.to_string()),
            ("rmt_samples", self.rmt_samples.to_string()),
        ];
        if let Some(e) = self.experiment {
            out.insert(0, ("experiment", e.to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Serializes to configuration-file syntax; parsing it back is lossless.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
