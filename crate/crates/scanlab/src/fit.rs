//! Power-law fits by least squares in log-log coordinates.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("x has {x} points but y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("non-positive or non-finite value at index {index}: ({x}, {y})")]
    NonPositive { index: usize, x: f64, y: f64 },
    #[error("all x values coincide")]
    DegenerateX,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl FitResult {
    pub const HEADER: [&'static str; 5] = ["slope", "slope_stderr", "intercept", "r_squared", "n_points"];

    pub fn row(&self) -> Vec<String> {
        vec![
            self.slope.to_string(),
            self.slope_stderr.to_string(),
            self.intercept.to_string(),
            self.r_squared.to_string(),
            self.n_points.to_string(),
        ]
    }

    /// `10^intercept * x^slope`.
    pub fn predict(&self, x: f64) -> f64 {
        10f64.powf(self.intercept + self.slope * x.log10())
    }

    /// Whether the slope lies within `tol` of `target`.
    pub fn slope_within(&self, target: f64, tol: f64) -> bool {
        (self.slope - target).abs() <= tol
    }
}

/// Ordinary least squares of `log10 y` on `log10 x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<FitResult, FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 3 {
        return Err(FitError::TooFewPoints(n));
    }
    for (index, (&xi, &yi)) in x.iter().zip(y).enumerate() {
        if !(xi > 0.0 && yi > 0.0 && xi.is_finite() && yi.is_finite()) {
            return Err(FitError::NonPositive { index, x: xi, y: yi });
        }
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let nf = n as f64;
    let mx = lx.iter().sum::<f64>() / nf;
    let my = ly.iter().sum::<f64>() / nf;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * nf {
        return Err(FitError::DegenerateX);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(FitResult { slope, slope_stderr, intercept, r_squared, n_points: n })
}
