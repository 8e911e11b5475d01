//! Residual extraction and probability-integral-transform normalization.
//!
//! Raw parameter series are differenced against the previous value (the
//! predictor), a Laplace or Gaussian distribution is fitted to each residual
//! variable, and the fitted CDF maps residuals to nearly uniform variables
//! on `[0, 1]`. Densities estimated in the transformed space are mapped back
//! to original units by `ρ_Y(y) = ρ_X(G(y))·g(y)` with `g` the fitted
//! density and `G` its CDF.
//!
//! Normalized values are clamped to `[1e-12, 1 − 1e-12]`: polynomial
//! evaluation tolerates the endpoints, but downstream log-scores do not.

use ndarray::Array2;

use crate::error::{HcrError, Result};
use crate::special;

/// Normalized values are kept this far away from 0 and 1.
pub const UNIFORM_CLAMP: f64 = 1e-12;

/// A multivariate time series in original units.
#[derive(Debug, Clone)]
pub struct RawSeries {
    names: Vec<String>,
    times: Vec<String>,
    values: Array2<f64>,
}

impl RawSeries {
    /// Build a series with synthetic row-number time labels.
    pub fn new(names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let times = (0..values.nrows()).map(|t| t.to_string()).collect();
        Self::with_times(names, times, values)
    }

    pub fn with_times(names: Vec<String>, times: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if names.len() != values.ncols() || values.ncols() == 0 {
            return Err(HcrError::InvalidInput(format!(
                "{} variable names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if times.len() != values.nrows() {
            return Err(HcrError::InvalidInput(format!(
                "{} time labels for {} rows",
                times.len(),
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HcrError::InvalidInput("non-finite value in series".into()));
        }
        Ok(RawSeries {
            names,
            times,
            values,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn times(&self) -> &[String] {
        &self.times
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    /// Restrict to the named columns, in the order given.
    pub fn select_columns(&self, names: &[String]) -> Result<RawSeries> {
        let indices = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|have| have == n)
                    .ok_or_else(|| HcrError::InvalidInput(format!("unknown variable '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut values = Array2::zeros((self.n_rows(), indices.len()));
        for (out_col, &src_col) in indices.iter().enumerate() {
            values
                .column_mut(out_col)
                .assign(&self.values.column(src_col));
        }
        RawSeries::with_times(names.to_vec(), self.times.clone(), values)
    }
}

/// Differences of successive raw rows: one row fewer than the source.
#[derive(Debug, Clone)]
pub struct ResidualSeries {
    names: Vec<String>,
    values: Array2<f64>,
}

impl ResidualSeries {
    /// Wrap externally computed residuals (e.g. from a more sophisticated
    /// predictor than the previous value).
    pub fn new(names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if names.len() != values.ncols() || values.ncols() == 0 {
            return Err(HcrError::InvalidInput(format!(
                "{} variable names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HcrError::InvalidInput(
                "non-finite value in residuals".into(),
            ));
        }
        Ok(ResidualSeries { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.values.column(index).to_vec()
    }
}

/// Residuals mapped through fitted CDFs: entries strictly inside (0, 1).
#[derive(Debug, Clone)]
pub struct UniformSeries {
    names: Vec<String>,
    values: Array2<f64>,
}

impl UniformSeries {
    pub fn new(names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if names.len() != values.ncols() || values.ncols() == 0 {
            return Err(HcrError::InvalidInput(format!(
                "{} variable names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(HcrError::InvalidInput(
                "normalized values must lie strictly inside (0, 1)".into(),
            ));
        }
        Ok(UniformSeries { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }
}

/// Difference successive rows: output row `t` is `raw[t+1] − raw[t]`.
pub fn difference_series(raw: &RawSeries) -> Result<ResidualSeries> {
    let n = raw.n_rows();
    if n < 2 {
        return Err(HcrError::InvalidInput(format!(
            "need at least 2 rows to difference, got {n}"
        )));
    }
    let v = raw.n_vars();
    let mut values = Array2::zeros((n - 1, v));
    for t in 0..n - 1 {
        for i in 0..v {
            values[[t, i]] = raw.values[[t + 1, i]] - raw.values[[t, i]];
        }
    }
    ResidualSeries::new(raw.names.clone(), values)
}

/// Which distribution family a normalizer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizerKind {
    Laplace,
    Gaussian,
}

impl std::fmt::Display for NormalizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormalizerKind::Laplace => write!(f, "laplace"),
            NormalizerKind::Gaussian => write!(f, "gaussian"),
        }
    }
}

impl std::str::FromStr for NormalizerKind {
    type Err = HcrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(NormalizerKind::Laplace),
            "gaussian" => Ok(NormalizerKind::Gaussian),
            other => Err(HcrError::InvalidInput(format!(
                "unknown normalizer kind '{other}' (expected laplace or gaussian)"
            ))),
        }
    }
}

/// Fitted location/scale for one residual variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizerParams {
    pub kind: NormalizerKind,
    pub location: f64,
    pub scale: f64,
}

impl NormalizerParams {
    pub fn new(kind: NormalizerKind, location: f64, scale: f64) -> Result<Self> {
        if !location.is_finite() || !scale.is_finite() || scale <= 0.0 {
            return Err(HcrError::InvalidInput(format!(
                "normalizer needs finite location and positive scale, got ({location}, {scale})"
            )));
        }
        Ok(NormalizerParams {
            kind,
            location,
            scale,
        })
    }

    /// CDF of the fitted distribution; strictly increasing in `y`.
    pub fn cdf(&self, y: f64) -> f64 {
        match self.kind {
            NormalizerKind::Laplace => {
                if y < self.location {
                    0.5 * ((y - self.location) / self.scale).exp()
                } else {
                    1.0 - 0.5 * (-(y - self.location) / self.scale).exp()
                }
            }
            NormalizerKind::Gaussian => special::norm_cdf((y - self.location) / self.scale),
        }
    }

    /// Inverse CDF for `u` strictly inside (0, 1).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(HcrError::Domain(format!(
                "quantile argument {u} outside the open interval (0, 1)"
            )));
        }
        Ok(match self.kind {
            NormalizerKind::Laplace => {
                if u <= 0.5 {
                    self.location + self.scale * (2.0 * u).ln()
                } else {
                    self.location - self.scale * (2.0 * (1.0 - u)).ln()
                }
            }
            NormalizerKind::Gaussian => self.location + self.scale * special::norm_quantile(u),
        })
    }

    /// Density of the fitted distribution at `y`.
    pub fn pdf(&self, y: f64) -> f64 {
        match self.kind {
            NormalizerKind::Laplace => {
                (-(y - self.location).abs() / self.scale).exp() / (2.0 * self.scale)
            }
            NormalizerKind::Gaussian => {
                special::norm_pdf((y - self.location) / self.scale) / self.scale
            }
        }
    }
}

fn check_fit_input(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(HcrError::InvalidInput(format!(
            "need at least 2 samples to fit, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(HcrError::InvalidInput("non-finite sample".into()));
    }
    Ok(())
}

/// Maximum-likelihood Laplace fit: location is the sample median, scale the
/// mean absolute deviation from it. An even-length median is the mean of the
/// two central order statistics.
pub fn fit_laplace(samples: &[f64]) -> Result<NormalizerParams> {
    check_fit_input(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let location = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let scale = samples.iter().map(|y| (y - location).abs()).sum::<f64>() / n as f64;
    if scale == 0.0 {
        return Err(HcrError::DegenerateScale(
            "all samples identical; Laplace scale would be zero".into(),
        ));
    }
    NormalizerParams::new(NormalizerKind::Laplace, location, scale)
}

/// Maximum-likelihood Gaussian fit: sample mean and population (1/n)
/// standard deviation.
pub fn fit_gaussian(samples: &[f64]) -> Result<NormalizerParams> {
    check_fit_input(samples)?;
    let n = samples.len() as f64;
    let location = samples.iter().sum::<f64>() / n;
    let variance = samples.iter().map(|y| (y - location).powi(2)).sum::<f64>() / n;
    let scale = variance.sqrt();
    if scale == 0.0 {
        return Err(HcrError::DegenerateScale(
            "all samples identical; Gaussian scale would be zero".into(),
        ));
    }
    NormalizerParams::new(NormalizerKind::Gaussian, location, scale)
}

/// Map every residual through its variable's fitted CDF, clamping into
/// `[UNIFORM_CLAMP, 1 − UNIFORM_CLAMP]`.
pub fn normalize_series(
    res: &ResidualSeries,
    params: &[NormalizerParams],
) -> Result<UniformSeries> {
    if params.len() != res.n_vars() {
        return Err(HcrError::InvalidInput(format!(
            "{} normalizers for {} variables",
            params.len(),
            res.n_vars()
        )));
    }
    let mut values = res.values.clone();
    for (i, p) in params.iter().enumerate() {
        for v in values.column_mut(i) {
            *v = p.cdf(*v).clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
        }
    }
    UniformSeries::new(res.names.clone(), values)
}

/// Transport a density value from the normalized space back to original
/// units: `ρ_Y(y) = ρ_X(G(y))·g(y)`, so the caller passes `ρ_X(G(y))`.
pub fn unnormalize_density(rho_x: f64, params: &NormalizerParams, y: f64) -> f64 {
    rho_x * params.pdf(y)
}

/// Sorted `(value, rank/n)` pairs; duplicates keep their distinct ranks.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(HcrError::InvalidInput(
            "empirical CDF of an empty sample".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}
