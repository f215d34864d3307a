//! Domain types for the latent-factor density model and evaluation of the
//! induced density `f(y) = ∫₀¹ φ_σ(y − μ(x)) dx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::DensityEstimate;
use crate::special::{std_normal_cdf, std_normal_pdf};

/// Location and spread used to move one channel to and from the standardized scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScale {
    pub mean: f64,
    pub sd: f64,
}

impl ChannelScale {
    pub const IDENTITY: ChannelScale = ChannelScale { mean: 0.0, sd: 1.0 };

    pub fn to_standard(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn to_original(&self, v: f64) -> f64 {
        self.mean + self.sd * v
    }

    fn compose(&self, inner: &ChannelScale) -> ChannelScale {
        ChannelScale {
            mean: self.mean + self.sd * inner.mean,
            sd: self.sd * inner.sd,
        }
    }
}

/// Per-channel scales of a standardized [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub response: ChannelScale,
    pub predictors: Vec<ChannelScale>,
}

/// Identifies one observed variable: the response or the k-th predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Response,
    Predictor(usize),
}

/// Responses for the first `n` rows plus optional predictor columns covering
/// all `N >= n` rows. Rows `n..N` carry predictors only and are the rows whose
/// response is to be predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    z: Vec<Vec<f64>>,
    scales: Option<Standardization>,
}

impl Dataset {
    /// Response-only data (no predictors).
    pub fn new(y: Vec<f64>) -> Result<Self> {
        Self::with_predictors(y, Vec::new())
    }

    /// `columns[k]` holds predictor `k` for every row; its length is `N`.
    pub fn with_predictors(y: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("dataset needs at least one response"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("responses must be finite"));
        }
        if let Some(first) = columns.first() {
            let total = first.len();
            if total < y.len() {
                return Err(Error::invalid(format!(
                    "predictor columns have {total} rows, fewer than the {} responses",
                    y.len()
                )));
            }
            for (k, col) in columns.iter().enumerate() {
                if col.len() != total {
                    return Err(Error::invalid(format!("predictor column {k} has a different length")));
                }
                if col.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("predictor column {k} has non-finite values")));
                }
            }
        }
        Ok(Dataset { y, z: columns, scales: None })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn predictor(&self, k: usize) -> &[f64] {
        &self.z[k]
    }

    pub fn predictors(&self) -> &[Vec<f64>] {
        &self.z
    }

    /// Number of rows with an observed response.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of rows including prediction-only rows.
    pub fn total_rows(&self) -> usize {
        self.z.first().map_or(self.y.len(), Vec::len)
    }

    pub fn p(&self) -> usize {
        self.z.len()
    }

    pub fn scales(&self) -> Option<&Standardization> {
        self.scales.as_ref()
    }

    pub fn channel_scale(&self, channel: Channel) -> ChannelScale {
        match (&self.scales, channel) {
            (None, _) => ChannelScale::IDENTITY,
            (Some(s), Channel::Response) => s.response,
            (Some(s), Channel::Predictor(k)) => s.predictors[k],
        }
    }

    /// Center and scale every channel to sample mean 0 and sample sd 1.
    ///
    /// Applying this to data that is already standardized composes the scales,
    /// so original-scale values stay recoverable.
    pub fn standardize(&self) -> Result<Dataset> {
        let (ry, rs) = standardize_channel(&self.y, "response")?;
        let mut cols = Vec::with_capacity(self.z.len());
        let mut pscales = Vec::with_capacity(self.z.len());
        for (k, col) in self.z.iter().enumerate() {
            let (c, s) = standardize_channel(col, &format!("predictor {k}"))?;
            cols.push(c);
            pscales.push(s);
        }
        let scales = match &self.scales {
            None => Standardization { response: rs, predictors: pscales },
            Some(old) => Standardization {
                response: old.response.compose(&rs),
                predictors: old
                    .predictors
                    .iter()
                    .zip(&pscales)
                    .map(|(o, s)| o.compose(s))
                    .collect(),
            },
        };
        Ok(Dataset { y: ry, z: cols, scales: Some(scales) })
    }

    /// Values of a channel on the original scale.
    pub fn destandardized(&self, channel: Channel) -> Vec<f64> {
        let scale = self.channel_scale(channel);
        let values = match channel {
            Channel::Response => &self.y,
            Channel::Predictor(k) => &self.z[k],
        };
        values.iter().map(|&v| scale.to_original(v)).collect()
    }
}

fn standardize_channel(values: &[f64], name: &str) -> Result<(Vec<f64>, ChannelScale)> {
    if values.len() < 2 {
        return Err(Error::DegenerateData(format!("{name}: need at least two values to standardize")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || sd < 1e-300 {
        return Err(Error::DegenerateData(format!("{name} has zero variance")));
    }
    let scale = ChannelScale { mean, sd };
    Ok((values.iter().map(|&v| scale.to_standard(v)).collect(), scale))
}

/// Map a density estimated on the standardized scale back to original units:
/// `f(y) = f_std((y − m)/s) / s`.
pub fn destandardize_density(est: &DensityEstimate, scale: ChannelScale) -> DensityEstimate {
    let map = |v: &Vec<f64>| v.iter().map(|d| d / scale.sd).collect::<Vec<_>>();
    DensityEstimate {
        y_grid: est.y_grid.iter().map(|&y| scale.to_original(y)).collect(),
        mean: map(&est.mean),
        lower: map(&est.lower),
        upper: map(&est.upper),
        standardized: false,
    }
}

/// A realization of the transfer function `μ: (0,1) → ℝ` on a latent grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TransferFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::invalid("transfer function needs matching, nonempty grid and values"));
        }
        if grid.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
            return Err(Error::invalid("transfer function grid must lie in (0, 1)"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("transfer function grid must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("transfer function values must be finite"));
        }
        Ok(TransferFunction { grid, values })
    }

    /// Tabulate `f` on the midpoint grid `(k − ½)/G`.
    pub fn tabulate(g: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = midpoint_grid(g);
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Evenly spaced latent grid `g_k = (k − ½)/G`, `k = 1..G`.
pub fn midpoint_grid(g: usize) -> Vec<f64> {
    (0..g).map(|k| (k as f64 + 0.5) / g as f64).collect()
}

/// Standard deviation of the additive Gaussian residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale(f64);

impl NoiseScale {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("noise scale must be positive and finite, got {sigma}")));
        }
        Ok(NoiseScale(sigma))
    }

    pub fn from_precision(precision: f64) -> Result<Self> {
        Self::new(precision.recip().sqrt())
    }

    pub fn sigma(self) -> f64 {
        self.0
    }
}

/// Induced density at `y`: the equal-weight grid average `(1/G) Σ φ_σ(y − μ(g_k))`.
pub fn eval_model_density(mu: &TransferFunction, sigma: NoiseScale, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::invalid("density argument must be finite"));
    }
    Ok(grid_mixture_density(&mu.values, sigma.0, y))
}

/// Exact `∫₀¹ φ_σ(y − μ(x)) dx` for the piecewise-linear interpolant of the
/// tabulated values, held flat on `[0, g_1]` and `[g_G, 1]`.
///
/// Unlike [`eval_model_density`] this does not degrade when neighbouring
/// values are further apart than `σ`.
pub fn eval_interpolated_density(mu: &TransferFunction, sigma: NoiseScale, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::invalid("density argument must be finite"));
    }
    let s = sigma.0;
    let (g, v) = (&mu.grid, &mu.values);
    let last = g.len() - 1;
    let mut total = g[0] * std_normal_pdf((y - v[0]) / s) / s;
    total += (1.0 - g[last]) * std_normal_pdf((y - v[last]) / s) / s;
    for k in 0..last {
        let width = g[k + 1] - g[k];
        let rise = v[k + 1] - v[k];
        if rise.abs() <= 1e-9 * s {
            total += width * std_normal_pdf((y - 0.5 * (v[k] + v[k + 1])) / s) / s;
        } else {
            total += width / rise * normal_mass_between(v[k], v[k + 1], y, s);
        }
    }
    Ok(total)
}

/// `Φ((y − a)/s) − Φ((y − b)/s)`, evaluated on whichever tail avoids cancellation.
fn normal_mass_between(a: f64, b: f64, y: f64, s: f64) -> f64 {
    let (za, zb) = ((y - a) / s, (y - b) / s);
    if za.min(zb) > 0.0 {
        std_normal_cdf(-zb) - std_normal_cdf(-za)
    } else {
        std_normal_cdf(za) - std_normal_cdf(zb)
    }
}

/// `(1/G) Σ_k φ_σ(y − v_k)` without validation; used on hot paths.
pub(crate) fn grid_mixture_density(values: &[f64], sigma: f64, y: f64) -> f64 {
    let inv = sigma.recip();
    let s: f64 = values.iter().map(|&v| std_normal_pdf((y - v) * inv)).sum();
    s * inv / values.len() as f64
}
