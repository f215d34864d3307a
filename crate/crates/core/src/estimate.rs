//! Posterior summaries: marginal and conditional density curves with pointwise
//! bands, tail probabilities of the conditional law, L1 distances and
//! out-of-sample regression metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{grid_mixture_density, Dataset};
use crate::sampler::PosteriorSample;
use crate::special::{linspace, normal_ln_pdf_var, sorted_quantile, std_normal_pdf, trapezoid};

/// Points in the default y evaluation grid.
pub const DEFAULT_Y_POINTS: usize = 512;

/// Points in the mesh used to integrate a conditional density up to `T`.
pub const TAIL_MESH: usize = 2001;

/// Default credible level of the pointwise bands (5% and 95% quantiles).
pub const DEFAULT_LEVEL: f64 = 0.90;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub y_grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// True while the curve is on the standardized response scale.
    pub standardized: bool,
}

impl DensityEstimate {
    /// Trapezoid integral of the mean curve.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.y_grid, &self.mean)
    }
}

/// Samples that carried no weight because every predictor likelihood vanished.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalDiagnostics {
    pub non_contributing: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProbability {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub coverage: f64,
    /// L1 distance between estimated and true conditional densities keyed by
    /// predictor quantile label.
    pub l1_at_quantiles: BTreeMap<String, f64>,
}

/// `DEFAULT_Y_POINTS` points over the observed response range ± 3 sd, on the
/// scale of `data`.
pub fn default_y_grid(data: &Dataset) -> Vec<f64> {
    let y = data.y();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = if y.len() > 1 {
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        1.0
    };
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    linspace(lo - 3.0 * sd, hi + 3.0 * sd, DEFAULT_Y_POINTS)
}

fn check_samples(samples: &[PosteriorSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("no posterior samples"));
    }
    Ok(())
}

fn check_level(level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must be in (0, 1), got {level}")));
    }
    let tail = 0.5 * (1.0 - level);
    Ok((tail, 1.0 - tail))
}

/// Marginal density of one sample: `(1/G) Σ_k φ_σ(y − μ(g_k))`.
pub fn sample_marginal_density(sample: &PosteriorSample, y: f64) -> f64 {
    let ch = sample.response();
    grid_mixture_density(&ch.grid_values, ch.sigma(), y)
}

/// Posterior mean of the marginal density at `y`.
pub fn marginal_density(samples: &[PosteriorSample], y: f64) -> Result<f64> {
    check_samples(samples)?;
    Ok(samples.iter().map(|s| sample_marginal_density(s, y)).sum::<f64>() / samples.len() as f64)
}

/// Mixing weights over the grid given predictors `z` (one per predictor
/// channel), or `None` when every weight underflows to zero.
fn predictor_weights(sample: &PosteriorSample, z: &[f64]) -> Option<Vec<f64>> {
    let g = sample.response().grid_values.len();
    let mut lw = vec![0.0; g];
    for (k, &zk) in z.iter().enumerate() {
        let ch = &sample.channels[k + 1];
        let var = ch.precision.recip();
        for (w, &v) in lw.iter_mut().zip(&ch.grid_values) {
            *w += normal_ln_pdf_var(zk, v, var);
        }
    }
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = lw.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Some(w)
}

fn check_predictors(samples: &[PosteriorSample], z: &[f64]) -> Result<()> {
    check_samples(samples)?;
    let p = samples[0].channels.len() - 1;
    if z.is_empty() || z.len() != p {
        return Err(Error::invalid(format!("expected {p} predictor values, got {}", z.len())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("predictor values must be finite"));
    }
    Ok(())
}

fn weighted_mixture(weights: &[f64], values: &[f64], sigma: f64, y: f64) -> f64 {
    let inv = sigma.recip();
    weights
        .iter()
        .zip(values)
        .map(|(w, &v)| w * std_normal_pdf((y - v) * inv))
        .sum::<f64>()
        * inv
}

/// Conditional density of one sample,
/// `Σ_k φ_σY(y − μY(g_k)) φ_σZ(z − μZ(g_k)) / Σ_k φ_σZ(z − μZ(g_k))`.
pub fn sample_conditional_density(sample: &PosteriorSample, y: f64, z: &[f64]) -> Option<f64> {
    let w = predictor_weights(sample, z)?;
    let ch = sample.response();
    Some(weighted_mixture(&w, &ch.grid_values, ch.sigma(), y))
}

/// Posterior mean of the conditional density at `y` given predictors `z`.
pub fn conditional_density(samples: &[PosteriorSample], y: f64, z: &[f64]) -> Result<(f64, ConditionalDiagnostics)> {
    check_predictors(samples, z)?;
    let mut diag = ConditionalDiagnostics::default();
    let mut sum = 0.0;
    for s in samples {
        match sample_conditional_density(s, y, z) {
            Some(v) => sum += v,
            None => diag.non_contributing += 1,
        }
    }
    let used = samples.len() - diag.non_contributing;
    if used == 0 {
        return Err(Error::numerical("conditional density", "no sample gives weight to the predictors"));
    }
    Ok((sum / used as f64, diag))
}

fn summarize(curves: Vec<Vec<f64>>, y_grid: &[f64], level: f64) -> Result<DensityEstimate> {
    let (lo_q, hi_q) = check_level(level)?;
    let m = y_grid.len();
    let count = curves.len() as f64;
    let columns: Vec<(f64, f64, f64)> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut col: Vec<f64> = curves.iter().map(|c| c[j]).collect();
            let mean = col.iter().sum::<f64>() / count;
            col.sort_by(f64::total_cmp);
            let lower = sorted_quantile(&col, lo_q).min(mean);
            let upper = sorted_quantile(&col, hi_q).max(mean);
            (mean, lower, upper)
        })
        .collect();
    Ok(DensityEstimate {
        y_grid: y_grid.to_vec(),
        mean: columns.iter().map(|c| c.0).collect(),
        lower: columns.iter().map(|c| c.1).collect(),
        upper: columns.iter().map(|c| c.2).collect(),
        standardized: true,
    })
}

fn check_y_grid(y_grid: &[f64]) -> Result<()> {
    if y_grid.is_empty() || y_grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("y grid must be nonempty and finite"));
    }
    Ok(())
}

/// Marginal density curve over `y_grid` with pointwise equal-tailed bands at
/// `level`. Bands are widened to contain the mean where a skewed sample puts
/// the mean outside the quantiles.
pub fn marginal_density_curve(samples: &[PosteriorSample], y_grid: &[f64], level: f64) -> Result<DensityEstimate> {
    check_samples(samples)?;
    check_y_grid(y_grid)?;
    let curves: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| y_grid.iter().map(|&y| sample_marginal_density(s, y)).collect())
        .collect();
    summarize(curves, y_grid, level)
}

/// Conditional density curve given predictors `z`, with bands as in
/// [`marginal_density_curve`].
pub fn conditional_density_curve(
    samples: &[PosteriorSample],
    y_grid: &[f64],
    z: &[f64],
    level: f64,
) -> Result<(DensityEstimate, ConditionalDiagnostics)> {
    check_predictors(samples, z)?;
    check_y_grid(y_grid)?;
    let curves: Vec<Option<Vec<f64>>> = samples
        .par_iter()
        .map(|s| {
            let w = predictor_weights(s, z)?;
            let ch = s.response();
            let sigma = ch.sigma();
            Some(y_grid.iter().map(|&y| weighted_mixture(&w, &ch.grid_values, sigma, y)).collect())
        })
        .collect();
    let diag = ConditionalDiagnostics { non_contributing: curves.iter().filter(|c| c.is_none()).count() };
    let curves: Vec<Vec<f64>> = curves.into_iter().flatten().collect();
    if curves.is_empty() {
        return Err(Error::numerical("conditional density", "no sample gives weight to the predictors"));
    }
    Ok((summarize(curves, y_grid, level)?, diag))
}

/// `P(Y ≤ t | z)` for one sample, by trapezoid integration of the
/// conditional density from its mean − 8 sd up to `t`.
pub fn sample_tail_probability(sample: &PosteriorSample, t: f64, z: &[f64]) -> Option<f64> {
    let ch = sample.response();
    let g = ch.grid_values.len();
    let w = if z.is_empty() { vec![1.0 / g as f64; g] } else { predictor_weights(sample, z)? };
    let sigma = ch.sigma();
    let mean: f64 = w.iter().zip(&ch.grid_values).map(|(w, v)| w * v).sum();
    let var: f64 = sigma * sigma + w.iter().zip(&ch.grid_values).map(|(w, v)| w * (v - mean).powi(2)).sum::<f64>();
    let lo = mean - 8.0 * var.sqrt();
    if t <= lo {
        return Some(0.0);
    }
    let mesh = linspace(lo, t, TAIL_MESH);
    let f: Vec<f64> = mesh.iter().map(|&y| weighted_mixture(&w, &ch.grid_values, sigma, y)).collect();
    Some(trapezoid(&mesh, &f).min(1.0))
}

/// Posterior mean and equal-tailed band at `level` of `P(Y ≤ t | z)`. An
/// empty `z` gives the marginal probability.
pub fn tail_probability(samples: &[PosteriorSample], t: f64, z: &[f64], level: f64) -> Result<TailProbability> {
    if z.is_empty() {
        check_samples(samples)?;
    } else {
        check_predictors(samples, z)?;
    }
    if t.is_nan() {
        return Err(Error::invalid("threshold is NaN"));
    }
    let (lo_q, hi_q) = check_level(level)?;
    let mut p: Vec<f64> = samples.par_iter().filter_map(|s| sample_tail_probability(s, t, z)).collect();
    if p.is_empty() {
        return Err(Error::numerical("tail probability", "no sample gives weight to the predictors"));
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.sort_by(f64::total_cmp);
    Ok(TailProbability {
        mean,
        lower: sorted_quantile(&p, lo_q).min(mean),
        upper: sorted_quantile(&p, hi_q).max(mean),
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("L1 grid must have at least two strictly increasing points"));
    }
    Ok(())
}

/// Trapezoid integral of `|a − b|` for densities tabulated on `grid`.
pub fn l1_distance_values(a: &[f64], b: &[f64], grid: &[f64]) -> Result<f64> {
    check_grid(grid)?;
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(Error::invalid("density values and grid differ in length"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::numerical("L1 distance", "non-finite density value"));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    Ok(trapezoid(grid, &diff))
}

/// Trapezoid integral of `|f − g|` over `grid`.
pub fn l1_distance(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, grid: &[f64]) -> Result<f64> {
    let a: Vec<f64> = grid.iter().map(|&y| f(y)).collect();
    let b: Vec<f64> = grid.iter().map(|&y| g(y)).collect();
    l1_distance_values(&a, &b, grid)
}

/// Mean squared error of predictive means and the fraction of truths inside
/// the central `level` interval of each row's predictive draws.
pub fn mse_coverage(predictive: &[Vec<f64>], truth: &[f64], level: f64) -> Result<RegressionMetrics> {
    if truth.is_empty() {
        return Err(Error::invalid("no held-out rows"));
    }
    if predictive.len() != truth.len() {
        return Err(Error::invalid("one set of predictive draws is needed per held-out row"));
    }
    if predictive.iter().any(|d| d.is_empty()) {
        return Err(Error::invalid("empty predictive draws"));
    }
    let (lo_q, hi_q) = check_level(level)?;
    let mut se = 0.0;
    let mut covered = 0usize;
    for (draws, &y) in predictive.iter().zip(truth) {
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        se += (mean - y).powi(2);
        let mut d = draws.clone();
        d.sort_by(f64::total_cmp);
        if sorted_quantile(&d, lo_q) <= y && y <= sorted_quantile(&d, hi_q) {
            covered += 1;
        }
    }
    let n = truth.len() as f64;
    Ok(RegressionMetrics { mse: se / n, coverage: covered as f64 / n, l1_at_quantiles: BTreeMap::new() })
}
