//! Simulation studies: density estimation on Marron-Wand curves and
//! heteroscedastic density regression with a trimodal predictor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centering::{kde_pdf, silverman_bandwidth};
use crate::error::{Error, Result};
use crate::estimate::{conditional_density_curve, l1_distance_values, marginal_density_curve, mse_coverage};
use crate::mixture::{marron_wand, SUPPORTED_MARRON_WAND};
use crate::model::{Channel, Dataset, NoiseScale};
use crate::sampler::{predict_heldout, run_chain, ModelConfig, Posterior};
use crate::simulate::{regression_truth, simulate_density, simulate_regression};
use crate::special::{linspace, normal_pdf, quantile};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixed into a replicate seed to get the chain seed, so that data and chain
/// draw from unrelated streams.
const CHAIN_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Original-scale grid on which Marron-Wand L1 distances are computed.
pub fn mw_l1_grid() -> Vec<f64> {
    linspace(-5.0, 5.0, 1001)
}

fn chain_seed(replicate_seed: u64) -> u64 {
    replicate_seed ^ CHAIN_SEED_MIX
}

/// One fitted Marron-Wand replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwReplicate {
    pub id: u32,
    pub replicate: usize,
    pub seed: u64,
    pub l1: f64,
    /// L1 of a Gaussian kernel estimate with Silverman's bandwidth on the same data.
    pub kde_l1: f64,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwSummary {
    pub id: u32,
    pub mean_l1: f64,
    pub mean_kde_l1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MwTable {
    pub rows: Vec<MwReplicate>,
    pub summary: Vec<MwSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwSettings {
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for MwSettings {
    fn default() -> Self {
        MwSettings { n: 100, replicates: 5, seed: 1 }
    }
}

/// Fit one density-estimation replicate and return the posterior together
/// with the estimated density on `grid` (original scale).
pub fn fit_density(y: &[f64], cfg: &ModelConfig, grid: &[f64]) -> Result<(Posterior, Vec<f64>)> {
    let data = Dataset::new(y.to_vec())?.standardize()?;
    let post = run_chain(&data, cfg)?;
    let scale = data.channel_scale(Channel::Response);
    let std_grid: Vec<f64> = grid.iter().map(|&v| scale.to_standard(v)).collect();
    let est = marginal_density_curve(&post.samples, &std_grid, 0.9)?;
    let f = est.mean.iter().map(|v| v / scale.sd).collect();
    Ok((post, f))
}

/// Every `(id, replicate)` pair, simulated with seed `seed + index` where
/// `index` runs over ids first-to-last and replicates within each id.
pub fn benchmark_mw(ids: &[u32], settings: MwSettings, cfg: &ModelConfig) -> Result<MwTable> {
    for id in ids {
        if !SUPPORTED_MARRON_WAND.contains(id) {
            return Err(Error::invalid(format!("unsupported Marron-Wand id {id}")));
        }
    }
    cfg.validate()?;
    let jobs: Vec<(u32, usize, u64)> = ids
        .iter()
        .flat_map(|&id| (0..settings.replicates).map(move |r| (id, r)))
        .enumerate()
        .map(|(index, (id, r))| (id, r, settings.seed.wrapping_add(index as u64)))
        .collect();
    let grid = mw_l1_grid();
    let rows = jobs
        .par_iter()
        .map(|&(id, replicate, seed)| {
            let f0 = marron_wand(id)?;
            let y = simulate_density(&f0, settings.n, seed);
            let run_cfg = ModelConfig { seed: chain_seed(seed), ..cfg.clone() };
            let (post, f) = fit_density(&y, &run_cfg, &grid)?;
            let truth: Vec<f64> = grid.iter().map(|&v| f0.pdf(v)).collect();
            let bw = silverman_bandwidth(&y)?;
            let kde: Vec<f64> = grid.iter().map(|&v| kde_pdf(&y, bw, v)).collect::<Result<_>>()?;
            Ok(MwReplicate {
                id,
                replicate,
                seed,
                l1: l1_distance_values(&f, &truth, &grid)?,
                kde_l1: l1_distance_values(&kde, &truth, &grid)?,
                acceptance: post.stats.acceptance_rates()[0],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = if settings.replicates == 0 {
        Vec::new()
    } else {
        ids.iter()
            .map(|&id| {
                let mine: Vec<&MwReplicate> = rows.iter().filter(|r| r.id == id).collect();
                let k = mine.len() as f64;
                MwSummary {
                    id,
                    mean_l1: mine.iter().map(|r| r.l1).sum::<f64>() / k,
                    mean_kde_l1: mine.iter().map(|r| r.kde_l1).sum::<f64>() / k,
                }
            })
            .collect()
    };
    Ok(MwTable { rows, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSettings {
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub replicates: usize,
    /// Level of the predictive intervals used for coverage.
    pub level: f64,
    pub seed: u64,
}

impl Default for RegressionSettings {
    fn default() -> Self {
        RegressionSettings { n_train: 50, n_test: 50, lambda: 3.0, sigma: 2.0, replicates: 5, level: 0.95, seed: 1 }
    }
}

/// Predictor quantiles at which conditional densities are compared.
pub const REGRESSION_QUANTILES: [(&str, f64); 3] = [("q25", 0.25), ("q50", 0.50), ("q75", 0.75)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub mse: f64,
    pub coverage: f64,
    pub l1: Vec<(String, f64)>,
    pub acceptance: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionTable {
    pub rows: Vec<RegressionReplicate>,
    pub mean_mse: f64,
    pub mean_coverage: f64,
    pub mean_l1: Vec<(String, f64)>,
}

/// Fitted joint model with training rows first and prediction rows after.
pub struct RegressionFit {
    pub data: Dataset,
    pub posterior: Posterior,
}

/// Fit the joint model with `y_train` observed and `z` covering training and
/// prediction rows.
pub fn fit_regression(y_train: &[f64], z: &[f64], cfg: &ModelConfig) -> Result<RegressionFit> {
    let data = Dataset::with_predictors(y_train.to_vec(), vec![z.to_vec()])?.standardize()?;
    let posterior = run_chain(&data, cfg)?;
    Ok(RegressionFit { data, posterior })
}

impl RegressionFit {
    /// Posterior predictive draws of the response at every prediction row,
    /// on the original scale.
    pub fn predictive_draws(&self, seed: u64) -> Result<Vec<Vec<f64>>> {
        let scale = self.data.channel_scale(Channel::Response);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (self.data.n()..self.data.total_rows())
            .map(|row| {
                let d = predict_heldout(&self.posterior, row, &mut rng)?;
                Ok(d.into_iter().map(|v| scale.to_original(v)).collect())
            })
            .collect()
    }

    /// Posterior mean conditional density of `y` (original scale) given an
    /// original-scale predictor value.
    pub fn conditional_curve(&self, z: f64, y_grid: &[f64]) -> Result<Vec<f64>> {
        let ys = self.data.channel_scale(Channel::Response);
        let zs = self.data.channel_scale(Channel::Predictor(0));
        let std_grid: Vec<f64> = y_grid.iter().map(|&v| ys.to_standard(v)).collect();
        let (est, _) = conditional_density_curve(&self.posterior.samples, &std_grid, &[zs.to_standard(z)], 0.9)?;
        Ok(est.mean.iter().map(|v| v / ys.sd).collect())
    }
}

/// Original-scale y grid for regression L1 distances.
pub fn regression_l1_grid() -> Vec<f64> {
    linspace(-12.0, 16.0, 1401)
}

/// Replicate `r` simulates `n_train + n_test` rows with seed `seed + r`,
/// fits on the first `n_train` responses and scores the rest.
pub fn benchmark_regression(settings: RegressionSettings, cfg: &ModelConfig) -> Result<RegressionTable> {
    cfg.validate()?;
    if settings.n_train < 2 || settings.n_test == 0 {
        return Err(Error::invalid("need at least two training rows and one test row"));
    }
    let sigma = NoiseScale::new(settings.sigma)?;
    let grid = regression_l1_grid();
    let rows = (0..settings.replicates)
        .into_par_iter()
        .map(|replicate| {
            let seed = settings.seed.wrapping_add(replicate as u64);
            let all = simulate_regression(settings.n_train + settings.n_test, settings.lambda, sigma, seed)?;
            let y_train = &all.y()[..settings.n_train];
            let y_test = &all.y()[settings.n_train..];
            let z = all.predictor(0);
            let fit = fit_regression(y_train, z, &ModelConfig { seed: chain_seed(seed), ..cfg.clone() })?;
            let draws = fit.predictive_draws(chain_seed(seed).wrapping_add(1))?;
            let metrics = mse_coverage(&draws, y_test, settings.level)?;
            let z_train = &z[..settings.n_train];
            let l1 = REGRESSION_QUANTILES
                .iter()
                .map(|&(label, q)| {
                    let zq = quantile(z_train, q);
                    let est = fit.conditional_curve(zq, &grid)?;
                    let (m, s) = regression_truth(zq, settings.lambda, sigma);
                    let truth: Vec<f64> = grid.iter().map(|&v| normal_pdf(v, m, s)).collect();
                    Ok((label.to_string(), l1_distance_values(&est, &truth, &grid)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RegressionReplicate {
                replicate,
                seed,
                mse: metrics.mse,
                coverage: metrics.coverage,
                l1,
                acceptance: fit.posterior.stats.acceptance_rates(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(RegressionTable::default());
    }
    let k = rows.len() as f64;
    let mean_l1 = REGRESSION_QUANTILES
        .iter()
        .enumerate()
        .map(|(j, &(label, _))| (label.to_string(), rows.iter().map(|r| r.l1[j].1).sum::<f64>() / k))
        .collect();
    Ok(RegressionTable {
        mean_mse: rows.iter().map(|r| r.mse).sum::<f64>() / k,
        mean_coverage: rows.iter().map(|r| r.coverage).sum::<f64>() / k,
        mean_l1,
        rows,
    })
}
