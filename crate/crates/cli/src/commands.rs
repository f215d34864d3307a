//! The subcommands. Each reads its inputs, runs the model and writes CSV files
//! plus `manifest.json` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use gpt_density::benchmark::{benchmark_mw, benchmark_regression, fit_regression, REGRESSION_QUANTILES};
use gpt_density::centering::{draw_prior_density, inverse_cdf_mean, kde_pdf, silverman_bandwidth};
use gpt_density::estimate::{conditional_density_curve, marginal_density_curve, mse_coverage, tail_probability};
use gpt_density::gp::MeanFunction;
use gpt_density::model::{
    destandardize_density, eval_model_density, midpoint_grid, Channel, ChannelScale, Dataset,
};
use gpt_density::sampler::{run_chain, ModelConfig};
use gpt_density::special::{linspace, quantile};
use rayon::prelude::*;

use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::io::{read_single_column, read_table, read_table_allow_empty, write_csv, Cell};
use crate::manifest::RunManifest;

pub const DENSITY_FILE: &str = "density.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const CONDITIONAL_FILE: &str = "conditional_density.csv";
pub const PREDICTIVE_FILE: &str = "predictive.csv";
pub const PREDICTIVE_DRAWS_FILE: &str = "predictive_draws.csv";
pub const TAIL_FILE: &str = "tail.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MW_TABLE_FILE: &str = "mw_table.csv";
pub const MW_SUMMARY_FILE: &str = "mw_summary.csv";
pub const REGRESSION_TABLE_FILE: &str = "regression_table.csv";
pub const REGRESSION_SUMMARY_FILE: &str = "regression_summary.csv";
pub const PRIOR_DRAWS_FILE: &str = "prior_draws.csv";
pub const ELICITATION_KDE_FILE: &str = "elicitation_kde.csv";

/// Half-width of a prior-draw curve's y range, in noise standard deviations.
const PRIOR_CURVE_SDS: f64 = 6.0;

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn emit(manifest: &mut RunManifest, path: PathBuf, headers: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    write_csv(&path, headers, rows)?;
    manifest.outputs.push(path);
    Ok(())
}

/// `points` values spanning the sample range widened by three sample sds.
fn y_grid(y: &[f64], points: usize) -> Vec<f64> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    linspace(lo - 3.0 * sd, hi + 3.0 * sd, points)
}

/// Inverse-CDF mean function for the standardized response, built from
/// elicitation samples in original units.
fn elicited_mean(samples: &[f64], scale: ChannelScale, grid_size: usize) -> Result<MeanFunction> {
    let std: Vec<f64> = samples.iter().map(|&v| scale.to_standard(v)).collect();
    let bw = silverman_bandwidth(&std)?;
    Ok(inverse_cdf_mean(&std, &midpoint_grid(grid_size), bw)?.mean_function)
}

/// Fit the univariate density model to a single-column CSV.
pub fn estimate_density(settings: &Settings, data: &Path, elicit: Option<&Path>, out: &Path) -> Result<PathBuf> {
    let mut manifest = RunManifest::start("estimate-density", settings);
    manifest.inputs.push(data.to_path_buf());
    let y = read_single_column(data)?;
    let ds = Dataset::new(y.clone())?.standardize()?;
    let scale = ds.channel_scale(Channel::Response);
    let mut cfg = settings.model.clone();
    if let Some(path) = elicit {
        manifest.inputs.push(path.to_path_buf());
        cfg.response_mean = elicited_mean(&read_single_column(path)?, scale, cfg.grid_size)?;
    }
    prepare(out)?;

    let post = run_chain(&ds, &cfg)?;
    manifest.record_chain(&post.stats);
    let grid = y_grid(&y, settings.y_points);
    let std_grid: Vec<f64> = grid.iter().map(|&v| scale.to_standard(v)).collect();
    let est = destandardize_density(&marginal_density_curve(&post.samples, &std_grid, settings.level)?, scale);
    let rows: Vec<Vec<Cell>> = (0..grid.len())
        .map(|i| vec![grid[i].into(), est.mean[i].into(), est.lower[i].into(), est.upper[i].into()])
        .collect();
    emit(&mut manifest, out.join(DENSITY_FILE), &["y", "mean", "lower", "upper"], &rows)?;

    let rows: Vec<Vec<Cell>> = post
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let r = s.response();
            vec![k.into(), r.precision.into(), (r.sigma() * scale.sd).into(), r.phi.into(), r.length_scale.into()]
        })
        .collect();
    emit(&mut manifest, out.join(SAMPLES_FILE), &["sample", "precision", "sigma", "phi", "length_scale"], &rows)?;
    manifest.finish(out)
}

/// Fit the joint model on training `(y, z)` with test rows as prediction rows.
pub fn regress(settings: &Settings, train: &Path, test: &Path, out: &Path) -> Result<PathBuf> {
    let mut manifest = RunManifest::start("regress", settings);
    manifest.inputs.extend([train.to_path_buf(), test.to_path_buf()]);
    let tr = read_table(train)?;
    let y_train = tr.require("y")?;
    let z_train = tr.require("z")?;
    let te = read_table_allow_empty(test)?;
    let z_test = te.require("z")?;
    let y_test = te.column_index("y").map(|j| te.column(j));
    if z_test.is_empty() {
        manifest.warn(format!("{}: no test rows; predictive output and metrics are skipped", test.display()));
    }
    prepare(out)?;

    let z_all: Vec<f64> = z_train.iter().chain(&z_test).copied().collect();
    let fit = fit_regression(&y_train, &z_all, &settings.model)?;
    manifest.record_chain(&fit.posterior.stats);
    let ys = fit.data.channel_scale(Channel::Response);
    let zs = fit.data.channel_scale(Channel::Predictor(0));

    let z_points: Vec<f64> = match &settings.z_values {
        Some(v) => v.clone(),
        None => settings.z_quantiles.iter().map(|&q| quantile(&z_train, q)).collect(),
    };
    let grid = y_grid(&y_train, settings.y_points);
    let std_grid: Vec<f64> = grid.iter().map(|&v| ys.to_standard(v)).collect();
    let mut rows = Vec::new();
    for &z in &z_points {
        let (est, diag) =
            conditional_density_curve(&fit.posterior.samples, &std_grid, &[zs.to_standard(z)], settings.level)?;
        if diag.non_contributing > 0 {
            manifest.warn(format!("z = {z}: {} samples gave no weight", diag.non_contributing));
        }
        let est = destandardize_density(&est, ys);
        for i in 0..grid.len() {
            rows.push(vec![z.into(), grid[i].into(), est.mean[i].into(), est.lower[i].into(), est.upper[i].into()]);
        }
    }
    emit(&mut manifest, out.join(CONDITIONAL_FILE), &["z", "y", "mean", "lower", "upper"], &rows)?;

    if !settings.thresholds.is_empty() {
        let mut rows = Vec::new();
        for &z in &z_points {
            for &t in &settings.thresholds {
                let p = tail_probability(
                    &fit.posterior.samples,
                    ys.to_standard(t),
                    &[zs.to_standard(z)],
                    settings.level,
                )?;
                rows.push(vec![z.into(), t.into(), p.mean.into(), p.lower.into(), p.upper.into()]);
            }
        }
        emit(&mut manifest, out.join(TAIL_FILE), &["z", "threshold", "mean", "lower", "upper"], &rows)?;
    }

    if !z_test.is_empty() {
        let draws = fit.predictive_draws(settings.model.seed.wrapping_add(1))?;
        let level = settings.regression.level;
        let tail = 0.5 * (1.0 - level);
        let rows: Vec<Vec<Cell>> = draws
            .iter()
            .zip(&z_test)
            .enumerate()
            .map(|(r, (d, &z))| {
                let mean = d.iter().sum::<f64>() / d.len() as f64;
                vec![r.into(), z.into(), mean.into(), quantile(d, tail).into(), quantile(d, 1.0 - tail).into()]
            })
            .collect();
        emit(&mut manifest, out.join(PREDICTIVE_FILE), &["row", "z", "mean", "lower", "upper"], &rows)?;
        let rows: Vec<Vec<Cell>> = draws
            .iter()
            .enumerate()
            .flat_map(|(r, d)| d.iter().enumerate().map(move |(k, &v)| vec![r.into(), k.into(), v.into()]))
            .collect();
        emit(&mut manifest, out.join(PREDICTIVE_DRAWS_FILE), &["row", "draw", "y"], &rows)?;

        if let Some(y_test) = y_test {
            let metrics = mse_coverage(&draws, &y_test, level)?;
            let path = out.join(METRICS_FILE);
            let text = serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Validation(e.to_string()))?;
            fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            manifest.outputs.push(path);
        }
    }
    manifest.finish(out)
}

/// Density-estimation benchmark over Marron-Wand curves.
pub fn bench_mw(settings: &Settings, out: &Path) -> Result<PathBuf> {
    let mut manifest = RunManifest::start("benchmark-mw", settings);
    if settings.mw.replicates == 0 {
        manifest.warn("replicates = 0: the table is empty");
    }
    prepare(out)?;
    let table = benchmark_mw(&settings.ids, settings.mw, &settings.model)?;
    manifest.chains = table.rows.len();
    manifest.lengthscale_acceptance = table.rows.iter().map(|r| vec![r.acceptance]).collect();
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|r| vec![r.id.into(), r.replicate.into(), r.seed.into(), r.l1.into(), r.kde_l1.into(), r.acceptance.into()])
        .collect();
    emit(&mut manifest, out.join(MW_TABLE_FILE), &["id", "replicate", "seed", "l1", "kde_l1", "acceptance"], &rows)?;
    let rows: Vec<Vec<Cell>> =
        table.summary.iter().map(|s| vec![s.id.into(), s.mean_l1.into(), s.mean_kde_l1.into()]).collect();
    emit(&mut manifest, out.join(MW_SUMMARY_FILE), &["id", "mean_l1", "mean_kde_l1"], &rows)?;
    manifest.finish(out)
}

/// Density-regression benchmark on the simulated logistic design.
pub fn bench_regression(settings: &Settings, out: &Path) -> Result<PathBuf> {
    let mut manifest = RunManifest::start("benchmark-regression", settings);
    if settings.regression.replicates == 0 {
        manifest.warn("replicates = 0: the table is empty");
    }
    prepare(out)?;
    let table = benchmark_regression(settings.regression, &settings.model)?;
    manifest.chains = table.rows.len();
    manifest.lengthscale_acceptance = table.rows.iter().map(|r| r.acceptance.clone()).collect();
    let mut headers = vec!["replicate", "seed", "mse", "coverage"];
    let l1_names: Vec<String> = REGRESSION_QUANTILES.iter().map(|(q, _)| format!("l1_{q}")).collect();
    headers.extend(l1_names.iter().map(String::as_str));
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.replicate.into(), r.seed.into(), r.mse.into(), r.coverage.into()];
            row.extend(r.l1.iter().map(|(_, v)| Cell::from(*v)));
            row
        })
        .collect();
    emit(&mut manifest, out.join(REGRESSION_TABLE_FILE), &headers, &rows)?;
    let rows: Vec<Vec<Cell>> = if table.rows.is_empty() {
        Vec::new()
    } else {
        let mut row = vec![Cell::from(table.rows.len()), table.mean_mse.into(), table.mean_coverage.into()];
        row.extend(table.mean_l1.iter().map(|(_, v)| Cell::from(*v)));
        vec![row]
    };
    let mut headers = vec!["replicates", "mean_mse", "mean_coverage"];
    let mean_names: Vec<String> = REGRESSION_QUANTILES.iter().map(|(q, _)| format!("mean_l1_{q}")).collect();
    headers.extend(mean_names.iter().map(String::as_str));
    emit(&mut manifest, out.join(REGRESSION_SUMMARY_FILE), &headers, &rows)?;
    manifest.finish(out)
}

/// Densities drawn from the prior over a `(φ, C)` grid. With elicitation data
/// the GP mean is its inverse CDF and curves are reported in its units.
pub fn prior_draws(settings: &Settings, elicit: Option<&Path>, out: &Path) -> Result<PathBuf> {
    let mut manifest = RunManifest::start("prior-draws", settings);
    let cfg: &ModelConfig = &settings.model;
    let (mean, scale, source) = match elicit {
        Some(path) => {
            manifest.inputs.push(path.to_path_buf());
            let samples = read_single_column(path)?;
            let scale = Dataset::new(samples.clone())?.standardize()?.channel_scale(Channel::Response);
            (elicited_mean(&samples, scale, cfg.grid_size)?, scale, Some(samples))
        }
        None => (cfg.response_mean.clone(), ChannelScale::IDENTITY, None),
    };
    prepare(out)?;

    let grid = midpoint_grid(cfg.grid_size);
    let cells: Vec<(f64, f64)> =
        settings.prior_phi.iter().flat_map(|&phi| settings.prior_c.iter().map(move |&c| (phi, c))).collect();
    let jobs: Vec<(f64, f64, usize, u64)> = cells
        .iter()
        .flat_map(|&(phi, c)| (0..settings.draws).map(move |d| (phi, c, d)))
        .enumerate()
        .map(|(index, (phi, c, d))| (phi, c, d, cfg.seed.wrapping_add(index as u64)))
        .collect();
    let curves = jobs
        .par_iter()
        .map(|&(phi, c, d, seed)| {
            let draw = draw_prior_density(&mean, &grid, phi, c, cfg.nugget, cfg.response_precision, seed)?;
            let s = draw.sigma.sigma();
            let lo = draw.mu.values().iter().copied().fold(f64::INFINITY, f64::min) - PRIOR_CURVE_SDS * s;
            let hi = draw.mu.values().iter().copied().fold(f64::NEG_INFINITY, f64::max) + PRIOR_CURVE_SDS * s;
            let rows = linspace(lo, hi, settings.y_points)
                .into_iter()
                .map(|y| {
                    let f = eval_model_density(&draw.mu, draw.sigma, y)?;
                    Ok(vec![
                        phi.into(),
                        c.into(),
                        d.into(),
                        s.into(),
                        scale.to_original(y).into(),
                        (f / scale.sd).into(),
                    ])
                })
                .collect::<Result<Vec<Vec<Cell>>>>()?;
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<Cell>> = curves.into_iter().flatten().collect();
    emit(&mut manifest, out.join(PRIOR_DRAWS_FILE), &["phi", "c", "draw", "sigma", "y", "density"], &rows)?;

    if let Some(samples) = source {
        let bw = silverman_bandwidth(&samples)?;
        let rows = y_grid(&samples, settings.y_points)
            .into_iter()
            .map(|y| Ok(vec![y.into(), kde_pdf(&samples, bw, y)?.into()]))
            .collect::<Result<Vec<Vec<Cell>>>>()?;
        emit(&mut manifest, out.join(ELICITATION_KDE_FILE), &["y", "density"], &rows)?;
    }
    manifest.finish(out)
}
