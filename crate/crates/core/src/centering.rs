//! Centering the GP prior on an elicited density: a Gaussian kernel estimate
//! from historical data is integrated to a CDF and inverted on the latent grid,
//! and the resulting inverse CDF becomes the GP mean function.

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::{build_gram, factorize, mvn_sample_with, GpHyper, MeanFunction};
use crate::model::{NoiseScale, TransferFunction};
use crate::sampler::GammaPrior;
use crate::special::{linspace, quantile, std_normal_pdf};

/// Latent coordinates are clamped to `[LATENT_CLAMP, 1 − LATENT_CLAMP]` before
/// inverting a CDF so that the inverse stays finite.
pub const LATENT_CLAMP: f64 = 1e-6;

/// Number of points in the mesh used to integrate and invert the kernel estimate.
pub const INVERSION_MESH: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitedPrior {
    /// Tabulated inverse CDF of the elicited density.
    pub mean_function: MeanFunction,
    pub source: String,
    pub bandwidth: f64,
}

/// Gaussian kernel density estimate at `y`.
pub fn kde_pdf(samples: &[f64], bandwidth: f64, y: f64) -> Result<f64> {
    check_samples(samples)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(kde_unchecked(samples, bandwidth, y))
}

fn kde_unchecked(samples: &[f64], bandwidth: f64, y: f64) -> f64 {
    let inv = bandwidth.recip();
    samples.iter().map(|&s| std_normal_pdf((y - s) * inv)).sum::<f64>() * inv / samples.len() as f64
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("kernel estimate needs at least one sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    Ok(())
}

/// Silverman's rule of thumb `0.9 · min(sd, IQR/1.34) · n^(−1/5)`.
///
/// Falls back to whichever spread measure is positive when the other is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = if samples.len() > 1 {
        (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let iqr = (quantile(samples, 0.75) - quantile(samples, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => {
            return Err(Error::DegenerateData("samples have zero spread".into()));
        }
    };
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Tabulate the inverse CDF of a kernel estimate at the latent `grid`.
pub fn inverse_cdf_mean(samples: &[f64], grid: &[f64], bandwidth: f64) -> Result<ElicitedPrior> {
    check_samples(samples)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if grid.is_empty() || grid.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::invalid("latent grid must be nonempty and inside (0, 1)"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("latent grid must be strictly increasing"));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Err(Error::DegenerateData("elicitation samples have zero spread".into()));
    }

    let mesh = linspace(lo - 3.0 * bandwidth, hi + 3.0 * bandwidth, INVERSION_MESH);
    let pdf: Vec<f64> = mesh.iter().map(|&y| kde_unchecked(samples, bandwidth, y)).collect();
    let mut cdf = Vec::with_capacity(mesh.len());
    cdf.push(0.0);
    for i in 1..mesh.len() {
        let step = 0.5 * (mesh[i] - mesh[i - 1]) * (pdf[i] + pdf[i - 1]);
        cdf.push(cdf[i - 1] + step);
    }
    let total = *cdf.last().expect("mesh is nonempty");
    cdf.iter_mut().for_each(|c| *c /= total);

    let values = grid
        .iter()
        .map(|&u| invert(&mesh, &cdf, u.clamp(LATENT_CLAMP, 1.0 - LATENT_CLAMP)))
        .collect();
    Ok(ElicitedPrior {
        mean_function: MeanFunction::tabulated(grid.to_vec(), values)?,
        source: format!("Gaussian kernel estimate from {} samples", samples.len()),
        bandwidth,
    })
}

fn invert(mesh: &[f64], cdf: &[f64], u: f64) -> f64 {
    let hi = cdf.partition_point(|&c| c < u).clamp(1, cdf.len() - 1);
    let lo = hi - 1;
    let span = cdf[hi] - cdf[lo];
    if span <= 0.0 {
        return mesh[hi];
    }
    mesh[lo] + (u - cdf[lo]) / span * (mesh[hi] - mesh[lo])
}

/// One draw of the induced density prior: a transfer function on `grid` and a
/// noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDraw {
    pub mu: TransferFunction,
    pub sigma: NoiseScale,
}

/// Draw `μ ~ GP(mean, φ, C)` on `grid` with relative nugget and `σ⁻² ~ precision`.
pub fn draw_prior_density(
    mean: &MeanFunction,
    grid: &[f64],
    phi: f64,
    c: f64,
    nugget: f64,
    precision: GammaPrior,
    seed: u64,
) -> Result<PriorDraw> {
    let h = GpHyper::new(phi, c, nugget / phi)?;
    if !(precision.shape > 0.0 && precision.rate > 0.0) {
        return Err(Error::invalid("precision prior must have positive shape and rate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = factorize(&build_gram(grid, &h), h.nugget)?;
    let values = mvn_sample_with(&mean.eval_many(grid), &factor, &mut rng);
    let sigma = NoiseScale::from_precision(precision.sample(&mut rng))?;
    Ok(PriorDraw { mu: TransferFunction::new(grid.to_vec(), values.iter().copied().collect())?, sigma })
}

/// Closed-form GP mean used in the simulation studies, `m(x) = 2 sin(x) + cos(x)`.
pub fn default_mean() -> MeanFunction {
    MeanFunction::SineCosine
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::marron_wand;
    use crate::model::{eval_model_density, midpoint_grid, NoiseScale, TransferFunction};
    use crate::special::{std_normal_inv_cdf, trapezoid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn tabulated_values(m: &MeanFunction) -> &[f64] {
        match m {
            MeanFunction::Tabulated { values, .. } => values,
            _ => unreachable!(),
        }
    }

    #[test]
    fn prior_draw_is_a_density_near_its_mean() {
        let grid = midpoint_grid(75);
        let ys = linspace(-12.0, 12.0, 6001);
        let prec = GammaPrior::new(25.0, 1.0);
        let mut sigmas = Vec::new();
        for seed in 0..200 {
            let d = draw_prior_density(&MeanFunction::SineCosine, &grid, 10.0, 1.0, 1e-6, prec, seed).unwrap();
            let f: Vec<f64> = ys.iter().map(|&y| eval_model_density(&d.mu, d.sigma, y).unwrap()).collect();
            assert!((trapezoid(&ys, &f) - 1.0).abs() < 1e-6);
            sigmas.push(d.sigma.sigma());
        }
        let mean_sigma = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
        assert!((mean_sigma - 0.2).abs() < 0.01, "{mean_sigma}");
        let a = draw_prior_density(&MeanFunction::SineCosine, &grid, 10.0, 1.0, 1e-6, prec, 3).unwrap();
        let b = draw_prior_density(&MeanFunction::SineCosine, &grid, 10.0, 1.0, 1e-6, prec, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prior_draw_amplitude_follows_phi() {
        let grid = midpoint_grid(20);
        let mut dev = 0.0;
        for seed in 0..2000 {
            let d = draw_prior_density(&MeanFunction::Constant(0.0), &grid, 4.0, 1.0, 1e-6, GammaPrior::new(1.0, 1.0), seed)
                .unwrap();
            dev += d.mu.values()[7].powi(2);
        }
        let var = dev / 2000.0;
        assert!((var - 0.25).abs() < 0.03, "{var}");
    }

    #[test]
    fn single_sample_kernel_is_normal_pdf() {
        assert!((kde_pdf(&[0.0], 1.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(kde_pdf(&[], 1.0, 0.0).is_err());
        assert!(kde_pdf(&[1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn kernel_estimate_symmetry_and_mass() {
        let s = normals(200, 1);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        for &y in &[-1.0, 0.2, 2.5] {
            let a = kde_pdf(&s, 0.3, y).unwrap();
            let b = kde_pdf(&neg, 0.3, -y).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
        let ys = linspace(-8.0, 8.0, 4001);
        let fs: Vec<f64> = ys.iter().map(|&y| kde_pdf(&s, 0.3, y).unwrap()).collect();
        assert!((trapezoid(&ys, &fs) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kernel_estimate_of_normal_sample_at_zero() {
        let s = normals(10_000, 2);
        let bw = silverman_bandwidth(&s).unwrap();
        assert!((kde_pdf(&s, bw, 0.0).unwrap() - 0.398_942).abs() < 0.03);
    }

    #[test]
    fn silverman_rejects_constant_samples() {
        assert!(matches!(silverman_bandwidth(&[1.0, 1.0, 1.0]), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn uniform_samples_invert_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let grid = midpoint_grid(75);
        let prior = inverse_cdf_mean(&s, &grid, silverman_bandwidth(&s).unwrap()).unwrap();
        for &u in &grid {
            assert!((prior.mean_function.eval(u) - u).abs() < 0.05, "u={u}");
        }
    }

    #[test]
    fn normal_samples_have_median_near_zero() {
        let s = normals(10_000, 5);
        let grid = midpoint_grid(75);
        let prior = inverse_cdf_mean(&s, &grid, silverman_bandwidth(&s).unwrap()).unwrap();
        assert!(prior.mean_function.eval(0.5).abs() < 0.05);
        for &u in &[0.1, 0.25, 0.75, 0.9] {
            assert!((prior.mean_function.eval(u) - std_normal_inv_cdf(u)).abs() < 0.1);
        }
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let grid = midpoint_grid(5);
        assert!(matches!(inverse_cdf_mean(&[2.0, 2.0], &grid, 0.5), Err(Error::DegenerateData(_))));
        assert!(inverse_cdf_mean(&[1.0, 2.0], &[0.5, 0.4], 0.5).is_err());
        assert!(inverse_cdf_mean(&[1.0, 2.0], &[0.0, 0.4], 0.5).is_err());
    }

    #[test]
    fn inverse_cdf_commutes_with_shifts() {
        let s = normals(2_000, 6);
        let shifted: Vec<f64> = s.iter().map(|v| v + 3.5).collect();
        let grid = midpoint_grid(60);
        let a = inverse_cdf_mean(&s, &grid, 0.25).unwrap();
        let b = inverse_cdf_mean(&shifted, &grid, 0.25).unwrap();
        for &u in &grid {
            assert!((b.mean_function.eval(u) - a.mean_function.eval(u) - 3.5).abs() < 1e-3);
        }
    }

    #[test]
    fn default_mean_values() {
        let m = default_mean();
        assert_eq!(m.eval(0.0), 1.0);
        assert!((m.eval(1.0) - 2.223_244_275_483_933).abs() < 1e-12);
        let a = m.eval(0.5);
        assert!((m.eval(0.5 + 1e-9) - a).abs() < 1e-8);
    }

    #[test]
    fn centering_round_trip_on_bimodal_density() {
        let f = marron_wand(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = f.sample_n(10_000, &mut rng);
        let grid = midpoint_grid(1024);
        let prior = inverse_cdf_mean(&s, &grid, silverman_bandwidth(&s).unwrap()).unwrap();
        let mu = TransferFunction::new(grid.clone(), tabulated_values(&prior.mean_function).to_vec()).unwrap();
        let sigma = NoiseScale::new(0.05).unwrap();
        let ys = linspace(-5.0, 5.0, 4001);
        let diff: Vec<f64> = ys
            .iter()
            .map(|&y| (eval_model_density(&mu, sigma, y).unwrap() - f.pdf(y)).abs())
            .collect();
        let l1 = trapezoid(&ys, &diff);
        assert!(l1 < 0.1, "L1 {l1}");
    }

    proptest::proptest! {
        #[test]
        fn output_is_monotone(samples in proptest::collection::vec(-5.0f64..5.0, 2..60), bw in 0.01f64..2.0) {
            proptest::prop_assume!(samples.iter().any(|&v| (v - samples[0]).abs() > 1e-9));
            let grid = midpoint_grid(40);
            let prior = inverse_cdf_mean(&samples, &grid, bw).unwrap();
            let v = tabulated_values(&prior.mean_function);
            proptest::prop_assert!(v.windows(2).all(|w| w[1] >= w[0]));
            proptest::prop_assert!(v.iter().all(|x| x.is_finite()));
        }
    }
}
