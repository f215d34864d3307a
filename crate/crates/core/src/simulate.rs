//! Data generators for the simulation studies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mixture::{marron_wand, MixtureDensity};
use crate::model::{Dataset, NoiseScale};

/// Logistic link `e^z / (1 + e^z)`.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Conditional mean and sd of `y | z` in the regression design
/// `y = λ exp(−ℓ(z)) + ℓ(z) ε`, `ε ~ N(0, σ²)`.
pub fn regression_truth(z: f64, lambda: f64, sigma: NoiseScale) -> (f64, f64) {
    let l = logistic(z);
    (lambda * (-l).exp(), l * sigma.sigma())
}

/// Distribution of the predictor in the regression design (trimodal density).
pub fn regression_predictor_law() -> MixtureDensity {
    marron_wand(9).expect("MW9 is supported")
}

/// Draw `n` rows of `(y, z)` from the heteroscedastic regression design.
pub fn simulate_regression(n: usize, lambda: f64, sigma: NoiseScale, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("need at least one simulated row"));
    }
    if !lambda.is_finite() {
        return Err(Error::invalid("lambda must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fz = regression_predictor_law();
    let z = fz.sample_n(n, &mut rng);
    let y = z
        .iter()
        .map(|&zi| {
            let (m, s) = regression_truth(zi, lambda, sigma);
            let e: f64 = StandardNormal.sample(&mut rng);
            m + s * e
        })
        .collect();
    Dataset::with_predictors(y, vec![z])
}

/// Draw `n` iid values from a mixture with a dedicated seed.
pub fn simulate_density(f: &MixtureDensity, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    f.sample_n(n, &mut rng)
}
