//! Finite Gaussian mixtures and the Marron–Wand reference densities.
//!
//! Parameters are transcribed from Marron & Wand (1992), "Exact mean integrated
//! squared error", Annals of Statistics 20(2), Table 1:
//!
//! | id | name               | mixture |
//! |----|--------------------|---------|
//! | 2  | skewed unimodal    | ⅕N(0,1) + ⅕N(½,(⅔)²) + ⅗N(13/12,(5/9)²) |
//! | 6  | bimodal            | ½N(−1,(⅔)²) + ½N(1,(⅔)²) |
//! | 8  | asymmetric bimodal | ¾N(0,1) + ¼N(3/2,(⅓)²) |
//! | 9  | trimodal           | 9/20 N(−6/5,(⅗)²) + 9/20 N(6/5,(⅗)²) + 1/10 N(0,(¼)²) |

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{normal_pdf, std_normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    components: Vec<MixtureComponent>,
}

impl MixtureDensity {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if components.iter().any(|c| !(c.weight >= 0.0) || !(c.sd > 0.0) || !c.mean.is_finite()) {
            return Err(Error::invalid("mixture weights must be >= 0, sds > 0, means finite"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(MixtureDensity { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_pdf(y, c.mean, c.sd))
            .sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * std_normal_cdf((y - c.mean) / c.sd))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("nonempty");
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        chosen.mean + chosen.sd * z
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Marron–Wand ids this crate knows about.
pub const SUPPORTED_MARRON_WAND: [u32; 4] = [2, 6, 8, 9];

/// The `id`-th Marron–Wand test density (2, 6, 8 or 9).
pub fn marron_wand(id: u32) -> Result<MixtureDensity> {
    let c = |weight, mean, sd| MixtureComponent { weight, mean, sd };
    let comps = match id {
        2 => vec![c(0.2, 0.0, 1.0), c(0.2, 0.5, 2.0 / 3.0), c(0.6, 13.0 / 12.0, 5.0 / 9.0)],
        6 => vec![c(0.5, -1.0, 2.0 / 3.0), c(0.5, 1.0, 2.0 / 3.0)],
        8 => vec![c(0.75, 0.0, 1.0), c(0.25, 1.5, 1.0 / 3.0)],
        9 => vec![c(0.45, -1.2, 0.6), c(0.45, 1.2, 0.6), c(0.1, 0.0, 0.25)],
        other => {
            return Err(Error::invalid(format!(
                "Marron-Wand density {other} is not supported (choose 2, 6, 8 or 9)"
            )))
        }
    };
    MixtureDensity::new(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{linspace, trapezoid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trimodal_is_symmetric() {
        let f = marron_wand(9).unwrap();
        for &y in &[0.1, 0.5, 1.2, 2.0, 3.7] {
            assert!((f.pdf(y) - f.pdf(-y)).abs() < 1e-15);
        }
    }

    #[test]
    fn all_densities_integrate_to_one() {
        let ys = linspace(-10.0, 10.0, 4096);
        for id in SUPPORTED_MARRON_WAND {
            let f = marron_wand(id).unwrap();
            let fs: Vec<f64> = ys.iter().map(|&y| f.pdf(y)).collect();
            assert!((trapezoid(&ys, &fs) - 1.0).abs() < 1e-6, "MW{id}");
            assert!((f.cdf(10.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_bimodal_narrow_mode_dominates() {
        let f = marron_wand(8).unwrap();
        // direct mixture arithmetic at the two component means
        let at_narrow_mode = 0.75 * normal_pdf(1.5, 0.0, 1.0) + 0.25 * normal_pdf(1.5, 1.5, 1.0 / 3.0);
        let at_zero = 0.75 * normal_pdf(0.0, 0.0, 1.0) + 0.25 * normal_pdf(0.0, 1.5, 1.0 / 3.0);
        assert!((f.pdf(1.5) - at_narrow_mode).abs() < 1e-15);
        assert!((f.pdf(0.0) - at_zero).abs() < 1e-15);
        assert!(f.pdf(1.5) > f.pdf(0.0));
    }

    #[test]
    fn unsupported_id_is_rejected() {
        assert!(matches!(marron_wand(3), Err(Error::InvalidArgument(_))));
        assert!(MixtureDensity::new(vec![MixtureComponent { weight: 0.5, mean: 0.0, sd: 1.0 }]).is_err());
    }

    #[test]
    fn samplers_match_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for id in SUPPORTED_MARRON_WAND {
            let f = marron_wand(id).unwrap();
            let mut xs = f.sample_n(100_000, &mut rng);
            xs.sort_by(f64::total_cmp);
            let n = xs.len() as f64;
            let ks = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let c = f.cdf(x);
                    (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "MW{id}: KS {ks}");
        }
    }
}
