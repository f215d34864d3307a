//! Squared-exponential Gaussian process numerics: Gram matrices, jittered
//! Cholesky factorization, multivariate normal draws and GP conditioning.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest diagonal jitter tried before a factorization is declared failed.
pub const MAX_NUGGET: f64 = 1e-2;

/// Default diagonal inflation on the standardized scale.
pub const DEFAULT_NUGGET: f64 = 1e-6;

/// Hyperparameters of `K(x, x') = (1/φ) exp(−C (x − x')²)` plus a diagonal nugget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    /// Inverse amplitude; the marginal variance is `1/phi`.
    pub phi: f64,
    /// Rate in the exponent (larger means wigglier functions).
    pub c: f64,
    pub nugget: f64,
}

impl GpHyper {
    pub fn new(phi: f64, c: f64, nugget: f64) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::invalid(format!("phi must be positive, got {phi}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("length-scale rate must be >= 0, got {c}")));
        }
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(Error::invalid(format!("nugget must be >= 0, got {nugget}")));
        }
        Ok(GpHyper { phi, c, nugget })
    }
}

/// Prior mean of a GP over the latent interval `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanFunction {
    /// `m(x) = 2 sin(x) + cos(x)`.
    SineCosine,
    Constant(f64),
    /// Linear interpolation between tabulated points, flat beyond the ends.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl MeanFunction {
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::invalid("tabulated mean needs matching, nonempty grid and values"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tabulated mean grid must be strictly increasing"));
        }
        if values.iter().chain(&grid).any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated mean must be finite"));
        }
        Ok(MeanFunction::Tabulated { grid, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            MeanFunction::SineCosine => 2.0 * x.sin() + x.cos(),
            MeanFunction::Constant(c) => *c,
            MeanFunction::Tabulated { grid, values } => interpolate(grid, values, x),
        }
    }

    pub fn eval_many(&self, xs: &[f64]) -> DVector<f64> {
        DVector::from_iterator(xs.len(), xs.iter().map(|&x| self.eval(x)))
    }
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let last = grid.len() - 1;
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[last] {
        return values[last];
    }
    let hi = grid.partition_point(|&g| g <= x);
    let lo = hi - 1;
    let t = (x - grid[lo]) / (grid[hi] - grid[lo]);
    values[lo] + t * (values[hi] - values[lo])
}

/// A multivariate normal law.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::invalid("covariance dimensions do not match the mean"));
        }
        let scale = covariance.amax().max(1.0);
        for i in 0..mean.len() {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        Ok(GaussianLaw { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn se_kernel(x: f64, x2: f64, h: &GpHyper) -> f64 {
    let d = x - x2;
    (-h.c * d * d).exp() / h.phi
}

/// Gram matrix over `points` with `nugget` added to the diagonal.
pub fn build_gram(points: &[f64], h: &GpHyper) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 / h.phi + h.nugget;
        for j in 0..i {
            let v = se_kernel(points[i], points[j], h);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Kernel between two point sets (no nugget: distinct evaluations share no noise).
pub fn cross_gram(rows: &[f64], cols: &[f64], h: &GpHyper) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| se_kernel(rows[i], cols[j], h))
}

/// A lower Cholesky factor together with the diagonal jitter that had to be
/// added for it to exist.
#[derive(Debug, Clone)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub added_jitter: f64,
}

impl Factor {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn ln_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `v' A⁻¹ v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let mut w = v.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut w);
        w.norm_squared()
    }
}

/// Cholesky factorization with nugget escalation.
///
/// The matrix is factored as given first. On failure a diagonal jitter starting
/// at `max(base, 1e-10)` is added and multiplied by 10 on each further failure
/// until it would exceed [`MAX_NUGGET`].
pub fn factorize(matrix: &DMatrix<f64>, base: f64) -> Result<Factor> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("cholesky", "matrix has non-finite entries"));
    }
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(Factor { chol, added_jitter: 0.0 });
    }
    let mut jitter = base.max(1e-10);
    while jitter <= MAX_NUGGET * (1.0 + 1e-12) {
        let mut m = matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Factor { chol, added_jitter: jitter });
        }
        jitter *= 10.0;
    }
    let min_diag = matrix.diagonal().min();
    Err(Error::numerical(
        "cholesky",
        format!(
            "{}x{} matrix not positive definite after jitter up to {MAX_NUGGET:e} (min diagonal {min_diag:e})",
            matrix.nrows(),
            matrix.ncols()
        ),
    ))
}

/// One draw from `law`.
pub fn mvn_sample<R: Rng + ?Sized>(law: &GaussianLaw, rng: &mut R) -> Result<DVector<f64>> {
    let factor = factorize(&law.covariance, 0.0)?;
    Ok(mvn_sample_with(&law.mean, &factor, rng))
}

/// Draw `mean + L z` for a precomputed factor.
pub fn mvn_sample_with<R: Rng + ?Sized>(mean: &DVector<f64>, factor: &Factor, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    mean + factor.chol.l_dirty().lower_triangle() * z
}

/// Log density of `N(mean, A)` at `x` where `factor` factors `A`.
pub fn mvn_ln_pdf(x: &DVector<f64>, mean: &DVector<f64>, factor: &Factor) -> f64 {
    let d = x - mean;
    let n = x.len() as f64;
    -0.5 * (factor.quad_form(&d) + factor.ln_det() + n * (2.0 * std::f64::consts::PI).ln())
}

/// Law of the GP at `targets` given its values at `known_points`.
///
/// Mean `m(t) + K_tk K_kk⁻¹ (v − m(k))`, covariance `K_tt − K_tk K_kk⁻¹ K_kt`,
/// where the nugget sits on the diagonals of `K_kk` and `K_tt`.
pub fn gp_conditional(
    targets: &[f64],
    known_points: &[f64],
    known_values: &[f64],
    mean: &MeanFunction,
    h: &GpHyper,
) -> Result<GaussianLaw> {
    if known_points.is_empty() {
        return Err(Error::invalid("gp_conditional needs at least one known point"));
    }
    if known_points.len() != known_values.len() {
        return Err(Error::invalid("known points and values differ in length"));
    }
    let kkk = build_gram(known_points, h);
    let factor = factorize(&kkk, h.nugget)?;
    gp_conditional_with(targets, known_points, known_values, mean, h, &factor)
}

/// [`gp_conditional`] reusing a factor of the known-point Gram matrix.
pub fn gp_conditional_with(
    targets: &[f64],
    known_points: &[f64],
    known_values: &[f64],
    mean: &MeanFunction,
    h: &GpHyper,
    known_factor: &Factor,
) -> Result<GaussianLaw> {
    let ktk = cross_gram(targets, known_points, h);
    let resid = DVector::from_column_slice(known_values) - mean.eval_many(known_points);
    let alpha = known_factor.solve(&resid);
    let cond_mean = mean.eval_many(targets) + &ktk * alpha;

    // K_tk L⁻ᵀ, so that the correction is W Wᵀ
    let mut w = ktk.transpose();
    known_factor.chol.l_dirty().solve_lower_triangular_mut(&mut w);
    let mut cov = build_gram(targets, h) - w.transpose() * &w;
    symmetrize(&mut cov);
    Ok(GaussianLaw { mean: cond_mean, covariance: cov })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
