//! The six conditional updates and the closed-form laws behind them.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChainState, GammaPrior, GibbsModel, LatentScheme, RunStats};
use crate::error::{Error, Result};
use crate::gp::{
    build_gram, factorize, gp_conditional, mvn_ln_pdf, mvn_sample, symmetrize, Factor, GaussianLaw, GpHyper,
};
use crate::special::normal_ln_pdf_var;

pub(crate) struct StepTimer(Instant);

impl StepTimer {
    pub fn start() -> Self {
        StepTimer(Instant::now())
    }

    pub fn lap(&mut self) -> Duration {
        let now = Instant::now();
        let d = now - self.0;
        self.0 = now;
        d
    }
}

/// `Ga(a + n/2, b + ½ Σ r²)` for residuals `r`.
pub fn residual_precision_posterior(residuals: &[f64], prior: GammaPrior) -> GammaPrior {
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    GammaPrior::new(prior.shape + 0.5 * residuals.len() as f64, prior.rate + 0.5 * ss)
}

/// Exponentiate and normalize log weights with max subtraction.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::numerical("latent weights", format!("maximum log weight is {max}")));
    }
    let mut w: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::numerical("latent weights", format!("weight total is {total}")));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Posterior of function values at `m` points with prior `N(prior_mean, prior_cov)`
/// when point `j` carries `counts[j]` observations averaging `means[j]`, each
/// with noise precision `precision`.
///
/// Written as `m + K(K + D̄)⁻¹(ȳ − m)` and `K − K(K + D̄)⁻¹K` with
/// `D̄ = diag(1/(count·precision))`, which is the precision form
/// `(D⁻¹ + K⁻¹)⁻¹(D⁻¹ȳ + K⁻¹m)` without inverting `K`.
pub fn row_value_posterior(
    counts: &[f64],
    means: &[f64],
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    precision: f64,
) -> Result<GaussianLaw> {
    let m = counts.len();
    if means.len() != m || prior_mean.len() != m || prior_cov.nrows() != m || prior_cov.ncols() != m {
        return Err(Error::invalid("row_value_posterior dimensions disagree"));
    }
    if counts.iter().any(|&c| c <= 0.0) || !(precision > 0.0) {
        return Err(Error::invalid("counts and precision must be positive"));
    }
    let mut s = prior_cov.clone();
    for j in 0..m {
        s[(j, j)] += 1.0 / (counts[j] * precision);
    }
    let sf = factorize(&s, 0.0).map_err(|e| Error::numerical("step 3", format!("K + D: {e}")))?;
    let resid = DVector::from_column_slice(means) - prior_mean;
    let mean = prior_mean + prior_cov * sf.solve(&resid);
    let mut cov = prior_cov - prior_cov * sf.solve_mat(prior_cov);
    symmetrize(&mut cov);
    Ok(GaussianLaw { mean, covariance: cov })
}

/// `Ga(a + m/2, b + ½ dᵀ R⁻¹ d)` for deviations `d` from the prior mean and a
/// factor of the unit-amplitude correlation `R`.
pub fn kernel_precision_posterior(deviations: &DVector<f64>, corr: &Factor, prior: GammaPrior) -> GammaPrior {
    GammaPrior::new(
        prior.shape + 0.5 * deviations.len() as f64,
        prior.rate + 0.5 * corr.quad_form(deviations),
    )
}

/// Log target of the random walk on `log C`: the GP density of `values`
/// at `points` under amplitude `1/phi`, rate `c` and relative nugget, plus the
/// prior on `c` and the Jacobian `log c`.
pub fn lengthscale_log_target(
    values: &DVector<f64>,
    mean: &DVector<f64>,
    points: &[f64],
    phi: f64,
    c: f64,
    nugget: f64,
    prior: GammaPrior,
) -> Result<f64> {
    let h = GpHyper { phi, c, nugget: nugget / phi };
    let factor = factorize(&build_gram(points, &h), h.nugget)?;
    Ok(mvn_ln_pdf(values, mean, &factor) + prior.ln_pdf(c) + c.ln())
}

/// Where one channel's function values are pinned down by data: distinct
/// occupied grid points for [`LatentScheme::Grid`], one entry per row for
/// [`LatentScheme::Row`].
struct Design {
    slots: Vec<usize>,
    points: Vec<f64>,
    counts: Vec<f64>,
    means: Vec<f64>,
}

fn unit_hyper(c: f64, nugget: f64) -> GpHyper {
    GpHyper { phi: 1.0, c, nugget }
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(p.len() - 1)
}

impl GibbsModel {
    fn design(&self, state: &ChainState, c: usize) -> Design {
        let rows = self.rows_of(c);
        let obs = &self.channels[c].obs;
        match self.cfg.scheme {
            LatentScheme::Grid => {
                let g = self.grid.len();
                let mut counts = vec![0.0; g];
                let mut sums = vec![0.0; g];
                for i in 0..rows {
                    counts[state.latent[i]] += 1.0;
                    sums[state.latent[i]] += obs[i];
                }
                let slots: Vec<usize> = (0..g).filter(|&k| counts[k] > 0.0).collect();
                Design {
                    points: slots.iter().map(|&k| self.grid[k]).collect(),
                    counts: slots.iter().map(|&k| counts[k]).collect(),
                    means: slots.iter().map(|&k| sums[k] / counts[k]).collect(),
                    slots,
                }
            }
            LatentScheme::Row => Design {
                slots: (0..rows).collect(),
                points: (0..rows).map(|i| self.grid[state.latent[i]]).collect(),
                counts: vec![1.0; rows],
                means: obs.clone(),
            },
        }
    }

    /// Function values at the design slots.
    fn design_values(&self, state: &ChainState, c: usize, d: &Design) -> DVector<f64> {
        let ch = &state.channels[c];
        let src = match self.cfg.scheme {
            LatentScheme::Grid => &ch.grid_values,
            LatentScheme::Row => &ch.row_values,
        };
        DVector::from_iterator(d.slots.len(), d.slots.iter().map(|&s| src[s]))
    }

    /// Step 1: each channel's residual precision from its conjugate gamma.
    pub fn step1_residual_precisions<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        for (c, spec) in self.channels.iter().enumerate() {
            let ch = &mut state.channels[c];
            let resid: Vec<f64> = spec.obs.iter().zip(&ch.row_values).map(|(o, m)| o - m).collect();
            ch.precision = residual_precision_posterior(&resid, spec.precision_prior).sample(rng);
        }
    }

    /// Normalized probabilities of `x_i = g_k` for every grid point.
    pub fn latent_probabilities(&self, state: &ChainState, i: usize) -> Result<Vec<f64>> {
        if i >= self.total_rows {
            return Err(Error::invalid(format!("row {i} out of range")));
        }
        let g = self.grid.len();
        let mut lw = vec![0.0; g];
        for (c, spec) in self.channels.iter().enumerate() {
            if i >= spec.obs.len() {
                continue;
            }
            let ch = &state.channels[c];
            let half_tau = 0.5 * ch.precision;
            let o = spec.obs[i];
            for (w, &v) in lw.iter_mut().zip(&ch.grid_values) {
                *w -= half_tau * (o - v) * (o - v);
            }
            if self.cfg.scheme == LatentScheme::Row {
                let (cm, cv) = self.leave_one_out_law(state, c, i)?;
                for (k, w) in lw.iter_mut().enumerate() {
                    *w += normal_ln_pdf_var(ch.grid_values[k], cm[k], cv[k]);
                }
            }
        }
        normalize_log_weights(&lw)
    }

    /// Mean and variance of the GP of channel `c` at every grid point given its
    /// values at all rows other than `i`.
    fn leave_one_out_law(&self, state: &ChainState, c: usize, i: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let ch = &state.channels[c];
        let spec = &self.channels[c];
        let h = self.hyper(ch);
        let others: Vec<usize> = (0..self.rows_of(c)).filter(|&j| j != i).collect();
        if others.is_empty() {
            let var = 1.0 / h.phi + h.nugget;
            return Ok((self.grid.iter().map(|&x| spec.mean.eval(x)).collect(), vec![var; self.grid.len()]));
        }
        let points: Vec<f64> = others.iter().map(|&j| self.grid[state.latent[j]]).collect();
        let values: Vec<f64> = others.iter().map(|&j| ch.row_values[j]).collect();
        let law = gp_conditional(&self.grid, &points, &values, &spec.mean, &h)?;
        Ok((law.mean.iter().copied().collect(), law.covariance.diagonal().iter().copied().collect()))
    }

    /// Step 2: griddy Gibbs draw of every latent coordinate.
    pub fn step2_latents<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        for i in 0..self.total_rows {
            let p = self.latent_probabilities(state, i)?;
            let k = categorical(&p, rng);
            state.latent[i] = k;
            for (c, ch) in state.channels.iter_mut().enumerate() {
                if i < self.channels[c].obs.len() {
                    ch.row_values[i] = ch.grid_values[k];
                }
            }
        }
        Ok(())
    }

    /// Law drawn from in step 3 for channel `c`, indexed by the design slots.
    fn function_law(&self, state: &ChainState, c: usize, d: &Design) -> Result<GaussianLaw> {
        let ch = &state.channels[c];
        let h = self.hyper(ch);
        let prior_mean = self.channels[c].mean.eval_many(&d.points);
        let prior_cov = build_gram(&d.points, &h);
        row_value_posterior(&d.counts, &d.means, &prior_mean, &prior_cov, ch.precision)
    }

    /// Step 3: function values where data sit, jointly per channel.
    pub fn step3_function_at_rows<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        for c in 0..self.channels.len() {
            let d = self.design(state, c);
            let law = self.function_law(state, c, &d)?;
            let draw = mvn_sample(&law, rng).map_err(|e| Error::numerical("step 3", e.to_string()))?;
            let ch = &mut state.channels[c];
            match self.cfg.scheme {
                LatentScheme::Grid => {
                    for (j, &k) in d.slots.iter().enumerate() {
                        ch.grid_values[k] = draw[j];
                    }
                    for i in 0..ch.row_values.len() {
                        ch.row_values[i] = ch.grid_values[state.latent[i]];
                    }
                }
                LatentScheme::Row => {
                    ch.row_values.copy_from_slice(draw.as_slice());
                }
            }
        }
        Ok(())
    }

    /// Law of the grid values redrawn in step 4 for channel `c`, together with
    /// the grid indices it covers.
    pub fn grid_value_law(&self, state: &ChainState, c: usize) -> Result<Option<(Vec<usize>, GaussianLaw)>> {
        let ch = &state.channels[c];
        let h = self.hyper(ch);
        let d = self.design(state, c);
        let targets: Vec<usize> = match self.cfg.scheme {
            LatentScheme::Grid => {
                let mut occupied = vec![false; self.grid.len()];
                d.slots.iter().for_each(|&k| occupied[k] = true);
                (0..self.grid.len()).filter(|&k| !occupied[k]).collect()
            }
            LatentScheme::Row => (0..self.grid.len()).collect(),
        };
        if targets.is_empty() {
            return Ok(None);
        }
        let t_points: Vec<f64> = targets.iter().map(|&k| self.grid[k]).collect();
        let values: Vec<f64> = self.design_values(state, c, &d).iter().copied().collect();
        let law = gp_conditional(&t_points, &d.points, &values, &self.channels[c].mean, &h)?;
        Ok(Some((targets, law)))
    }

    /// Step 4: grid values not pinned by data, from the GP conditional.
    pub fn step4_function_at_grid<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        for c in 0..self.channels.len() {
            if let Some((targets, law)) = self.grid_value_law(state, c)? {
                let draw = mvn_sample(&law, rng).map_err(|e| Error::numerical("step 4", e.to_string()))?;
                let ch = &mut state.channels[c];
                for (j, &k) in targets.iter().enumerate() {
                    ch.grid_values[k] = draw[j];
                }
            }
        }
        Ok(())
    }

    /// Step 5: GP precisions from their conjugate gammas.
    pub fn step5_kernel_precisions<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        for c in 0..self.channels.len() {
            let d = self.design(state, c);
            let ch = &state.channels[c];
            let corr = build_gram(&d.points, &unit_hyper(ch.length_scale, self.cfg.nugget));
            let factor = factorize(&corr, self.cfg.nugget)?;
            let dev = self.design_values(state, c, &d) - self.channels[c].mean.eval_many(&d.points);
            let post = kernel_precision_posterior(&dev, &factor, self.channels[c].phi_prior);
            state.channels[c].phi = post.sample(rng);
        }
        Ok(())
    }

    /// Step 6: random-walk Metropolis on `log C` for every channel.
    pub fn step6_lengthscales<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        rng: &mut R,
        stats: &mut RunStats,
    ) -> Result<()> {
        for c in 0..self.channels.len() {
            let d = self.design(state, c);
            let values = self.design_values(state, c, &d);
            let mean = self.channels[c].mean.eval_many(&d.points);
            let ch = &state.channels[c];
            let e: f64 = rng.sample(StandardNormal);
            let proposal = ch.length_scale * (self.cfg.rw_scale * e).exp();
            let log_ratio = if proposal == ch.length_scale {
                0.0
            } else {
                let target = |cc: f64| {
                    lengthscale_log_target(&values, &mean, &d.points, ch.phi, cc, self.cfg.nugget, self.cfg.length_scale)
                };
                target(proposal)? - target(ch.length_scale)?
            };
            let u: f64 = rng.random();
            stats.proposed[c] += 1;
            if u.ln() < log_ratio {
                stats.accepted[c] += 1;
                state.channels[c].length_scale = proposal;
            }
        }
        Ok(())
    }

    /// Log density of the data and the pinned function values, precisions,
    /// `φ`, `C` and latent coordinates.
    pub fn log_joint(&self, state: &ChainState) -> Result<f64> {
        let mut total = -(self.total_rows as f64) * (self.grid.len() as f64).ln();
        for (c, spec) in self.channels.iter().enumerate() {
            let ch = &state.channels[c];
            let var = ch.precision.recip();
            total += spec
                .obs
                .iter()
                .zip(&ch.row_values)
                .map(|(&o, &m)| normal_ln_pdf_var(o, m, var))
                .sum::<f64>();
            let d = self.design(state, c);
            let h = self.hyper(ch);
            let factor = factorize(&build_gram(&d.points, &h), h.nugget)?;
            total += mvn_ln_pdf(&self.design_values(state, c, &d), &spec.mean.eval_many(&d.points), &factor);
            total += spec.precision_prior.ln_pdf(ch.precision)
                + spec.phi_prior.ln_pdf(ch.phi)
                + self.cfg.length_scale.ln_pdf(ch.length_scale);
        }
        Ok(total)
    }
}
