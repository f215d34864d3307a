//! Blocked Gibbs sampler for the single-factor latent model.
//!
//! Every row `i` carries a latent coordinate restricted to the grid
//! `g_k = (k − ½)/G`; each observed variable (the response and every predictor)
//! is a channel with its own GP transfer function, residual precision, GP
//! precision `φ` and length-scale rate `C`. One sweep runs six updates:
//!
//! 1. residual precisions (conjugate gamma),
//! 2. latent coordinates (griddy Gibbs),
//! 3. function values at the occupied latent positions (conjugate normal),
//! 4. function values at the remaining grid points (GP conditional),
//! 5. GP precisions (conjugate gamma),
//! 6. length-scale rates (random-walk Metropolis on `log C`).
//!
//! Two state layouts are available, see [`LatentScheme`].

mod steps;

pub use steps::{
    kernel_precision_posterior, lengthscale_log_target, normalize_log_weights,
    residual_precision_posterior, row_value_posterior,
};
use steps::StepTimer;

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{build_gram, factorize, mvn_sample_with, GpHyper, MeanFunction, DEFAULT_NUGGET};
use crate::model::{midpoint_grid, Dataset};
use crate::special::gamma_ln_pdf;

/// Gamma prior in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, rate: f64) -> Self {
        GammaPrior { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        gamma_ln_pdf(x, self.shape, self.rate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated gamma parameters")
            .sample(rng)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("{name}: gamma shape and rate must be positive")))
        }
    }
}

/// How function values are tied to the latent coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentScheme {
    /// The state holds the transfer function at the `G` grid points and rows
    /// index into it. Rows sharing a grid point share one value, steps 5–6
    /// condition on the occupied grid values and step 4 runs last so that the
    /// unoccupied values are always drawn under the current `φ` and `C`.
    /// Cost per sweep is `O(N·G + G³)`.
    Grid,
    /// Every row carries its own function value; duplicated positions are kept
    /// apart only by the nugget. Latent weights multiply the likelihood at each
    /// grid value by the GP conditional density of that value given the other
    /// rows, and the six steps run in their listed order. Cost per sweep is
    /// `O(N⁴ + N³·G)`, so this is meant for small data sets.
    Row,
}

/// Hyperparameters, grid, chain lengths and priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub grid_size: usize,
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Prior on the response residual precision `σ_Y⁻²`.
    pub response_precision: GammaPrior,
    /// Prior on each predictor residual precision `σ_Z⁻²`.
    pub predictor_precision: GammaPrior,
    pub response_phi: GammaPrior,
    pub predictor_phi: GammaPrior,
    /// Prior on the length-scale rate `C` of every channel.
    pub length_scale: GammaPrior,
    pub length_scale_start: f64,
    /// Proposal sd of the random walk on `log C`.
    pub rw_scale: f64,
    /// Relative nugget: function values at distinct points have covariance
    /// `(R + nugget·I)/φ` with `R` the unit-amplitude correlation.
    pub nugget: f64,
    pub seed: u64,
    pub response_mean: MeanFunction,
    pub predictor_mean: MeanFunction,
    pub scheme: LatentScheme,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            grid_size: 75,
            iters: 10_000,
            burn_in: 1_000,
            thin: 1,
            response_precision: GammaPrior::new(1.0, 1.0),
            predictor_precision: GammaPrior::new(1.0, 1.0),
            response_phi: GammaPrior::new(1.0, 1.0),
            predictor_phi: GammaPrior::new(1.0, 1.0),
            length_scale: GammaPrior::new(1.0, 1.0),
            length_scale_start: 1.0,
            rw_scale: 0.25,
            nugget: DEFAULT_NUGGET,
            seed: 1,
            response_mean: MeanFunction::SineCosine,
            predictor_mean: MeanFunction::SineCosine,
            scheme: LatentScheme::Grid,
        }
    }
}

impl ModelConfig {
    /// Settings for runs centered on an elicited prior: `Ga(25, 1)` on the
    /// response precision and a smooth starting length-scale rate of 25.
    pub fn elicited_preset() -> Self {
        ModelConfig {
            response_precision: GammaPrior::new(25.0, 1.0),
            length_scale_start: 25.0,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::invalid("grid_size must be at least 2"));
        }
        if self.burn_in >= self.iters {
            return Err(Error::invalid("burn_in must be smaller than iters"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        self.response_precision.validate("response precision prior")?;
        self.predictor_precision.validate("predictor precision prior")?;
        self.response_phi.validate("response phi prior")?;
        self.predictor_phi.validate("predictor phi prior")?;
        self.length_scale.validate("length-scale prior")?;
        if !(self.length_scale_start > 0.0 && self.length_scale_start.is_finite()) {
            return Err(Error::invalid("length_scale_start must be positive"));
        }
        if !(self.rw_scale >= 0.0 && self.rw_scale.is_finite()) {
            return Err(Error::invalid("rw_scale must be >= 0"));
        }
        if !(self.nugget > 0.0 && self.nugget.is_finite()) {
            return Err(Error::invalid("nugget must be positive"));
        }
        Ok(())
    }

    /// Number of samples `run_chain` retains.
    pub fn retained(&self) -> usize {
        (self.iters - self.burn_in).div_ceil(self.thin)
    }
}

/// Unknowns attached to one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// Transfer function at every grid point.
    pub grid_values: Vec<f64>,
    /// Transfer function at the latent position of every row this channel observes.
    pub row_values: Vec<f64>,
    pub precision: f64,
    pub phi: f64,
    pub length_scale: f64,
}

impl ChannelState {
    pub fn sigma(&self) -> f64 {
        self.precision.recip().sqrt()
    }
}

/// Current state of one chain. `channels[0]` is the response, `channels[1 + k]`
/// predictor `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// Grid index of every row's latent coordinate.
    pub latent: Vec<usize>,
    pub channels: Vec<ChannelState>,
}

/// The parts of a channel's state kept after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSample {
    pub grid_values: Vec<f64>,
    pub precision: f64,
    pub phi: f64,
    pub length_scale: f64,
}

impl ChannelSample {
    pub fn sigma(&self) -> f64 {
        self.precision.recip().sqrt()
    }
}

/// One retained post-burn-in snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub latent: Vec<usize>,
    pub channels: Vec<ChannelSample>,
}

impl PosteriorSample {
    pub fn response(&self) -> &ChannelSample {
        &self.channels[0]
    }

    pub fn from_state(state: &ChainState) -> Self {
        PosteriorSample {
            latent: state.latent.clone(),
            channels: state
                .channels
                .iter()
                .map(|c| ChannelSample {
                    grid_values: c.grid_values.clone(),
                    precision: c.precision,
                    phi: c.phi,
                    length_scale: c.length_scale,
                })
                .collect(),
        }
    }
}

/// Wall time per step and Metropolis bookkeeping for one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub sweeps: usize,
    pub step_seconds: [f64; 6],
    /// Accepted length-scale proposals per channel.
    pub accepted: Vec<usize>,
    pub proposed: Vec<usize>,
    /// Log joint density of data and unknowns after every sweep.
    pub log_joint: Vec<f64>,
}

impl RunStats {
    pub fn new(channels: usize) -> Self {
        RunStats {
            accepted: vec![0; channels],
            proposed: vec![0; channels],
            ..RunStats::default()
        }
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    pub(crate) fn add_time(&mut self, step: usize, d: Duration) {
        self.step_seconds[step] += d.as_secs_f64();
    }
}

/// Retained samples plus what is needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub grid: Vec<f64>,
    /// Rows with an observed response.
    pub n: usize,
    pub total_rows: usize,
    pub samples: Vec<PosteriorSample>,
    pub stats: RunStats,
}

/// One observed variable together with its priors.
#[derive(Debug, Clone)]
pub(crate) struct ChannelSpec {
    pub obs: Vec<f64>,
    pub mean: MeanFunction,
    pub precision_prior: GammaPrior,
    pub phi_prior: GammaPrior,
}

/// Data, configuration and grid bound together; owns the observations so that
/// they can be replaced between sweeps.
#[derive(Debug, Clone)]
pub struct GibbsModel {
    pub(crate) cfg: ModelConfig,
    pub(crate) grid: Vec<f64>,
    pub(crate) channels: Vec<ChannelSpec>,
    pub(crate) n: usize,
    pub(crate) total_rows: usize,
}

impl GibbsModel {
    pub fn new(data: &Dataset, cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut channels = vec![ChannelSpec {
            obs: data.y().to_vec(),
            mean: cfg.response_mean.clone(),
            precision_prior: cfg.response_precision,
            phi_prior: cfg.response_phi,
        }];
        for col in data.predictors() {
            channels.push(ChannelSpec {
                obs: col.clone(),
                mean: cfg.predictor_mean.clone(),
                precision_prior: cfg.predictor_precision,
                phi_prior: cfg.predictor_phi,
            });
        }
        Ok(GibbsModel {
            grid: midpoint_grid(cfg.grid_size),
            cfg,
            channels,
            n: data.n(),
            total_rows: data.total_rows(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total_rows(&self) -> usize {
        self.total_rows
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Observations of channel `c` (length `n` for the response, `N` otherwise).
    pub fn observations(&self, c: usize) -> &[f64] {
        &self.channels[c].obs
    }

    pub fn mean_function(&self, c: usize) -> &MeanFunction {
        &self.channels[c].mean
    }

    /// Swap in new observations for channel `c`, keeping the length.
    pub fn replace_observations(&mut self, c: usize, values: Vec<f64>) -> Result<()> {
        if values.len() != self.channels[c].obs.len() {
            return Err(Error::invalid("replacement observations change the row count"));
        }
        self.channels[c].obs = values;
        Ok(())
    }

    /// Rows observed by channel `c`.
    pub(crate) fn rows_of(&self, c: usize) -> usize {
        self.channels[c].obs.len()
    }

    /// GP hyperparameters of a channel in absolute form: amplitude `1/φ` and
    /// nugget `ν/φ`.
    pub(crate) fn hyper(&self, ch: &ChannelState) -> GpHyper {
        GpHyper {
            phi: ch.phi,
            c: ch.length_scale,
            nugget: self.cfg.nugget / ch.phi,
        }
    }

    /// Deterministic starting state: latent coordinates at the grid point
    /// nearest each row's normalized rank, function values at the prior mean,
    /// precisions at their prior means and `C` at its configured start.
    pub fn init_chain<R: Rng + ?Sized>(&self, _rng: &mut R) -> ChainState {
        let g = self.grid.len();
        let nearest = |u: f64| ((u * g as f64).floor() as usize).min(g - 1);
        let mut latent = vec![0; self.total_rows];

        let resp = &self.channels[0].obs;
        for (rank, &i) in rank_order(resp).iter().enumerate() {
            latent[i] = nearest((rank + 1) as f64 / (self.n + 1) as f64);
        }
        if self.total_rows > self.n {
            let z = &self.channels[1].obs;
            for (rank, &i) in rank_order(z).iter().enumerate() {
                if i >= self.n {
                    latent[i] = nearest((rank + 1) as f64 / (self.total_rows + 1) as f64);
                }
            }
        }

        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(c, spec)| {
                let grid_values: Vec<f64> = self.grid.iter().map(|&x| spec.mean.eval(x)).collect();
                let row_values = (0..self.rows_of(c)).map(|i| grid_values[latent[i]]).collect();
                ChannelState {
                    grid_values,
                    row_values,
                    precision: spec.precision_prior.mean(),
                    phi: spec.phi_prior.mean(),
                    length_scale: self.cfg.length_scale_start,
                }
            })
            .collect();
        ChainState { latent, channels }
    }

    /// A draw of every unknown from the prior: precisions, `φ` and `C` from
    /// their gammas, grid values from the GP and latent coordinates uniform on
    /// the grid.
    pub fn draw_from_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState> {
        let g = self.grid.len();
        let latent: Vec<usize> = (0..self.total_rows).map(|_| rng.random_range(0..g)).collect();
        let mut channels = Vec::with_capacity(self.channels.len());
        for (c, spec) in self.channels.iter().enumerate() {
            let precision = spec.precision_prior.sample(rng);
            let phi = spec.phi_prior.sample(rng);
            let length_scale = self.cfg.length_scale.sample(rng);
            let h = GpHyper { phi, c: length_scale, nugget: self.cfg.nugget / phi };
            let factor = factorize(&build_gram(&self.grid, &h), h.nugget)?;
            let mean = spec.mean.eval_many(&self.grid);
            let grid_values: Vec<f64> = mvn_sample_with(&mean, &factor, rng).iter().copied().collect();
            let row_values = (0..self.rows_of(c)).map(|i| grid_values[latent[i]]).collect();
            channels.push(ChannelState { grid_values, row_values, precision, phi, length_scale });
        }
        Ok(ChainState { latent, channels })
    }

    /// Redraw every channel's observations from the likelihood given `state`.
    pub fn simulate_observations<R: Rng + ?Sized>(&mut self, state: &ChainState, rng: &mut R) {
        for (c, spec) in self.channels.iter_mut().enumerate() {
            let ch = &state.channels[c];
            let sd = ch.sigma();
            for (i, o) in spec.obs.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                *o = ch.row_values[i] + sd * e;
            }
        }
    }

    /// One full sweep in the order required by the configured scheme.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R, stats: &mut RunStats) -> Result<()> {
        let mut timer = StepTimer::start();
        self.step1_residual_precisions(state, rng);
        stats.add_time(0, timer.lap());
        self.step2_latents(state, rng)?;
        stats.add_time(1, timer.lap());
        self.step3_function_at_rows(state, rng)?;
        stats.add_time(2, timer.lap());
        match self.cfg.scheme {
            LatentScheme::Grid => {
                self.step5_kernel_precisions(state, rng)?;
                stats.add_time(4, timer.lap());
                self.step6_lengthscales(state, rng, stats)?;
                stats.add_time(5, timer.lap());
                self.step4_function_at_grid(state, rng)?;
                stats.add_time(3, timer.lap());
            }
            LatentScheme::Row => {
                self.step4_function_at_grid(state, rng)?;
                stats.add_time(3, timer.lap());
                self.step5_kernel_precisions(state, rng)?;
                stats.add_time(4, timer.lap());
                self.step6_lengthscales(state, rng, stats)?;
                stats.add_time(5, timer.lap());
            }
        }
        stats.sweeps += 1;
        Ok(())
    }

    /// Run `cfg.iters` sweeps from [`GibbsModel::init_chain`], keeping every
    /// `thin`-th state after burn-in.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Posterior> {
        let mut state = self.init_chain(rng);
        let mut stats = RunStats::new(self.channels.len());
        let mut samples = Vec::with_capacity(self.cfg.retained());
        for sweep in 0..self.cfg.iters {
            self.sweep(&mut state, rng, &mut stats)
                .map_err(|e| Error::AtSweep { sweep, source: Box::new(e) })?;
            stats.log_joint.push(self.log_joint(&state)?);
            if sweep >= self.cfg.burn_in && (sweep - self.cfg.burn_in) % self.cfg.thin == 0 {
                samples.push(PosteriorSample::from_state(&state));
            }
        }
        Ok(Posterior {
            grid: self.grid.clone(),
            n: self.n,
            total_rows: self.total_rows,
            samples,
            stats,
        })
    }
}

/// Build the model and run one chain with an RNG seeded from `cfg.seed`.
pub fn run_chain(data: &Dataset, cfg: &ModelConfig) -> Result<Posterior> {
    let model = GibbsModel::new(data, cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    model.run(&mut rng)
}

/// One posterior predictive draw of the response at prediction-only row
/// `row` per retained sample.
pub fn predict_heldout<R: Rng + ?Sized>(posterior: &Posterior, row: usize, rng: &mut R) -> Result<Vec<f64>> {
    if row < posterior.n || row >= posterior.total_rows {
        return Err(Error::invalid(format!(
            "row {row} is not a prediction row (expected {}..{})",
            posterior.n, posterior.total_rows
        )));
    }
    Ok(posterior
        .samples
        .iter()
        .map(|s| {
            let y = s.response();
            let e: f64 = rng.sample(StandardNormal);
            y.grid_values[s.latent[row]] + y.sigma() * e
        })
        .collect())
}

/// Indices that sort `v` ascending, ties by position.
fn rank_order(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx
}
