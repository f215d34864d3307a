//! Flat TOML configuration. Every key is optional; unknown keys are errors.
//!
//! Model keys: `grid_size`, `iters`, `burn_in`, `thin`, `a_sigma`, `b_sigma`
//! (response precision prior), `aa_sigma`, `bb_sigma` (predictor precision
//! prior), `a_phi`, `b_phi`, `aa_phi`, `bb_phi`, `a_c`, `b_c`, `c_start`,
//! `rw_scale`, `nugget`, `seed`, `scheme` (`"grid"` or `"row"`), `preset`
//! (`"default"` or `"elicited"`), `predictor_mean` (a constant; the sine-cosine
//! mean when absent).
//!
//! Output keys: `level`, `z_quantiles`, `z_values`, `thresholds`.
//!
//! Benchmark keys: `ids`, `replicates`, `n`, `n_train`, `n_test`, `lambda`,
//! `sigma`, `coverage_level`.
//!
//! Prior-draw keys: `draws`, `prior_phi`, `prior_c`, `y_points`.

use std::fs;
use std::path::Path;

use gpt_density::benchmark::{MwSettings, RegressionSettings};
use gpt_density::estimate::DEFAULT_LEVEL;
use gpt_density::gp::MeanFunction;
use gpt_density::mixture::SUPPORTED_MARRON_WAND;
use gpt_density::sampler::{GammaPrior, LatentScheme, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Default,
    Elicited,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub grid_size: Option<usize>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub a_sigma: Option<f64>,
    pub b_sigma: Option<f64>,
    pub aa_sigma: Option<f64>,
    pub bb_sigma: Option<f64>,
    pub a_phi: Option<f64>,
    pub b_phi: Option<f64>,
    pub aa_phi: Option<f64>,
    pub bb_phi: Option<f64>,
    pub a_c: Option<f64>,
    pub b_c: Option<f64>,
    pub c_start: Option<f64>,
    pub rw_scale: Option<f64>,
    pub nugget: Option<f64>,
    pub seed: Option<u64>,
    pub scheme: Option<LatentScheme>,
    pub preset: Option<Preset>,
    pub predictor_mean: Option<f64>,

    pub level: Option<f64>,
    pub z_quantiles: Option<Vec<f64>>,
    pub z_values: Option<Vec<f64>>,
    pub thresholds: Option<Vec<f64>>,

    pub ids: Option<Vec<u32>>,
    pub replicates: Option<usize>,
    pub n: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub coverage_level: Option<f64>,

    pub draws: Option<usize>,
    pub prior_phi: Option<Vec<f64>>,
    pub prior_c: Option<Vec<f64>>,
    pub y_points: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))
    }
}

/// Everything a command needs, after defaults, preset, file and flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub model: ModelConfig,
    pub level: f64,
    pub z_quantiles: Vec<f64>,
    pub z_values: Option<Vec<f64>>,
    pub thresholds: Vec<f64>,
    pub ids: Vec<u32>,
    pub mw: MwSettings,
    pub regression: RegressionSettings,
    pub draws: usize,
    pub prior_phi: Vec<f64>,
    pub prior_c: Vec<f64>,
    pub y_points: usize,
}

fn positive(key: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Validation(format!("config key `{key}` must be positive, got {x}"))),
        other => Ok(other),
    }
}

fn unit_interval(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("config key `{key}` must lie in (0, 1), got {v}")))
    }
}

fn gamma(shape_key: &str, rate_key: &str, shape: Option<f64>, rate: Option<f64>, base: GammaPrior) -> Result<GammaPrior> {
    Ok(GammaPrior {
        shape: positive(shape_key, shape)?.unwrap_or(base.shape),
        rate: positive(rate_key, rate)?.unwrap_or(base.rate),
    })
}

impl Settings {
    /// Merge `file` over `base` and validate, naming the offending key on error.
    pub fn resolve(file: &FileConfig, base: ModelConfig) -> Result<Self> {
        let f = file;
        let base = match f.preset {
            Some(Preset::Elicited) => ModelConfig { seed: base.seed, ..ModelConfig::elicited_preset() },
            Some(Preset::Default) => ModelConfig { seed: base.seed, ..ModelConfig::default() },
            None => base,
        };
        let model = ModelConfig {
            grid_size: f.grid_size.unwrap_or(base.grid_size),
            iters: f.iters.unwrap_or(base.iters),
            burn_in: f.burn_in.unwrap_or(base.burn_in),
            thin: f.thin.unwrap_or(base.thin),
            response_precision: gamma("a_sigma", "b_sigma", f.a_sigma, f.b_sigma, base.response_precision)?,
            predictor_precision: gamma("aa_sigma", "bb_sigma", f.aa_sigma, f.bb_sigma, base.predictor_precision)?,
            response_phi: gamma("a_phi", "b_phi", f.a_phi, f.b_phi, base.response_phi)?,
            predictor_phi: gamma("aa_phi", "bb_phi", f.aa_phi, f.bb_phi, base.predictor_phi)?,
            length_scale: gamma("a_c", "b_c", f.a_c, f.b_c, base.length_scale)?,
            length_scale_start: positive("c_start", f.c_start)?.unwrap_or(base.length_scale_start),
            rw_scale: f.rw_scale.unwrap_or(base.rw_scale),
            nugget: positive("nugget", f.nugget)?.unwrap_or(base.nugget),
            seed: f.seed.unwrap_or(base.seed),
            response_mean: base.response_mean.clone(),
            predictor_mean: f.predictor_mean.map_or(base.predictor_mean.clone(), MeanFunction::Constant),
            scheme: f.scheme.unwrap_or(base.scheme),
        };
        if model.grid_size < 2 {
            return Err(CliError::Validation("config key `grid_size` must be at least 2".into()));
        }
        if model.burn_in >= model.iters {
            return Err(CliError::Validation("config key `burn_in` must be smaller than `iters`".into()));
        }
        if model.thin == 0 {
            return Err(CliError::Validation("config key `thin` must be at least 1".into()));
        }
        if !(model.rw_scale >= 0.0 && model.rw_scale.is_finite()) {
            return Err(CliError::Validation("config key `rw_scale` must be >= 0".into()));
        }
        model.validate()?;

        let level = unit_interval("level", f.level.unwrap_or(DEFAULT_LEVEL))?;
        let z_quantiles = f.z_quantiles.clone().unwrap_or_else(|| vec![0.25, 0.5, 0.75]);
        for &q in &z_quantiles {
            if !(0.0..=1.0).contains(&q) {
                return Err(CliError::Validation(format!("config key `z_quantiles`: {q} is outside [0, 1]")));
            }
        }
        let ids = f.ids.clone().unwrap_or_else(|| SUPPORTED_MARRON_WAND.to_vec());
        if let Some(bad) = ids.iter().find(|id| !SUPPORTED_MARRON_WAND.contains(id)) {
            return Err(CliError::Validation(format!(
                "config key `ids`: {bad} is not one of {SUPPORTED_MARRON_WAND:?}"
            )));
        }
        let mw_default = MwSettings::default();
        let rg_default = RegressionSettings::default();
        let replicates = f.replicates.unwrap_or(mw_default.replicates);
        let mw = MwSettings { n: f.n.unwrap_or(mw_default.n), replicates, seed: model.seed };
        if mw.n < 2 {
            return Err(CliError::Validation("config key `n` must be at least 2".into()));
        }
        let regression = RegressionSettings {
            n_train: f.n_train.unwrap_or(rg_default.n_train),
            n_test: f.n_test.unwrap_or(rg_default.n_test),
            lambda: f.lambda.unwrap_or(rg_default.lambda),
            sigma: positive("sigma", f.sigma)?.unwrap_or(rg_default.sigma),
            replicates,
            level: unit_interval("coverage_level", f.coverage_level.unwrap_or(rg_default.level))?,
            seed: model.seed,
        };
        if regression.n_train < 2 || regression.n_test == 0 {
            return Err(CliError::Validation("config keys `n_train` >= 2 and `n_test` >= 1 are required".into()));
        }
        if !regression.lambda.is_finite() {
            return Err(CliError::Validation("config key `lambda` must be finite".into()));
        }
        let prior_phi = f.prior_phi.clone().unwrap_or_else(|| vec![0.01, 0.1]);
        let prior_c = f.prior_c.clone().unwrap_or_else(|| vec![0.1, 1.0, 25.0, 100.0]);
        for (key, list) in [("prior_phi", &prior_phi), ("prior_c", &prior_c)] {
            if list.is_empty() || list.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(CliError::Validation(format!("config key `{key}` needs positive values")));
            }
        }
        let y_points = f.y_points.unwrap_or(512);
        if y_points < 2 {
            return Err(CliError::Validation("config key `y_points` must be at least 2".into()));
        }
        Ok(Settings {
            model,
            level,
            z_quantiles,
            z_values: f.z_values.clone(),
            thresholds: f.thresholds.clone().unwrap_or_default(),
            ids,
            mw,
            regression,
            draws: f.draws.unwrap_or(5),
            prior_phi,
            prior_c,
            y_points,
        })
    }

    /// Apply `--seed` and `--replicates` after the file.
    pub fn with_overrides(mut self, seed: Option<u64>, replicates: Option<usize>) -> Self {
        if let Some(s) = seed {
            self.model.seed = s;
            self.mw.seed = s;
            self.regression.seed = s;
        }
        if let Some(r) = replicates {
            self.mw.replicates = r;
            self.regression.replicates = r;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let s = Settings::resolve(&FileConfig::parse("").unwrap(), ModelConfig::default()).unwrap();
        assert_eq!(s.model, ModelConfig::default());
        assert_eq!(s.ids, vec![2, 6, 8, 9]);
        assert_eq!(s.mw.replicates, 5);
        assert_eq!(s.level, 0.9);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let e = FileConfig::parse("grid_sise = 10").unwrap_err();
        assert!(e.to_string().contains("grid_sise"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn invalid_values_name_their_key() {
        for (text, key) in [
            ("a_phi = -1.0", "a_phi"),
            ("burn_in = 50\niters = 50", "burn_in"),
            ("grid_size = 1", "grid_size"),
            ("ids = [3]", "ids"),
            ("level = 1.5", "level"),
            ("nugget = 0.0", "nugget"),
            ("c_start = 0.0", "c_start"),
        ] {
            let f = FileConfig::parse(text).unwrap();
            let e = Settings::resolve(&f, ModelConfig::default()).unwrap_err();
            assert!(e.to_string().contains(key), "{text}: {e}");
        }
    }

    #[test]
    fn file_values_and_flags_apply_in_order() {
        let f = FileConfig::parse("grid_size = 30\nseed = 4\nscheme = \"row\"\npreset = \"elicited\"\nreplicates = 2").unwrap();
        let s = Settings::resolve(&f, ModelConfig::default()).unwrap();
        assert_eq!(s.model.grid_size, 30);
        assert_eq!(s.model.scheme, LatentScheme::Row);
        assert_eq!(s.model.response_precision, GammaPrior::new(25.0, 1.0));
        assert_eq!(s.model.length_scale_start, 25.0);
        assert_eq!((s.model.seed, s.mw.seed), (4, 4));
        let s = s.with_overrides(Some(9), Some(0));
        assert_eq!((s.model.seed, s.regression.seed, s.mw.replicates), (9, 9, 0));
    }
}
