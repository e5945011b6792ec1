use std::path::{Path, PathBuf};

use deqgan::nets::Arch;
use deqgan::problems::ProblemKey;
use deqgan::search::{Sampler, SearchSpace};
use deqgan::training::{LossKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Search,
    Oracle,
    Evaluate,
}

impl std::str::FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Mode::Train),
            "search" => Ok(Mode::Search),
            "oracle" => Ok(Mode::Oracle),
            "evaluate" => Ok(Mode::Evaluate),
            _ => Err(CliError::Usage(format!(
                "unknown mode {s:?} (expected train, search, oracle or evaluate)"
            ))),
        }
    }
}

/// One experiment. `train` holds overrides for any [`TrainConfig`] field,
/// applied on top of the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    pub preset: ProblemKey,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    /// Start from the classical-loss tuned settings instead of the adversarial preset.
    #[serde(default)]
    pub tuned: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub save_weights: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub train: toml::Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSettings>,
}

fn default_loss() -> LossKind {
    LossKind::Gan
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Sampling rules for search mode. Defaults give the seed and learning-rate
/// stability study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSettings {
    #[serde(default = "study_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "study_lr")]
    pub g_lr: Option<Sampler>,
    #[serde(default = "study_lr")]
    pub d_lr: Option<Sampler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_beta1: Option<Sampler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_beta2: Option<Sampler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_beta1: Option<Sampler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_beta2: Option<Sampler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Sampler>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generator: Vec<Arch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discriminator: Vec<Arch>,
    /// Steps per trial.
    #[serde(default = "study_steps")]
    pub iterations: usize,
    /// Rows at or below this MSE are marked as passing.
    #[serde(default = "study_filter")]
    pub mse_filter: f64,
}

fn study_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn study_lr() -> Option<Sampler> {
    Some(Sampler::LogUniform { lo: 1e-6, hi: 1e-2 })
}

fn study_steps() -> usize {
    500
}

fn study_filter() -> f64 {
    1e-8
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            seeds: study_seeds(),
            g_lr: study_lr(),
            d_lr: study_lr(),
            g_beta1: None,
            g_beta2: None,
            d_beta1: None,
            d_beta2: None,
            gamma: None,
            generator: vec![],
            discriminator: vec![],
            iterations: study_steps(),
            mse_filter: study_filter(),
        }
    }
}

fn merge(base: &mut toml::Table, overrides: &toml::Table) {
    for (k, v) in overrides {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

impl ExperimentConfig {
    pub fn new(preset: ProblemKey) -> Self {
        ExperimentConfig {
            mode: Mode::Train,
            preset,
            loss: default_loss(),
            tuned: false,
            seed: 0,
            trials: 1,
            workers: 1,
            master_seed: 0,
            out: default_out(),
            save_weights: false,
            load_weights: None,
            train: toml::Table::new(),
            search: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The training configuration: preset, then loss and seed, then the
    /// `train` overrides.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let base = if self.tuned {
            TrainConfig::tuned_classical(self.preset, self.loss)
        } else {
            TrainConfig::preset(self.preset).with_loss(self.loss)
        }
        .with_seed(self.seed);
        let mut table = toml::Table::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut table, &self.train);
        let config: TrainConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[train]: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn search_space(&self) -> Result<(SearchSpace, f64)> {
        let s = self.search.clone().unwrap_or_default();
        let mut base = self.train_config()?;
        base.iterations = s.iterations;
        let space = SearchSpace {
            base,
            seeds: s.seeds,
            g_lr: s.g_lr,
            d_lr: s.d_lr,
            g_beta1: s.g_beta1,
            g_beta2: s.g_beta2,
            d_beta1: s.d_beta1,
            d_beta2: s.d_beta2,
            gamma: s.gamma,
            generator: s.generator,
            discriminator: s.discriminator,
        };
        space.validate()?;
        Ok((space, s.mse_filter))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let text = r#"
            mode = "search"
            preset = "sho"
            loss = "huber"
            seed = 4
            trials = 3
            out = "runs/sho"

            [train]
            iterations = 50
            g_adam = { lr = 0.001 }

            [search]
            seeds = [1, 2]
            g_lr = { kind = "log_uniform", lo = 1e-5, hi = 1e-3 }
            mse_filter = 1e-6
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.mode, Mode::Search);
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
        let t = c.train_config().unwrap();
        assert_eq!(t.iterations, 50);
        assert_eq!(t.g_adam.lr, 0.001);
        assert_eq!(t.g_adam.beta1, TrainConfig::preset(ProblemKey::Sho).g_adam.beta1);
        assert_eq!((t.loss, t.seed), (LossKind::Huber, 4));
        let (space, filter) = c.search_space().unwrap();
        assert_eq!(
            (space.seeds.clone(), filter, space.base.iterations),
            (vec![1, 2], 1e-6, 500)
        );
        assert!(space.d_lr.is_some());
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = ExperimentConfig::from_toml("preset = \"exp\"\nlearning_rate = 1\n").unwrap_err();
        assert!(e.to_string().contains("learning_rate"), "{e}");
        let mut c = ExperimentConfig::new(ProblemKey::Exp);
        c.train.insert("bogus".into(), toml::Value::Integer(1));
        let e = c.train_config().unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        assert!(ExperimentConfig::from_toml("preset = \"abc\"").is_err());
    }

    #[test]
    fn presets_pass_through_unchanged() {
        for key in ProblemKey::ALL {
            assert_eq!(
                ExperimentConfig::new(key).train_config().unwrap(),
                TrainConfig::preset(key)
            );
        }
        let default = ExperimentConfig::new(ProblemKey::Exp).search_space().unwrap().0;
        assert_eq!(default, SearchSpace::stability_study());
    }
}
