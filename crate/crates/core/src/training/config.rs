use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::Arch;
use crate::problems::{Problem, ProblemKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Gan,
    L1,
    L2,
    Huber,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Gan, LossKind::L1, LossKind::L2, LossKind::Huber];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Gan => "gan",
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
            LossKind::Huber => "huber",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown loss {s:?} (expected gan, l1, l2 or huber)")))
    }
}

/// How `Δt/τ` is read when drawing mesh perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScale {
    #[default]
    Std,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub problem: ProblemKey,
    pub loss: LossKind,
    pub iterations: usize,
    /// Training points per dimension.
    pub mesh: Vec<usize>,
    pub generator: Arch,
    pub discriminator: Arch,
    pub g_adam: AdamConfig,
    pub d_adam: AdamConfig,
    /// Per-iteration learning-rate decay.
    pub gamma: f64,
    /// Separate decay for the discriminator; `gamma` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_d: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub noise: NoiseScale,
    /// Weight initialization seed.
    #[serde(default)]
    pub seed: u64,
    /// Mesh perturbation seed; `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_seed: Option<u64>,
    #[serde(default = "default_true")]
    pub residual: bool,
    #[serde(default)]
    pub non_saturating: bool,
    #[serde(default = "default_delta")]
    pub huber_delta: f64,
    /// Evaluation mesh density relative to the training mesh.
    #[serde(default = "default_eval_factor")]
    pub eval_factor: usize,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    /// Overrides of the problem's named constants.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, f64>,
}

fn default_tau() -> f64 {
    3.0
}
fn default_true() -> bool {
    true
}
fn default_delta() -> f64 {
    1.0
}
fn default_eval_factor() -> usize {
    2
}
fn default_window() -> usize {
    50
}

struct Column {
    n: usize,
    m: &'static [usize],
    g: (usize, usize),
    d: (usize, usize),
    lr: (f64, f64),
    g_betas: (f64, f64),
    d_betas: (f64, f64),
    gamma: f64,
}

#[rustfmt::skip]
const fn column(key: ProblemKey) -> Column {
    match key {
        ProblemKey::Exp => Column { n: 2000, m: &[100], g: (30, 2), d: (20, 4), lr: (0.008, 0.0005), g_betas: (0.671, 0.143), d_betas: (0.866, 0.165), gamma: 0.991 },
        ProblemKey::Sho => Column { n: 10000, m: &[400], g: (40, 4), d: (40, 2), lr: (0.009, 0.002), g_betas: (0.444, 0.633), d_betas: (0.271, 0.142), gamma: 0.998 },
        ProblemKey::Nlo => Column { n: 20000, m: &[400], g: (40, 4), d: (30, 3), lr: (0.006, 0.0007), g_betas: (0.102, 0.763), d_betas: (0.541, 0.677), gamma: 0.999 },
        ProblemKey::Nas => Column { n: 50000, m: &[800], g: (30, 3), d: (50, 2), lr: (0.006, 0.001), g_betas: (0.706, 0.861), d_betas: (0.538, 0.615), gamma: 0.9998 },
        ProblemKey::Sir => Column { n: 30000, m: &[800], g: (40, 2), d: (20, 3), lr: (0.010, 0.002), g_betas: (0.207, 0.169), d_betas: (0.193, 0.617), gamma: 0.9996 },
        ProblemKey::Pos => Column { n: 4000, m: &[32, 32], g: (40, 4), d: (20, 4), lr: (0.008, 0.002), g_betas: (0.410, 0.447), d_betas: (0.593, 0.915), gamma: 0.996 },
    }
}

impl TrainConfig {
    /// Default adversarial settings for `key`.
    pub fn preset(key: ProblemKey) -> Self {
        let c = column(key);
        TrainConfig {
            problem: key,
            loss: LossKind::Gan,
            iterations: c.n,
            mesh: c.m.to_vec(),
            generator: Arch {
                units: c.g.0,
                layers: c.g.1,
            },
            discriminator: Arch {
                units: c.d.0,
                layers: c.d.1,
            },
            g_adam: AdamConfig {
                lr: c.lr.0,
                beta1: c.g_betas.0,
                beta2: c.g_betas.1,
            },
            d_adam: AdamConfig {
                lr: c.lr.1,
                beta1: c.d_betas.0,
                beta2: c.d_betas.1,
            },
            gamma: c.gamma,
            gamma_d: None,
            tau: default_tau(),
            noise: NoiseScale::Std,
            seed: 0,
            perturb_seed: None,
            residual: true,
            non_saturating: false,
            huber_delta: default_delta(),
            eval_factor: default_eval_factor(),
            smoothing_window: default_window(),
            constants: BTreeMap::new(),
        }
    }

    /// Settings tuned for the classical losses on this problem. Falls back to
    /// the DEQGAN generator settings where no separate tuning exists.
    pub fn tuned_classical(key: ProblemKey, loss: LossKind) -> Self {
        let mut c = TrainConfig::preset(key).with_loss(loss);
        let tuned = match (key, loss) {
            (ProblemKey::Exp, LossKind::L1 | LossKind::L2 | LossKind::Huber) => Some((0.03, 0.9, 0.999, 0.9995, 5000)),
            (ProblemKey::Sho, LossKind::L2 | LossKind::Huber) => Some((0.01, 0.9, 0.999, 0.9995, 10000)),
            (ProblemKey::Sho, LossKind::L1) => Some((0.005, 0.9, 0.999, 0.9995, 10000)),
            _ => None,
        };
        if let Some((lr, b1, b2, gamma, n)) = tuned {
            c.g_adam = AdamConfig {
                lr,
                beta1: b1,
                beta2: b2,
            };
            c.gamma = gamma;
            c.iterations = n;
        }
        c
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn perturbation_seed(&self) -> u64 {
        self.perturb_seed.unwrap_or(self.seed)
    }

    pub fn discriminator_gamma(&self) -> f64 {
        self.gamma_d.unwrap_or(self.gamma)
    }

    /// The problem with constant overrides applied.
    pub fn build_problem(&self) -> Result<Problem> {
        let mut p = Problem::preset(self.problem);
        for (k, v) in &self.constants {
            p.set_constant(k, *v)?;
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let p = self.build_problem()?;
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.mesh.len() != p.input_dim() || self.mesh.iter().any(|&c| c < 2) {
            return bad(format!(
                "mesh for {} needs {} count(s) of at least 2, got {:?}",
                self.problem,
                p.input_dim(),
                self.mesh
            ));
        }
        for (name, a) in [("generator", self.generator), ("discriminator", self.discriminator)] {
            if a.units == 0 || a.layers == 0 {
                return bad(format!("{name} needs positive units and layers"));
            }
        }
        for (name, a) in [("g_adam", self.g_adam), ("d_adam", self.d_adam)] {
            if !(a.lr > 0.0 && a.lr.is_finite()) {
                return bad(format!("{name}.lr must be positive"));
            }
            if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
                return bad(format!("{name} betas must lie in [0, 1)"));
            }
        }
        for g in [self.gamma, self.discriminator_gamma()] {
            if !(g > 0.0 && g <= 1.0) {
                return bad(format!("lr decay {g} outside (0, 1]"));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive".into());
        }
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return bad("huber_delta must be positive".into());
        }
        if self.eval_factor == 0 || self.smoothing_window == 0 {
            return bad("eval_factor and smoothing_window must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nlo_preset_has_expected_settings() {
        let c = TrainConfig::preset(ProblemKey::Nlo);
        assert_eq!(c.iterations, 20000);
        assert_eq!(c.mesh, vec![400]);
        assert_eq!(c.generator, Arch { units: 40, layers: 4 });
        assert_eq!(c.discriminator, Arch { units: 30, layers: 3 });
        assert_eq!(
            c.g_adam,
            AdamConfig {
                lr: 0.006,
                beta1: 0.102,
                beta2: 0.763
            }
        );
        assert_eq!(
            c.d_adam,
            AdamConfig {
                lr: 0.0007,
                beta1: 0.541,
                beta2: 0.677
            }
        );
        assert_eq!(c.gamma, 0.999);
    }

    #[test]
    fn every_preset_validates_and_round_trips() {
        for key in ProblemKey::ALL {
            let c = TrainConfig::preset(key);
            c.validate().unwrap();
            let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c);
        }
        assert_eq!(TrainConfig::preset(ProblemKey::Pos).mesh, vec![32, 32]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(TrainConfig::preset(ProblemKey::Exp)).unwrap();
        v["learning_rate"] = 1.0.into();
        assert!(serde_json::from_value::<TrainConfig>(v).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = TrainConfig::preset(ProblemKey::Exp);
        c.gamma = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = TrainConfig::preset(ProblemKey::Pos);
        c.mesh = vec![32];
        assert!(c.validate().is_err());
        c.mesh = vec![32, 32];
        c.constants.insert("beta".into(), 1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn losses_parse() {
        assert_eq!("HUBER".parse::<LossKind>().unwrap(), LossKind::Huber);
        assert!("l3".parse::<LossKind>().is_err());
    }
}
