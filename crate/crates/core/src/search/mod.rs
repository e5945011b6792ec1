//! Random hyperparameter search and the seed/learning-rate stability study.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_atomic};
use crate::nets::Arch;
use crate::problems::ProblemKey;
use crate::training::{train, RunRecord, TrainConfig, Validation};

/// How one real hyperparameter is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampler {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl Sampler {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Sampler::Fixed { value } => value,
            Sampler::Uniform { lo, hi } if lo == hi => lo,
            Sampler::Uniform { lo, hi } => rng.random_range(lo..hi),
            Sampler::LogUniform { lo, hi } if lo == hi => lo,
            Sampler::LogUniform { lo, hi } => rng.random_range(lo.ln()..hi.ln()).exp(),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Sampler::Fixed { value } => value.is_finite(),
            Sampler::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Sampler::LogUniform { lo, hi } => lo > 0.0 && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("bad sampling range for {name}: {self:?}")))
        }
    }
}

/// Sampling rules layered over a base configuration. `None` and empty choice
/// sets keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub base: TrainConfig,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub g_lr: Option<Sampler>,
    #[serde(default)]
    pub d_lr: Option<Sampler>,
    #[serde(default)]
    pub g_beta1: Option<Sampler>,
    #[serde(default)]
    pub g_beta2: Option<Sampler>,
    #[serde(default)]
    pub d_beta1: Option<Sampler>,
    #[serde(default)]
    pub d_beta2: Option<Sampler>,
    #[serde(default)]
    pub gamma: Option<Sampler>,
    #[serde(default)]
    pub generator: Vec<Arch>,
    #[serde(default)]
    pub discriminator: Vec<Arch>,
}

impl SearchSpace {
    /// Only the base configuration; every trial trains it unchanged.
    pub fn fixed(base: TrainConfig) -> Self {
        SearchSpace {
            base,
            seeds: vec![],
            g_lr: None,
            d_lr: None,
            g_beta1: None,
            g_beta2: None,
            d_beta1: None,
            d_beta2: None,
            gamma: None,
            generator: vec![],
            discriminator: vec![],
        }
    }

    /// Seeds 0–9 and both learning rates log-uniform on `[1e-6, 1e-2]`, 500
    /// steps, everything else from the EXP preset.
    pub fn stability_study() -> Self {
        let mut base = TrainConfig::preset(ProblemKey::Exp);
        base.iterations = 500;
        let lr = Sampler::LogUniform { lo: 1e-6, hi: 1e-2 };
        SearchSpace {
            seeds: (0..10).collect(),
            g_lr: Some(lr),
            d_lr: Some(lr),
            ..SearchSpace::fixed(base)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let samplers = [
            ("g_lr", self.g_lr),
            ("d_lr", self.d_lr),
            ("g_beta1", self.g_beta1),
            ("g_beta2", self.g_beta2),
            ("d_beta1", self.d_beta1),
            ("d_beta2", self.d_beta2),
            ("gamma", self.gamma),
        ];
        for (name, s) in samplers {
            if let Some(s) = s {
                s.validate(name)?;
            }
        }
        Ok(())
    }

    /// The configuration of trial `trial` under `master_seed`. Each trial
    /// draws from its own stream, so the result does not depend on which
    /// other trials were sampled.
    pub fn sample(&self, master_seed: u64, trial: u64) -> TrainConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trial);
        let mut c = self.base.clone();
        if !self.seeds.is_empty() {
            c.seed = self.seeds[rng.random_range(0..self.seeds.len())];
        }
        let mut draw = |s: Option<Sampler>, slot: &mut f64| {
            if let Some(s) = s {
                *slot = s.sample(&mut rng);
            }
        };
        draw(self.g_lr, &mut c.g_adam.lr);
        draw(self.d_lr, &mut c.d_adam.lr);
        draw(self.g_beta1, &mut c.g_adam.beta1);
        draw(self.g_beta2, &mut c.g_adam.beta2);
        draw(self.d_beta1, &mut c.d_adam.beta1);
        draw(self.d_beta2, &mut c.d_adam.beta2);
        draw(self.gamma, &mut c.gamma);
        if !self.generator.is_empty() {
            c.generator = self.generator[rng.random_range(0..self.generator.len())];
        }
        if !self.discriminator.is_empty() {
            c.discriminator = self.discriminator[rng.random_range(0..self.discriminator.len())];
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    /// `+∞` when the run failed.
    pub final_mse: f64,
    pub status: TrialStatus,
    /// Absent when training could not start.
    pub record: Option<RunRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub master_seed: u64,
    pub trials: Vec<Trial>,
}

fn run_trial(index: usize, config: TrainConfig, validation: Option<Validation<'_>>) -> Trial {
    match train(&config, validation) {
        Ok((_, record)) => {
            let (final_mse, status) = match &record.failure {
                Some(why) => (f64::INFINITY, TrialStatus::Failed(why.clone())),
                None if record.final_mse.is_finite() => (record.final_mse, TrialStatus::Ok),
                None if validation.is_none() => (f64::NAN, TrialStatus::Ok),
                None => (
                    f64::INFINITY,
                    TrialStatus::Failed("validation error is not finite".into()),
                ),
            };
            Trial {
                index,
                config,
                final_mse,
                status,
                record: Some(record),
            }
        }
        Err(e) => Trial {
            index,
            config,
            final_mse: f64::INFINITY,
            status: TrialStatus::Failed(e.to_string()),
            record: None,
        },
    }
}

/// Samples and trains `n_trials` configurations on up to `workers` threads.
/// Individual failures are recorded in the result and do not stop the search.
pub fn random_search(
    space: &SearchSpace,
    n_trials: usize,
    master_seed: u64,
    workers: usize,
    validation: Option<Validation<'_>>,
) -> Result<SearchResult> {
    if n_trials == 0 {
        return Err(Error::Argument("a search needs at least one trial".into()));
    }
    space.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let trials = pool.install(|| {
        (0..n_trials)
            .into_par_iter()
            .map(|i| run_trial(i, space.sample(master_seed, i as u64), validation))
            .collect()
    });
    Ok(SearchResult { master_seed, trials })
}

impl SearchResult {
    pub fn passing(&self, mse_filter: f64) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(move |t| t.final_mse <= mse_filter)
    }

    /// Parallel-coordinates table: one row per trial, MSE on a log10 scale.
    pub fn parallel_coordinates_csv(&self, mse_filter: f64) -> String {
        let mut s = String::from("trial,seed,lr_g,lr_d,log10_mse,passed_filter,status\n");
        for t in &self.trials {
            let status = match &t.status {
                TrialStatus::Ok => "ok",
                TrialStatus::Failed(_) => "failed",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                t.index,
                t.config.seed,
                fmt_f64(t.config.g_adam.lr),
                fmt_f64(t.config.d_adam.lr),
                fmt_f64(t.final_mse.log10()),
                t.final_mse <= mse_filter,
                status
            );
        }
        s
    }
}

pub fn export_parallel_coordinates(result: &SearchResult, mse_filter: f64, path: &Path) -> Result<()> {
    if result.trials.is_empty() {
        return Err(Error::Argument("nothing to export: the search has no trials".into()));
    }
    write_atomic(path, result.parallel_coordinates_csv(mse_filter).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_space() -> SearchSpace {
        let mut s = SearchSpace::stability_study();
        s.base.iterations = 5;
        s.base.mesh = vec![12];
        s
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let s = SearchSpace::stability_study();
        for i in 0..200 {
            let a = s.sample(9, i);
            assert_eq!(a, s.sample(9, i));
            assert!(a.seed < 10);
            for lr in [a.g_adam.lr, a.d_adam.lr] {
                assert!((1e-6..=1e-2).contains(&lr), "{lr}");
            }
            assert_eq!(a.iterations, 500);
            assert_eq!(a.g_adam.beta1, TrainConfig::preset(ProblemKey::Exp).g_adam.beta1);
        }
        assert_ne!(s.sample(9, 0), s.sample(10, 0));
    }

    #[test]
    fn log_uniform_is_uniform_in_log_space() {
        let s = Sampler::LogUniform { lo: 1e-6, hi: 1e-2 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20000;
        let below = (0..n).filter(|_| s.sample(&mut rng) < 1e-4).count();
        assert!((below as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn every_seed_appears() {
        let s = SearchSpace::stability_study();
        let mut seen = [false; 10];
        for i in 0..100 {
            seen[s.sample(0, i).seed as usize] = true;
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let s = tiny_space();
        let a = random_search(&s, 6, 3, 1, None).unwrap();
        let b = random_search(&s, 6, 3, 4, None).unwrap();
        let key = |r: &SearchResult| -> Vec<_> {
            r.trials
                .iter()
                .map(|t| {
                    let rec = t.record.as_ref().unwrap();
                    (
                        t.index,
                        t.config.clone(),
                        t.final_mse.to_bits(),
                        t.status.clone(),
                        rec.curves.g_loss.clone(),
                    )
                })
                .collect()
        };
        assert_eq!(key(&a), key(&b));
        assert_eq!(a.trials.len(), 6);
        assert!(a.trials.iter().enumerate().all(|(i, t)| t.index == i));
    }

    #[test]
    fn invalid_trials_are_recorded() {
        let mut s = tiny_space();
        s.g_lr = Some(Sampler::Fixed { value: 1e300 });
        s.base.iterations = 3;
        let r = random_search(&s, 2, 0, 1, None).unwrap();
        assert_eq!(r.trials.len(), 2);
        assert!(r.trials.iter().all(|t| matches!(t.status, TrialStatus::Failed(_))));
        assert!(r.trials.iter().all(|t| t.final_mse == f64::INFINITY));
        let csv = r.parallel_coordinates_csv(1e-8);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",inf,false,failed")));
    }

    #[test]
    fn filter_is_inclusive_and_counts_match() {
        let base = TrainConfig::preset(ProblemKey::Exp);
        let mses = [1e-8, 2e-8, 5e-9, f64::INFINITY, 1e-12];
        let r = SearchResult {
            master_seed: 0,
            trials: mses
                .iter()
                .enumerate()
                .map(|(i, &m)| Trial {
                    index: i,
                    config: base.clone(),
                    final_mse: m,
                    status: TrialStatus::Ok,
                    record: None,
                })
                .collect(),
        };
        let csv = r.parallel_coordinates_csv(1e-8);
        let passed = csv.lines().skip(1).filter(|l| l.contains(",true,")).count();
        assert_eq!(passed, mses.iter().filter(|&&m| m <= 1e-8).count());
        assert!(csv.lines().nth(1).unwrap().contains(",-8e0,true,"));
        assert_eq!(r.passing(1e-8).count(), 3);
    }

    #[test]
    fn empty_result_is_rejected() {
        let r = SearchResult {
            master_seed: 0,
            trials: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(export_parallel_coordinates(&r, 1e-8, &dir.path().join("x.csv")).is_err());
        assert!(random_search(&tiny_space(), 0, 0, 1, None).is_err());
    }
}
