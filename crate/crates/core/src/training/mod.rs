//! The adversarial trainer, the classical residual-minimizing trainer, and
//! their evaluation.
//!
//! Ground truth enters only through [`Trainer::run`]'s evaluation callback
//! and is never part of a gradient.

mod config;
mod record;
mod step;

use std::time::Instant;

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{AdamConfig, LossKind, NoiseScale, TrainConfig};
pub use record::{moving_average, percentile, percentile_bands, Curves, RunRecord};
pub use step::{
    classical_step, deqgan_step, evaluate_mse, perturb_mesh, predict, predict_with_residual, GanLosses, Updates,
};

use crate::error::{Error, Result};
use crate::nets::{AdamState, Mlp};
use crate::problems::{Mesh, Problem};

const ADAM_EPS: f64 = 1e-8;

/// Derives an independent 64-bit seed from `seed` for the given stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Reference data used to score a run.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub mesh: &'a Mesh,
    pub truth: &'a Array2<f64>,
}

pub struct Trainer {
    pub problem: Problem,
    pub config: TrainConfig,
    pub generator: Mlp,
    pub discriminator: Option<Mlp>,
    g_opt: AdamState,
    d_opt: Option<AdamState>,
    mesh: Mesh,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let problem = config.build_problem()?;
        let mesh = problem.mesh(&config.mesh)?;
        let generator = Mlp::new(
            problem.input_dim(),
            problem.output_dim(),
            config.generator,
            config.residual,
            config.seed,
        )?;
        let adam = |a: AdamConfig| AdamState::new(a.lr, a.beta1, a.beta2, ADAM_EPS);
        let (discriminator, d_opt) = if config.loss == LossKind::Gan {
            let d = Mlp::new(
                problem.output_dim(),
                1,
                config.discriminator,
                config.residual,
                derive_seed(config.seed, 1),
            )?
            .with_spectral_norm(derive_seed(config.seed, 2));
            (Some(d), Some(adam(config.d_adam)))
        } else {
            (None, None)
        };
        Ok(Trainer {
            g_opt: adam(config.g_adam),
            d_opt,
            rng: ChaCha8Rng::seed_from_u64(config.perturbation_seed()),
            problem,
            generator,
            discriminator,
            mesh,
            iteration: 0,
            config,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// The unperturbed evaluation mesh: same bounds, `eval_factor`× denser.
    pub fn eval_mesh(&self) -> Mesh {
        self.mesh.refined(self.config.eval_factor)
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn learning_rates(&self) -> (f64, Option<f64>) {
        (self.g_opt.lr, self.d_opt.as_ref().map(|o| o.lr))
    }

    /// One iteration: perturb, step, decay. Returns `(g_loss, d_loss)`, where
    /// `g_loss` is the classical loss for non-adversarial runs.
    pub fn step(&mut self) -> Result<(f64, Option<f64>)> {
        let points = perturb_mesh(&self.mesh, self.config.tau, self.config.noise, &mut self.rng);
        let out = match (&mut self.discriminator, &mut self.d_opt) {
            (Some(d), Some(d_opt)) => {
                let l = deqgan_step(
                    &mut self.generator,
                    d,
                    &self.problem,
                    &points,
                    &mut self.g_opt,
                    d_opt,
                    self.config.non_saturating,
                    Updates::BOTH,
                    self.iteration,
                )?;
                d_opt.decay_lr(self.config.discriminator_gamma())?;
                (l.g_loss, Some(l.d_loss))
            }
            _ => {
                let l = classical_step(
                    &mut self.generator,
                    &self.problem,
                    &points,
                    &mut self.g_opt,
                    self.config.loss,
                    self.config.huber_delta,
                    self.iteration,
                )?;
                (l, None)
            }
        };
        self.g_opt.decay_lr(self.config.gamma)?;
        if !self.generator.all_finite() || !self.discriminator.as_ref().is_none_or(Mlp::all_finite) {
            return Err(Error::NonFinite {
                iteration: self.iteration,
                what: "network weights".into(),
            });
        }
        self.iteration += 1;
        Ok(out)
    }

    /// Trains for the configured number of iterations. A numerical failure
    /// ends the run early and is recorded in the returned record.
    pub fn run(&mut self, validation: Option<Validation<'_>>) -> Result<RunRecord> {
        let start = Instant::now();
        let mut curves = Curves::default();
        let mut failure = None;
        for _ in self.iteration..self.config.iterations {
            match self.step() {
                Ok((g, d)) => {
                    curves.g_loss.push(g);
                    if let Some(d) = d {
                        curves.d_loss.push(d);
                    }
                }
                Err(e @ (Error::NonFinite { .. } | Error::NonFiniteGradient { .. })) => {
                    failure = Some(format!("iteration {}: {e}", self.iteration));
                    break;
                }
                Err(e) => return Err(e),
            }
            if let Some(v) = validation {
                let m = evaluate_mse(&self.generator, &self.problem, v.mesh, v.truth)?;
                curves.mse.push(if m.is_finite() { m } else { f64::INFINITY });
            }
        }
        let mut record = RunRecord {
            config: self.config.clone(),
            final_mse: f64::NAN,
            best_iteration: None,
            last_mse: f64::NAN,
            iterations_completed: self.iteration,
            weight_seed: self.config.seed,
            perturb_seed: self.config.perturbation_seed(),
            wall_clock_s: start.elapsed().as_secs_f64(),
            failure,
            curves,
        };
        record.finish_metrics();
        Ok(record)
    }
}

/// Trains `config` once.
pub fn train(config: &TrainConfig, validation: Option<Validation<'_>>) -> Result<(Trainer, RunRecord)> {
    let mut t = Trainer::new(config.clone())?;
    let rec = t.run(validation)?;
    Ok((t, rec))
}

/// Independent trials with weight and perturbation seeds `0..trials`,
/// executed on up to `workers` threads. Results are ordered by trial.
pub fn run_trials(
    config: &TrainConfig,
    trials: usize,
    workers: usize,
    validation: Option<Validation<'_>>,
) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| {
                let mut c = config.clone().with_seed(i);
                c.perturb_seed = Some(i);
                train(&c, validation).map(|(_, r)| r)
            })
            .collect()
    })
}
