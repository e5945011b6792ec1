use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{LossKind, NoiseScale};
use crate::autodiff::{Batch, Jet, Tape, Var};
use crate::error::{Error, Result};
use crate::nets::{AdamState, Mlp};
use crate::problems::{lift_batch, split_columns, Mesh, Problem};

pub(crate) const G_BASE: u32 = 0;
pub(crate) const D_BASE: u32 = 1 << 20;

/// Mesh points plus independent Gaussian noise per coordinate with scale
/// `spacing/τ`, clamped to the domain.
pub fn perturb_mesh(mesh: &Mesh, tau: f64, noise: NoiseScale, rng: &mut impl Rng) -> Array2<f64> {
    let mut pts = mesh.points().clone();
    if tau.is_infinite() {
        return pts;
    }
    let dists: Vec<(Normal<f64>, f64, f64)> = (0..mesh.dims())
        .map(|k| {
            let r = mesh.spacing(k) / tau;
            let std = match noise {
                NoiseScale::Std => r,
                NoiseScale::Variance => r.sqrt(),
            };
            let (a, b) = mesh.bounds()[k];
            (Normal::new(0.0, std).expect("finite noise scale"), a, b)
        })
        .collect();
    for mut row in pts.rows_mut() {
        for (x, (d, a, b)) in row.iter_mut().zip(&dists) {
            *x = (*x + d.sample(rng)).clamp(*a, *b);
        }
    }
    pts
}

fn constant_jet<'t>(tape: &'t Tape, j: &Jet<Array2<f64>>) -> Jet<Var<'t>> {
    Jet {
        value: tape.constant(j.value.clone()),
        d1: j.d1.iter().map(|d| tape.constant(d.clone())).collect(),
        d2: j.d2.iter().map(|d| tape.constant(d.clone())).collect(),
    }
}

fn check_finite(iteration: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            iteration,
            what: what.to_string(),
        })
    }
}

/// Residual matrix (one row per point, one column per equation) recorded on `tape`.
fn residual_on_tape<'t>(tape: &'t Tape, g: &Mlp, problem: &Problem, points: &Array2<f64>) -> Result<Var<'t>> {
    let params = g.bind(tape, G_BASE);
    let input = constant_jet(tape, &lift_batch(points));
    let raw = g.forward_jet(&params, &input)?;
    let (_, lhs) = problem.residual_batch(&input, &raw)?;
    Ok(Var::hcat(&lhs))
}

/// Which networks a step may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Updates {
    pub generator: bool,
    pub discriminator: bool,
}

impl Updates {
    pub const BOTH: Updates = Updates {
        generator: true,
        discriminator: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanLosses {
    pub g_loss: f64,
    pub d_loss: f64,
}

/// Generator objective (minimized) and discriminator objective (maximized).
pub(crate) fn gan_objectives<'t>(
    tape: &'t Tape,
    g: &Mlp,
    d: &mut Mlp,
    problem: &Problem,
    points: &Array2<f64>,
    non_saturating: bool,
) -> Result<(Var<'t>, Var<'t>)> {
    let lhs = residual_on_tape(tape, g, problem, points)?;
    let rhs = tape.constant(Array2::zeros(lhs.shape()));
    let dp = d.bind_normalized(tape, D_BASE);
    let z_fake = d.forward_values(&dp, &lhs)?;
    let g_objective = if non_saturating {
        (-z_fake).softplus().mean()
    } else {
        -z_fake.softplus().mean()
    };
    let z_fake_d = d.forward_values(&dp, &lhs.detach())?;
    let z_real = d.forward_values(&dp, &rhs)?;
    let d_objective = -(-z_real).softplus().mean() - z_fake_d.softplus().mean();
    Ok((g_objective, d_objective))
}

/// One adversarial iteration on the given (already perturbed) points.
///
/// The generator descends `mean log(1 − σ(D(LHS)))` (or ascends
/// `mean log σ(D(LHS))` when `non_saturating`), and the discriminator
/// ascends `mean log σ(D(0)) + mean log(1 − σ(D(LHS)))`. Both gradients come
/// from the same residual batch; the generator is updated first.
#[allow(clippy::too_many_arguments)]
pub fn deqgan_step(
    g: &mut Mlp,
    d: &mut Mlp,
    problem: &Problem,
    points: &Array2<f64>,
    g_opt: &mut AdamState,
    d_opt: &mut AdamState,
    non_saturating: bool,
    updates: Updates,
    iteration: usize,
) -> Result<GanLosses> {
    if d.input_dim() != problem.output_dim() || g.output_dim() != problem.output_dim() {
        return Err(Error::Argument(format!(
            "networks do not fit {}: G outputs {}, D takes {}",
            problem.key,
            g.output_dim(),
            d.input_dim()
        )));
    }
    let tape = Tape::new();
    let (g_objective, d_loss) = gan_objectives(&tape, g, d, problem, points, non_saturating)?;

    let g_loss = check_finite(iteration, "generator loss", g_objective.item())?;
    let d_value = check_finite(iteration, "discriminator loss", d_loss.item())?;

    let g_grads = tape.backward(g_objective)?;
    let d_grads = tape.backward(d_loss)?;
    for grads in [&g_grads, &d_grads] {
        if let Some(param) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient { param });
        }
    }
    if updates.generator {
        g_opt.step_net(g, &g_grads, G_BASE, false)?;
    }
    if updates.discriminator {
        d_opt.step_net(d, &d_grads, D_BASE, true)?;
    }
    Ok(GanLosses {
        g_loss: if non_saturating { -g_loss } else { g_loss },
        d_loss: d_value,
    })
}

/// One descent step on the mean pointwise loss of the residuals against zero.
pub fn classical_step(
    g: &mut Mlp,
    problem: &Problem,
    points: &Array2<f64>,
    opt: &mut AdamState,
    loss: LossKind,
    huber_delta: f64,
    iteration: usize,
) -> Result<f64> {
    let tape = Tape::new();
    let r = residual_on_tape(&tape, g, problem, points)?;
    let per_point = match loss {
        LossKind::L2 => r * r,
        LossKind::L1 => r.abs(),
        LossKind::Huber => r.huber(huber_delta),
        LossKind::Gan => return Err(Error::Contract("classical_step needs a classical loss".into())),
    };
    let objective = per_point.mean();
    let value = check_finite(iteration, "loss", objective.item())?;
    let grads = tape.backward(objective)?;
    if let Some(param) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient { param });
    }
    opt.step_net(g, &grads, G_BASE, false)?;
    Ok(value)
}

/// Condition-adjusted prediction on `points`, values only.
pub fn predict(g: &Mlp, problem: &Problem, points: &Array2<f64>) -> Result<Array2<f64>> {
    let input: Jet<Array2<f64>> = Jet {
        value: points.clone(),
        d1: vec![],
        d2: vec![],
    };
    let raw = g.forward_jet(&g.constants(), &input)?;
    let adjusted = problem.adjust(&split_columns(&input), &split_columns(&raw))?;
    let values: Vec<Array2<f64>> = adjusted.into_iter().map(|j| j.value).collect();
    Ok(Array2::hcat(&values))
}

/// Adjusted prediction and pointwise residuals on `points`.
pub fn predict_with_residual(g: &Mlp, problem: &Problem, points: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let input = lift_batch(points);
    let raw = g.forward_jet(&g.constants(), &input)?;
    let (adjusted, lhs) = problem.residual_batch(&input, &raw)?;
    let values: Vec<Array2<f64>> = adjusted.into_iter().map(|j| j.value).collect();
    Ok((Array2::hcat(&values), Array2::hcat(&lhs)))
}

/// Mean over points and outputs of `(prediction − truth)²`.
pub fn evaluate_mse(g: &Mlp, problem: &Problem, eval_mesh: &Mesh, truth: &Array2<f64>) -> Result<f64> {
    let pred = predict(g, problem, eval_mesh.points())?;
    if pred.dim() != truth.dim() {
        return Err(Error::Argument(format!(
            "truth has shape {:?}, prediction {:?}",
            truth.dim(),
            pred.dim()
        )));
    }
    Ok(crate::oracles::mse(&pred, truth))
}
