use ndarray::Array2;

use super::Mlp;
use crate::autodiff::{GradientMap, ParamId};
use crate::error::{Error, Result};

/// Adam moments and hyperparameters for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Array2<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Array2<f64>] {
        &self.v
    }

    /// Bias-corrected Adam update of `params` from `grads`, both in the same
    /// order. With `ascend` the step moves up the gradient.
    pub fn step(
        &mut self,
        params: &mut [&mut Array2<f64>],
        grads: &[(ParamId, &Array2<f64>)],
        ascend: bool,
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Argument(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, (id, g)) in params.iter().zip(grads) {
            if p.dim() != g.dim() {
                return Err(Error::Argument(format!(
                    "gradient {id} has shape {:?}, parameter {:?}",
                    g.dim(),
                    p.dim()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient { param: *id });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.dim())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let sign = if ascend { 1.0 } else { -1.0 };
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, (_, g)), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut **p)
                .and(*g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p += sign * lr * mh / (vh.sqrt() + eps);
                });
        }
        Ok(())
    }

    /// Updates every parameter of `net`, reading gradients under ids from `base`.
    pub fn step_net(&mut self, net: &mut Mlp, grads: &GradientMap, base: u32, ascend: bool) -> Result<()> {
        let ids = net.param_ids(base);
        let gs = ids
            .iter()
            .map(|&id| {
                grads
                    .get(id)
                    .map(|g| (id, g))
                    .ok_or_else(|| Error::Contract(format!("no gradient for {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut params: Vec<&mut Array2<f64>> = net.params_mut().collect();
        self.step(&mut params, &gs, ascend)
    }

    /// `lr ← lr · γ`.
    pub fn decay_lr(&mut self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("lr decay {gamma} outside (0, 1]")));
        }
        self.lr *= gamma;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn run(p: &mut Array2<f64>, g: &Array2<f64>, s: &mut AdamState, ascend: bool) {
        s.step(&mut [p], &[(ParamId(0), g)], ascend).unwrap();
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let mut p = array![[1.0]];
        let mut s = AdamState::new(0.1, 0.9, 0.999, 1e-8);
        run(&mut p, &array![[1.0]], &mut s, false);
        assert!((p[[0, 0]] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = array![[2.0, -1.0]];
        let mut s = AdamState::new(0.1, 0.9, 0.999, 1e-8);
        run(&mut p, &array![[0.0, 0.0]], &mut s, false);
        assert_eq!(p, array![[2.0, -1.0]]);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn quadratic_converges() {
        let mut p = array![[0.0]];
        let mut s = AdamState::new(0.05, 0.9, 0.999, 1e-8);
        for _ in 0..100 {
            let g = array![[2.0 * (p[[0, 0]] - 3.0)]];
            run(&mut p, &g, &mut s, false);
        }
        assert!((p[[0, 0]] - 3.0).abs() < 0.1, "{}", p[[0, 0]]);
    }

    #[test]
    fn ascent_on_loss_equals_descent_on_negated_loss() {
        let mut a = array![[0.4, -0.3]];
        let mut b = a.clone();
        let mut sa = AdamState::new(0.01, 0.5, 0.7, 1e-8);
        let mut sb = sa.clone();
        for k in 0..5 {
            let g = array![[0.3 * k as f64 - 0.5, 1.0 / (1.0 + k as f64)]];
            run(&mut a, &g, &mut sa, true);
            run(&mut b, &(-&g), &mut sb, false);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = array![[0.0]];
        let mut s = AdamState::new(0.1, 0.9, 0.999, 1e-8);
        let err = s
            .step(&mut [&mut p], &[(ParamId(4), &array![[f64::NAN]])], false)
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { param: ParamId(4) }));
        assert_eq!(s.steps(), 0);
    }

    #[test]
    fn lr_decay() {
        let mut s = AdamState::new(0.008, 0.9, 0.999, 1e-8);
        s.decay_lr(0.991).unwrap();
        assert!((s.lr - 0.007928).abs() < 1e-15);
        s.decay_lr(1.0).unwrap();
        assert!((s.lr - 0.007928).abs() < 1e-15);
        assert!(s.decay_lr(0.0).is_err());
        assert!(s.decay_lr(1.5).is_err());

        let mut s = AdamState::new(0.009, 0.9, 0.999, 1e-8);
        for _ in 0..10_000 {
            s.decay_lr(0.998).unwrap();
        }
        let expected = 0.009 * (10_000.0 * 0.998_f64.ln()).exp();
        assert!((s.lr - expected).abs() / expected < 1e-9);
        assert!((s.lr - 1.82e-11).abs() < 0.01e-11);
    }
}
