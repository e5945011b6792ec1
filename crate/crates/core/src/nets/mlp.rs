use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spectral::SpectralState;
use crate::autodiff::{Batch, Jet, ParamId, Tape, Var};
use crate::error::{Error, Result};

/// Width and depth of the hidden stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    pub units: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// Shape `(out, in)`.
    pub weight: Array2<f64>,
    /// Shape `(1, out)`.
    pub bias: Array2<f64>,
}

/// Per-layer parameters in whatever representation a forward pass runs on.
#[derive(Debug, Clone)]
pub struct LayerParams<T> {
    pub weight: T,
    pub bias: T,
}

/// Feed-forward tanh network.
///
/// Layout: an affine input projection to `hidden_units`, then `num_layers`
/// hidden blocks `h ← tanh(W h + b) (+ h when residual)`, then an affine
/// output projection. Setting every weight to zero makes the hidden stack
/// the identity when `residual` is on.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub(crate) layers: Vec<Linear>,
    pub(crate) input_dim: usize,
    pub(crate) output_dim: usize,
    pub(crate) hidden_units: usize,
    pub(crate) num_layers: usize,
    pub(crate) residual: bool,
    pub(crate) spectral: Option<Vec<SpectralState>>,
}

fn shapes(input_dim: usize, output_dim: usize, arch: Arch) -> Vec<(usize, usize)> {
    let mut v = vec![(arch.units, input_dim)];
    v.extend(std::iter::repeat_n((arch.units, arch.units), arch.layers));
    v.push((output_dim, arch.units));
    v
}

impl Mlp {
    /// Xavier-uniform weights and zero biases, a pure function of `seed`.
    pub fn new(input_dim: usize, output_dim: usize, arch: Arch, residual: bool, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(input_dim, output_dim, arch, residual)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.weight.dim();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-a..=a));
        }
        Ok(net)
    }

    pub fn zeros(input_dim: usize, output_dim: usize, arch: Arch, residual: bool) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || arch.units == 0 || arch.layers == 0 {
            return Err(Error::Argument(format!(
                "network dimensions must be positive (in {input_dim}, out {output_dim}, {arch:?})"
            )));
        }
        let layers = shapes(input_dim, output_dim, arch)
            .into_iter()
            .map(|(o, i)| Linear {
                weight: Array2::zeros((o, i)),
                bias: Array2::zeros((1, o)),
            })
            .collect();
        Ok(Mlp {
            layers,
            input_dim,
            output_dim,
            hidden_units: arch.units,
            num_layers: arch.layers,
            residual,
            spectral: None,
        })
    }

    /// Enables spectral normalization of every layer, seeding the power
    /// iteration vectors from `seed`.
    pub fn with_spectral_norm(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.spectral = Some(
            self.layers
                .iter()
                .map(|l| SpectralState::random(l.weight.nrows(), &mut rng))
                .collect(),
        );
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn arch(&self) -> Arch {
        Arch {
            units: self.hidden_units,
            layers: self.num_layers,
        }
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn spectral_states(&self) -> Option<&[SpectralState]> {
        self.spectral.as_deref()
    }

    /// Number of parameter matrices (weights and biases).
    pub fn num_params(&self) -> usize {
        2 * self.layers.len()
    }

    /// Parameter ids `base, base+1, …` in weight/bias order.
    pub fn param_ids(&self, base: u32) -> Vec<ParamId> {
        (0..self.num_params() as u32).map(|i| ParamId(base + i)).collect()
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn params(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|p| p.iter().all(|x| x.is_finite()))
    }

    /// Registers the raw parameters on `tape` under ids starting at `base`.
    pub fn bind<'t>(&self, tape: &'t Tape, base: u32) -> Vec<LayerParams<Var<'t>>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerParams {
                weight: tape.param(ParamId(base + 2 * i as u32), l.weight.clone()),
                bias: tape.param(ParamId(base + 2 * i as u32 + 1), l.bias.clone()),
            })
            .collect()
    }

    /// Like [`bind`](Self::bind), but when spectral normalization is on,
    /// runs one power-iteration step per layer and returns `W / σ(W)` with
    /// `σ = uᵀ W v` recorded on the tape (u, v held constant).
    pub fn bind_normalized<'t>(&mut self, tape: &'t Tape, base: u32) -> Vec<LayerParams<Var<'t>>> {
        let mut bound = self.bind(tape, base);
        if let Some(states) = self.spectral.as_mut() {
            for ((lp, layer), state) in bound.iter_mut().zip(&self.layers).zip(states.iter_mut()) {
                state.power_iterate(&layer.weight);
                let outer = state.outer();
                let sigma = (lp.weight * tape.constant(outer)).sum();
                let floor = tape.scalar(super::spectral::SIGMA_FLOOR);
                // σ stays above the floor: the value is clamped, gradient kept.
                let sigma = if sigma.item() < super::spectral::SIGMA_FLOOR {
                    floor
                } else {
                    sigma
                };
                lp.weight = lp.weight / sigma;
            }
        }
        bound
    }

    /// Tape-free parameters; normalized by the last σ estimate when
    /// spectral normalization is on.
    pub fn constants(&self) -> Vec<LayerParams<Array2<f64>>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let weight = match &self.spectral {
                    Some(states) => &l.weight / states[i].sigma(),
                    None => l.weight.clone(),
                };
                LayerParams {
                    weight,
                    bias: l.bias.clone(),
                }
            })
            .collect()
    }

    fn check_input(&self, width: usize, dims: usize) -> Result<()> {
        if width != self.input_dim {
            return Err(Error::Argument(format!(
                "network expects {} input column(s), got {width}",
                self.input_dim
            )));
        }
        if dims != self.input_dim && dims != 0 {
            return Err(Error::Argument(format!(
                "input jet tracks {dims} coordinate(s), network has {} input(s)",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Forward pass propagating jets; `x` holds one row per batch point.
    pub fn forward_jet<T: Batch>(&self, params: &[LayerParams<T>], x: &Jet<T>) -> Result<Jet<T>> {
        self.check_input(x.value.shape().1, x.dims())?;
        let affine = |p: &LayerParams<T>, h: &Jet<T>| Jet {
            value: h.value.matmul_t(&p.weight).add_row(&p.bias),
            d1: h.d1.iter().map(|d| d.matmul_t(&p.weight)).collect(),
            d2: h.d2.iter().map(|d| d.matmul_t(&p.weight)).collect(),
        };
        let (first, rest) = params.split_first().expect("network has layers");
        let (last, hidden) = rest.split_last().expect("network has an output layer");
        let mut h = affine(first, x);
        for p in hidden {
            let a = affine(p, &h).tanh();
            h = if self.residual { a.add(&h) } else { a };
        }
        Ok(affine(last, &h))
    }

    /// Value-only forward pass.
    pub fn forward_values<T: Batch>(&self, params: &[LayerParams<T>], x: &T) -> Result<T> {
        self.check_input(x.shape().1, 0)?;
        let affine = |p: &LayerParams<T>, h: &T| h.matmul_t(&p.weight).add_row(&p.bias);
        let (first, rest) = params.split_first().expect("network has layers");
        let (last, hidden) = rest.split_last().expect("network has an output layer");
        let mut h = affine(first, x);
        for p in hidden {
            let a = affine(p, &h).tanh();
            h = if self.residual { a.add(&h) } else { a };
        }
        Ok(affine(last, &h))
    }

    /// Evaluates the network at a single point given pointwise jets, one per input.
    pub fn forward_point(&self, inputs: &[Jet<f64>]) -> Result<Vec<Jet<f64>>> {
        if inputs.len() != self.input_dim {
            return Err(Error::Argument(format!(
                "network expects {} input(s), got {}",
                self.input_dim,
                inputs.len()
            )));
        }
        let dims = inputs[0].dims();
        if inputs.iter().any(|j| j.dims() != dims) {
            return Err(Error::Argument("input jets disagree on dimensionality".into()));
        }
        let row = |f: &dyn Fn(&Jet<f64>) -> f64| {
            Array2::from_shape_vec((1, inputs.len()), inputs.iter().map(f).collect()).expect("row shape")
        };
        let x = Jet {
            value: row(&|j| j.value),
            d1: (0..dims).map(|k| row(&|j| j.d1[k])).collect(),
            d2: (0..dims).map(|k| row(&|j| j.d2[k])).collect(),
        };
        let y = self.forward_jet(&self.constants(), &x)?;
        Ok((0..self.output_dim)
            .map(|o| Jet {
                value: y.value[[0, o]],
                d1: y.d1.iter().map(|d| d[[0, o]]).collect(),
                d2: y.d2.iter().map(|d| d[[0, o]]).collect(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::jet_lift;
    use ndarray::array;

    #[test]
    fn zero_network_is_zero_map() {
        let net = Mlp::zeros(1, 1, Arch { units: 5, layers: 2 }, true).unwrap();
        let y = net.forward_point(&[jet_lift(&[0.8], 0).unwrap()]).unwrap();
        assert_eq!(y[0], Jet::new(0.0, vec![0.0], vec![0.0]));
    }

    #[test]
    fn single_unit_tanh_plus_identity() {
        // input projection t ↦ t, one residual block, identity output.
        let mut net = Mlp::zeros(1, 1, Arch { units: 1, layers: 1 }, true).unwrap();
        net.layers[0].weight = array![[1.0]];
        net.layers[1].weight = array![[1.0]];
        net.layers[2].weight = array![[1.0]];
        let y = net.forward_point(&[jet_lift(&[0.0], 0).unwrap()]).unwrap();
        assert_eq!(y[0].value, 0.0);
        assert_eq!(y[0].d1[0], 2.0);
    }

    #[test]
    fn residual_stack_with_zero_weights_is_identity() {
        let mut net = Mlp::zeros(3, 3, Arch { units: 3, layers: 4 }, true).unwrap();
        net.layers[0].weight = Array2::eye(3);
        net.layers[5].weight = Array2::eye(3);
        let x = array![[0.3, -1.2, 2.5], [0.0, 1.0, -0.5]];
        let y = net.forward_values(&net.constants(), &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn initialization_is_a_function_of_seed() {
        let arch = Arch { units: 20, layers: 3 };
        let a = Mlp::new(2, 1, arch, true, 7).unwrap();
        let b = Mlp::new(2, 1, arch, true, 7).unwrap();
        let c = Mlp::new(2, 1, arch, true, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let bound = (6.0 / 40.0_f64).sqrt();
        assert!(a.layers[1].weight.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn shape_mismatch_is_an_argument_error() {
        let net = Mlp::zeros(2, 1, Arch { units: 4, layers: 1 }, true).unwrap();
        let err = net.forward_values(&net.constants(), &Array2::zeros((3, 1)));
        assert!(matches!(err, Err(Error::Argument(_))));
        assert!(net.forward_point(&[jet_lift(&[0.0], 0).unwrap()]).is_err());
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let net = Mlp::new(1, 1, Arch { units: 40, layers: 2 }, true, 3).unwrap();
        let f = |t: f64| net.forward_values(&net.constants(), &array![[t]]).unwrap()[[0, 0]];
        for &t in &[-0.7, 0.1, 1.3] {
            let j = &net.forward_point(&[jet_lift(&[t], 0).unwrap()]).unwrap()[0];
            let h = 1e-3;
            let fd2 =
                (-f(t + 2.0 * h) + 16.0 * f(t + h) - 30.0 * f(t) + 16.0 * f(t - h) - f(t - 2.0 * h)) / (12.0 * h * h);
            assert!(
                (j.d2[0] - fd2).abs() / fd2.abs().max(1e-3) < 1e-5,
                "t={t}: {} vs {fd2}",
                j.d2[0]
            );
        }
    }
}
