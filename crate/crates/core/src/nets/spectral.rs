//! Spectral normalization by persistent power iteration.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Lower bound applied to σ estimates before dividing by them.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Left singular vector estimate for one layer, carried across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    u: Array1<f64>,
    v: Array1<f64>,
    sigma: f64,
    /// Number of times a degenerate (near-zero) matrix was seen.
    pub degenerate: u64,
}

fn normalized(x: Array1<f64>) -> Option<Array1<f64>> {
    let n = x.dot(&x).sqrt();
    (n > SIGMA_FLOOR && n.is_finite()).then(|| x / n)
}

impl SpectralState {
    /// `u` drawn from a standard normal and normalized.
    pub fn random(rows: usize, rng: &mut impl Rng) -> Self {
        let u: Array1<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        Self::from_u(u)
    }

    pub fn from_u(u: Array1<f64>) -> Self {
        let rows = u.len();
        let u = normalized(u).unwrap_or_else(|| {
            let mut e = Array1::zeros(rows);
            e[0] = 1.0;
            e
        });
        SpectralState {
            u,
            v: Array1::zeros(0),
            sigma: 1.0,
            degenerate: 0,
        }
    }

    pub fn u(&self) -> &Array1<f64> {
        &self.u
    }

    /// Most recent σ estimate (1 before the first iteration).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// One step `v ← Wᵀu/‖Wᵀu‖`, `u ← Wv/‖Wv‖`, `σ ← uᵀWv`; returns σ.
    pub fn power_iterate(&mut self, w: &Array2<f64>) -> f64 {
        assert_eq!(w.nrows(), self.u.len(), "spectral state does not match layer");
        let Some(v) = normalized(w.t().dot(&self.u)) else {
            return self.degenerate_layer(w.ncols());
        };
        let Some(u) = normalized(w.dot(&v)) else {
            return self.degenerate_layer(w.ncols());
        };
        self.sigma = u.dot(&w.dot(&v)).max(SIGMA_FLOOR);
        self.u = u;
        self.v = v;
        self.sigma
    }

    fn degenerate_layer(&mut self, cols: usize) -> f64 {
        self.degenerate += 1;
        if self.v.len() != cols {
            self.v = Array1::zeros(cols);
        }
        self.sigma = SIGMA_FLOOR;
        self.sigma
    }

    /// `u vᵀ`, the gradient of σ with respect to W.
    pub(crate) fn outer(&self) -> Array2<f64> {
        let u = self.u.view().insert_axis(ndarray::Axis(1));
        let v = self.v.view().insert_axis(ndarray::Axis(0));
        u.dot(&v)
    }
}

/// One power-iteration step on `w`, returning `w / σ` and updating `state`.
pub fn spectral_normalize(w: &Array2<f64>, state: &mut SpectralState) -> Array2<f64> {
    let sigma = state.power_iterate(w);
    w / sigma
}
