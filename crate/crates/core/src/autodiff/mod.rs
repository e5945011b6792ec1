//! Differentiation machinery.
//!
//! Two pieces cooperate here:
//!
//! * [`Jet`] carries a value together with its first and diagonal second
//!   derivatives with respect to each network input. Jets are propagated
//!   forward through the computation by the chain rule.
//! * [`Tape`] records matrix-valued operations and runs reverse-mode
//!   accumulation to obtain weight gradients.
//!
//! Jets are generic over a [`Real`] element type. With `f64` you get a
//! pointwise jet, with `Array2<f64>` a batched tape-free jet, and with
//! [`Var`] a batched jet whose every component is recorded on a tape. The
//! last one is what makes a loss built from input derivatives differentiable
//! with respect to the weights.

mod jet;
mod tape;

pub use jet::{jet_apply, jet_lift, Jet, Primitive};
pub use tape::{GradientMap, ParamId, Tape, Var};

use ndarray::{s, Array2, Axis};

/// Element type that jets can be built from.
///
/// Every operation is elementwise. Binary operations accept operands of equal
/// shape, or one operand holding a single element which is broadcast.
pub trait Real: Clone {
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn add_const(&self, c: f64) -> Self;
    fn tanh(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sigmoid(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    /// A constant with the same shape as `self`, filled with `c`.
    fn const_like(&self, c: f64) -> Self;
}

/// Matrix-shaped [`Real`] types: rows index batch points, columns features.
pub trait Batch: Real {
    fn shape(&self) -> (usize, usize);
    /// `self · wᵀ`, the layer product for a weight matrix of shape `(out, in)`.
    fn matmul_t(&self, w: &Self) -> Self;
    /// Adds a `1 × n` row to every row of `self`.
    fn add_row(&self, row: &Self) -> Self;
    fn column(&self, j: usize) -> Self;
    fn hcat(parts: &[Self]) -> Self;
    fn mean(&self) -> Self;
}

impl Real for f64 {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    fn add_const(&self, c: f64) -> Self {
        self + c
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sigmoid(&self) -> Self {
        sigmoid(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn const_like(&self, c: f64) -> Self {
        c
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn zip_broadcast(a: &Array2<f64>, b: &Array2<f64>, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    if a.dim() == b.dim() {
        let mut out = a.clone();
        out.zip_mut_with(b, |x, &y| *x = f(*x, y));
        out
    } else if b.len() == 1 {
        let y = b[[0, 0]];
        a.mapv(|x| f(x, y))
    } else if a.len() == 1 {
        let x = a[[0, 0]];
        b.mapv(|y| f(x, y))
    } else {
        panic!("shape mismatch: {:?} vs {:?}", a.dim(), b.dim());
    }
}

impl Real for Array2<f64> {
    fn add(&self, o: &Self) -> Self {
        zip_broadcast(self, o, |x, y| x + y)
    }
    fn sub(&self, o: &Self) -> Self {
        zip_broadcast(self, o, |x, y| x - y)
    }
    fn mul(&self, o: &Self) -> Self {
        zip_broadcast(self, o, |x, y| x * y)
    }
    fn div(&self, o: &Self) -> Self {
        zip_broadcast(self, o, |x, y| x / y)
    }
    fn neg(&self) -> Self {
        self.mapv(|x| -x)
    }
    fn scale(&self, c: f64) -> Self {
        self.mapv(|x| x * c)
    }
    fn add_const(&self, c: f64) -> Self {
        self.mapv(|x| x + c)
    }
    fn tanh(&self) -> Self {
        self.mapv(f64::tanh)
    }
    fn exp(&self) -> Self {
        self.mapv(f64::exp)
    }
    fn ln(&self) -> Self {
        self.mapv(f64::ln)
    }
    fn sigmoid(&self) -> Self {
        self.mapv(sigmoid)
    }
    fn powi(&self, n: i32) -> Self {
        self.mapv(|x| x.powi(n))
    }
    fn const_like(&self, c: f64) -> Self {
        Array2::from_elem(self.dim(), c)
    }
}

impl Batch for Array2<f64> {
    fn shape(&self) -> (usize, usize) {
        self.dim()
    }
    fn matmul_t(&self, w: &Self) -> Self {
        self.dot(&w.t())
    }
    fn add_row(&self, row: &Self) -> Self {
        self + row
    }
    fn column(&self, j: usize) -> Self {
        self.slice(s![.., j..j + 1]).to_owned()
    }
    fn hcat(parts: &[Self]) -> Self {
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        ndarray::concatenate(Axis(1), &views).expect("hcat: row counts differ")
    }
    fn mean(&self) -> Self {
        Array2::from_elem((1, 1), self.sum() / self.len() as f64)
    }
}
