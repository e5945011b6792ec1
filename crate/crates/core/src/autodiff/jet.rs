use std::ops::{Add, Mul, Neg, Sub};

use super::Real;
use crate::error::{Error, Result};

/// A value with its first derivatives and diagonal second derivatives with
/// respect to each input coordinate.
///
/// `d1[k]` is `∂f/∂x_k` and `d2[k]` is `∂²f/∂x_k²`. Mixed partials are not
/// tracked.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T> {
    pub value: T,
    pub d1: Vec<T>,
    pub d2: Vec<T>,
}

/// Elementwise primitives understood by [`jet_apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    Tanh,
    Exp,
    Ln,
    Sigmoid,
    Powi(i32),
    /// `a·u + b`
    Affine {
        a: f64,
        b: f64,
    },
}

/// Seeds coordinate `dim` of the point `x` as an independent variable.
pub fn jet_lift(x: &[f64], dim: usize) -> Result<Jet<f64>> {
    if dim >= x.len() {
        return Err(Error::Argument(format!(
            "coordinate {dim} out of range for a {}-dimensional input",
            x.len()
        )));
    }
    let mut d1 = vec![0.0; x.len()];
    d1[dim] = 1.0;
    Ok(Jet {
        value: x[dim],
        d1,
        d2: vec![0.0; x.len()],
    })
}

/// Applies primitive `f` to `args` with exact second-order propagation.
pub fn jet_apply<T: Real>(f: Primitive, args: &[Jet<T>]) -> Result<Jet<T>> {
    let arity = match f {
        Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div => 2,
        _ => 1,
    };
    if args.len() != arity {
        return Err(Error::Argument(format!(
            "{f:?} takes {arity} argument(s), got {}",
            args.len()
        )));
    }
    if arity == 2 && args[0].dims() != args[1].dims() {
        return Err(Error::Argument(format!(
            "jet dimensionality mismatch: {} vs {}",
            args[0].dims(),
            args[1].dims()
        )));
    }
    let u = &args[0];
    Ok(match f {
        Primitive::Add => u.add(&args[1]),
        Primitive::Sub => u.sub(&args[1]),
        Primitive::Mul => u.mul(&args[1]),
        Primitive::Div => u.div(&args[1]),
        Primitive::Tanh => u.tanh(),
        Primitive::Exp => u.exp(),
        Primitive::Ln => u.ln(),
        Primitive::Sigmoid => u.sigmoid(),
        Primitive::Powi(n) => u.powi(n),
        Primitive::Affine { a, b } => u.scale(a).add_const(b),
    })
}

impl<T: Real> Jet<T> {
    pub fn new(value: T, d1: Vec<T>, d2: Vec<T>) -> Self {
        debug_assert_eq!(d1.len(), d2.len());
        Jet { value, d1, d2 }
    }

    /// Number of input coordinates tracked.
    pub fn dims(&self) -> usize {
        self.d1.len()
    }

    /// A quantity that does not depend on the inputs.
    pub fn constant(value: T, dims: usize) -> Self {
        let zero = value.const_like(0.0);
        Jet {
            d1: vec![zero.clone(); dims],
            d2: vec![zero; dims],
            value,
        }
    }

    /// A constant jet shaped like `self`.
    pub fn const_like(&self, c: f64) -> Self {
        Self::constant(self.value.const_like(c), self.dims())
    }

    fn map_parts(&self, f: impl Fn(&T) -> T) -> Self {
        Jet {
            value: f(&self.value),
            d1: self.d1.iter().map(&f).collect(),
            d2: self.d2.iter().map(&f).collect(),
        }
    }

    fn zip_parts(&self, other: &Self, f: impl Fn(&T, &T) -> T) -> Self {
        Jet {
            value: f(&self.value, &other.value),
            d1: self.d1.iter().zip(&other.d1).map(|(a, b)| f(a, b)).collect(),
            d2: self.d2.iter().zip(&other.d2).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_parts(other, T::add)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_parts(other, T::sub)
    }

    pub fn neg(&self) -> Self {
        self.map_parts(T::neg)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_parts(|x| x.scale(c))
    }

    pub fn add_const(&self, c: f64) -> Self {
        Jet {
            value: self.value.add_const(c),
            d1: self.d1.clone(),
            d2: self.d2.clone(),
        }
    }

    /// Multiplies every component by an input-independent factor.
    pub fn scale_by(&self, c: &T) -> Self {
        self.map_parts(|x| x.mul(c))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (u, v) = (&self.value, &other.value);
        let d1 = self
            .d1
            .iter()
            .zip(&other.d1)
            .map(|(u1, v1)| u1.mul(v).add(&u.mul(v1)))
            .collect();
        let d2 = self
            .d1
            .iter()
            .zip(&other.d1)
            .zip(self.d2.iter().zip(&other.d2))
            .map(|((u1, v1), (u2, v2))| u2.mul(v).add(&u1.mul(v1).scale(2.0)).add(&u.mul(v2)))
            .collect();
        Jet {
            value: u.mul(v),
            d1,
            d2,
        }
    }

    pub fn div(&self, other: &Self) -> Self {
        let v = &other.value;
        let q = self.value.div(v);
        let d1: Vec<T> = self
            .d1
            .iter()
            .zip(&other.d1)
            .map(|(u1, v1)| u1.sub(&q.mul(v1)).div(v))
            .collect();
        let d2 = self
            .d2
            .iter()
            .zip(&other.d2)
            .zip(d1.iter().zip(&other.d1))
            .map(|((u2, v2), (q1, v1))| u2.sub(&q1.mul(v1).scale(2.0)).sub(&q.mul(v2)).div(v))
            .collect();
        Jet { value: q, d1, d2 }
    }

    /// Chain rule for a unary function given `f(u)`, `f'(u)` and `f''(u)`.
    pub fn chain(&self, f: T, df: T, d2f: T) -> Self {
        let d1 = self.d1.iter().map(|u1| df.mul(u1)).collect();
        let d2 = self
            .d1
            .iter()
            .zip(&self.d2)
            .map(|(u1, u2)| d2f.mul(&u1.mul(u1)).add(&df.mul(u2)))
            .collect();
        Jet { value: f, d1, d2 }
    }

    pub fn tanh(&self) -> Self {
        let y = self.value.tanh();
        let dy = y.mul(&y).neg().add_const(1.0);
        let d2y = y.mul(&dy).scale(-2.0);
        self.chain(y, dy, d2y)
    }

    pub fn exp(&self) -> Self {
        let y = self.value.exp();
        self.chain(y.clone(), y.clone(), y)
    }

    pub fn ln(&self) -> Self {
        let u = &self.value;
        let inv = u.powi(-1);
        let d2 = inv.mul(&inv).neg();
        self.chain(u.ln(), inv, d2)
    }

    pub fn sigmoid(&self) -> Self {
        let s = self.value.sigmoid();
        let ds = s.mul(&s.neg().add_const(1.0));
        let d2s = ds.mul(&s.scale(-2.0).add_const(1.0));
        self.chain(s, ds, d2s)
    }

    pub fn powi(&self, n: i32) -> Self {
        let u = &self.value;
        let nf = f64::from(n);
        let (df, d2f) = match n {
            0 => (u.const_like(0.0), u.const_like(0.0)),
            1 => (u.const_like(1.0), u.const_like(0.0)),
            2 => (u.scale(2.0), u.const_like(2.0)),
            _ => (u.powi(n - 1).scale(nf), u.powi(n - 2).scale(nf * (nf - 1.0))),
        };
        self.chain(u.powi(n), df, d2f)
    }

    pub fn square(&self) -> Self {
        self.powi(2)
    }

    /// `1 − e^{−(self − t0)}`, the decay factor shared by the initial-value transforms.
    pub fn decay_factor(&self, t0: f64) -> Self {
        self.add_const(-t0).neg().exp().neg().add_const(1.0)
    }
}

impl Jet<f64> {
    pub fn sin(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }
}

impl<T: Real> Add for &Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: Self) -> Jet<T> {
        Jet::add(self, rhs)
    }
}

impl<T: Real> Sub for &Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: Self) -> Jet<T> {
        Jet::sub(self, rhs)
    }
}

impl<T: Real> Mul for &Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Self) -> Jet<T> {
        Jet::mul(self, rhs)
    }
}

impl<T: Real> Mul<f64> for &Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: f64) -> Jet<T> {
        self.scale(rhs)
    }
}

impl<T: Real> Add<f64> for &Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: f64) -> Jet<T> {
        self.add_const(rhs)
    }
}

impl<T: Real> Neg for &Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        Jet::neg(self)
    }
}
