use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, Batch, Real};
use crate::error::{Error, Result};

/// Identifies a trainable parameter matrix across tapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub u32);

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddConst(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Sigmoid(usize),
    Softplus(usize),
    Powi(usize, i32),
    Abs(usize),
    Huber(usize, f64),
    MatMulT(usize, usize),
    AddRow(usize, usize),
    Column(usize, usize),
    HCat(Vec<usize>),
    Mean(usize),
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of matrix operations.
///
/// Nodes are stored in creation order, so operands always precede their
/// results and a single reverse sweep visits each node once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients of a scalar loss, one entry per registered parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientMap {
    grads: BTreeMap<ParamId, Array2<f64>>,
}

impl GradientMap {
    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads.get(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Array2<f64>)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn insert(&mut self, id: ParamId, grad: Array2<f64>) {
        self.grads.insert(id, grad);
    }

    /// First parameter holding a NaN or infinite entry.
    pub fn first_non_finite(&self) -> Option<ParamId> {
        self.grads
            .iter()
            .find(|(_, g)| g.iter().any(|x| !x.is_finite()))
            .map(|(k, _)| *k)
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

/// Sums a gradient down to `shape` when the forward op broadcast a single element.
fn reduce_to(g: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    if g.dim() == shape {
        g
    } else {
        debug_assert_eq!(shape, (1, 1));
        Array2::from_elem((1, 1), g.sum())
    }
}

fn broadcast_zip(a: &Array2<f64>, b: &Array2<f64>, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    super::zip_broadcast(a, b, f)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value, op, needs_grad });
        Var { tape: self, id }
    }

    /// A leaf that never receives gradient.
    pub fn constant(&self, value: Array2<f64>) -> Var<'_> {
        self.push(value, Op::Constant, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Array2::from_elem((1, 1), value))
    }

    /// A trainable leaf. Each `id` may be registered once per tape.
    pub fn param(&self, id: ParamId, value: Array2<f64>) -> Var<'_> {
        self.push(value, Op::Param(id), true)
    }

    fn needs_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    fn unary(&self, a: usize, f: impl FnOnce(&Array2<f64>) -> Array2<f64>, op: Op) -> Var<'_> {
        let (value, ng) = {
            let nodes = self.nodes.borrow();
            (f(&nodes[a].value), nodes[a].needs_grad)
        };
        self.push(value, op, ng)
    }

    fn binary(&self, a: usize, b: usize, f: impl FnOnce(&Array2<f64>, &Array2<f64>) -> Array2<f64>, op: Op) -> Var<'_> {
        let (value, ng) = {
            let nodes = self.nodes.borrow();
            (
                f(&nodes[a].value, &nodes[b].value),
                nodes[a].needs_grad || nodes[b].needs_grad,
            )
        };
        self.push(value, op, ng)
    }

    /// Reverse sweep from the scalar node `loss`.
    ///
    /// Every parameter registered on the tape gets an entry; parameters the
    /// loss does not depend on get zeros.
    pub fn backward(&self, loss: Var<'_>) -> Result<GradientMap> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.dim() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node {} has shape {:?}",
                loss.id,
                root.value.dim()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Array2::ones((1, 1)));
        let mut out = GradientMap::default();

        for i in (0..=loss.id).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let val = |j: usize| &nodes[j].value;
            let ng = |j: usize| nodes[j].needs_grad;
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    if out.grads.insert(*pid, g).is_some() {
                        return Err(Error::Contract(format!("parameter {pid} registered more than once")));
                    }
                }
                Op::Add(a, b) => {
                    if ng(*b) {
                        accumulate(&mut grads[*b], reduce_to(g.clone(), val(*b).dim()));
                    }
                    if ng(*a) {
                        accumulate(&mut grads[*a], reduce_to(g, val(*a).dim()));
                    }
                }
                Op::Sub(a, b) => {
                    if ng(*b) {
                        accumulate(&mut grads[*b], reduce_to(-&g, val(*b).dim()));
                    }
                    if ng(*a) {
                        accumulate(&mut grads[*a], reduce_to(g, val(*a).dim()));
                    }
                }
                Op::Mul(a, b) => {
                    if ng(*a) {
                        let ga = broadcast_zip(&g, val(*b), |g, y| g * y);
                        accumulate(&mut grads[*a], reduce_to(ga, val(*a).dim()));
                    }
                    if ng(*b) {
                        let gb = broadcast_zip(&g, val(*a), |g, x| g * x);
                        accumulate(&mut grads[*b], reduce_to(gb, val(*b).dim()));
                    }
                }
                Op::Div(a, b) => {
                    if ng(*a) {
                        let ga = broadcast_zip(&g, val(*b), |g, y| g / y);
                        accumulate(&mut grads[*a], reduce_to(ga, val(*a).dim()));
                    }
                    if ng(*b) {
                        // d(a/b)/db = −(a/b)/b, and a/b is this node's value.
                        let q = broadcast_zip(&node.value, val(*b), |q, y| q / y);
                        let gb = &g * &q.mapv(|x| -x);
                        accumulate(&mut grads[*b], reduce_to(gb, val(*b).dim()));
                    }
                }
                Op::Neg(a) => accumulate(&mut grads[*a], -g),
                Op::Scale(a, c) => accumulate(&mut grads[*a], g * *c),
                Op::AddConst(a) => accumulate(&mut grads[*a], g),
                Op::Tanh(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&node.value, |g, &y| *g *= 1.0 - y * y);
                    accumulate(&mut grads[*a], ga);
                }
                Op::Exp(a) => accumulate(&mut grads[*a], g * &node.value),
                Op::Ln(a) => accumulate(&mut grads[*a], g / val(*a)),
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&node.value, |g, &y| *g *= y * (1.0 - y));
                    accumulate(&mut grads[*a], ga);
                }
                Op::Softplus(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(val(*a), |g, &x| *g *= sigmoid(x));
                    accumulate(&mut grads[*a], ga);
                }
                Op::Powi(a, n) => {
                    let n = *n;
                    let mut ga = g;
                    ga.zip_mut_with(val(*a), |g, &x| *g *= f64::from(n) * x.powi(n - 1));
                    accumulate(&mut grads[*a], ga);
                }
                Op::Abs(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(val(*a), |g, &x| {
                        *g *= if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads[*a], ga);
                }
                Op::Huber(a, delta) => {
                    let d = *delta;
                    let mut ga = g;
                    ga.zip_mut_with(val(*a), |g, &x| *g *= x.clamp(-d, d));
                    accumulate(&mut grads[*a], ga);
                }
                Op::MatMulT(x, w) => {
                    if ng(*x) {
                        accumulate(&mut grads[*x], g.dot(val(*w)));
                    }
                    if ng(*w) {
                        accumulate(&mut grads[*w], g.t().dot(val(*x)));
                    }
                }
                Op::AddRow(x, row) => {
                    if ng(*row) {
                        accumulate(&mut grads[*row], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if ng(*x) {
                        accumulate(&mut grads[*x], g);
                    }
                }
                Op::Column(a, j) => {
                    let mut ga = Array2::zeros(val(*a).dim());
                    ga.slice_mut(s![.., *j..*j + 1]).assign(&g);
                    accumulate(&mut grads[*a], ga);
                }
                Op::HCat(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let w = val(p).ncols();
                        if ng(p) {
                            accumulate(&mut grads[p], g.slice(s![.., col..col + w]).to_owned());
                        }
                        col += w;
                    }
                }
                Op::Mean(a) => {
                    let shape = val(*a).dim();
                    let n = (shape.0 * shape.1) as f64;
                    accumulate(&mut grads[*a], Array2::from_elem(shape, g[[0, 0]] / n));
                }
                Op::Sum(a) => {
                    let shape = val(*a).dim();
                    accumulate(&mut grads[*a], Array2::from_elem(shape, g[[0, 0]]));
                }
            }
        }

        // Parameters the loss never reached.
        for node in nodes.iter() {
            if let Op::Param(pid) = node.op {
                out.grads.entry(pid).or_insert_with(|| Array2::zeros(node.value.dim()));
            }
        }
        Ok(out)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Array2<f64> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// The single element of a `1 × 1` node.
    pub fn item(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        debug_assert_eq!(v.len(), 1);
        v[[0, 0]]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.dim()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.needs_grad(self.id)
    }

    /// A constant copy of this node's value; gradient stops here.
    pub fn detach(&self) -> Var<'t> {
        self.tape.constant(self.value())
    }

    pub fn softplus(&self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.mapv(softplus), Op::Softplus(self.id))
    }

    pub fn abs(&self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.mapv(f64::abs), Op::Abs(self.id))
    }

    /// Huber penalty with threshold `delta`: `½r²` inside, `δ(|r| − ½δ)` outside.
    pub fn huber(&self, delta: f64) -> Var<'t> {
        self.tape
            .unary(self.id, |a| a.mapv(|r| huber(r, delta)), Op::Huber(self.id, delta))
    }

    pub fn sum(&self) -> Var<'t> {
        self.tape
            .unary(self.id, |a| Array2::from_elem((1, 1), a.sum()), Op::Sum(self.id))
    }
}

pub(crate) fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

impl<'t> Real for Var<'t> {
    fn add(&self, o: &Self) -> Self {
        self.tape.binary(self.id, o.id, Real::add, Op::Add(self.id, o.id))
    }
    fn sub(&self, o: &Self) -> Self {
        self.tape.binary(self.id, o.id, Real::sub, Op::Sub(self.id, o.id))
    }
    fn mul(&self, o: &Self) -> Self {
        self.tape.binary(self.id, o.id, Real::mul, Op::Mul(self.id, o.id))
    }
    fn div(&self, o: &Self) -> Self {
        self.tape.binary(self.id, o.id, Real::div, Op::Div(self.id, o.id))
    }
    fn neg(&self) -> Self {
        self.tape.unary(self.id, |a| a.mapv(|x| -x), Op::Neg(self.id))
    }
    fn scale(&self, c: f64) -> Self {
        self.tape.unary(self.id, |a| a * c, Op::Scale(self.id, c))
    }
    fn add_const(&self, c: f64) -> Self {
        self.tape.unary(self.id, |a| a + c, Op::AddConst(self.id))
    }
    fn tanh(&self) -> Self {
        self.tape.unary(self.id, |a| a.mapv(f64::tanh), Op::Tanh(self.id))
    }
    fn exp(&self) -> Self {
        self.tape.unary(self.id, |a| a.mapv(f64::exp), Op::Exp(self.id))
    }
    fn ln(&self) -> Self {
        self.tape.unary(self.id, |a| a.mapv(f64::ln), Op::Ln(self.id))
    }
    fn sigmoid(&self) -> Self {
        self.tape.unary(self.id, |a| a.mapv(sigmoid), Op::Sigmoid(self.id))
    }
    fn powi(&self, n: i32) -> Self {
        self.tape
            .unary(self.id, |a| a.mapv(|x| x.powi(n)), Op::Powi(self.id, n))
    }
    fn const_like(&self, c: f64) -> Self {
        self.tape.constant(Array2::from_elem(self.shape(), c))
    }
}

impl<'t> Batch for Var<'t> {
    fn shape(&self) -> (usize, usize) {
        Var::shape(self)
    }
    fn matmul_t(&self, w: &Self) -> Self {
        self.tape
            .binary(self.id, w.id, |x, w| x.dot(&w.t()), Op::MatMulT(self.id, w.id))
    }
    fn add_row(&self, row: &Self) -> Self {
        self.tape
            .binary(self.id, row.id, |x, r| x + r, Op::AddRow(self.id, row.id))
    }
    fn column(&self, j: usize) -> Self {
        self.tape.unary(
            self.id,
            |a| a.slice(s![.., j..j + 1]).to_owned(),
            Op::Column(self.id, j),
        )
    }
    fn hcat(parts: &[Self]) -> Self {
        let tape = parts[0].tape;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let (value, ng) = {
            let nodes = tape.nodes.borrow();
            let views: Vec<_> = ids.iter().map(|&i| nodes[i].value.view()).collect();
            (
                ndarray::concatenate(Axis(1), &views).expect("hcat: row counts differ"),
                ids.iter().any(|&i| nodes[i].needs_grad),
            )
        };
        tape.push(value, Op::HCat(ids), ng)
    }
    fn mean(&self) -> Self {
        self.tape.unary(
            self.id,
            |a| Array2::from_elem((1, 1), a.sum() / a.len() as f64),
            Op::Mean(self.id),
        )
    }
}

macro_rules! var_binop {
    ($trait:ident, $method:ident, $real:ident) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                Real::$real(&self, &rhs)
            }
        }
    };
}

var_binop!(Add, add, add);
var_binop!(Sub, sub, sub);
var_binop!(Mul, mul, mul);
var_binop!(Div, div, div);

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.add_const(c)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.scale(c)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        Real::neg(&self)
    }
}
