use std::sync::Arc;

use crate::error::{Error, Result};

pub type Rhs = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// First-order initial value problem `ẋ = f(t, x)`.
#[derive(Clone)]
pub struct IvpSpec {
    pub rhs: Rhs,
    pub x0: Vec<f64>,
    pub t_start: f64,
    pub t_end: f64,
    /// State is `[x, ẋ]` for a single second-order equation.
    pub second_order: bool,
}

impl std::fmt::Debug for IvpSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IvpSpec")
            .field("x0", &self.x0)
            .field("t_start", &self.t_start)
            .field("t_end", &self.t_end)
            .field("second_order", &self.second_order)
            .finish_non_exhaustive()
    }
}

impl IvpSpec {
    pub fn new(
        rhs: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        x0: Vec<f64>,
        interval: (f64, f64),
    ) -> Self {
        IvpSpec {
            rhs: Arc::new(rhs),
            x0,
            t_start: interval.0,
            t_end: interval.1,
            second_order: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end > self.t_start) {
            return Err(Error::Argument(format!(
                "empty interval ({}, {})",
                self.t_start, self.t_end
            )));
        }
        if self.x0.is_empty() {
            return Err(Error::Argument("initial state is empty".into()));
        }
        Ok(())
    }

    fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (self.rhs)(t, x)
    }
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            for (o, v) in out.iter_mut().zip(k) {
                *o += h * c * v;
            }
        }
    }
    out
}

/// Samples of a fixed-step solution at the step endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Classic fixed-step fourth-order Runge–Kutta.
pub fn rk4_solve(spec: &IvpSpec, n_steps: usize) -> Result<Trajectory> {
    spec.validate()?;
    if n_steps == 0 {
        return Err(Error::Argument("rk4 needs at least one step".into()));
    }
    let span = spec.t_end - spec.t_start;
    let h = span / n_steps as f64;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut x = spec.x0.clone();
    times.push(spec.t_start);
    states.push(x.clone());
    for i in 0..n_steps {
        let t = spec.t_start + span * i as f64 / n_steps as f64;
        let k1 = spec.eval(t, &x);
        let k2 = spec.eval(t + 0.5 * h, &axpy(&x, h, &[(0.5, &k1)]));
        let k3 = spec.eval(t + 0.5 * h, &axpy(&x, h, &[(0.5, &k2)]));
        let k4 = spec.eval(t + h, &axpy(&x, h, &[(1.0, &k3)]));
        x = axpy(
            &x,
            h,
            &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
        );
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("rk4: non-finite state at step {}", i + 1)));
        }
        times.push(if i + 1 == n_steps {
            spec.t_end
        } else {
            spec.t_start + span * (i + 1) as f64 / n_steps as f64
        });
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [&[f64]; 6] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];
/// Quartic dense-output coefficients.
const P: [[f64; 4]; 7] = [
    [
        1.0,
        -8048581381.0 / 2820520608.0,
        8663915743.0 / 2820520608.0,
        -12715105075.0 / 11282082432.0,
    ],
    [0.0, 0.0, 0.0, 0.0],
    [
        0.0,
        131558114200.0 / 32700410799.0,
        -68118460800.0 / 10900136933.0,
        87487479700.0 / 32700410799.0,
    ],
    [
        0.0,
        -1754552775.0 / 470086768.0,
        14199869525.0 / 1410260304.0,
        -10690763975.0 / 1880347072.0,
    ],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [
        0.0,
        -282668133.0 / 205662961.0,
        2019193451.0 / 616988883.0,
        -1453857185.0 / 822651844.0,
    ],
    [
        0.0,
        40617522.0 / 29380423.0,
        -110615467.0 / 29380423.0,
        69997945.0 / 29380423.0,
    ],
];

#[derive(Debug, Clone)]
struct Segment {
    t: f64,
    h: f64,
    y: Vec<f64>,
    /// Per component, coefficients of θ, θ², θ³, θ⁴.
    q: Vec<[f64; 4]>,
}

impl Segment {
    fn value(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t) / self.h;
        self.y
            .iter()
            .zip(&self.q)
            .map(|(y, q)| y + self.h * th * (q[0] + th * (q[1] + th * (q[2] + th * q[3]))))
            .collect()
    }

    fn derivative(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t) / self.h;
        self.q
            .iter()
            .map(|q| q[0] + th * (2.0 * q[1] + th * (3.0 * q[2] + th * 4.0 * q[3])))
            .collect()
    }
}

/// Adaptive Dormand–Prince 5(4) solution with continuous output.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    segments: Vec<Segment>,
    t_end: f64,
    y_end: Vec<f64>,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

impl DenseSolution {
    pub fn t_start(&self) -> f64 {
        self.segments[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Accepted step endpoints, including both interval ends.
    pub fn step_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.segments.iter().map(|s| s.t).collect();
        ts.push(self.t_end);
        ts
    }

    /// The state produced by each accepted step, paired with `step_times`.
    pub fn step_states(&self) -> Vec<Vec<f64>> {
        let mut ys: Vec<Vec<f64>> = self.segments.iter().map(|s| s.y.clone()).collect();
        ys.push(self.y_end.clone());
        ys
    }

    fn segment(&self, t: f64) -> Result<&Segment> {
        let tol = 1e-12 * (self.t_end - self.t_start()).abs().max(1.0);
        if t < self.t_start() - tol || t > self.t_end + tol {
            return Err(Error::Argument(format!(
                "t = {t} outside solved interval ({}, {})",
                self.t_start(),
                self.t_end
            )));
        }
        let i = self.segments.partition_point(|s| s.t <= t);
        Ok(&self.segments[i.saturating_sub(1)])
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if t == self.t_end {
            return Ok(self.y_end.clone());
        }
        let s = self.segment(t)?;
        if t == s.t {
            return Ok(s.y.clone());
        }
        Ok(s.value(t))
    }

    /// Time derivative of the interpolant.
    pub fn eval_derivative(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.segment(t)?.derivative(t))
    }
}

fn rms_scaled(v: &[f64], scale: &[f64]) -> f64 {
    (v.iter().zip(scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn initial_step(spec: &IvpSpec, f0: &[f64], rtol: f64, atol: f64) -> f64 {
    let y0 = &spec.x0;
    let scale: Vec<f64> = y0.iter().map(|y| atol + y.abs() * rtol).collect();
    let d0 = rms_scaled(y0, &scale);
    let d1 = rms_scaled(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = spec.eval(spec.t_start + h0, &y1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_scaled(&diff, &scale) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1)
}

/// Adaptive Dormand–Prince integration with mixed absolute/relative error control.
pub fn rk45_solve(spec: &IvpSpec, rtol: f64, atol: f64) -> Result<DenseSolution> {
    spec.validate()?;
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(Error::Argument("rtol and atol must be positive".into()));
    }
    const SAFETY: f64 = 0.9;
    const MIN_FACTOR: f64 = 0.2;
    const MAX_FACTOR: f64 = 10.0;
    const MAX_STEPS: usize = 10_000_000;

    let n = spec.x0.len();
    let mut t = spec.t_start;
    let mut y = spec.x0.clone();
    let mut f = spec.eval(t, &y);
    let mut h = initial_step(spec, &f, rtol, atol).min(spec.t_end - spec.t_start);
    let mut segments = Vec::new();
    let (mut n_accepted, mut n_rejected) = (0, 0);

    while t < spec.t_end {
        if n_accepted + n_rejected > MAX_STEPS {
            return Err(Error::Solver("rk45: step budget exhausted".into()));
        }
        let min_step = 10.0 * f64::EPSILON * t.abs().max(1.0);
        let mut rejected_here = false;
        loop {
            if h < min_step {
                return Err(Error::Solver(format!("rk45: step size underflow at t = {t}")));
            }
            let last = t + h >= spec.t_end;
            let h_step = if last { spec.t_end - t } else { h };
            let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
            k.push(f.clone());
            for s in 1..6 {
                let terms: Vec<(f64, &[f64])> = A[s].iter().zip(&k).map(|(&a, ki)| (a, ki.as_slice())).collect();
                k.push(spec.eval(t + C[s] * h_step, &axpy(&y, h_step, &terms)));
            }
            let terms: Vec<(f64, &[f64])> = B.iter().zip(&k).map(|(&b, ki)| (b, ki.as_slice())).collect();
            let y_new = axpy(&y, h_step, &terms);
            let t_new = if last { spec.t_end } else { t + h_step };
            let f_new = spec.eval(t_new, &y_new);
            k.push(f_new.clone());

            let err: Vec<f64> = (0..n)
                .map(|i| h_step * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>())
                .collect();
            let scale: Vec<f64> = y
                .iter()
                .zip(&y_new)
                .map(|(a, b)| atol + a.abs().max(b.abs()) * rtol)
                .collect();
            let err_norm = rms_scaled(&err, &scale);
            if !err_norm.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                if !y_new.iter().all(|v| v.is_finite()) && h_step <= min_step {
                    return Err(Error::Solver(format!("rk45: non-finite state at t = {t}")));
                }
                h *= MIN_FACTOR;
                rejected_here = true;
                n_rejected += 1;
                continue;
            }
            if err_norm < 1.0 {
                let mut factor = if err_norm == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err_norm.powf(-0.2)).min(MAX_FACTOR)
                };
                if rejected_here {
                    factor = factor.min(1.0);
                }
                let q = (0..n)
                    .map(|i| {
                        let mut row = [0.0; 4];
                        for (j, r) in row.iter_mut().enumerate() {
                            *r = (0..7).map(|s| k[s][i] * P[s][j]).sum();
                        }
                        row
                    })
                    .collect();
                segments.push(Segment {
                    t,
                    h: h_step,
                    y: y.clone(),
                    q,
                });
                t = t_new;
                y = y_new;
                f = f_new;
                h *= factor;
                n_accepted += 1;
                break;
            }
            h *= (SAFETY * err_norm.powf(-0.2)).max(MIN_FACTOR);
            rejected_here = true;
            n_rejected += 1;
        }
    }
    Ok(DenseSolution {
        segments,
        t_end: spec.t_end,
        y_end: y,
        n_accepted,
        n_rejected,
    })
}
