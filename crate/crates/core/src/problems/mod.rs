//! The benchmark equations.
//!
//! Each [`Problem`] knows its domain, how to reparameterize a raw network
//! output so the conditions hold exactly, and how to assemble the residual
//! with every term moved to the left-hand side.

mod mesh;
mod transforms;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use mesh::Mesh;
pub use transforms::{adjust_dirichlet_2d, adjust_ic_first_order, adjust_ic_second_order};

use crate::autodiff::{jet_lift, Batch, Jet, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKey {
    Exp,
    Sho,
    Nlo,
    Nas,
    Sir,
    Pos,
}

impl ProblemKey {
    pub const ALL: [ProblemKey; 6] = [
        ProblemKey::Exp,
        ProblemKey::Sho,
        ProblemKey::Nlo,
        ProblemKey::Nas,
        ProblemKey::Sir,
        ProblemKey::Pos,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKey::Exp => "exp",
            ProblemKey::Sho => "sho",
            ProblemKey::Nlo => "nlo",
            ProblemKey::Nas => "nas",
            ProblemKey::Sir => "sir",
            ProblemKey::Pos => "pos",
        }
    }
}

impl fmt::Display for ProblemKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProblemKey::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown problem key {s:?}")))
    }
}

/// Equation family with its constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Equation {
    /// `ẋ + x = 0`
    Exp { x0: f64 },
    /// `ẍ + x = 0`
    Sho { x0: f64, v0: f64 },
    /// `ẍ + 2βẋ + ω²x + φx² + εx³ = 0`
    Nlo {
        beta: f64,
        omega: f64,
        phi: f64,
        epsilon: f64,
        x0: f64,
        v0: f64,
    },
    /// `ẋ = −t y`, `ẏ = t x`
    Nas { x0: f64, y0: f64 },
    /// SIR compartments with infection rate β, recovery rate γ, population N.
    Sir {
        beta: f64,
        gamma: f64,
        n: f64,
        s0: f64,
        i0: f64,
        r0: f64,
    },
    /// `u_xx + u_yy = 2x(y−1)(y−2x+xy+2)e^{x−y}` on the unit square, zero on the boundary.
    Pos,
}

/// Whether a problem's reference solution comes from a closed form or a solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSource {
    Analytic,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub key: ProblemKey,
    pub equation: Equation,
    pub domain: Vec<(f64, f64)>,
}

impl Problem {
    pub fn preset(key: ProblemKey) -> Self {
        let (equation, domain) = match key {
            ProblemKey::Exp => (Equation::Exp { x0: 1.0 }, vec![(0.0, 10.0)]),
            ProblemKey::Sho => (Equation::Sho { x0: 0.0, v0: 1.0 }, vec![(0.0, 2.0 * PI)]),
            ProblemKey::Nlo => (
                Equation::Nlo {
                    beta: 0.1,
                    omega: 1.0,
                    phi: 1.0,
                    epsilon: 0.1,
                    x0: 0.0,
                    v0: 0.5,
                },
                vec![(0.0, 4.0 * PI)],
            ),
            ProblemKey::Nas => (Equation::Nas { x0: 1.0, y0: 0.0 }, vec![(0.0, 2.0 * PI)]),
            ProblemKey::Sir => (
                Equation::Sir {
                    beta: 3.0,
                    gamma: 1.0,
                    n: 1.0,
                    s0: 0.99,
                    i0: 0.01,
                    r0: 0.0,
                },
                vec![(0.0, 10.0)],
            ),
            ProblemKey::Pos => (Equation::Pos, vec![(0.0, 1.0), (0.0, 1.0)]),
        };
        Problem { key, equation, domain }
    }

    pub fn input_dim(&self) -> usize {
        self.domain.len()
    }

    pub fn output_dim(&self) -> usize {
        match self.key {
            ProblemKey::Nas => 2,
            ProblemKey::Sir => 3,
            _ => 1,
        }
    }

    /// Start of the time interval, where initial conditions are imposed.
    pub fn t0(&self) -> f64 {
        self.domain[0].0
    }

    pub fn truth_source(&self) -> TruthSource {
        match self.key {
            ProblemKey::Nlo | ProblemKey::Sir => TruthSource::Oracle,
            _ => TruthSource::Analytic,
        }
    }

    /// Named constants, including initial conditions.
    pub fn constants(&self) -> Vec<(&'static str, f64)> {
        match self.equation {
            Equation::Exp { x0 } => vec![("x0", x0)],
            Equation::Sho { x0, v0 } => vec![("x0", x0), ("v0", v0)],
            Equation::Nlo {
                beta,
                omega,
                phi,
                epsilon,
                x0,
                v0,
            } => vec![
                ("beta", beta),
                ("omega", omega),
                ("phi", phi),
                ("epsilon", epsilon),
                ("x0", x0),
                ("v0", v0),
            ],
            Equation::Nas { x0, y0 } => vec![("x0", x0), ("y0", y0)],
            Equation::Sir {
                beta,
                gamma,
                n,
                s0,
                i0,
                r0,
            } => vec![
                ("beta", beta),
                ("gamma", gamma),
                ("n", n),
                ("s0", s0),
                ("i0", i0),
                ("r0", r0),
            ],
            Equation::Pos => vec![],
        }
    }

    pub fn set_constant(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match (&mut self.equation, name) {
            (Equation::Exp { x0 }, "x0") => x0,
            (Equation::Sho { x0, .. }, "x0") => x0,
            (Equation::Sho { v0, .. }, "v0") => v0,
            (Equation::Nlo { beta, .. }, "beta") => beta,
            (Equation::Nlo { omega, .. }, "omega") => omega,
            (Equation::Nlo { phi, .. }, "phi") => phi,
            (Equation::Nlo { epsilon, .. }, "epsilon") => epsilon,
            (Equation::Nlo { x0, .. }, "x0") => x0,
            (Equation::Nlo { v0, .. }, "v0") => v0,
            (Equation::Nas { x0, .. }, "x0") => x0,
            (Equation::Nas { y0, .. }, "y0") => y0,
            (Equation::Sir { beta, .. }, "beta") => beta,
            (Equation::Sir { gamma, .. }, "gamma") => gamma,
            (Equation::Sir { n, .. }, "n") => n,
            (Equation::Sir { s0, .. }, "s0") => s0,
            (Equation::Sir { i0, .. }, "i0") => i0,
            (Equation::Sir { r0, .. }, "r0") => r0,
            _ => return Err(Error::Config(format!("problem {} has no constant {name:?}", self.key))),
        };
        if !value.is_finite() {
            return Err(Error::Config(format!("constant {name} must be finite")));
        }
        *slot = value;
        Ok(())
    }

    pub fn mesh(&self, counts: &[usize]) -> Result<Mesh> {
        Mesh::uniform(&self.domain, counts)
    }

    fn check_arity<T>(&self, coords: &[Jet<T>], outputs: &[Jet<T>]) -> Result<()> {
        if coords.len() != self.input_dim() || outputs.len() != self.output_dim() {
            return Err(Error::Argument(format!(
                "{} takes {} coordinate(s) and {} output(s), got {} and {}",
                self.key,
                self.input_dim(),
                self.output_dim(),
                coords.len(),
                outputs.len()
            )));
        }
        Ok(())
    }

    /// Applies the condition transform to each raw output head.
    pub fn adjust<T: Real>(&self, coords: &[Jet<T>], raw: &[Jet<T>]) -> Result<Vec<Jet<T>>> {
        self.check_arity(coords, raw)?;
        let t0 = self.t0();
        let t = &coords[0];
        Ok(match self.equation {
            Equation::Exp { x0 } => vec![adjust_ic_first_order(&raw[0], t, t0, x0)],
            Equation::Sho { x0, v0 } | Equation::Nlo { x0, v0, .. } => {
                vec![adjust_ic_second_order(&raw[0], t, t0, x0, v0)]
            }
            Equation::Nas { x0, y0 } => vec![
                adjust_ic_first_order(&raw[0], t, t0, x0),
                adjust_ic_first_order(&raw[1], t, t0, y0),
            ],
            Equation::Sir { s0, i0, r0, .. } => vec![
                adjust_ic_first_order(&raw[0], t, t0, s0),
                adjust_ic_first_order(&raw[1], t, t0, i0),
                adjust_ic_first_order(&raw[2], t, t0, r0),
            ],
            Equation::Pos => vec![adjust_dirichlet_2d(&raw[0], &coords[0], &coords[1])],
        })
    }

    /// Residual of the equation with all terms on the left; zero for a solution.
    pub fn build_lhs<T: Real>(&self, coords: &[Jet<T>], adjusted: &[Jet<T>]) -> Result<Vec<T>> {
        self.check_arity(coords, adjusted)?;
        let t = &coords[0].value;
        let u = adjusted;
        Ok(match self.equation {
            Equation::Exp { .. } => vec![u[0].d1[0].add(&u[0].value)],
            Equation::Sho { .. } => vec![u[0].d2[0].add(&u[0].value)],
            Equation::Nlo {
                beta,
                omega,
                phi,
                epsilon,
                ..
            } => {
                let x = &u[0].value;
                let x2 = x.mul(x);
                vec![u[0].d2[0]
                    .add(&u[0].d1[0].scale(2.0 * beta))
                    .add(&x.scale(omega * omega))
                    .add(&x2.scale(phi))
                    .add(&x2.mul(x).scale(epsilon))]
            }
            Equation::Nas { .. } => {
                let (x, y) = (&u[0], &u[1]);
                vec![x.d1[0].add(&t.mul(&y.value)), y.d1[0].sub(&t.mul(&x.value))]
            }
            Equation::Sir { beta, gamma, n, .. } => {
                let (s, i, r) = (&u[0], &u[1], &u[2]);
                let infection = i.value.mul(&s.value).scale(beta / n);
                let recovery = i.value.scale(gamma);
                vec![
                    s.d1[0].add(&infection),
                    i.d1[0].sub(&infection).add(&recovery),
                    r.d1[0].sub(&recovery),
                ]
            }
            Equation::Pos => {
                let x = &coords[0].value;
                let y = &coords[1].value;
                vec![u[0].d2[0].add(&u[0].d2[1]).sub(&poisson_source(x, y))]
            }
        })
    }

    /// Batched form: `input` holds one row per point and one jet coordinate
    /// per column; `raw` is the network output jet.
    pub fn residual_batch<T: Batch>(&self, input: &Jet<T>, raw: &Jet<T>) -> Result<(Vec<Jet<T>>, Vec<T>)> {
        let coords = split_columns(input);
        let heads = split_columns(raw);
        let adjusted = self.adjust(&coords, &heads)?;
        let lhs = self.build_lhs(&coords, &adjusted)?;
        Ok((adjusted, lhs))
    }

    /// Closed-form solution at `point`.
    pub fn analytic_solution(&self, point: &[f64]) -> Result<Vec<f64>> {
        Ok(self.analytic_jets(point)?.into_iter().map(|j| j.value).collect())
    }

    /// Closed-form solution with exact derivatives.
    pub fn analytic_jets(&self, point: &[f64]) -> Result<Vec<Jet<f64>>> {
        if point.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "{} expects a {}-dimensional point",
                self.key,
                self.input_dim()
            )));
        }
        let t = jet_lift(point, 0)?;
        let t0 = self.t0();
        match self.equation {
            Equation::Exp { x0 } => Ok(vec![t.add_const(-t0).neg().exp().scale(x0)]),
            Equation::Sho { x0, v0 } => {
                let s = t.add_const(-t0);
                Ok(vec![s.cos().scale(x0).add(&s.sin().scale(v0))])
            }
            Equation::Nas { x0, y0 } => {
                // Rotation by angle (t² − t0²)/2.
                let a = t.square().add_const(-t0 * t0).scale(0.5);
                let (c, s) = (a.cos(), a.sin());
                Ok(vec![c.scale(x0).sub(&s.scale(y0)), s.scale(x0).add(&c.scale(y0))])
            }
            Equation::Pos => {
                let y = jet_lift(point, 1)?;
                Ok(vec![adjust_dirichlet_2d(&t.sub(&y).exp(), &t, &y)])
            }
            Equation::Nlo { .. } | Equation::Sir { .. } => Err(Error::Contract(format!(
                "{} has no closed-form solution; use the numerical oracle",
                self.key
            ))),
        }
    }

    /// Closed-form solution at every mesh point, one row per point.
    pub fn analytic_on(&self, mesh: &Mesh) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((mesh.len(), self.output_dim()));
        for (i, p) in mesh.points().rows().into_iter().enumerate() {
            let v = self.analytic_solution(&p.to_vec())?;
            for (o, x) in v.into_iter().enumerate() {
                out[[i, o]] = x;
            }
        }
        Ok(out)
    }
}

/// `2x(y−1)(y−2x+xy+2)e^{x−y}`
pub fn poisson_source<T: Real>(x: &T, y: &T) -> T {
    let inner = y.sub(&x.scale(2.0)).add(&x.mul(y)).add_const(2.0);
    x.scale(2.0).mul(&y.add_const(-1.0)).mul(&inner).mul(&x.sub(y).exp())
}

/// Splits a batched jet into one jet per column.
pub fn split_columns<T: Batch>(j: &Jet<T>) -> Vec<Jet<T>> {
    (0..j.value.shape().1)
        .map(|c| Jet {
            value: j.value.column(c),
            d1: j.d1.iter().map(|d| d.column(c)).collect(),
            d2: j.d2.iter().map(|d| d.column(c)).collect(),
        })
        .collect()
}

/// Lifts mesh rows into a batched input jet: coordinate `k` has unit first
/// derivative along itself.
pub fn lift_batch(points: &Array2<f64>) -> Jet<Array2<f64>> {
    let (m, d) = points.dim();
    let unit = |k: usize| {
        let mut a = Array2::zeros((m, d));
        a.column_mut(k).fill(1.0);
        a
    };
    Jet {
        value: points.clone(),
        d1: (0..d).map(unit).collect(),
        d2: (0..d).map(|_| Array2::zeros((m, d))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lifted(point: &[f64]) -> Vec<Jet<f64>> {
        (0..point.len()).map(|k| jet_lift(point, k).unwrap()).collect()
    }

    #[test]
    fn keys_parse_case_insensitively() {
        assert_eq!("NLO".parse::<ProblemKey>().unwrap(), ProblemKey::Nlo);
        assert!(matches!("abc".parse::<ProblemKey>(), Err(Error::Config(_))));
    }

    #[test]
    fn constants_match_presets() {
        let nlo = Problem::preset(ProblemKey::Nlo);
        assert_eq!(
            nlo.constants(),
            vec![
                ("beta", 0.1),
                ("omega", 1.0),
                ("phi", 1.0),
                ("epsilon", 0.1),
                ("x0", 0.0),
                ("v0", 0.5)
            ]
        );
        assert_eq!(nlo.domain, vec![(0.0, 4.0 * PI)]);
        let sir = Problem::preset(ProblemKey::Sir);
        assert_eq!(
            sir.constants(),
            vec![
                ("beta", 3.0),
                ("gamma", 1.0),
                ("n", 1.0),
                ("s0", 0.99),
                ("i0", 0.01),
                ("r0", 0.0)
            ]
        );
        assert_eq!(sir.domain, vec![(0.0, 10.0)]);
        assert_eq!(Problem::preset(ProblemKey::Exp).domain, vec![(0.0, 10.0)]);
        assert_eq!(Problem::preset(ProblemKey::Sho).domain, vec![(0.0, 2.0 * PI)]);
        assert_eq!(Problem::preset(ProblemKey::Nas).domain, vec![(0.0, 2.0 * PI)]);
        assert_eq!(Problem::preset(ProblemKey::Pos).domain, vec![(0.0, 1.0), (0.0, 1.0)]);
    }

    #[test]
    fn constants_can_be_overridden() {
        let mut p = Problem::preset(ProblemKey::Nlo);
        p.set_constant("epsilon", 0.3).unwrap();
        assert!(p.constants().contains(&("epsilon", 0.3)));
        assert!(p.set_constant("gamma", 1.0).is_err());
    }

    #[test]
    fn analytic_values() {
        let exp = Problem::preset(ProblemKey::Exp);
        assert_eq!(exp.analytic_solution(&[0.0]).unwrap(), vec![1.0]);
        let sho = Problem::preset(ProblemKey::Sho);
        assert!((sho.analytic_solution(&[PI / 2.0]).unwrap()[0] - 1.0).abs() < 1e-15);
        let pos = Problem::preset(ProblemKey::Pos);
        assert_eq!(pos.analytic_solution(&[0.5, 0.5]).unwrap(), vec![0.0625]);
        for k in [ProblemKey::Nlo, ProblemKey::Sir] {
            assert!(matches!(
                Problem::preset(k).analytic_solution(&[1.0]),
                Err(Error::Contract(_))
            ));
        }
    }

    #[test]
    fn exact_solutions_have_zero_residual() {
        for key in [ProblemKey::Exp, ProblemKey::Sho, ProblemKey::Nas, ProblemKey::Pos] {
            let p = Problem::preset(key);
            let counts = vec![23; p.input_dim()];
            let mesh = p.mesh(&counts).unwrap();
            for row in mesh.points().rows() {
                let pt = row.to_vec();
                let lhs = p.build_lhs(&lifted(&pt), &p.analytic_jets(&pt).unwrap()).unwrap();
                for r in lhs {
                    assert!(r.abs() < 1e-12, "{key} at {pt:?}: {r}");
                }
            }
        }
    }

    #[test]
    fn nas_residual_uses_t_times_x() {
        let p = Problem::preset(ProblemKey::Nas);
        let t = 1.7_f64;
        let coords = lifted(&[t]);
        let a = coords[0].square().scale(0.5);
        let lhs = p.build_lhs(&coords, &[a.cos(), a.sin()]).unwrap();
        assert!(lhs.iter().all(|r| r.abs() < 1e-14), "{lhs:?}");
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let p = Problem::preset(ProblemKey::Sir);
        let c = lifted(&[1.0]);
        assert!(p.build_lhs(&c, &[c[0].clone()]).is_err());
    }
}
