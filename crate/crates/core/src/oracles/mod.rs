//! Classical numerical solvers: reference solutions for problems without a
//! closed form and the traditional baselines neural solvers are compared to.

mod cache;
mod fd;
mod rk;

use std::path::{Path, PathBuf};

use ndarray::Array2;

pub use cache::{read_cache, write_cache, CacheHeader};
pub use fd::{fd_poisson_solve, CgSample, FdSolution};
pub use rk::{rk45_solve, rk4_solve, DenseSolution, IvpSpec, Rhs, Trajectory};

use crate::autodiff::Jet;
use crate::error::{Error, Result};
use crate::problems::{poisson_source, Equation, Mesh, Problem, TruthSource};

/// `rtol = atol` used for reference solutions.
pub const TRUTH_TOL: f64 = 1e-10;

pub const CACHE_ENV: &str = "DEQGAN_CACHE_DIR";

/// `$DEQGAN_CACHE_DIR`, or `deqgan-cache` under the working directory.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("deqgan-cache"))
}

/// The problem as a first-order system. Errors for the Poisson problem.
pub fn ivp_for(problem: &Problem) -> Result<IvpSpec> {
    let interval = problem.domain[0];
    let mut spec = match problem.equation {
        Equation::Exp { x0 } => IvpSpec::new(|_, x| vec![-x[0]], vec![x0], interval),
        Equation::Sho { x0, v0 } => IvpSpec::new(|_, x| vec![x[1], -x[0]], vec![x0, v0], interval),
        Equation::Nlo {
            beta,
            omega,
            phi,
            epsilon,
            x0,
            v0,
        } => IvpSpec::new(
            move |_, s| {
                let (x, v) = (s[0], s[1]);
                vec![
                    v,
                    -2.0 * beta * v - omega * omega * x - phi * x * x - epsilon * x * x * x,
                ]
            },
            vec![x0, v0],
            interval,
        ),
        Equation::Nas { x0, y0 } => IvpSpec::new(|t, s| vec![-t * s[1], t * s[0]], vec![x0, y0], interval),
        Equation::Sir {
            beta,
            gamma,
            n,
            s0,
            i0,
            r0,
        } => IvpSpec::new(
            move |_, u| {
                let inf = beta * u[1] * u[0] / n;
                vec![-inf, inf - gamma * u[1], gamma * u[1]]
            },
            vec![s0, i0, r0],
            interval,
        ),
        Equation::Pos => return Err(Error::Contract("pos is a boundary value problem, not an IVP".into())),
    };
    spec.second_order = matches!(problem.equation, Equation::Sho { .. } | Equation::Nlo { .. });
    Ok(spec)
}

fn ode_times(problem: &Problem, mesh: &Mesh) -> Result<Vec<f64>> {
    if mesh.dims() != 1 || problem.input_dim() != 1 {
        return Err(Error::Argument(format!("{} needs a 1-D mesh", problem.key)));
    }
    Ok(mesh.points().column(0).to_vec())
}

fn observed(spec: &IvpSpec, state: &[f64]) -> Vec<f64> {
    if spec.second_order {
        vec![state[0]]
    } else {
        state.to_vec()
    }
}

/// Dense adaptive solution of an ODE problem.
pub fn rk45_for(problem: &Problem, tol: f64) -> Result<DenseSolution> {
    rk45_solve(&ivp_for(problem)?, tol, tol)
}

/// Solution values on the mesh, one row per point and one column per output.
pub fn rk45_on_mesh(problem: &Problem, mesh: &Mesh, tol: f64) -> Result<Array2<f64>> {
    let spec = ivp_for(problem)?;
    let sol = rk45_solve(&spec, tol, tol)?;
    let times = ode_times(problem, mesh)?;
    let mut out = Array2::zeros((times.len(), problem.output_dim()));
    for (i, &t) in times.iter().enumerate() {
        for (o, v) in observed(&spec, &sol.eval(t)?).into_iter().enumerate() {
            out[[i, o]] = v;
        }
    }
    Ok(out)
}

/// Jets of the numerical solution at `t`: first derivatives come from the
/// interpolant's slope, second derivatives (second-order problems) from the
/// slope of the velocity component.
pub fn numerical_jets(problem: &Problem, sol: &DenseSolution, t: f64) -> Result<Vec<Jet<f64>>> {
    let spec = ivp_for(problem)?;
    let y = sol.eval(t)?;
    let dy = sol.eval_derivative(t)?;
    Ok(if spec.second_order {
        vec![Jet::new(y[0], vec![dy[0]], vec![dy[1]])]
    } else {
        y.iter()
            .zip(&dy)
            .map(|(&v, &d)| Jet::new(v, vec![d], vec![0.0]))
            .collect()
    })
}

/// RK4 on the mesh's own spacing (one step per mesh interval).
pub fn rk4_on_mesh(problem: &Problem, mesh: &Mesh) -> Result<Array2<f64>> {
    let spec = ivp_for(problem)?;
    let times = ode_times(problem, mesh)?;
    let tr = rk4_solve(&spec, times.len() - 1)?;
    let mut out = Array2::zeros((times.len(), problem.output_dim()));
    for (i, x) in tr.states.iter().enumerate() {
        for (o, v) in observed(&spec, x).into_iter().enumerate() {
            out[[i, o]] = v;
        }
    }
    Ok(out)
}

/// Finite differences on an `n × n` unit-square mesh, flattened in mesh order.
pub fn fd_on_mesh(problem: &Problem, mesh: &Mesh) -> Result<Array2<f64>> {
    if !matches!(problem.equation, Equation::Pos) {
        return Err(Error::Contract(format!("{} is not a Poisson problem", problem.key)));
    }
    let n = mesh.counts()[0];
    if mesh.dims() != 2 || mesh.counts()[1] != n || mesh.bounds() != [(0.0, 1.0), (0.0, 1.0)] {
        return Err(Error::Argument("fd needs a square grid on the unit square".into()));
    }
    let sol = fd_poisson_solve(|x, y| poisson_source(&x, &y), n)?;
    Ok(sol.grid.into_shape_with_order((n * n, 1)).expect("grid reshape"))
}

/// The traditional baseline: RK4 for ODEs, finite differences for Poisson.
pub fn traditional_on_mesh(problem: &Problem, mesh: &Mesh) -> Result<(&'static str, Array2<f64>)> {
    match problem.equation {
        Equation::Pos => Ok(("fd", fd_on_mesh(problem, mesh)?)),
        _ => Ok(("rk4", rk4_on_mesh(problem, mesh)?)),
    }
}

/// Where the cached reference solution for `problem` on `mesh` lives.
pub fn truth_cache_path(dir: &Path, problem: &Problem, mesh: &Mesh) -> PathBuf {
    CacheHeader::new(problem, "rk45", TRUTH_TOL, mesh).path_in(dir)
}

/// Reference solution on `mesh`: closed form when one exists, otherwise the
/// cached numerical solution. Never integrates on demand.
pub fn ground_truth(problem: &Problem, mesh: &Mesh, dir: &Path) -> Result<Array2<f64>> {
    match problem.truth_source() {
        TruthSource::Analytic => problem.analytic_on(mesh),
        TruthSource::Oracle => {
            let path = truth_cache_path(dir, problem, mesh);
            if !path.exists() {
                return Err(Error::MissingGroundTruth {
                    problem: problem.key.to_string(),
                    path,
                });
            }
            let (_, data) = read_cache(&path, &CacheHeader::new(problem, "rk45", TRUTH_TOL, mesh))?;
            Ok(data)
        }
    }
}

/// Like [`ground_truth`], integrating and caching when the cache is missing.
pub fn ensure_ground_truth(problem: &Problem, mesh: &Mesh, dir: &Path) -> Result<Array2<f64>> {
    match ground_truth(problem, mesh, dir) {
        Err(Error::MissingGroundTruth { path, .. }) => {
            let data = rk45_on_mesh(problem, mesh, TRUTH_TOL)?;
            write_cache(&path, &CacheHeader::new(problem, "rk45", TRUTH_TOL, mesh), &data)?;
            Ok(data)
        }
        other => other,
    }
}

/// Mean squared difference over all entries.
pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).mapv(|d| d * d).mean().unwrap_or(f64::NAN)
}
