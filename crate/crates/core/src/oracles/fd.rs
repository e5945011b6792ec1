use ndarray::Array2;

use crate::error::{Error, Result};

/// Progress sample taken while the conjugate-gradient iteration runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSample {
    pub iteration: usize,
    /// Recomputed `‖b − A u‖₂` rather than the recurrence value.
    pub true_residual: f64,
    /// `½ uᵀAu − bᵀu`, which CG decreases monotonically.
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct FdSolution {
    /// `n × n` grid including the boundary; entry `[i, j]` sits at `(x_i, y_j)`.
    pub grid: Array2<f64>,
    pub h: f64,
    pub iterations: usize,
    /// Final relative residual `‖r‖/‖b‖`.
    pub relative_residual: f64,
    pub history: Vec<CgSample>,
}

/// Applies the negated 5-point Laplacian (times h²) to interior unknowns.
fn apply(m: usize, u: &[f64], out: &mut [f64]) {
    for i in 0..m {
        for j in 0..m {
            let k = i * m + j;
            let mut s = 4.0 * u[k];
            if i > 0 {
                s -= u[k - m];
            }
            if i + 1 < m {
                s -= u[k + m];
            }
            if j > 0 {
                s -= u[k - 1];
            }
            if j + 1 < m {
                s -= u[k + 1];
            }
            out[k] = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Second-order finite differences for `u_xx + u_yy = f` on the unit square
/// with `u = 0` on the boundary; `n` points per side including the boundary.
pub fn fd_poisson_solve(source: impl Fn(f64, f64) -> f64, n: usize) -> Result<FdSolution> {
    const TOL: f64 = 1e-12;
    const CHECK_EVERY: usize = 50;
    if n < 3 {
        return Err(Error::Argument(format!("fd grid needs n >= 3, got {n}")));
    }
    let m = n - 2;
    let h = 1.0 / (n - 1) as f64;
    let coord = |i: usize| if i == n - 1 { 1.0 } else { i as f64 * h };
    let b: Vec<f64> = (0..m * m)
        .map(|k| -h * h * source(coord(k / m + 1), coord(k % m + 1)))
        .collect();
    let bnorm = dot(&b, &b).sqrt();
    let mut u = vec![0.0; m * m];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut rel = 0.0;

    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; m * m];
        let mut rr = dot(&r, &r);
        let cap = 10 * m * m + 100;
        let sample = |it: usize, u: &[f64], scratch: &mut Vec<f64>| {
            apply(m, u, scratch);
            let res: f64 = b
                .iter()
                .zip(scratch.iter())
                .map(|(b, a)| (b - a).powi(2))
                .sum::<f64>()
                .sqrt();
            let energy = 0.5 * dot(u, scratch) - dot(&b, u);
            CgSample {
                iteration: it,
                true_residual: res,
                energy,
            }
        };
        let mut scratch = vec![0.0; m * m];
        history.push(sample(0, &u, &mut scratch));
        loop {
            rel = rr.sqrt() / bnorm;
            if rel < TOL {
                break;
            }
            if iterations >= cap {
                return Err(Error::Solver(format!(
                    "fd: conjugate gradient stalled after {iterations} iterations, relative residual {rel:e}"
                )));
            }
            apply(m, &p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for k in 0..m * m {
                u[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            iterations += 1;
            if iterations % CHECK_EVERY == 0 {
                let s = sample(iterations, &u, &mut scratch);
                // Replace the drifting recurrence residual with the true one.
                for k in 0..m * m {
                    r[k] = b[k] - scratch[k];
                }
                history.push(s);
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..m * m {
                p[k] = r[k] + beta * p[k];
            }
        }
        history.push(sample(iterations, &u, &mut scratch));
    }

    let mut grid = Array2::zeros((n, n));
    for i in 0..m {
        for j in 0..m {
            grid[[i + 1, j + 1]] = u[i * m + j];
        }
    }
    Ok(FdSolution {
        grid,
        h,
        iterations,
        relative_residual: rel,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::poisson_source;

    fn exact(x: f64, y: f64) -> f64 {
        x * (1.0 - x) * y * (1.0 - y) * (x - y).exp()
    }

    fn max_err(sol: &FdSolution) -> f64 {
        let n = sol.grid.nrows();
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                e = e.max((sol.grid[[i, j]] - exact(i as f64 * sol.h, j as f64 * sol.h)).abs());
            }
        }
        e
    }

    #[test]
    fn zero_source_gives_zero() {
        let sol = fd_poisson_solve(|_, _| 0.0, 10).unwrap();
        assert!(sol.grid.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn operator_is_symmetric() {
        let m = 5;
        let basis = |k: usize| {
            let mut e = vec![0.0; m * m];
            e[k] = 1.0;
            e
        };
        let mut ai = vec![0.0; m * m];
        let mut aj = vec![0.0; m * m];
        for i in 0..m * m {
            apply(m, &basis(i), &mut ai);
            for (j, &aij) in ai.iter().enumerate() {
                apply(m, &basis(j), &mut aj);
                assert_eq!(aij, aj[i]);
            }
        }
    }

    #[test]
    fn second_order_convergence() {
        let f = |x: f64, y: f64| poisson_source(&x, &y);
        let coarse = fd_poisson_solve(f, 17).unwrap();
        let fine = fd_poisson_solve(f, 33).unwrap();
        let ratio = max_err(&coarse) / max_err(&fine);
        assert!((3.2..=4.8).contains(&ratio), "{ratio}");
        assert!(fine.relative_residual < 1e-12);
    }

    #[test]
    fn energy_decreases() {
        let sol = fd_poisson_solve(|x, y| poisson_source(&x, &y), 64).unwrap();
        assert!(sol.history.len() > 2);
        for w in sol.history.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-15, "{w:?}");
        }
    }

    #[test]
    fn tiny_grid_rejected() {
        assert!(fd_poisson_solve(|_, _| 1.0, 2).is_err());
    }
}
