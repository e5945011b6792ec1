//! Reparameterizations that make a raw network output satisfy initial or
//! boundary conditions exactly.

use crate::autodiff::{Jet, Real};

/// `x0 + (1 − e^{−(t−t0)})·ψ`; equals `x0` at `t = t0` for any `ψ`.
pub fn adjust_ic_first_order<T: Real>(psi: &Jet<T>, t: &Jet<T>, t0: f64, x0: f64) -> Jet<T> {
    t.decay_factor(t0).mul(psi).add_const(x0)
}

/// `x0 + v0·e + e²·ψ` with `e = 1 − e^{−(t−t0)}`; value `x0` and slope `v0`
/// at `t = t0`.
pub fn adjust_ic_second_order<T: Real>(psi: &Jet<T>, t: &Jet<T>, t0: f64, x0: f64, v0: f64) -> Jet<T> {
    let e = t.decay_factor(t0);
    e.square().mul(psi).add(&e.scale(v0)).add_const(x0)
}

/// `x(1−x)·y(1−y)·ψ`; vanishes on the boundary of the unit square.
pub fn adjust_dirichlet_2d<T: Real>(psi: &Jet<T>, x: &Jet<T>, y: &Jet<T>) -> Jet<T> {
    let bx = x.mul(&x.neg().add_const(1.0));
    let by = y.mul(&y.neg().add_const(1.0));
    bx.mul(&by).mul(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::jet_lift;

    #[test]
    fn first_order_holds_at_t0() {
        let t = jet_lift(&[0.0], 0).unwrap();
        let psi = Jet::new(-3.7, vec![12.0], vec![0.4]);
        assert_eq!(adjust_ic_first_order(&psi, &t, 0.0, 1.0).value, 1.0);
    }

    #[test]
    fn exp_with_zero_network() {
        for &tv in &[0.0, 2.0, 9.5] {
            let t = jet_lift(&[tv], 0).unwrap();
            let phi = adjust_ic_first_order(&t.const_like(0.0), &t, 0.0, 1.0);
            assert_eq!(phi.value, 1.0);
            assert_eq!(phi.d1[0] + phi.value, 1.0);
        }
    }

    #[test]
    fn first_order_derivative_matches_finite_differences() {
        // ψ(t) = sin t, bounded.
        let f = |t: f64| 1.0 + (1.0 - (-t).exp()) * t.sin();
        let tv = 6.0;
        let t = jet_lift(&[tv], 0).unwrap();
        let phi = adjust_ic_first_order(&t.sin(), &t, 0.0, 1.0);
        let h = 1e-5;
        let fd = (f(tv + h) - f(tv - h)) / (2.0 * h);
        assert!((phi.d1[0] - fd).abs() / fd.abs() < 1e-6);
        assert!((phi.value - (1.0 + tv.sin())).abs() < 0.01);
    }

    #[test]
    fn second_order_sho_with_zero_network() {
        let t = jet_lift(&[0.0], 0).unwrap();
        let phi = adjust_ic_second_order(&t.const_like(0.0), &t, 0.0, 0.0, 1.0);
        assert_eq!(phi.value, 0.0);
        assert_eq!(phi.d1[0], 1.0);
        let t = jet_lift(&[1.3], 0).unwrap();
        let phi = adjust_ic_second_order(&t.const_like(0.0), &t, 0.0, 0.0, 1.0);
        assert!((phi.value - (1.0 - (-1.3f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_vanishes_on_edges() {
        let psi = Jet::new(5.0, vec![1.0, -2.0], vec![3.0, 4.0]);
        for (xv, yv) in [(0.0, 0.3), (1.0, 0.3), (0.3, 0.0), (0.3, 1.0)] {
            let x = jet_lift(&[xv, yv], 0).unwrap();
            let y = jet_lift(&[xv, yv], 1).unwrap();
            assert_eq!(adjust_dirichlet_2d(&psi, &x, &y).value, 0.0);
        }
    }

    #[test]
    fn dirichlet_of_exponential_is_the_poisson_solution() {
        let (xv, yv) = (0.3, 0.8);
        let x = jet_lift(&[xv, yv], 0).unwrap();
        let y = jet_lift(&[xv, yv], 1).unwrap();
        let psi = x.sub(&y).exp();
        let u = adjust_dirichlet_2d(&psi, &x, &y);
        let exact = xv * (1.0 - xv) * yv * (1.0 - yv) * (xv - yv).exp();
        assert!((u.value - exact).abs() < 1e-16);
    }
}
