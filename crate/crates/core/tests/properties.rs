use deqgan::autodiff::{jet_lift, Batch, GradientMap, Jet, ParamId, Real, Tape, Var};
use deqgan::io::fmt_f64;
use deqgan::nets::{spectral_normalize, AdamState, Arch, Mlp, SpectralState};
use deqgan::oracles::{read_cache, rk4_solve, write_cache, CacheHeader, IvpSpec};
use deqgan::problems::{adjust_dirichlet_2d, adjust_ic_first_order, adjust_ic_second_order, Mesh, Problem, ProblemKey};
use deqgan::search::SearchSpace;
use deqgan::training::moving_average;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arch() -> impl Strategy<Value = Arch> {
    (2usize..=12, 1usize..=3).prop_map(|(units, layers)| Arch { units, layers })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

/// `tanh(a x + b) · e^{c x} / (1 + x²)` built from jet primitives.
fn composite(x: &Jet<f64>, a: f64, b: f64, c: f64) -> Jet<f64> {
    let num = x.scale(a).add_const(b).tanh().mul(&x.scale(c).exp());
    num.div(&x.square().add_const(1.0))
}

fn net_output<'t>(tape: &'t Tape, g: &Mlp, x: &Array2<f64>) -> Var<'t> {
    let params = g.bind(tape, 0);
    g.forward_values(&params, &tape.constant(x.clone())).unwrap()
}

fn bits(g: &GradientMap) -> Vec<(ParamId, Vec<u64>)> {
    g.iter()
        .map(|(id, a)| (id, a.iter().map(|x| x.to_bits()).collect()))
        .collect()
}

fn top_singular_value(w: &Array2<f64>) -> f64 {
    let mut v = Array2::<f64>::ones((w.ncols(), 1));
    for _ in 0..500 {
        let next = w.t().dot(&w.dot(&v));
        let n = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        v = next / n;
    }
    w.dot(&v).iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jet_derivatives_match_finite_differences(x in -2.0f64..2.0, a in -2.0f64..2.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let j = composite(&jet_lift(&[x], 0).unwrap(), a, b, c);
        let f = |s: f64| composite(&Jet::new(s, vec![], vec![]), a, b, c).value;
        let h = 1e-5;
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let k = 1e-3;
        let d2 = (-f(x + 2.0 * k) + 16.0 * f(x + k) - 30.0 * f(x) + 16.0 * f(x - k) - f(x - 2.0 * k)) / (12.0 * k * k);
        prop_assert!((j.d1[0] - d1).abs() <= 1e-5 * d1.abs().max(1e-3));
        prop_assume!(d2.abs() > 1e-3);
        prop_assert!((j.d2[0] - d2).abs() <= 1e-5 * d2.abs(), "{} vs {}", j.d2[0], d2);
    }

    #[test]
    fn backward_is_linear(seed in any::<u64>(), arch in arch(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = Mlp::new(1, 2, arch, true, seed).unwrap();
        let x = Array2::from_shape_fn((5, 1), |(i, _)| i as f64 * 0.3 - 0.6);
        let grad = |wa: f64, wb: f64| {
            let tape = Tape::new();
            let y = net_output(&tape, &g, &x);
            let l = (y * y).mean() * wa + y.tanh().sum() * wb;
            tape.backward(l).unwrap()
        };
        let (g1, g2, both) = (grad(1.0, 0.0), grad(0.0, 1.0), grad(a, b));
        for (id, v) in both.iter() {
            let expect = g1.get(id).unwrap() * a + g2.get(id).unwrap() * b;
            for (p, q) in v.iter().zip(expect.iter()) {
                prop_assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
            }
        }
    }

    #[test]
    fn repeated_backward_is_bit_identical(seed in any::<u64>(), arch in arch()) {
        let g = Mlp::new(2, 1, arch, false, seed).unwrap();
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64 * 0.25);
        let tape = Tape::new();
        let y = net_output(&tape, &g, &x);
        let l = (y * y).mean();
        prop_assert_eq!(bits(&tape.backward(l).unwrap()), bits(&tape.backward(l).unwrap()));
    }

    #[test]
    fn spectral_normalization_bounds_the_top_singular_value(w in (1usize..8, 1usize..8).prop_flat_map(|(r, c)| matrix(r, c)), seed in any::<u64>()) {
        prop_assume!(top_singular_value(&w) > 1e-3);
        let mut state = SpectralState::random(w.nrows(), &mut ChaCha8Rng::seed_from_u64(seed));
        for _ in 0..200 {
            state.power_iterate(&w);
        }
        let normalized = spectral_normalize(&w, &mut state);
        prop_assert!(top_singular_value(&normalized) <= 1.0 + 1e-3);
    }

    #[test]
    fn zero_weight_residual_stack_is_identity(arch in arch(), first in matrix(12, 2), last in matrix(3, 12), x in matrix(4, 2)) {
        let mut g = Mlp::zeros(2, 3, arch, true).unwrap();
        let n = g.layers().len();
        let (wi, wo) = (first.slice(ndarray::s![..arch.units, ..]).to_owned(), last.slice(ndarray::s![.., ..arch.units]).to_owned());
        g.layers_mut()[0].weight = wi.clone();
        g.layers_mut()[n - 1].weight = wo.clone();
        let y = g.forward_values(&g.constants(), &x).unwrap();
        let expect = x.dot(&wi.t()).dot(&wo.t());
        for (p, q) in y.iter().zip(expect.iter()) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn initialization_is_a_function_of_the_seed(seed in any::<u64>(), arch in arch(), residual in any::<bool>()) {
        let a = Mlp::new(2, 3, arch, residual, seed).unwrap();
        prop_assert_eq!(&a, &Mlp::new(2, 3, arch, residual, seed).unwrap());
        prop_assert_ne!(&a, &Mlp::new(2, 3, arch, residual, seed.wrapping_add(1)).unwrap());
    }

    #[test]
    fn adam_ascent_on_loss_equals_descent_on_negated_loss(p in matrix(3, 2), grads in prop::collection::vec(matrix(3, 2), 1..6), lr in 1e-4f64..1e-1) {
        let (mut up, mut down) = (p.clone(), p);
        let (mut a, mut d) = (AdamState::new(lr, 0.9, 0.999, 1e-8), AdamState::new(lr, 0.9, 0.999, 1e-8));
        for g in &grads {
            let neg = -g;
            a.step(&mut [&mut up], &[(ParamId(0), g)], true).unwrap();
            d.step(&mut [&mut down], &[(ParamId(0), &neg)], false).unwrap();
        }
        prop_assert_eq!(up, down);
    }

    #[test]
    fn transforms_meet_conditions_for_any_psi(v in -1e3f64..1e3, d1 in -1e3f64..1e3, d2 in -1e3f64..1e3, t0 in -2.0f64..2.0, x0 in -5.0f64..5.0, v0 in -5.0f64..5.0, s in 0.0f64..=1.0) {
        let t = jet_lift(&[t0], 0).unwrap();
        let psi = Jet::new(v, vec![d1], vec![d2]);
        prop_assert!((adjust_ic_first_order(&psi, &t, t0, x0).value - x0).abs() <= 1e-14 * (1.0 + x0.abs()));
        let u = adjust_ic_second_order(&psi, &t, t0, x0, v0);
        prop_assert!((u.value - x0).abs() <= 1e-14 * (1.0 + x0.abs()));
        prop_assert!((u.d1[0] - v0).abs() <= 1e-14 * (1.0 + v0.abs()));
        let psi2 = Jet::new(v, vec![d1, d2], vec![d2, d1]);
        for p in [[0.0, s], [1.0, s], [s, 0.0], [s, 1.0]] {
            let (x, y) = (jet_lift(&p, 0).unwrap(), jet_lift(&p, 1).unwrap());
            prop_assert!(adjust_dirichlet_2d(&psi2, &x, &y).value.abs() <= 1e-14);
        }
    }

    #[test]
    fn cache_round_trip_is_exact(data in (2usize..20, 1usize..4).prop_flat_map(|(r, c)| matrix(r, c))) {
        let dir = tempfile::tempdir().unwrap();
        let problem = Problem::preset(ProblemKey::Sir);
        let mesh = Mesh::uniform(&[(0.0, 1.0)], &[data.nrows()]).unwrap();
        let header = CacheHeader::new(&problem, "rk45", 1e-10, &mesh);
        let path = header.path_in(dir.path());
        write_cache(&path, &header, &data).unwrap();
        let (_, back) = read_cache(&path, &header).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn moving_average_of_a_constant_is_constant(c in -1e6f64..1e6, n in 1usize..200, window in 1usize..80) {
        let out = moving_average(&vec![c; n], window);
        prop_assert_eq!(out.len(), n);
        prop_assert!(out.iter().all(|x| (x - c).abs() <= 1e-9 * (1.0 + c.abs())));
    }

    #[test]
    fn moving_average_with_unit_window_is_identity(series in prop::collection::vec(-1e3f64..1e3, 0..100)) {
        prop_assert_eq!(moving_average(&series, 1), series);
    }

    #[test]
    fn search_sampling_is_deterministic(master in any::<u64>(), trial in 0u64..10_000) {
        let space = SearchSpace::stability_study();
        let c = space.sample(master, trial);
        prop_assert_eq!(&c, &space.sample(master, trial));
        prop_assert!(space.seeds.contains(&c.seed));
        prop_assert!((1e-6..=1e-2).contains(&c.g_adam.lr) && (1e-6..=1e-2).contains(&c.d_adam.lr));
    }

    #[test]
    fn rk4_is_exact_on_cubics(n in 1usize..60, t_end in 0.1f64..3.0) {
        let spec = IvpSpec::new(|t, _| vec![3.0 * t * t], vec![0.0], (0.0, t_end));
        let tr = rk4_solve(&spec, n).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            prop_assert!((x[0] - t.powi(3)).abs() <= 1e-12 * (1.0 + t.powi(3)));
        }
    }

    #[test]
    fn float_formatting_round_trips(x in any::<f64>()) {
        let back: f64 = fmt_f64(x).parse().unwrap();
        prop_assert!(back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()));
    }

    #[test]
    fn huber_is_half_square_inside_delta(r in -1.0f64..1.0, delta in 1.0f64..5.0) {
        let tape = Tape::new();
        let v = tape.constant(Array2::from_elem((1, 1), r)).huber(delta);
        prop_assert!((v.item() - 0.5 * r * r).abs() <= 1e-15);
    }

    #[test]
    fn mesh_spacing_is_endpoint_inclusive(a in -5.0f64..5.0, len in 0.1f64..10.0, m in 2usize..500) {
        let mesh = Mesh::uniform(&[(a, a + len)], &[m]).unwrap();
        prop_assert!((mesh.spacing(0) - len / (m - 1) as f64).abs() <= 1e-12 * len);
        prop_assert_eq!(mesh.points()[[m - 1, 0]], a + len);
    }
}

#[test]
fn matmul_shapes_follow_layer_convention() {
    let tape = Tape::new();
    let x = tape.constant(Array2::ones((4, 3)));
    let w = tape.constant(Array2::ones((2, 3)));
    assert_eq!(x.matmul_t(&w).shape(), (4, 2));
}
