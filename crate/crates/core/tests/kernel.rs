mod common;

use std::f64::consts::PI;

use bnngp::kernel::{
    generic_kernel_step, j1, j1_inverse, j2, j2_inverse, linear_kernel, nngp_kernel, propagate, relu_kernel_backstep,
    relu_kernel_step, sinusoidal_deep_fixed_point, sinusoidal_kernel_step, DEFAULT_QUAD_ORDER,
};
use bnngp::linalg::cholesky;
use bnngp::{Error, Hyperparams, Matrix, Nonlinearity};
use common::*;

fn hp(v_b: f64, v_w: f64) -> Hyperparams {
    Hyperparams::new(v_b, v_w, 0.0).unwrap()
}

fn max_rel(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() / y.abs().max(1e-300)).fold(0.0, f64::max)
}

#[test]
fn linear_kernel_matches_sampled_first_layer() {
    let mut g = normals(11);
    let x = g.matrix(4, 3);
    let h = hp(0.3, 1.7);
    let k = linear_kernel(&x, &h).unwrap();
    let (sb, sw) = (h.v_b.sqrt(), h.v_w.sqrt());
    let mut acc = vec![Moments::default(); 16];
    let mut w = [0.0; 3];
    for _ in 0..10_000_000 / 4 {
        g.fill(&mut w);
        let b = sb * g.normal();
        let f: Vec<f64> = (0..4).map(|i| b + sw * (0..3).map(|j| w[j] * x[(i, j)]).sum::<f64>()).collect();
        for a in 0..4 {
            for c in a..4 {
                acc[a * 4 + c].push(f[a] * f[c]);
            }
        }
    }
    for a in 0..4 {
        for c in a..4 {
            let m = acc[a * 4 + c];
            assert!((m.mean() - k[(a, c)]).abs() < 3.0 * m.se(), "{a}{c}: {} vs {}", m.mean(), k[(a, c)]);
        }
    }
}

#[test]
fn j_inverses_round_trip() {
    for i in 0..=50 {
        let t = PI * i as f64 / 50.0;
        let (y1, y2) = (j1(t).unwrap(), j2(t).unwrap());
        let (t1, t2) = (j1_inverse(y1).unwrap(), j2_inverse(y2).unwrap());
        assert!((j1(t1).unwrap() - y1).abs() < 1e-12 && (j2(t2).unwrap() - y2).abs() < 1e-12);
        // both functions are flat at the endpoints, so angles are only sharp inside
        if (5..=45).contains(&i) {
            assert!((t1 - t).abs() < 1e-9 && (t2 - t).abs() < 1e-9);
        }
    }
    assert!(matches!(j1_inverse(4.0), Err(Error::NotInImage(_))));
}

#[test]
fn relu_step_against_quadrature_and_sampling() {
    let mut g = normals(5);
    let k = random_psd(3, &mut g);
    let h = hp(0.0, 1.0);
    let closed = relu_kernel_step(&k, &h).unwrap();
    let quad = generic_kernel_step(&k, &h, &Nonlinearity::NormalizedRelu, DEFAULT_QUAD_ORDER).unwrap();
    assert!(closed.data().iter().zip(quad.data()).all(|(a, b)| (a - b).abs() < 1e-10));
    for (a, b, m, se) in mc_second_moments(&k, relu, 10_000_000, 6) {
        assert!((m - closed[(a, b)]).abs() < 3.0 * se, "({a},{b}) {m} vs {}", closed[(a, b)]);
    }
}

#[test]
fn sinusoidal_step_against_sampling() {
    let mut g = normals(7);
    let k = random_psd(3, &mut g);
    let h = hp(0.0, 1.0);
    let closed = sinusoidal_kernel_step(&k, &h).unwrap();
    for (a, b, m, se) in mc_second_moments(&k, sinusoid, 10_000_000, 8) {
        assert!((m - closed[(a, b)]).abs() < 3.0 * se, "({a},{b}) {m} vs {}", closed[(a, b)]);
    }
    let h = hp(0.4, 2.5);
    let out = sinusoidal_kernel_step(&k, &h).unwrap();
    assert!(out.diag().iter().all(|&d| d == 2.9));
}

#[test]
fn steps_preserve_symmetry_and_psd() {
    let mut g = normals(13);
    let h = hp(0.2, 1.3);
    for _ in 0..100 {
        let k = random_psd(5, &mut g);
        for out in [
            relu_kernel_step(&k, &h).unwrap(),
            sinusoidal_kernel_step(&k, &h).unwrap(),
            generic_kernel_step(&k, &h, &Nonlinearity::tanh(), 20).unwrap(),
        ] {
            assert!(out.max_asymmetry() < 1e-12);
            let c = cholesky(&out).unwrap();
            assert!(c.jitter <= 1e-8 * out.mean_diag());
        }
        // ReLU outputs never drop below v_b
        assert!(relu_kernel_step(&k, &h).unwrap().data().iter().all(|&v| v >= h.v_b));
    }
}

#[test]
fn backstep_round_trip() {
    let mut g = normals(17);
    let h = hp(0.1, 1.4);
    for _ in 0..100 {
        let k0 = random_psd(4, &mut g);
        let back = relu_kernel_backstep(&relu_kernel_step(&k0, &h).unwrap(), &h).unwrap();
        assert!(max_rel(&back, &k0) < 1e-9);
    }
}

#[test]
fn depth_zero_and_identical_inputs() {
    let x = Matrix::from_rows(&[[0.3, -1.2], [0.3, -1.2]]);
    let h = hp(0.1, 0.8);
    assert_eq!(nngp_kernel(&x, 0, &h, &Nonlinearity::NormalizedRelu).unwrap(), linear_kernel(&x, &h).unwrap());
    let k = nngp_kernel(&x, 3, &h, &Nonlinearity::NormalizedRelu).unwrap();
    let mut c = 0.1 + 0.8 * (0.09 + 1.44);
    for _ in 0..3 {
        c = 0.1 + 0.8 * c;
    }
    assert!((k[(0, 0)] - c).abs() < 1e-14 && (k[(0, 1)] - c).abs() < 1e-12);
}

#[test]
fn one_sinusoidal_layer_is_rbf() {
    let mut g = normals(19);
    let h = hp(0.3, 0.7);
    let x = g.matrix(6, 3);
    let k = nngp_kernel(&x, 1, &h, &Nonlinearity::Sinusoidal).unwrap();
    for a in 0..6 {
        for b in 0..6 {
            let d2: f64 = (0..3).map(|j| (x[(a, j)] - x[(b, j)]).powi(2)).sum();
            assert!((k[(a, b)] - (0.3 + 0.7 * (-0.35 * d2).exp())).abs() < 1e-12);
        }
    }
}

#[test]
fn relu_deep_degeneracy_below_one() {
    let mut g = normals(23);
    let k0 = random_psd(4, &mut g);
    let k = propagate(k0, 200, &hp(0.05, 0.9), &Nonlinearity::NormalizedRelu).unwrap();
    for a in 0..4 {
        for b in 0..4 {
            let rho = k[(a, b)] / (k[(a, a)] * k[(b, b)]).sqrt();
            assert!((rho - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn sinusoidal_iteration_reaches_fixed_point() {
    let mut g = normals(29);
    for v_w in [0.5, 2.0] {
        let h = hp(0.2, v_w);
        let (v, c) = sinusoidal_deep_fixed_point(&h).unwrap();
        let k = propagate(random_psd(3, &mut g), 500, &h, &Nonlinearity::Sinusoidal).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { v } else { v * c };
                assert!((k[(a, b)] - want).abs() < 1e-8, "v_w {v_w}: {} vs {want}", k[(a, b)]);
            }
        }
    }
}

#[test]
fn fixed_point_solves_transcendental_equation() {
    // independent bisection of c = exp(2(c - 1)) on (0, 1)
    let (mut lo, mut hi) = (0.0f64, 0.6);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (2.0 * (mid - 1.0)).exp() - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (v, c) = sinusoidal_deep_fixed_point(&hp(0.0, 2.0)).unwrap();
    assert_eq!(v, 2.0);
    assert!((c - lo).abs() < 1e-10);
}

#[test]
fn degenerate_diagonal_is_rejected() {
    let k = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
    assert!(matches!(relu_kernel_step(&k, &hp(0.0, 1.0)), Err(Error::DegenerateKernel(_))));
    let nan = Matrix::from_rows(&[[f64::NAN]]);
    assert!(matches!(sinusoidal_kernel_step(&nan, &hp(0.0, 1.0)), Err(Error::InvalidInput(_))));
}
