use std::f64::consts::PI;

use bnngp::analytics::r_depth;
use bnngp::data::{fmt_num, standardize, Dataset};
use bnngp::kernel::{j1, j2, relu_kernel_step, sinusoidal_kernel_step};
use bnngp::likelihood::logmeanexp;
use bnngp::linalg::cholesky;
use bnngp::{Hyperparams, Matrix};
use proptest::prelude::*;

fn psd(entries: Vec<f64>, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| entries[i * n + k] * entries[j * n + k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 }
    })
}

proptest! {
    #[test]
    fn steps_keep_kernels_symmetric_psd(
        entries in prop::collection::vec(-2.0f64..2.0, 16),
        v_b in 0.0f64..2.0,
        v_w in 0.1f64..3.0,
    ) {
        let k = psd(entries, 4);
        let h = Hyperparams::new(v_b, v_w, 0.0).unwrap();
        for out in [relu_kernel_step(&k, &h).unwrap(), sinusoidal_kernel_step(&k, &h).unwrap()] {
            prop_assert!(out.max_asymmetry() < 1e-12);
            prop_assert!(cholesky(&out).is_ok());
        }
    }

    #[test]
    fn j_functions_decrease(a in 0.0f64..PI, b in 0.0f64..PI) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(j1(lo).unwrap() > j1(hi).unwrap());
        prop_assert!(j2(lo).unwrap() > j2(hi).unwrap());
    }

    #[test]
    fn logmeanexp_shift(xs in prop::collection::vec(-50.0f64..50.0, 1..40), c in -1e3f64..1e3) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let lhs = logmeanexp(&shifted) - c;
        prop_assert!((lhs - logmeanexp(&xs)).abs() < 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn numbers_survive_text(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn standardize_is_idempotent(vals in prop::collection::vec(-1e3f64..1e3, 12)) {
        let x = Matrix::from_vec(6, 2, vals);
        let y = Matrix::from_fn(6, 1, |i, _| i as f64);
        let once = standardize(&Dataset::new(x, y).unwrap()).unwrap();
        let twice = standardize(&once).unwrap();
        for (a, b) in once.x.data().iter().zip(twice.x.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    // r_{D+1} - r_D = (v_b - v_n (v_w - 1)) / v_w^{D+1}
    #[test]
    fn r_depth_monotonicity(v_b in 0.0f64..1.0, v_w in 0.2f64..2.0, v_n in 1e-4f64..1.0, d in 1usize..50) {
        let h = Hyperparams::new(v_b, v_w, v_n).unwrap();
        let margin = v_b - v_n * (v_w - 1.0);
        prop_assume!(margin.abs() > 1e-6);
        prop_assert_eq!(r_depth(&h, d + 1) > r_depth(&h, d), margin > 0.0);
    }
}
