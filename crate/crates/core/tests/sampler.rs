mod common;

use bnngp::analytics::ls_slope;
use bnngp::kernel::{nngp_kernel, sinusoidal_deep_fixed_point};
use bnngp::sampler::*;
use bnngp::{Architecture, Error, Hyperparams, Layer, Matrix, Nonlinearity, RngSeed};
use common::*;

fn hp(v_b: f64, v_w: f64, v_n: f64) -> Hyperparams {
    Hyperparams::new(v_b, v_w, v_n).unwrap()
}

fn e12() -> Matrix {
    Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])
}

fn cov_check(batch: &SampleBatch, (a, i): (usize, usize), (b, j): (usize, usize), want: f64) {
    let prods: Vec<f64> = (0..batch.n_samples).map(|s| batch.get(s, a, i) * batch.get(s, b, j)).collect();
    let (m, se) = mean_se(&prods);
    assert!((m - want).abs() < 3.0 * se, "cov ({a},{i})x({b},{j}): {m} +- {se} vs {want}");
}

fn kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n / (v * v)
}

#[test]
fn finite_network_second_moments_match_kernel() {
    // one hidden layer: the output covariance equals the NNGP kernel at any width
    let x = Matrix::from_rows(&[[0.8, -0.3], [0.1, 1.1]]);
    let h = hp(0.0, 1.0, 0.0);
    let arch = Architecture::new(2, 1, vec![Layer::Bottleneck(10)], Nonlinearity::NormalizedRelu, false).unwrap();
    let batch = sample_bnn_prior(&arch, &h, &x, 100_000, RngSeed(3)).unwrap();
    let k = nngp_kernel(&x, 1, &h, &Nonlinearity::NormalizedRelu).unwrap();
    for (a, b) in [(0, 0), (0, 1), (1, 1)] {
        cov_check(&batch, (a, 0), (b, 0), k[(a, b)]);
    }
}

#[test]
fn samples_do_not_depend_on_thread_count() {
    let x = Matrix::from_rows(&[[0.8, -0.3], [0.1, 1.1], [0.5, 0.5]]);
    let h = hp(0.2, 1.1, 0.01);
    let finite = Architecture::new(2, 2, vec![Layer::Bottleneck(5); 2], Nonlinearity::NormalizedRelu, false).unwrap();
    let bottleneck = Architecture::single_bottleneck(2, 2, 1, 3, 2, Nonlinearity::Sinusoidal, true).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let a = sample_bnn_prior(&finite, &h, &x, 2000, RngSeed(77)).unwrap().values;
            let b = sample_bottleneck_prior(&bottleneck, &h, &x, 2000, RngSeed(77)).unwrap().values;
            (a, b)
        })
    };
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let (a1, b1) = run(1);
    let (a2, b2) = run(2);
    assert_eq!(bits(&a1), bits(&a2));
    assert_eq!(bits(&b1), bits(&b2));
}

#[test]
fn no_bottleneck_prior_is_the_nngp() {
    let x = Matrix::from_rows(&[[0.8, -0.3], [0.1, 1.1]]);
    let h = hp(0.3, 1.2, 0.05);
    let arch = Architecture::wide(2, 2, 2, Nonlinearity::NormalizedRelu).unwrap();
    let batch = sample_bottleneck_prior(&arch, &h, &x, 1_000_000, RngSeed(5)).unwrap();
    let k = nngp_kernel(&x, 2, &h, &Nonlinearity::NormalizedRelu).unwrap().add_diag(h.v_n);
    for (a, b) in [(0, 0), (0, 1), (1, 1)] {
        cov_check(&batch, (a, 0), (b, 0), k[(a, b)]);
        cov_check(&batch, (a, 1), (b, 1), k[(a, b)]);
    }
    cov_check(&batch, (0, 0), (1, 1), 0.0);
    let kt = kurtosis(&batch.series(0, 0));
    assert!((kt - 3.0).abs() < 0.1, "kurtosis {kt}");
}

#[test]
fn bottleneck_outputs_are_uncorrelated_but_heavy_tailed() {
    let x = e12();
    let h = hp(1.0, 1.0, 1e-4);
    let arch = Architecture::single_bottleneck(2, 2, 1, 2, 1, Nonlinearity::NormalizedRelu, true).unwrap();
    let batch = sample_bottleneck_prior(&arch, &h, &x, 1_000_000, RngSeed(6)).unwrap();
    for (a, b) in [(0, 0), (0, 1), (1, 0)] {
        let u = batch.series(a, 0);
        let v = batch.series(b, 1);
        let n = u.len() as f64;
        let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
        let c: f64 = u.iter().zip(&v).map(|(p, q)| (p - mu) * (q - mv)).sum::<f64>();
        let su: f64 = u.iter().map(|p| (p - mu).powi(2)).sum();
        let sv: f64 = v.iter().map(|q| (q - mv).powi(2)).sum();
        let r = c / (su * sv).sqrt();
        assert!(r.abs() < 3.0 / n.sqrt(), "corr {r}");
    }
    assert!(kurtosis(&batch.series(0, 0)) > 3.0);
}

#[test]
fn self_correlation_and_degenerate_batches() {
    let arch = Architecture::wide(2, 1, 1, Nonlinearity::NormalizedRelu).unwrap();
    let batch = sample_bottleneck_prior(&arch, &hp(0.1, 1.0, 0.1), &e12(), 100, RngSeed(1)).unwrap();
    assert_eq!(empirical_quad_corr(&batch, 0, 0, 1, 1).unwrap(), (1.0, 0.0));
    let flat = SampleBatch { values: vec![2.0; 200], ..batch };
    assert!(matches!(empirical_quad_corr(&flat, 0, 0, 0, 1), Err(Error::UndefinedCorrelation(_))));
}

#[test]
fn stationary_post_bottleneck_kernel_has_no_quadratic_correlation() {
    let h = hp(0.5, 1.0, 1e-4);
    let arch = Architecture::single_bottleneck(2, 2, 1, 2, 1, Nonlinearity::Sinusoidal, true).unwrap();
    let r = quad_corr_runs(&arch, &h, &e12(), (0, 1), 100_000, 5, RngSeed(8)).unwrap();
    assert!(r.mean.abs() < 3.0 * r.std_error, "{} +- {}", r.mean, r.std_error);
}

#[test]
fn deep_sinusoidal_output_covariance_forgets_the_width() {
    let h = hp(0.1, 2.0, 0.01);
    let (v, c) = sinusoidal_deep_fixed_point(&h).unwrap();
    for width in [2, 8] {
        let arch = Architecture::single_bottleneck(2, 1, 1, width, 199, Nonlinearity::Sinusoidal, true).unwrap();
        assert_eq!(arch.post_depth(), 200);
        let batch = sample_bottleneck_prior(&arch, &h, &e12(), 100_000, RngSeed(width as u64)).unwrap();
        cov_check(&batch, (0, 0), (0, 0), v + h.v_n);
        cov_check(&batch, (1, 0), (1, 0), v + h.v_n);
        cov_check(&batch, (0, 0), (1, 0), v * c);
    }
}

#[test]
fn multi_bottleneck_trends() {
    let h = hp(1.0, 1.0, 1e-4);
    let x = e12();
    let run = |nb: usize, w: usize| multi_bottleneck_experiment(11, nb, w, &h, &x, 100_000, 4, RngSeed(40 + nb as u64)).unwrap();
    let none = run(0, 2);
    assert!(none.positions.is_empty());
    assert!(none.q_cross.mean.abs() < 3.0 * none.q_cross.std_error.max(1.0 / 100_000f64.sqrt()));
    assert_eq!(run(3, 2).positions, vec![3, 6, 9]);
    assert!(run(1, 256).q_cross.mean < run(1, 2).q_cross.mean);
    for w in [2, 4] {
        let q: Vec<f64> = (1..=3).map(|nb| run(nb, w).q_cross.mean).collect();
        assert!(q[0] < q[1] && q[1] < q[2], "width {w}: {q:?}");
    }
}

#[test]
fn correspondence_ladder_on_twenty_points() {
    let d = rings_subset(6);
    assert_eq!(d.len(), 20);
    let h = hp(0.1, 1.0, 0.01);
    let rows = wide_correspondence_check(1, 1, &[4, 16, 64, 256, 1024], &h, &Nonlinearity::NormalizedRelu, &d.x, &d.y, 200, RngSeed(0)).unwrap();
    let decreasing = rows.windows(2).filter(|w| w[1].abs_gap < w[0].abs_gap).count();
    assert!(decreasing >= 3, "{:?}", rows.iter().map(|r| r.abs_gap).collect::<Vec<_>>());
}

#[test]
fn z_error_follows_root_rate() {
    let d = rings_subset(12);
    let h = hp(0.1, 1.0, 0.01);
    let k = nngp_kernel(&d.x, 1, &h, &Nonlinearity::NormalizedRelu).unwrap();
    let pts: Vec<(f64, f64)> = [16usize, 64, 256, 1024, 4096]
        .iter()
        .map(|&w| {
            let e = z_frobenius_error(&k, w, &Nonlinearity::NormalizedRelu, Z_ERROR_REPS, RngSeed(w as u64)).unwrap();
            ((w as f64).ln(), e.ln())
        })
        .collect();
    let slope = ls_slope(&pts);
    assert!((slope + 0.5).abs() < 0.15, "slope {slope}");
}

#[test]
fn degenerate_identity_architecture_is_rejected() {
    let d = rings_subset(12);
    let r = wide_correspondence_check(0, 0, &[1], &hp(0.1, 1.0, 0.1), &Nonlinearity::identity(), &d.x, &d.y, 10, RngSeed(0));
    assert!(matches!(r, Err(Error::InvalidArchitecture(_))));
}

#[test]
fn run_to_run_spread_is_small() {
    let h = hp(1.0, 1.0, 1e-4);
    let arch = Architecture::single_bottleneck(2, 2, 1, 4, 1, Nonlinearity::NormalizedRelu, true).unwrap();
    let r = quad_corr_runs(&arch, &h, &e12(), (0, 1), 200_000, 5, RngSeed(12)).unwrap();
    // spread scales like 1/sqrt(samples); ~1e-3 at 1e6 samples
    assert!(r.std * (200_000f64 / 1e6).sqrt() < 1e-2 && r.std > 0.0);
}
