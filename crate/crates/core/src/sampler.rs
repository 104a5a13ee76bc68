//! Seeded prior samplers and empirical quadratic correlations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{self, Architecture, Hyperparams, Layer, Nonlinearity};
use crate::likelihood;
use crate::linalg::{self, Matrix};
use crate::rng::{NormalStream, RngSeed};
use crate::scalar::Scalar;

/// `S x N x L` prior draws.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub n_samples: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub arch: Architecture,
    pub h: Hyperparams,
    pub seed: RngSeed,
}

impl SampleBatch {
    #[inline]
    pub fn get(&self, s: usize, input: usize, output: usize) -> f64 {
        self.values[(s * self.n_inputs + input) * self.n_outputs + output]
    }

    /// All draws of output `output` at input `input`.
    pub fn series(&self, input: usize, output: usize) -> Vec<f64> {
        (0..self.n_samples).map(|s| self.get(s, input, output)).collect()
    }
}

fn check_inputs(arch: &Architecture, x: &Matrix<f64>, n_samples: usize) -> Result<()> {
    arch.validate()?;
    if x.rows() == 0 || x.cols() != arch.input_dim {
        return Err(Error::InvalidInput(format!(
            "X is {}x{} but the architecture expects {} input columns",
            x.rows(),
            x.cols(),
            arch.input_dim
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be at least 1".into()));
    }
    Ok(())
}

/// Sample `n_samples` in parallel, one child stream per index, and
/// concatenate in index order.
fn collect_samples(
    n_samples: usize,
    seed: RngSeed,
    per_sample: usize,
    draw: impl Fn(&mut NormalStream) -> Result<Vec<f64>> + Sync,
) -> Result<Vec<f64>> {
    let chunks: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| draw(&mut seed.child(s).normals()))
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(n_samples * per_sample);
    for c in chunks {
        values.extend(c);
    }
    Ok(values)
}

/// Draws from the prior of a finite network: every layer must be a
/// `Bottleneck(width)`. Weights into layer `mu` have variance
/// `v_w / H_{mu-1}` with `H_0 = 1`; biases have variance `v_b`.
pub fn sample_bnn_prior(
    arch: &Architecture,
    h: &Hyperparams,
    x: &Matrix<f64>,
    n_samples: usize,
    seed: RngSeed,
) -> Result<SampleBatch> {
    check_inputs(arch, x, n_samples)?;
    let mut widths = Vec::with_capacity(arch.layers.len() + 1);
    for l in &arch.layers {
        match l {
            Layer::Bottleneck(w) => widths.push(*w),
            Layer::Wide => {
                return Err(Error::InvalidArchitecture("finite-network sampling needs explicit widths".into()))
            }
        }
    }
    widths.push(arch.output_dim);
    let (n, m) = (x.rows(), x.cols());
    let (sb, phi) = (h.v_b.sqrt(), &arch.nonlinearity);
    let values = collect_samples(n_samples, seed, n * arch.output_dim, |g| {
        let mut fan_in = m;
        let mut act = x.clone();
        for (mu, &w) in widths.iter().enumerate() {
            let prev = if mu == 0 { 1 } else { fan_in };
            let sw = (h.v_w / prev as f64).sqrt();
            let mut weights = g.matrix(fan_in, w);
            weights.data_mut().iter_mut().for_each(|v| *v *= sw);
            let bias: Vec<f64> = (0..w).map(|_| sb * g.normal()).collect();
            if mu > 0 {
                act = act.map(|v| phi.eval(v));
            }
            let mut pre = linalg::matmul(&act, &weights);
            for i in 0..n {
                for j in 0..w {
                    pre[(i, j)] += bias[j];
                }
            }
            act = pre;
            fan_in = w;
        }
        Ok(act.data().to_vec())
    })?;
    Ok(SampleBatch {
        values,
        n_samples,
        n_inputs: n,
        n_outputs: arch.output_dim,
        arch: arch.clone(),
        h: *h,
        seed,
    })
}

/// Draw `cols` IID columns of `N(0, L L^T)`.
fn draw_gaussian(l: &Matrix<f64>, cols: usize, g: &mut NormalStream) -> Matrix<f64> {
    linalg::matmul(l, &g.matrix(l.rows(), cols))
}

/// Draws from a bottleneck NNGP prior. Wide segments are sampled exactly as
/// GPs; each bottleneck layer gets IID neurons from the segment kernel,
/// activations scaled by `1/sqrt(H)`. Output channels get `v_n` noise.
pub fn sample_bottleneck_prior(
    arch: &Architecture,
    h: &Hyperparams,
    x: &Matrix<f64>,
    n_samples: usize,
    seed: RngSeed,
) -> Result<SampleBatch> {
    check_inputs(arch, x, n_samples)?;
    let (segments, trailing) = arch.segments();
    let phi = &arch.nonlinearity;
    let n = x.rows();
    let bn_noise = if arch.bottleneck_noise { h.v_n } else { 0.0 };
    // the first segment only sees the fixed inputs
    let first_kernel = match segments.first() {
        Some(&(run, _)) => kernel::nngp_kernel(x, run, h, phi)?.add_diag(bn_noise),
        None => kernel::nngp_kernel(x, trailing, h, phi)?.add_diag(h.v_n),
    };
    let first_chol = linalg::cholesky(&first_kernel)?.l;
    let values = collect_samples(n_samples, seed, n * arch.output_dim, |g| {
        let mut rep: Option<Matrix<f64>> = None;
        for &(run, width) in &segments {
            let chol = match &rep {
                None => first_chol.clone(),
                Some(z) => linalg::cholesky(&kernel::nngp_kernel(z, run, h, phi)?.add_diag(bn_noise))?.l,
            };
            let scale = 1.0 / (width as f64).sqrt();
            rep = Some(draw_gaussian(&chol, width, g).map(|v| phi.eval(v) * scale));
        }
        let chol = match &rep {
            None => first_chol.clone(),
            Some(z) => linalg::cholesky(&kernel::nngp_kernel(z, trailing, h, phi)?.add_diag(h.v_n))?.l,
        };
        Ok(draw_gaussian(&chol, arch.output_dim, g).data().to_vec())
    })?;
    Ok(SampleBatch {
        values,
        n_samples,
        n_inputs: n,
        n_outputs: arch.output_dim,
        arch: arch.clone(),
        h: *h,
        seed,
    })
}

fn pearson(u: &[f64], v: &[f64]) -> Result<f64> {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu <= 0.0 || svv <= 0.0 {
        return Err(Error::UndefinedCorrelation("zero sample variance".into()));
    }
    Ok(suv / (suu * svv).sqrt())
}

/// Sample Pearson correlation of `F_i(x_a)^2` and `F_j(x_b)^2`, with a
/// batch-means standard error over 10 contiguous batches.
pub fn empirical_quad_corr(
    samples: &SampleBatch,
    out_i: usize,
    out_j: usize,
    in_a: usize,
    in_b: usize,
) -> Result<(f64, f64)> {
    if samples.n_samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    if out_i >= samples.n_outputs || out_j >= samples.n_outputs || in_a >= samples.n_inputs || in_b >= samples.n_inputs {
        return Err(Error::InvalidInput("output or input index out of range".into()));
    }
    let u: Vec<f64> = samples.series(in_a, out_i).iter().map(|v| v * v).collect();
    let v: Vec<f64> = samples.series(in_b, out_j).iter().map(|v| v * v).collect();
    if out_i == out_j && in_a == in_b {
        pearson(&u, &u)?;
        return Ok((1.0, 0.0));
    }
    let est = pearson(&u, &v)?;
    let batches = 10;
    let len = u.len() / batches;
    if len < 2 {
        return Ok((est, f64::NAN));
    }
    let parts: Vec<f64> = (0..batches)
        .filter_map(|b| pearson(&u[b * len..(b + 1) * len], &v[b * len..(b + 1) * len]).ok())
        .collect();
    Ok((est, mean_sd(&parts).1 / (parts.len() as f64).sqrt()))
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Summary of an estimate repeated over independent runs.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub runs: Vec<f64>,
    pub mean: f64,
    /// Run-to-run standard deviation.
    pub std: f64,
    /// Standard error of the mean, `std / sqrt(runs)`.
    pub std_error: f64,
}

impl RunSummary {
    pub fn from_runs(runs: Vec<f64>) -> Self {
        let (mean, std) = mean_sd(&runs);
        let std_error = std / (runs.len() as f64).sqrt();
        RunSummary { runs, mean, std, std_error }
    }
}

/// Between-output quadratic correlation `q^x_ab` of outputs 0 and 1 over
/// `n_runs` independent bottleneck-prior simulations.
pub fn quad_corr_runs(
    arch: &Architecture,
    h: &Hyperparams,
    x: &Matrix<f64>,
    (in_a, in_b): (usize, usize),
    n_samples: usize,
    n_runs: usize,
    seed: RngSeed,
) -> Result<RunSummary> {
    if arch.output_dim < 2 {
        return Err(Error::InvalidArchitecture("between-output correlation needs two outputs".into()));
    }
    let runs = (0..n_runs as u64)
        .map(|r| {
            let batch = sample_bottleneck_prior(arch, h, x, n_samples, seed.child(r))?;
            Ok(empirical_quad_corr(&batch, 0, 1, in_a, in_b)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary::from_runs(runs))
}

/// Equally spaced bottleneck positions among layers `1..=total_hidden`.
pub fn bottleneck_positions(total_hidden: usize, n_bottlenecks: usize) -> Vec<usize> {
    (1..=n_bottlenecks)
        .map(|k| ((k * (total_hidden + 1)) as f64 / (n_bottlenecks + 1) as f64).round() as usize)
        .collect()
}

#[derive(Clone, Debug)]
pub struct MultiBottleneckRow {
    pub width: usize,
    pub n_bottlenecks: usize,
    pub positions: Vec<usize>,
    pub q_cross: RunSummary,
}

/// `q^x_12` of a ReLU network with `total_hidden` hidden layers, of which
/// `n_bottlenecks` equally spaced ones have width `width`. Bottleneck
/// preactivations include the `v_n` noise.
#[allow(clippy::too_many_arguments)]
pub fn multi_bottleneck_experiment(
    total_hidden: usize,
    n_bottlenecks: usize,
    width: usize,
    h: &Hyperparams,
    x: &Matrix<f64>,
    n_samples: usize,
    n_runs: usize,
    seed: RngSeed,
) -> Result<MultiBottleneckRow> {
    if n_bottlenecks > total_hidden || x.rows() < 2 {
        return Err(Error::InvalidInput("need n_bottlenecks <= total_hidden and two inputs".into()));
    }
    let positions = bottleneck_positions(total_hidden, n_bottlenecks);
    let layers = (1..=total_hidden)
        .map(|l| if positions.contains(&l) { Layer::Bottleneck(width) } else { Layer::Wide })
        .collect();
    let arch = Architecture::new(x.cols(), 2, layers, Nonlinearity::NormalizedRelu, true)?;
    let q_cross = quad_corr_runs(&arch, h, x, (0, 1), n_samples, n_runs, seed)?;
    Ok(MultiBottleneckRow { width, n_bottlenecks, positions, q_cross })
}

#[derive(Clone, Debug)]
pub struct CorrespondenceRow {
    pub width: usize,
    pub mll: f64,
    pub mll_std_error: f64,
    pub mll_limit: f64,
    pub abs_gap: f64,
    /// RMS Frobenius distance between `Z_H` and its expectation.
    pub z_error: f64,
}

/// Number of independent `Z_H` draws averaged in the Frobenius error.
pub const Z_ERROR_REPS: usize = 16;

/// RMS over `reps` draws of `|| Z_H - E[phi(h) phi(h)^T] ||_F` for
/// `h ~ N(0, k_pre)`.
pub fn z_frobenius_error(k_pre: &Matrix<f64>, width: usize, phi: &Nonlinearity, reps: usize, seed: RngSeed) -> Result<f64> {
    let unit = Hyperparams { v_b: 0.0, v_w: 1.0, v_n: 0.0 };
    let expect = kernel::kernel_step(k_pre, &unit, phi)?;
    let chol = linalg::cholesky(k_pre)?.l;
    let errs: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let e = seed.child(r).normals().matrix(k_pre.rows(), width);
            let z = f64::bottleneck_gram(&chol, &e, phi);
            z.data().iter().zip(expect.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .collect();
    Ok((errs.iter().sum::<f64>() / reps as f64).sqrt())
}

/// Compare the Monte-Carlo MLL of width-`H` bottlenecks with the MLL of the
/// NNGP of depth `d1 + d2 + 1` they converge to.
#[allow(clippy::too_many_arguments)]
pub fn wide_correspondence_check(
    d1: usize,
    d2: usize,
    widths: &[usize],
    h: &Hyperparams,
    phi: &Nonlinearity,
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    n_mc: usize,
    seed: RngSeed,
) -> Result<Vec<CorrespondenceRow>> {
    if !(h.v_n > 0.0) {
        return Err(Error::InvalidInput("the correspondence check needs v_n > 0".into()));
    }
    for &w in widths {
        Architecture::single_bottleneck(x.cols(), y.cols(), d1, w, d2, phi.clone(), false)?;
    }
    let limit = likelihood::mll_no_bottleneck(x, y, d1 + d2 + 1, h, phi)?;
    let k_pre = kernel::nngp_kernel(x, d1, h, phi)?;
    widths
        .iter()
        .map(|&w| {
            let cell = seed.child(w as u64);
            let est = likelihood::mll_single_bottleneck(x, y, d1, w, d2, h, phi, n_mc, cell)?;
            let z_error = z_frobenius_error(&k_pre, w, phi, Z_ERROR_REPS, cell.child(u64::MAX))?;
            Ok(CorrespondenceRow {
                width: w,
                mll: est.value,
                mll_std_error: est.std_error,
                mll_limit: limit,
                abs_gap: (est.value - limit).abs(),
                z_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_match_equal_spacing() {
        assert_eq!(bottleneck_positions(11, 1), vec![6]);
        assert_eq!(bottleneck_positions(11, 2), vec![4, 8]);
        assert_eq!(bottleneck_positions(11, 3), vec![3, 6, 9]);
        assert!(bottleneck_positions(11, 0).is_empty());
    }

    #[test]
    fn zero_variance_prior_is_zero() {
        let arch = Architecture::new(2, 1, vec![Layer::Bottleneck(1); 2], Nonlinearity::NormalizedRelu, false).unwrap();
        let h = Hyperparams { v_b: 0.0, v_w: 1e-300, v_n: 0.0 };
        let x = Matrix::from_rows(&[[1.0, 2.0]]);
        let b = sample_bnn_prior(&arch, &h, &x, 5, RngSeed(1)).unwrap();
        assert!(b.values.iter().all(|v| v.abs() < 1e-140));
    }

    #[test]
    fn constant_samples_are_undefined_and_self_is_one() {
        let arch = Architecture::wide(1, 2, 0, Nonlinearity::NormalizedRelu).unwrap();
        let h = Hyperparams { v_b: 1.0, v_w: 1.0, v_n: 0.1 };
        let batch = SampleBatch {
            values: vec![1.0; 40],
            n_samples: 20,
            n_inputs: 1,
            n_outputs: 2,
            arch,
            h,
            seed: RngSeed(0),
        };
        assert!(matches!(empirical_quad_corr(&batch, 0, 1, 0, 0), Err(Error::UndefinedCorrelation(_))));
        let mut b2 = batch.clone();
        b2.values = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(empirical_quad_corr(&b2, 1, 1, 0, 0).unwrap().0, 1.0);
    }
}
