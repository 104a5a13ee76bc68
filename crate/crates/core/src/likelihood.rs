//! Monte-Carlo marginal likelihood of single-bottleneck NNGPs and
//! hyperparameter optimization.

use std::f64::consts::PI;

use num_traits::Float;
use rayon::prelude::*;

use crate::dual::Grad3;
use crate::error::{Error, Result};
use crate::kernel::{self, Hyperparams, KernelMatrix, Nonlinearity};
use crate::linalg::{self, Matrix};
use crate::rng::RngSeed;
use crate::scalar::Scalar;

/// `log N(y; 0, K + v_n I)`.
pub fn gaussian_logpdf<T: Scalar>(y: &[f64], k: &KernelMatrix<T>, v_n: T) -> Result<T> {
    Ok(channel_logpdfs(&[y], k, v_n)?[0])
}

/// Log densities of several target vectors sharing one covariance.
fn channel_logpdfs<T: Scalar>(ys: &[&[f64]], k: &KernelMatrix<T>, v_n: T) -> Result<Vec<T>> {
    let n = k.rows();
    let chol = linalg::cholesky(&k.add_diag(v_n))?;
    let norm = chol.log_det() + T::lit(n as f64 * (2.0 * PI).ln());
    ys.iter()
        .map(|y| {
            if y.len() != n {
                return Err(Error::InvalidInput(format!("target length {} != kernel size {n}", y.len())));
            }
            let yt: Vec<T> = y.iter().map(|&v| T::lit(v)).collect();
            let alpha = chol.forward_solve(&yt);
            let quad: T = alpha.iter().map(|&a| a * a).sum();
            Ok(T::lit(-0.5) * (quad + norm))
        })
        .collect()
}

fn target_columns(y: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..y.cols()).map(|j| y.col(j)).collect()
}

/// Sum over output channels of the log density under one kernel.
fn sum_channels<T: Scalar>(cols: &[Vec<f64>], k: &KernelMatrix<T>, v_n: T) -> Result<T> {
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    Ok(channel_logpdfs(&refs, k, v_n)?.into_iter().sum())
}

fn check_data(x: &Matrix<f64>, y: &Matrix<f64>) -> Result<()> {
    if x.rows() == 0 || x.rows() != y.rows() || y.cols() == 0 {
        return Err(Error::InvalidInput(format!(
            "X is {}x{}, Y is {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    Ok(())
}

/// Exact MLL of an NNGP with `depth` hidden layers.
pub fn mll_no_bottleneck<T: Scalar>(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    depth: usize,
    h: &Hyperparams<T>,
    phi: &Nonlinearity,
) -> Result<T> {
    check_data(x, y)?;
    let k = kernel::nngp_kernel(&x.cast::<T>(), depth, h, phi)?;
    sum_channels(&target_columns(y), &k, h.v_n)
}

/// `log(mean(exp(xs)))`, shifted by the maximum.
pub fn logmeanexp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().map(|v| v.re()).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return T::lit(m);
    }
    let shift = T::lit(m);
    let s: T = xs.iter().map(|&v| (v - shift).exp()).sum();
    shift + (s / T::lit(xs.len() as f64)).ln()
}

/// Delta-method standard error of `logmeanexp(xs)`.
pub fn logmeanexp_std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = xs.iter().map(|v| (v - m).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / (n.sqrt() * mean)
}

/// Single-bottleneck architecture: `d1` wide layers, a width-`width`
/// bottleneck, `d2` wide layers.
#[derive(Clone, Debug)]
pub struct BottleneckModel {
    pub d1: usize,
    pub width: usize,
    pub d2: usize,
    pub phi: Nonlinearity,
}

impl BottleneckModel {
    pub fn new(d1: usize, width: usize, d2: usize, phi: Nonlinearity) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidArchitecture("bottleneck width must be at least 1".into()));
        }
        Ok(BottleneckModel { d1, width, d2, phi })
    }

    /// Depth of the NNGP this model approaches as the width grows.
    pub fn limit_depth(&self) -> usize {
        self.d1 + self.d2 + 1
    }
}

/// Fixed standard-normal matrices `E_s` (`N x H`) for the reparameterized
/// bottleneck draws.
#[derive(Clone, Debug)]
pub struct NoiseDraws {
    pub draws: Vec<Matrix<f64>>,
}

impl NoiseDraws {
    pub fn new(n: usize, width: usize, n_mc: usize, seed: RngSeed) -> Self {
        let draws = (0..n_mc as u64)
            .into_par_iter()
            .map(|s| seed.child(s).normals().matrix(n, width))
            .collect();
        NoiseDraws { draws }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Per-draw log densities `log p_s` under fixed noise.
pub fn mll_log_terms<T: Scalar>(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    model: &BottleneckModel,
    h: &Hyperparams<T>,
    draws: &NoiseDraws,
) -> Result<Vec<T>> {
    check_data(x, y)?;
    if draws.is_empty() {
        return Err(Error::InvalidInput("need at least one Monte Carlo sample".into()));
    }
    let k_pre = kernel::nngp_kernel(&x.cast::<T>(), model.d1, h, &model.phi)?;
    let chol = linalg::cholesky(&k_pre)?;
    let cols = target_columns(y);
    draws
        .draws
        .par_iter()
        .map(|e| {
            let g = T::bottleneck_gram(&chol.l, e, &model.phi);
            let k1 = g.map(|v| h.v_b + h.v_w * v);
            let k = kernel::propagate(k1, model.d2, h, &model.phi)?;
            sum_channels(&cols, &k, h.v_n)
        })
        .collect()
}

/// Monte-Carlo MLL estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MllEstimate {
    pub value: f64,
    pub n_mc: usize,
    pub seed: RngSeed,
    pub std_error: f64,
}

/// MLL under the given fixed draws.
pub fn mll_with_draws<T: Scalar>(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    model: &BottleneckModel,
    h: &Hyperparams<T>,
    draws: &NoiseDraws,
) -> Result<T> {
    Ok(logmeanexp(&mll_log_terms(x, y, model, h, draws)?))
}

#[allow(clippy::too_many_arguments)]
pub fn mll_single_bottleneck(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    d1: usize,
    width: usize,
    d2: usize,
    h: &Hyperparams,
    phi: &Nonlinearity,
    n_mc: usize,
    seed: RngSeed,
) -> Result<MllEstimate> {
    if n_mc == 0 {
        return Err(Error::InvalidInput("n_mc must be at least 1".into()));
    }
    let model = BottleneckModel::new(d1, width, d2, phi.clone())?;
    let draws = NoiseDraws::new(x.rows(), width, n_mc, seed);
    let terms = mll_log_terms(x, y, &model, h, &draws)?;
    Ok(MllEstimate { value: logmeanexp(&terms), n_mc, seed, std_error: logmeanexp_std_error(&terms) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradientMethod {
    /// Exact derivative of the estimator (forward-mode dual numbers).
    #[default]
    Analytic,
    /// Central differences with step `1e-5` on the log-parameters.
    FiniteDifference,
}

/// Log-parameters `(ln v_b, ln v_w, ln v_n)`.
pub fn to_log(h: &Hyperparams) -> [f64; 3] {
    [h.v_b.ln(), h.v_w.ln(), h.v_n.ln()]
}

pub fn from_log(theta: [f64; 3]) -> Hyperparams {
    Hyperparams { v_b: theta[0].exp(), v_w: theta[1].exp(), v_n: theta[2].exp() }
}

fn dual_from_log(theta: [f64; 3]) -> Hyperparams<Grad3> {
    Hyperparams {
        v_b: Grad3::variable(theta[0], 0).exp(),
        v_w: Grad3::variable(theta[1], 1).exp(),
        v_n: Grad3::variable(theta[2], 2).exp(),
    }
}

fn check_positive(h: &Hyperparams) -> Result<()> {
    if h.v_b > 0.0 && h.v_w > 0.0 && h.v_n > 0.0 && h.v_b.is_finite() && h.v_w.is_finite() && h.v_n.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("hyperparameters must be strictly positive for log-parameterization: {h:?}")))
    }
}

/// Value and gradient over log-parameters under fixed draws.
pub fn value_and_gradient(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    model: &BottleneckModel,
    h: &Hyperparams,
    draws: &NoiseDraws,
    method: GradientMethod,
) -> Result<(f64, [f64; 3])> {
    check_positive(h)?;
    let theta = to_log(h);
    match method {
        GradientMethod::Analytic => {
            let v = mll_with_draws(x, y, model, &dual_from_log(theta), draws)?;
            Ok((v.re, v.eps))
        }
        GradientMethod::FiniteDifference => {
            let step = 1e-5;
            let value = mll_with_draws(x, y, model, h, draws)?;
            let mut g = [0.0; 3];
            for (k, gk) in g.iter_mut().enumerate() {
                let mut up = theta;
                let mut dn = theta;
                up[k] += step;
                dn[k] -= step;
                let fu = mll_with_draws(x, y, model, &from_log(up), draws)?;
                let fd = mll_with_draws(x, y, model, &from_log(dn), draws)?;
                *gk = (fu - fd) / (2.0 * step);
            }
            Ok((value, g))
        }
    }
}

/// Gradient of [`mll_single_bottleneck`] over `(ln v_b, ln v_w, ln v_n)`
/// with the draws held fixed.
#[allow(clippy::too_many_arguments)]
pub fn mll_gradient(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    d1: usize,
    width: usize,
    d2: usize,
    h: &Hyperparams,
    phi: &Nonlinearity,
    n_mc: usize,
    seed: RngSeed,
    method: GradientMethod,
) -> Result<[f64; 3]> {
    if n_mc == 0 {
        return Err(Error::InvalidInput("n_mc must be at least 1".into()));
    }
    let model = BottleneckModel::new(d1, width, d2, phi.clone())?;
    let draws = NoiseDraws::new(x.rows(), width, n_mc, seed);
    Ok(value_and_gradient(x, y, &model, h, &draws, method)?.1)
}

/// Adam in ascent form on a 3-vector, with multiplicative learning-rate decay.
#[derive(Clone, Debug)]
pub struct OptState {
    pub log_params: [f64; 3],
    pub m: [f64; 3],
    pub v: [f64; 3],
    pub lr: f64,
    pub iteration: usize,
}

impl OptState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(init: &Hyperparams, lr0: f64) -> Self {
        OptState { log_params: to_log(init), m: [0.0; 3], v: [0.0; 3], lr: lr0, iteration: 0 }
    }

    pub fn step(&mut self, grad: [f64; 3]) {
        self.iteration += 1;
        let t = self.iteration as i32;
        for k in 0..3 {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grad[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grad[k] * grad[k];
            let m_hat = self.m[k] / (1.0 - Self::BETA1.powi(t));
            let v_hat = self.v[k] / (1.0 - Self::BETA2.powi(t));
            self.log_params[k] += self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        from_log(self.log_params)
    }
}

#[derive(Clone, Debug)]
pub struct OptConfig {
    pub n_mc: usize,
    pub lr0: f64,
    pub max_iters: usize,
    /// Moving-average window of the convergence test.
    pub window: usize,
    pub rel_tol: f64,
    pub final_n_mc: usize,
    pub gradient: GradientMethod,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            n_mc: 100,
            lr0: 0.1,
            max_iters: 1000,
            window: 50,
            rel_tol: 1e-4,
            final_n_mc: 1000,
            gradient: GradientMethod::Analytic,
        }
    }
}

/// Default starting point of the optimizer.
pub const DEFAULT_INIT: Hyperparams = Hyperparams { v_b: 0.1, v_w: 1.0, v_n: 0.1 };

#[derive(Clone, Debug)]
pub struct OptResult {
    pub hyperparams: Hyperparams,
    /// Forward-pass MLL per iteration.
    pub trace: Vec<f64>,
    /// Learning rate used at each iteration.
    pub lr_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// MLL at the optimum (Monte-Carlo with `final_n_mc` draws, or exact).
    pub final_mll: f64,
    pub final_std_error: f64,
}

fn moving_average_converged(trace: &[f64], window: usize, rel_tol: f64) -> bool {
    if window == 0 || trace.len() < window + 1 {
        return false;
    }
    let n = trace.len();
    let now = trace[n - window..].iter().sum::<f64>() / window as f64;
    let prev = trace[n - window - 1..n - 1].iter().sum::<f64>() / window as f64;
    (now - prev).abs() < rel_tol * prev.abs()
}

/// Adam loop shared by both optimizers. `eval` gives the forward value and
/// gradient, `reeval` the value at the updated point under the same noise.
fn adam_loop(
    init: &Hyperparams,
    cfg: &OptConfig,
    mut eval: impl FnMut(&Hyperparams, usize) -> Result<(f64, [f64; 3])>,
    mut reeval: impl FnMut(&Hyperparams, usize) -> Result<f64>,
) -> Result<(OptState, Vec<f64>, Vec<f64>, bool)> {
    check_positive(init)?;
    let mut st = OptState::new(init, cfg.lr0);
    let mut trace = Vec::new();
    let mut lrs = Vec::new();
    let mut converged = false;
    for it in 0..cfg.max_iters {
        let h = st.hyperparams();
        let (value, grad) = match eval(&h, it) {
            Ok(v) => v,
            Err(e) if e.is_numerical() => {
                trace.push(f64::NAN);
                return Err(Error::OptimizationDiverged { iteration: it, trace });
            }
            Err(e) => return Err(e),
        };
        trace.push(value);
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::OptimizationDiverged { iteration: it, trace });
        }
        lrs.push(st.lr);
        st.step(grad);
        let after = reeval(&st.hyperparams(), it).unwrap_or(f64::NEG_INFINITY);
        if after.is_nan() || after < value {
            st.lr *= 0.9;
        }
        if moving_average_converged(&trace, cfg.window, cfg.rel_tol) {
            converged = true;
            break;
        }
    }
    Ok((st, trace, lrs, converged))
}

/// Adam with learning-rate decay on the log-hyperparameters of a
/// single-bottleneck model.
pub fn optimize_hyperparams(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    model: &BottleneckModel,
    init: &Hyperparams,
    cfg: &OptConfig,
    seed: RngSeed,
) -> Result<OptResult> {
    check_data(x, y)?;
    let n = x.rows();
    // draws of the current iteration, shared by the forward pass and the re-evaluation
    let draws = std::cell::RefCell::new(None::<NoiseDraws>);
    let (st, trace, lrs, converged) = adam_loop(
        init,
        cfg,
        |h, it| {
            let d = NoiseDraws::new(n, model.width, cfg.n_mc, seed.child(it as u64));
            let out = value_and_gradient(x, y, model, h, &d, cfg.gradient);
            *draws.borrow_mut() = Some(d);
            out
        },
        |h, _| {
            let d = draws.borrow();
            mll_with_draws(x, y, model, h, d.as_ref().expect("draws of this iteration"))
        },
    )?;
    let h = st.hyperparams();
    let fin = mll_single_bottleneck(x, y, model.d1, model.width, model.d2, &h, &model.phi, cfg.final_n_mc, seed.child(u64::MAX))?;
    Ok(OptResult {
        hyperparams: h,
        trace,
        lr_trace: lrs,
        iterations: st.iteration,
        converged,
        final_mll: fin.value,
        final_std_error: fin.std_error,
    })
}

/// Same optimizer on the exact no-bottleneck MLL with `depth` hidden layers.
pub fn optimize_no_bottleneck(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    depth: usize,
    phi: &Nonlinearity,
    init: &Hyperparams,
    cfg: &OptConfig,
) -> Result<OptResult> {
    check_data(x, y)?;
    let (st, trace, lrs, converged) = adam_loop(
        init,
        cfg,
        |h, _| {
            let v = mll_no_bottleneck(x, y, depth, &dual_from_log(to_log(h)), phi)?;
            Ok((v.re, v.eps))
        },
        |h, _| mll_no_bottleneck(x, y, depth, h, phi),
    )?;
    let h = st.hyperparams();
    let fin = mll_no_bottleneck(x, y, depth, &h, phi)?;
    Ok(OptResult {
        hyperparams: h,
        trace,
        lr_trace: lrs,
        iterations: st.iteration,
        converged,
        final_mll: fin,
        final_std_error: 0.0,
    })
}

/// One cell of an MLL sweep. `width == None` is the infinite-width column.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub width: Option<usize>,
    pub d2: usize,
    pub outcome: std::result::Result<OptResult, String>,
    /// Final MLL divided by the number of observations.
    pub mll_per_n: f64,
}

/// Optimize every `(H, D2)` architecture plus the no-bottleneck NNGP of
/// depth `d1 + d2 + 1`; failures are recorded per cell.
#[allow(clippy::too_many_arguments)]
pub fn mll_sweep(
    x: &Matrix<f64>,
    y: &Matrix<f64>,
    d1: usize,
    widths: &[usize],
    d2s: &[usize],
    phi: &Nonlinearity,
    init: &Hyperparams,
    cfg: &OptConfig,
    seed: RngSeed,
) -> Result<Vec<SweepCell>> {
    check_data(x, y)?;
    if widths.is_empty() || d2s.is_empty() {
        return Err(Error::InvalidInput("width and depth lists must be nonempty".into()));
    }
    let n = x.rows() as f64;
    let mut cells = Vec::new();
    for &d2 in d2s {
        for &w in widths {
            let cell_seed = seed.child(((w as u64) << 20) | d2 as u64);
            let outcome = BottleneckModel::new(d1, w, d2, phi.clone())
                .and_then(|m| optimize_hyperparams(x, y, &m, init, cfg, cell_seed))
                .map_err(|e| e.to_string());
            let mll_per_n = outcome.as_ref().map_or(f64::NAN, |r| r.final_mll / n);
            cells.push(SweepCell { width: Some(w), d2, outcome, mll_per_n });
        }
        let outcome = optimize_no_bottleneck(x, y, d1 + d2 + 1, phi, init, cfg).map_err(|e| e.to_string());
        let mll_per_n = outcome.as_ref().map_or(f64::NAN, |r| r.final_mll / n);
        cells.push(SweepCell { width: None, d2, outcome, mll_per_n });
    }
    Ok(cells)
}
