//! Closed-form quadratic correlations of single-bottleneck ReLU NNGPs.
//!
//! `D` is always the number of weight layers after the bottleneck, so a
//! network with `d2` wide hidden layers after it has `D = d2 + 1`.
//! Quantities that involve `v_w^D` are assembled in log space so that
//! depths in the thousands neither overflow nor underflow.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::{self, Hyperparams, Nonlinearity};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const UNIT_TOL: f64 = 1e-12;

fn is_unit<T: Scalar>(v_w: T) -> bool {
    (v_w.re() - 1.0).abs() < UNIT_TOL
}

/// 2x2 covariance `C` of the bottleneck preactivations of two inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BottleneckGeometry<T = f64> {
    pub c: [[T; 2]; 2],
    /// Input angle, when the inputs lie on a common sphere.
    pub alpha: Option<T>,
}

impl<T: Scalar> BottleneckGeometry<T> {
    pub fn new(c_aa: T, c_ab: T, c_bb: T) -> Result<Self> {
        let det = c_aa * c_bb - c_ab * c_ab;
        if !(c_aa.re() > 0.0 && c_bb.re() > 0.0) || det.re() < -1e-12 * (c_aa * c_bb).re() {
            return Err(Error::InvalidInput(format!(
                "bottleneck covariance [[{}, {}], [{}, {}]] is not positive definite",
                c_aa.re(),
                c_ab.re(),
                c_ab.re(),
                c_bb.re()
            )));
        }
        Ok(BottleneckGeometry { c: [[c_aa, c_ab], [c_ab, c_bb]], alpha: None })
    }

    /// Unit-norm inputs at angle `alpha` fed straight into the bottleneck.
    pub fn from_input_angle(alpha: T, h: &Hyperparams<T>, bottleneck_noise: bool) -> Result<Self> {
        let noise = if bottleneck_noise { h.v_n } else { T::zero() };
        let diag = h.v_b + h.v_w + noise;
        let mut g = Self::new(diag, h.v_b + h.v_w * alpha.cos(), diag)?;
        g.alpha = Some(alpha);
        Ok(g)
    }

    /// Geometry produced by the 2x2 input Gram matrix `g` after `pre_depth`
    /// wide ReLU layers.
    pub fn from_gram(g: &Matrix<T>, h: &Hyperparams<T>, pre_depth: usize, bottleneck_noise: bool) -> Result<Self> {
        let k1 = g.map(|v| h.v_b + h.v_w * v);
        let k = kernel::propagate(k1, pre_depth, h, &Nonlinearity::NormalizedRelu)?;
        let noise = if bottleneck_noise { h.v_n } else { T::zero() };
        Self::new(k[(0, 0)] + noise, k[(0, 1)], k[(1, 1)] + noise)
    }

    pub fn from_inputs(x_a: &[T], x_b: &[T], h: &Hyperparams<T>, pre_depth: usize, bottleneck_noise: bool) -> Result<Self> {
        let dot = |p: &[T], q: &[T]| p.iter().zip(q).map(|(&u, &v)| u * v).sum::<T>();
        let g = Matrix::from_rows(&[[dot(x_a, x_a), dot(x_a, x_b)], [dot(x_b, x_a), dot(x_b, x_b)]]);
        Self::from_gram(&g, h, pre_depth, bottleneck_noise)
    }

    /// Bottleneck angle between entries `a` and `b`.
    pub fn beta(&self, a: usize, b: usize) -> T {
        if a == b {
            return T::zero();
        }
        let rho = self.c[a][b] / (self.c[a][a] * self.c[b][b]).sqrt();
        rho.max(-T::one()).min(T::one()).acos()
    }
}

fn check_index(a: usize, b: usize) -> Result<()> {
    if a > 1 || b > 1 {
        Err(Error::InvalidInput(format!("geometry index ({a}, {b}) outside 0..2")))
    } else {
        Ok(())
    }
}

fn check_dh(depth: usize, width: usize) -> Result<()> {
    if depth == 0 || width == 0 {
        Err(Error::InvalidInput(format!("need D >= 1 and H >= 1 (got D = {depth}, H = {width})")))
    } else {
        Ok(())
    }
}

/// `(2/pi) J2(beta) - 1`, the numerator shared by all quadratic correlations.
fn j2_numerator<T: Scalar>(beta: T) -> T {
    T::lit(2.0 / PI) * kernel::j2(beta).expect("beta from acos is in [0, pi]") - T::one()
}

/// `b_D = v_n + v_b sum_{d<D} v_w^d`.
pub fn b_depth<T: Scalar>(h: &Hyperparams<T>, depth: usize) -> T {
    let d = T::lit(depth as f64);
    if is_unit(h.v_w) {
        return h.v_n + d * h.v_b;
    }
    let geometric = (d * h.v_w.ln()).exp_m1() / (h.v_w - T::one());
    h.v_n + h.v_b * geometric
}

/// `w_D = v_w^D`.
pub fn w_depth<T: Scalar>(h: &Hyperparams<T>, depth: usize) -> T {
    h.v_w.powi(depth as i32)
}

/// `r_D = b_D / w_D`.
pub fn r_depth<T: Scalar>(h: &Hyperparams<T>, depth: usize) -> T {
    let d = T::lit(depth as f64);
    if is_unit(h.v_w) {
        return h.v_n + d * h.v_b;
    }
    let l = -d * h.v_w.ln();
    h.v_n * l.exp() + h.v_b / (T::one() - h.v_w) * l.exp_m1()
}

/// `ln r_D`, finite even when `r_D` itself overflows.
pub fn ln_r_depth<T: Scalar>(h: &Hyperparams<T>, depth: usize) -> T {
    let d = T::lit(depth as f64);
    if is_unit(h.v_w) {
        return (h.v_n + d * h.v_b).ln();
    }
    let l = -d * h.v_w.ln();
    if l.re() < 600.0 {
        return r_depth(h, depth).ln();
    }
    // v_w < 1: r_D = e^l (v_n + s) - s with s = v_b / (1 - v_w)
    let s = h.v_b / (T::one() - h.v_w);
    l + (h.v_n + s - s * (-l).exp()).ln()
}

/// `r_inf = v_b / (v_w - 1)` for `v_w > 1`, otherwise infinite.
pub fn r_infinity<T: Scalar>(h: &Hyperparams<T>) -> T {
    if h.v_w.re() > 1.0 && !is_unit(h.v_w) {
        h.v_b / (h.v_w - T::one())
    } else {
        T::infinity()
    }
}

/// `ln(exp(t) + 1)` without overflow.
fn softplus<T: Scalar>(t: T) -> T {
    if t.re() > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `ln(15 + 2H (r/c + 1)^2)` from `ln r`.
fn ln_var_factor<T: Scalar>(ln_r: T, c: T, width: usize) -> T {
    let two_h = T::lit(2.0 * width as f64);
    let ln_u = softplus(ln_r - c.ln());
    two_h.ln() + T::lit(2.0) * ln_u + (T::lit(15.0) / two_h * (T::lit(-2.0) * ln_u).exp()).ln_1p()
}

fn corr_from_ln_r<T: Scalar>(geom: &BottleneckGeometry<T>, ln_r: T, width: usize, a: usize, b: usize) -> T {
    let num = j2_numerator(geom.beta(a, b));
    let den = ln_var_factor(ln_r, geom.c[a][a], width) + ln_var_factor(ln_r, geom.c[b][b], width);
    num * (T::lit(-0.5) * den).exp()
}

/// Covariance of the squares of two distinct outputs at inputs `a`, `b`.
pub fn quad_cov_between<T: Scalar>(
    geom: &BottleneckGeometry<T>,
    h: &Hyperparams<T>,
    depth: usize,
    width: usize,
    a: usize,
    b: usize,
) -> Result<T> {
    check_index(a, b)?;
    check_dh(depth, width)?;
    let scale = T::lit(2.0 * depth as f64) * h.v_w.ln();
    let c = geom.c[a][a] * geom.c[b][b] / T::lit(width as f64);
    Ok(scale.exp() * c * j2_numerator(geom.beta(a, b)))
}

/// Pearson correlation of the squares of two distinct outputs, `q^x(D)`.
pub fn quad_corr_between<T: Scalar>(
    geom: &BottleneckGeometry<T>,
    h: &Hyperparams<T>,
    depth: usize,
    width: usize,
    a: usize,
    b: usize,
) -> Result<T> {
    check_index(a, b)?;
    check_dh(depth, width)?;
    Ok(corr_from_ln_r(geom, ln_r_depth(h, depth), width, a, b))
}

/// Infinite-depth limit of [`quad_corr_between`].
pub fn quad_corr_between_inf<T: Scalar>(
    geom: &BottleneckGeometry<T>,
    h: &Hyperparams<T>,
    width: usize,
    a: usize,
    b: usize,
) -> Result<T> {
    check_index(a, b)?;
    check_dh(1, width)?;
    let r = r_infinity(h);
    if r.is_infinite() {
        return Ok(T::zero());
    }
    Ok(corr_from_ln_r(geom, r.ln(), width, a, b))
}

/// `ln |q^x(D) - q^x(inf)|`, accurate when the gap is far below machine
/// precision relative to `q^x(inf)`.
pub fn ln_abs_depth_gap<T: Scalar>(
    geom: &BottleneckGeometry<T>,
    h: &Hyperparams<T>,
    depth: usize,
    width: usize,
    a: usize,
    b: usize,
) -> Result<T> {
    check_index(a, b)?;
    check_dh(depth, width)?;
    let num = j2_numerator(geom.beta(a, b));
    let r_inf = r_infinity(h);
    if r_inf.is_infinite() {
        let ln_r = ln_r_depth(h, depth);
        let den = ln_var_factor(ln_r, geom.c[a][a], width) + ln_var_factor(ln_r, geom.c[b][b], width);
        return Ok(num.abs().ln() - T::lit(0.5) * den);
    }
    // r_D - r_inf = (v_n - r_inf) v_w^{-D}
    let dr = (h.v_n - r_inf) * (-T::lit(depth as f64) * h.v_w.ln()).exp();
    let two_h = T::lit(2.0 * width as f64);
    let mut delta = T::zero();
    let mut ln_den = T::zero();
    for c in [geom.c[a][a], geom.c[b][b]] {
        let u_inf = r_inf / c + T::one();
        let du = dr / c;
        let base = T::lit(15.0) + two_h * u_inf * u_inf;
        delta += (two_h * du * (T::lit(2.0) * u_inf + du) / base).ln_1p();
        ln_den += base.ln();
    }
    let ln_q_inf = num.abs().ln() - T::lit(0.5) * ln_den;
    Ok(ln_q_inf + (T::lit(-0.5) * delta).exp_m1().abs().ln())
}

/// Single-output infinite-depth quadratic correlation `q(inf)`.
pub fn quad_corr_single_inf<T: Scalar>(
    geom: &BottleneckGeometry<T>,
    h: &Hyperparams<T>,
    width: usize,
    a: usize,
    b: usize,
) -> Result<T> {
    check_index(a, b)?;
    check_dh(1, width)?;
    let r = r_infinity(h);
    if r.is_infinite() || a == b {
        return Ok(T::one());
    }
    let qx = corr_from_ln_r(geom, r.ln(), width, a, b);
    Ok(T::lit(3.0) * qx + single_bias(geom.c[a][a], geom.c[b][b], r, width))
}

/// Second term of the single-output formula.
fn single_bias<T: Scalar>(c_aa: T, c_bb: T, r_inf: T, width: usize) -> T {
    let k = T::lit(15.0 / (2.0 * width as f64));
    let ua = r_inf / c_aa + T::one();
    let ub = r_inf / c_bb + T::one();
    ua * ub / ((k + ua * ua) * (k + ub * ub)).sqrt()
}

/// Depth scale `lambda` of the decay of `q^x(D)` towards its limit.
pub fn depth_scale<T: Scalar>(h: &Hyperparams<T>) -> T {
    if is_unit(h.v_w) {
        T::infinity()
    } else if h.v_w.re() < 1.0 {
        (h.v_w * h.v_w).recip().ln().recip()
    } else {
        h.v_w.ln().recip()
    }
}

/// Bottleneck angle for unit-norm inputs at angle `alpha` and no
/// pre-bottleneck hidden layers.
pub fn bottleneck_angle_from_input_angle<T: Scalar>(alpha: T, h: &Hyperparams<T>) -> Result<T> {
    if !(0.0..=PI + UNIT_TOL).contains(&alpha.re()) {
        return Err(Error::Domain(format!("input angle {} outside [0, pi]", alpha.re())));
    }
    let s = h.v_b + h.v_w;
    if !(s.re() > 0.0) {
        return Err(Error::InvalidInput("v_b + v_w must be positive".into()));
    }
    let cb = (h.v_b + h.v_w * alpha.cos()) / s;
    Ok(cb.max(-T::one()).min(T::one()).acos())
}

/// `q^x(D)` for `D = 1..=d_max`.
pub fn depth_series<T: Scalar>(
    geom: &BottleneckGeometry<T>,
    h: &Hyperparams<T>,
    width: usize,
    d_max: usize,
) -> Result<Vec<T>> {
    if d_max < 2 {
        return Err(Error::InvalidInput("depth series needs d_max >= 2".into()));
    }
    (1..=d_max).map(|d| quad_corr_between(geom, h, d, width, 0, 1)).collect()
}

/// Least-squares slope of `ln |q^x(D) - q^x(inf)|` over `D in lo..=hi`.
pub fn depth_gap_slope(geom: &BottleneckGeometry, h: &Hyperparams, width: usize, lo: usize, hi: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .map(|d| ln_abs_depth_gap(geom, h, d, width, 0, 1).map(|y| (d as f64, y)))
        .collect::<Result<_>>()?;
    if pts.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::UndefinedCorrelation("depth gap vanishes identically".into()));
    }
    Ok(ls_slope(&pts))
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn require_broken_phase(h: &Hyperparams) -> Result<f64> {
    if h.v_w <= 1.0 || is_unit(h.v_w) {
        return Err(Error::NotInvertible(format!("v_w = {} <= 1 loses the input geometry", h.v_w)));
    }
    if h.v_b <= 0.0 {
        return Err(Error::NotInvertible("v_b = 0 makes the diagonal correlations constant".into()));
    }
    Ok(h.v_b / (h.v_w - 1.0))
}

/// Invert `q^x_aa(inf) = 5 / (15 + 2H u^2)` for `c_aa`, where `u = r_inf/c + 1`.
fn diag_from_qx(q: f64, r_inf: f64, width: usize) -> Result<f64> {
    if !(q > 0.0 && q < 5.0 / 17.0) {
        return Err(Error::NotInImage(format!("diagonal correlation {q} outside (0, 5/17)")));
    }
    let u = ((5.0 / q - 15.0) / (2.0 * width as f64)).sqrt();
    if !(u > 1.0) {
        return Err(Error::NotInImage(format!("diagonal correlation {q} too large for H = {width}")));
    }
    Ok(r_inf / (u - 1.0))
}

fn gram_from_cov(c: [[f64; 2]; 2], h: &Hyperparams, pre_depth: usize, bottleneck_noise: bool) -> Result<Matrix<f64>> {
    let noise = if bottleneck_noise { h.v_n } else { 0.0 };
    let mut k = Matrix::from_rows(&[[c[0][0] - noise, c[0][1]], [c[1][0], c[1][1] - noise]]);
    for _ in 0..pre_depth {
        k = kernel::relu_kernel_backstep(&k, h)?;
    }
    Ok(k.map(|v| (v - h.v_b) / h.v_w))
}

/// Recover the input Gram matrix from the infinite-depth between-output
/// quadratic correlation matrix.
pub fn recover_gram_between(
    qx_inf: &Matrix<f64>,
    h: &Hyperparams,
    width: usize,
    pre_depth: usize,
    bottleneck_noise: bool,
) -> Result<Matrix<f64>> {
    let r_inf = require_broken_phase(h)?;
    check_dh(1, width)?;
    let c11 = diag_from_qx(qx_inf[(0, 0)], r_inf, width)?;
    let c22 = diag_from_qx(qx_inf[(1, 1)], r_inf, width)?;
    let den: f64 = [c11, c22]
        .iter()
        .map(|&c| (15.0 + 2.0 * width as f64 * (r_inf / c + 1.0).powi(2)).sqrt())
        .product();
    let target = 0.5 * PI * (qx_inf[(0, 1)] * den + 1.0);
    let beta = kernel::j2_inverse(target)?;
    let c12 = beta.cos() * (c11 * c22).sqrt();
    gram_from_cov([[c11, c12], [c12, c22]], h, pre_depth, bottleneck_noise)
}

/// Recover the input Gram matrix from the single-output correlation matrix
/// and the known input norms `diag(G)`.
pub fn recover_gram_single(
    q_inf: &Matrix<f64>,
    diag_g: [f64; 2],
    h: &Hyperparams,
    width: usize,
    pre_depth: usize,
    bottleneck_noise: bool,
) -> Result<Matrix<f64>> {
    let r_inf = require_broken_phase(h)?;
    check_dh(1, width)?;
    let noise = if bottleneck_noise { h.v_n } else { 0.0 };
    let c: Vec<f64> = diag_g
        .iter()
        .map(|&g| (0..pre_depth).fold(h.v_b + h.v_w * g, |c, _| h.v_b + h.v_w * c) + noise)
        .collect();
    let qx_diag: Vec<f64> = c
        .iter()
        .map(|&c| 5.0 / (15.0 + 2.0 * width as f64 * (r_inf / c + 1.0).powi(2)))
        .collect();
    let qx12 = (q_inf[(0, 1)] - single_bias(c[0], c[1], r_inf, width)) / 3.0;
    let qx = Matrix::from_rows(&[[qx_diag[0], qx12], [qx12, qx_diag[1]]]);
    let mut g = recover_gram_between(&qx, h, width, pre_depth, bottleneck_noise)?;
    g[(0, 0)] = diag_g[0];
    g[(1, 1)] = diag_g[1];
    Ok(g)
}

/// Bundle of the analytic quantities for one geometry and architecture.
#[derive(Clone, Debug)]
pub struct CorrelationReport {
    pub width: usize,
    pub depth: usize,
    pub b_d: f64,
    pub w_d: f64,
    pub r_d: f64,
    pub beta: f64,
    pub q_cross: [[f64; 2]; 2],
    pub q_cross_inf: [[f64; 2]; 2],
    pub q_single_inf: [[f64; 2]; 2],
    pub lambda: f64,
}

impl CorrelationReport {
    pub fn compute(geom: &BottleneckGeometry, h: &Hyperparams, depth: usize, width: usize) -> Result<Self> {
        let mut q_cross = [[0.0; 2]; 2];
        let mut q_cross_inf = [[0.0; 2]; 2];
        let mut q_single_inf = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                q_cross[a][b] = quad_corr_between(geom, h, depth, width, a, b)?;
                q_cross_inf[a][b] = quad_corr_between_inf(geom, h, width, a, b)?;
                q_single_inf[a][b] = quad_corr_single_inf(geom, h, width, a, b)?;
            }
        }
        Ok(CorrelationReport {
            width,
            depth,
            b_d: b_depth(h, depth),
            w_d: w_depth(h, depth),
            r_d: r_depth(h, depth),
            beta: geom.beta(0, 1),
            q_cross,
            q_cross_inf,
            q_single_inf,
            lambda: depth_scale(h),
        })
    }
}
