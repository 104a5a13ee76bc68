//! NNGP kernel propagation: hyperparameters, nonlinearities, architectures
//! and the forward/backward layer steps.

use std::f64::consts::{FRAC_1_PI, PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quadrature::{self, Rule};
use crate::scalar::Scalar;

/// Symmetric PSD matrix of prior covariances over a batch of inputs.
pub type KernelMatrix<T> = Matrix<T>;

/// Default per-dimension quadrature order of [`generic_kernel_step`].
pub const DEFAULT_QUAD_ORDER: usize = 40;

/// Variance triple: bias `v_b`, weight `v_w`, additive noise `v_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams<T = f64> {
    pub v_b: T,
    pub v_w: T,
    pub v_n: T,
}

impl<T: Scalar> Hyperparams<T> {
    pub fn new(v_b: T, v_w: T, v_n: T) -> Result<Self> {
        let h = Hyperparams { v_b, v_w, v_n };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v_b.re() >= 0.0 && self.v_w.re() > 0.0 && self.v_n.re() >= 0.0;
        let finite = self.v_b.is_finite() && self.v_w.is_finite() && self.v_n.is_finite();
        if ok && finite {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "hyperparameters need v_b >= 0, v_w > 0, v_n >= 0 (got {}, {}, {})",
                self.v_b.re(),
                self.v_w.re(),
                self.v_n.re()
            )))
        }
    }

    pub fn to_f64(&self) -> Hyperparams<f64> {
        Hyperparams { v_b: self.v_b.re(), v_w: self.v_w.re(), v_n: self.v_n.re() }
    }
}

impl Hyperparams<f64> {
    pub fn cast<T: Scalar>(&self) -> Hyperparams<T> {
        Hyperparams { v_b: T::lit(self.v_b), v_w: T::lit(self.v_w), v_n: T::lit(self.v_n) }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied activation satisfying `|phi(x)| < c + m|x|`.
#[derive(Clone)]
pub struct CustomNonlinearity {
    pub name: String,
    f: ScalarFn,
    df: ScalarFn,
    pub envelope: (f64, f64),
    /// Points where `phi` is not smooth; used to split quadrature panels.
    pub breakpoints: Vec<f64>,
}

#[derive(Clone)]
pub enum Nonlinearity {
    /// `sqrt(2) max(0, x)`
    NormalizedRelu,
    /// `cos x + sin x`
    Sinusoidal,
    Custom(CustomNonlinearity),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl Nonlinearity {
    /// Custom activation with derivative `df`, envelope constants `(c, m)`
    /// and kink locations. The envelope is checked on a grid over `[-50, 50]`.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c: f64,
        m: f64,
        breakpoints: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        for i in 0..=2000 {
            let x = -50.0 + 0.05 * i as f64;
            let v = f(x);
            if !v.is_finite() || v.abs() >= c + m * x.abs() {
                return Err(Error::InvalidInput(format!(
                    "nonlinearity {name} violates the linear envelope |phi(x)| < {c} + {m}|x| at x = {x}"
                )));
            }
        }
        Ok(Nonlinearity::Custom(CustomNonlinearity {
            name,
            f: Arc::new(f),
            df: Arc::new(df),
            envelope: (c, m),
            breakpoints,
        }))
    }

    pub fn identity() -> Self {
        Self::custom("identity", |x| x, |_| 1.0, 1.0, 1.0, vec![]).expect("identity satisfies envelope")
    }

    pub fn tanh() -> Self {
        Self::custom("tanh", f64::tanh, |x| 1.0 - x.tanh().powi(2), 1.0, 1.0, vec![])
            .expect("tanh satisfies envelope")
    }

    pub fn name(&self) -> &str {
        match self {
            Nonlinearity::NormalizedRelu => "relu",
            Nonlinearity::Sinusoidal => "sinusoidal",
            Nonlinearity::Custom(c) => &c.name,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Nonlinearity::Custom(c) if c.name == "identity")
    }

    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Nonlinearity::NormalizedRelu => &[0.0],
            Nonlinearity::Sinusoidal => &[],
            Nonlinearity::Custom(c) => &c.breakpoints,
        }
    }

    #[inline]
    pub fn eval<T: Scalar>(&self, x: T) -> T {
        match self {
            Nonlinearity::NormalizedRelu => {
                if x.re() > 0.0 {
                    x * T::lit(SQRT_2)
                } else {
                    T::zero()
                }
            }
            Nonlinearity::Sinusoidal => x.cos() + x.sin(),
            Nonlinearity::Custom(c) => x.map_external(&*c.f, &*c.df),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::NormalizedRelu => {
                if x > 0.0 {
                    SQRT_2
                } else {
                    0.0
                }
            }
            Nonlinearity::Sinusoidal => x.cos() - x.sin(),
            Nonlinearity::Custom(c) => (c.df)(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Infinitely wide hidden layer, realized through its NNGP kernel.
    Wide,
    /// Hidden layer of finite width.
    Bottleneck(usize),
}

/// Layer structure of a (bottleneck) network. A layer list made only of
/// `Bottleneck` entries describes an ordinary finite-width network.
#[derive(Clone, Debug)]
pub struct Architecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<Layer>,
    pub nonlinearity: Nonlinearity,
    /// Add `v_n` to the covariance of bottleneck preactivations.
    pub bottleneck_noise: bool,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        layers: Vec<Layer>,
        nonlinearity: Nonlinearity,
        bottleneck_noise: bool,
    ) -> Result<Self> {
        let a = Architecture { input_dim, output_dim, layers, nonlinearity, bottleneck_noise };
        a.validate()?;
        Ok(a)
    }

    /// `d1` wide layers, a width-`width` bottleneck, then `d2` wide layers.
    pub fn single_bottleneck(
        input_dim: usize,
        output_dim: usize,
        d1: usize,
        width: usize,
        d2: usize,
        nonlinearity: Nonlinearity,
        bottleneck_noise: bool,
    ) -> Result<Self> {
        let mut layers = vec![Layer::Wide; d1];
        layers.push(Layer::Bottleneck(width));
        layers.extend(std::iter::repeat_n(Layer::Wide, d2));
        Self::new(input_dim, output_dim, layers, nonlinearity, bottleneck_noise)
    }

    pub fn wide(input_dim: usize, output_dim: usize, depth: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        Self::new(input_dim, output_dim, vec![Layer::Wide; depth], nonlinearity, false)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArchitecture("input and output dimensions must be positive".into()));
        }
        if self.layers.iter().any(|l| *l == Layer::Bottleneck(0)) {
            return Err(Error::InvalidArchitecture("bottleneck widths must be at least 1".into()));
        }
        // A width-1 linear bottleneck read out directly by the output layer
        // collapses the prior onto a one-dimensional family.
        if self.nonlinearity.is_identity() && self.layers.last() == Some(&Layer::Bottleneck(1)) {
            return Err(Error::InvalidArchitecture(
                "width-1 identity bottleneck with no post-bottleneck hidden layer is degenerate".into(),
            ));
        }
        Ok(())
    }

    pub fn n_bottlenecks(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::Bottleneck(_))).count()
    }

    /// 1-based positions of the bottleneck layers.
    pub fn bottleneck_positions(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Bottleneck(_)))
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Wide layers before the first bottleneck.
    pub fn d1(&self) -> usize {
        self.layers.iter().take_while(|l| **l == Layer::Wide).count()
    }

    /// Weight layers after the last bottleneck (trailing wide layers + 1).
    pub fn post_depth(&self) -> usize {
        self.layers.iter().rev().take_while(|l| **l == Layer::Wide).count() + 1
    }

    /// Hidden layers after the last bottleneck (`post_depth() - 1`).
    pub fn d2(&self) -> usize {
        self.post_depth() - 1
    }

    /// Split into runs of wide layers separated by bottlenecks:
    /// `(wide layers before bottleneck k, width k)` and the trailing run.
    pub fn segments(&self) -> (Vec<(usize, usize)>, usize) {
        let mut out = Vec::new();
        let mut run = 0;
        for l in &self.layers {
            match l {
                Layer::Wide => run += 1,
                Layer::Bottleneck(w) => {
                    out.push((run, *w));
                    run = 0;
                }
            }
        }
        (out, run)
    }
}

fn check_finite<T: Scalar>(k: &Matrix<T>, what: &str) -> Result<()> {
    if k.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// First-layer kernel `v_b + v_w x_a . x_b`.
pub fn linear_kernel<T: Scalar>(x: &Matrix<T>, h: &Hyperparams<T>) -> Result<KernelMatrix<T>> {
    if x.rows() == 0 {
        return Err(Error::InvalidInput("empty input matrix".into()));
    }
    check_finite(x, "input matrix")?;
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let dot: T = x.row(a).iter().zip(x.row(b)).map(|(&p, &q)| p * q).sum();
            let v = h.v_b + h.v_w * dot;
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    Ok(k)
}

const ANGLE_SLACK: f64 = 1e-12;

fn check_angle(theta: f64, name: &str) -> Result<()> {
    if theta.is_nan() || !(-ANGLE_SLACK..=PI + ANGLE_SLACK).contains(&theta) {
        Err(Error::Domain(format!("{name} argument {theta} outside [0, pi]")))
    } else {
        Ok(())
    }
}

/// `J1(t) = sin t + (pi - t) cos t` on `[0, pi]`.
pub fn j1<T: Scalar>(theta: T) -> Result<T> {
    check_angle(theta.re(), "J1")?;
    let t = theta.max(T::zero()).min(T::lit(PI));
    Ok(t.sin() + (T::lit(PI) - t) * t.cos())
}

/// `J2(b) = 3 sin b cos b + (pi - b)(1 + 2 cos^2 b)` on `[0, pi]`.
pub fn j2<T: Scalar>(beta: T) -> Result<T> {
    check_angle(beta.re(), "J2")?;
    let b = beta.max(T::zero()).min(T::lit(PI));
    let (s, c) = (b.sin(), b.cos());
    Ok(T::lit(3.0) * s * c + (T::lit(PI) - b) * (T::one() + T::lit(2.0) * c * c))
}

fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v - target).abs() < tol || mid <= lo || mid >= hi {
            return mid;
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse of `J1` on `[0, pi]` by bisection.
pub fn j1_inverse(target: f64) -> Result<f64> {
    if !(-ANGLE_SLACK..=PI + ANGLE_SLACK).contains(&target) {
        return Err(Error::NotInImage(format!("J1 inverse argument {target} outside [0, pi]")));
    }
    Ok(bisect_decreasing(|t| t.sin() + (PI - t) * t.cos(), target.clamp(0.0, PI), 1e-13))
}

/// Inverse of `J2` on `[0, pi]` by bisection.
pub fn j2_inverse(target: f64) -> Result<f64> {
    if !(-ANGLE_SLACK..=3.0 * PI + ANGLE_SLACK).contains(&target) {
        return Err(Error::NotInImage(format!("J2 inverse argument {target} outside [0, 3 pi]")));
    }
    Ok(bisect_decreasing(
        |b| 3.0 * b.sin() * b.cos() + (PI - b) * (1.0 + 2.0 * b.cos().powi(2)),
        target.clamp(0.0, 3.0 * PI),
        1e-13,
    ))
}

fn check_diag_positive<T: Scalar>(k: &Matrix<T>) -> Result<()> {
    for (i, d) in k.diag().iter().enumerate() {
        if !(d.re() > 0.0) {
            return Err(Error::DegenerateKernel(format!("diagonal entry {i} is {} (must be > 0)", d.re())));
        }
    }
    Ok(())
}

/// One normalized-ReLU layer in closed form.
pub fn relu_kernel_step<T: Scalar>(k: &KernelMatrix<T>, h: &Hyperparams<T>) -> Result<KernelMatrix<T>> {
    check_diag_positive(k)?;
    let n = k.rows();
    let mut out = Matrix::zeros(n, n);
    let sd: Vec<T> = k.diag().iter().map(|d| d.sqrt()).collect();
    let scale = h.v_w * T::lit(FRAC_1_PI);
    for a in 0..n {
        out[(a, a)] = h.v_b + h.v_w * k[(a, a)];
        for b in 0..a {
            let s = sd[a] * sd[b];
            let rho = k[(a, b)] / s;
            let v = h.v_b + scale * s * T::arccos_j1(rho);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// Inverse of [`relu_kernel_step`].
pub fn relu_kernel_backstep<T: Scalar>(k: &KernelMatrix<T>, h: &Hyperparams<T>) -> Result<KernelMatrix<T>> {
    let n = k.rows();
    let mut root = Vec::with_capacity(n);
    for a in 0..n {
        let d = k[(a, a)] - h.v_b;
        if !(d.re() > 0.0) {
            return Err(Error::NotInImage(format!(
                "diagonal entry {a} ({}) does not exceed v_b ({})",
                k[(a, a)].re(),
                h.v_b.re()
            )));
        }
        root.push(d.sqrt());
    }
    let mut out = Matrix::zeros(n, n);
    for a in 0..n {
        out[(a, a)] = (k[(a, a)] - h.v_b) / h.v_w;
        for b in 0..a {
            let s = root[a] * root[b];
            let arg = T::lit(PI) * (k[(a, b)] - h.v_b) / s;
            let theta = j1_inverse(arg.re())?;
            let v = s * T::lit(theta.cos()) / h.v_w;
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// One sinusoidal layer: `v_b + v_w exp(-(K_aa + K_bb - 2 K_ab)/2)`.
pub fn sinusoidal_kernel_step<T: Scalar>(k: &KernelMatrix<T>, h: &Hyperparams<T>) -> Result<KernelMatrix<T>> {
    check_finite(k, "kernel")?;
    let n = k.rows();
    let half = T::lit(0.5);
    let mut out = Matrix::zeros(n, n);
    for a in 0..n {
        out[(a, a)] = h.v_b + h.v_w;
        for b in 0..a {
            let v = h.v_b + h.v_w * (-(k[(a, a)] + k[(b, b)] - T::lit(2.0) * k[(a, b)]) * half).exp();
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// `E[phi(z1) phi(z2)]` for `z ~ N(0, C)` given the 2x2 Cholesky entries.
fn pair_expectation<T: Scalar>(
    phi: &Nonlinearity,
    l11: T,
    l21: T,
    l22: T,
    gh: &Rule,
    gl: &Rule,
) -> T {
    let bps = phi.breakpoints();
    if bps.is_empty() {
        let mut acc = T::zero();
        for (u1, w1) in gh.nodes.iter().zip(&gh.weights) {
            let u1t = T::lit(*u1);
            let f1 = phi.eval(l11 * u1t);
            let mut inner = T::zero();
            for (u2, w2) in gh.nodes.iter().zip(&gh.weights) {
                inner += T::lit(*w2) * phi.eval(l21 * u1t + l22 * T::lit(*u2));
            }
            acc += T::lit(*w1) * f1 * inner;
        }
        return acc;
    }
    let outer_bps: Vec<f64> = bps.iter().map(|b| b / l11.re()).collect();
    let outer = quadrature::normal_panels(gl, &outer_bps);
    let mut acc = T::zero();
    for (u1, w1) in outer.nodes.iter().zip(&outer.weights) {
        let u1t = T::lit(*u1);
        let f1 = phi.eval(l11 * u1t);
        if f1 == T::zero() {
            continue;
        }
        let shift = l21 * u1t;
        let inner = if l22.re() <= 0.0 {
            phi.eval(shift)
        } else {
            let inner_bps: Vec<f64> = bps.iter().map(|b| (b - shift.re()) / l22.re()).collect();
            let rule = quadrature::normal_panels(gl, &inner_bps);
            let mut s = T::zero();
            for (u2, w2) in rule.nodes.iter().zip(&rule.weights) {
                s += T::lit(*w2) * phi.eval(shift + l22 * T::lit(*u2));
            }
            s
        };
        acc += T::lit(*w1) * f1 * inner;
    }
    acc
}

/// One layer of an arbitrary nonlinearity by numerical quadrature.
///
/// Smooth nonlinearities use tensor Gauss-Hermite with `order` nodes per
/// dimension. Nonlinearities with breakpoints are integrated as
/// `E[phi(z1) E[phi(z2) | z1]]` with composite Gauss-Legendre panels that
/// split at the kinks, `order` nodes per panel.
pub fn generic_kernel_step<T: Scalar>(
    k: &KernelMatrix<T>,
    h: &Hyperparams<T>,
    phi: &Nonlinearity,
    order: usize,
) -> Result<KernelMatrix<T>> {
    if order < 8 {
        return Err(Error::InvalidInput(format!("quadrature order {order} < 8")));
    }
    check_finite(k, "kernel")?;
    let gh = quadrature::gauss_hermite_normal(order);
    let gl = quadrature::gauss_legendre(order);
    let n = k.rows();
    let mut out = Matrix::zeros(n, n);
    for a in 0..n {
        let caa = k[(a, a)];
        if caa.re() < 0.0 {
            return Err(Error::DegenerateKernel(format!("negative variance {} at {a}", caa.re())));
        }
        let l11 = caa.sqrt();
        out[(a, a)] = h.v_b + h.v_w * pair_expectation(phi, l11, l11, T::zero(), &gh, &gl);
        for b in 0..a {
            let cbb = k[(b, b)];
            if caa.re() == 0.0 {
                return Err(Error::DegenerateKernel(format!("zero variance at {a}")));
            }
            let l21 = k[(a, b)] / l11;
            let mut r = cbb - l21 * l21;
            if r.re() < 0.0 {
                // tolerate round-off, then the relative jitter policy
                let tol = 1e-8 * 1e3 * 0.5 * (caa.re() + cbb.re());
                if -r.re() > tol {
                    return Err(Error::DegenerateKernel(format!(
                        "2x2 block ({a}, {b}) is not positive semidefinite"
                    )));
                }
                r = T::zero();
            }
            let v = h.v_b + h.v_w * pair_expectation(phi, l11, l21, r.sqrt(), &gh, &gl);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// One hidden layer with the step appropriate to `phi`.
pub fn kernel_step<T: Scalar>(k: &KernelMatrix<T>, h: &Hyperparams<T>, phi: &Nonlinearity) -> Result<KernelMatrix<T>> {
    match phi {
        Nonlinearity::NormalizedRelu => relu_kernel_step(k, h),
        Nonlinearity::Sinusoidal => sinusoidal_kernel_step(k, h),
        Nonlinearity::Custom(_) => generic_kernel_step(k, h, phi, DEFAULT_QUAD_ORDER),
    }
}

/// Apply `depth` hidden-layer steps to an existing kernel.
pub fn propagate<T: Scalar>(
    k: KernelMatrix<T>,
    depth: usize,
    h: &Hyperparams<T>,
    phi: &Nonlinearity,
) -> Result<KernelMatrix<T>> {
    (0..depth).try_fold(k, |k, _| kernel_step(&k, h, phi))
}

/// Output kernel of an NNGP with `depth` hidden layers.
pub fn nngp_kernel<T: Scalar>(
    x: &Matrix<T>,
    depth: usize,
    h: &Hyperparams<T>,
    phi: &Nonlinearity,
) -> Result<KernelMatrix<T>> {
    propagate(linear_kernel(x, h)?, depth, h, phi)
}

/// Deep limit of the sinusoidal recursion: `(v*, c*)` with the limiting
/// kernel `v* (c* + (1 - c*) 1[x = x'])`.
pub fn sinusoidal_deep_fixed_point<T: Scalar>(h: &Hyperparams<T>) -> Result<(T, T)> {
    let (v_b, v_w) = (h.v_b.re(), h.v_w.re());
    let v_star = h.v_b + h.v_w;
    if (v_w - 1.0).abs() < 1e-12 {
        return Err(Error::PhaseBoundary("v_w = 1 has no isolated fixed point".into()));
    }
    if v_w < 1.0 {
        return Ok((v_star, T::one()));
    }
    let vs = v_b + v_w;
    let f = |c: f64| v_b / vs + (v_w / vs) * (vs * (c - 1.0)).exp();
    // f_c - c is positive at 0 and minimal at c_min < 1, where it is negative.
    let c_min = 1.0 - v_w.ln() / vs;
    let (mut lo, mut hi) = (0.0, c_min);
    let mut c = 0.5 * (lo + hi);
    for _ in 0..200 {
        c = 0.5 * (lo + hi);
        let g = f(c) - c;
        if g.abs() < 1e-12 || c <= lo || c >= hi {
            break;
        }
        if g > 0.0 {
            lo = c;
        } else {
            hi = c;
        }
    }
    Ok((v_star, T::lit(c)))
}
