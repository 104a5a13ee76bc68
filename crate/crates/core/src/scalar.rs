//! The scalar abstraction every numerical routine in this crate is generic over.
//!
//! `f64` is the working precision. `f32` is supported for the closed-form
//! analytics and kernel recursions. [`Dual`](crate::dual::Dual) carries
//! forward-mode tangents so the exact gradient of the Monte-Carlo likelihood
//! comes out of the same code path that computes its value.

use std::f64::consts::PI;
use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

use crate::kernel::Nonlinearity;
use crate::linalg::{self, Matrix};

pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lift an `f64` constant into the scalar type (no tangent).
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must be representable")
    }

    /// Primal value as `f64`.
    fn re(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `J1(acos rho)` for a correlation `rho`, clamped to `[-1, 1]`.
    ///
    /// Written in terms of `rho` because `d/drho J1(acos rho) = pi - acos rho`
    /// stays finite at `rho = 1`, where `acos` itself is not differentiable.
    fn arccos_j1(rho: Self) -> Self {
        let one = Self::one();
        let r = rho.max(-one).min(one);
        let theta = r.acos();
        ((one - r) * (one + r)).sqrt() + (Self::lit(PI) - theta) * r
    }

    /// Apply an externally supplied `f64` function, with derivative `df`
    /// when the scalar type tracks tangents.
    fn map_external(self, f: &dyn Fn(f64) -> f64, _df: &dyn Fn(f64) -> f64) -> Self {
        Self::lit(f(self.re()))
    }

    /// Empirical activation Gram matrix of a bottleneck layer,
    /// `(1/H) phi(L E) phi(L E)^T`, where `L` is `N x N` and the fixed
    /// standard-normal draw `E` is `N x H`.
    fn bottleneck_gram(chol: &Matrix<Self>, noise: &Matrix<f64>, phi: &Nonlinearity) -> Matrix<Self> {
        let n = chol.rows();
        let width = noise.cols();
        let mut act = Matrix::<Self>::zeros(n, width);
        for i in 0..n {
            for c in 0..width {
                let mut acc = Self::zero();
                for k in 0..=i.min(chol.cols() - 1) {
                    acc += chol[(i, k)] * Self::lit(noise[(k, c)]);
                }
                act[(i, c)] = phi.eval(acc);
            }
        }
        let scale = Self::lit(1.0 / width as f64);
        let mut gram = Matrix::<Self>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = Self::zero();
                for c in 0..width {
                    acc += act[(i, c)] * act[(j, c)];
                }
                gram[(i, j)] = acc * scale;
                gram[(j, i)] = acc * scale;
            }
        }
        gram
    }
}

impl Scalar for f32 {}

impl Scalar for f64 {
    fn lit(x: f64) -> Self {
        x
    }

    fn re(self) -> f64 {
        self
    }

    fn bottleneck_gram(chol: &Matrix<f64>, noise: &Matrix<f64>, phi: &Nonlinearity) -> Matrix<f64> {
        let pre = linalg::matmul(chol, noise);
        let act = pre.map(|v| phi.eval(v));
        let mut gram = linalg::matmul_abt(&act, &act);
        let scale = 1.0 / noise.cols() as f64;
        gram.data_mut().iter_mut().for_each(|v| *v *= scale);
        gram.symmetrize();
        gram
    }
}
