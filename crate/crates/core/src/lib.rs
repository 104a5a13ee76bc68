//! Bottleneck neural-network Gaussian processes.
//!
//! Kernel propagation ([`kernel`]), prior samplers ([`sampler`]), the
//! Monte-Carlo marginal likelihood and its optimizer ([`likelihood`]),
//! closed-form quadratic-correlation analytics ([`analytics`]) and dataset
//! handling ([`data`]). The numerical core is generic over [`Scalar`]; the
//! aliases below fix it to `f64`.

pub mod analytics;
pub mod data;
pub mod dual;
pub mod error;
pub mod kernel;
pub mod likelihood;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod scalar;

pub use dual::{Dual, Grad3};
pub use error::{Error, Result};
pub use kernel::{Architecture, Layer, Nonlinearity};
pub use rng::RngSeed;
pub use scalar::Scalar;

pub type Hyperparams = kernel::Hyperparams<f64>;
pub type KernelMatrix = kernel::KernelMatrix<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type BottleneckGeometry = analytics::BottleneckGeometry<f64>;
pub type Hyperparams32 = kernel::Hyperparams<f32>;
pub type KernelMatrix32 = kernel::KernelMatrix<f32>;
pub type BottleneckGeometry32 = analytics::BottleneckGeometry<f32>;
