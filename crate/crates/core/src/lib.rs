//! Analytic and finite-width neural tangent kernels for MLP and ResNet models.
//!
//! The crate is organised bottom-up:
//!
//! | module | contents |
//! |--------|----------|
//! | [`arch`] | architecture hyperparameters, the circle target function, datasets |
//! | [`kernel`] | ReLU Gaussian expectations, GP/NTK recursions, Gram assembly |
//! | [`regress`] | exact kernel interpolation with a jitter ladder |
//! | [`smooth`] | Gaussian-RKHS norms on a periodic grid and the relative measure μ |
//! | [`net`] | finite-width networks, explicit gradients, empirical NTK, training |
//! | [`bounds`] | input-output Jacobian bounds and singular-value Monte Carlo |
//! | [`cli`] | experiment configuration, pipelines and CSV/JSON output |
//! | [`acceptance`] | the end-to-end verification checks |
//!
//! Everything is `f64` and single-output. All randomness flows through
//! [`rng::LabRng`], so a seed pins every result bit-for-bit.

pub mod acceptance;
pub mod arch;
pub mod bounds;
pub mod cli;
mod error;
pub mod experiments;
pub mod kernel;
pub mod linalg;
pub mod net;
pub mod regress;
pub mod rng;
pub mod smooth;

pub use arch::{ArchKind, ArchitectureSpec, Dataset, SamplingMode, SamplingScheme};
pub use error::{Error, Result};
pub use kernel::{Cov2, GramMatrix, Kernel, KernelKind};
pub use net::{InitScheme, ParamVector};
pub use regress::RegressionModel;
pub use smooth::{GridFunction, SpectrumPolicy};
