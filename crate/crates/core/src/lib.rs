//! L1 deviation of kernel density estimators: kernels and their asymptotic
//! variance, densities, the estimator and its L1 error, rate quantities,
//! the block decomposition, and Monte Carlo experiments.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod block_checks;
pub mod blocks;
pub mod chebyshev;
pub mod density;
pub mod error;
pub mod kde;
pub mod kernel;
pub mod mc;
pub mod parallel;
pub mod poly;
pub mod quadrature;
pub mod rates;
pub mod rng;
pub mod sets;
pub mod special;
pub mod stats;

pub use block_checks::{BlockParams, BlockSetup};
pub use blocks::{BlockClass, BlockDraw, BlockSampler, Partition};
pub use density::{Density, DensitySpec};
pub use error::{Error, Result};
pub use kde::{L1Integrator, L1Method, Sample};
pub use kernel::{Kernel, KernelSpec};
pub use mc::{DistanceReport, ReplicatePool};
pub use rates::{RateConstants, RateLedger};
pub use sets::IntervalSet;
