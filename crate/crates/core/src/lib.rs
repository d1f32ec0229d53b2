//! Young-integral calculus for Hölder drivers with exponent in (1/2, 1].

// NaN-rejecting range checks are written as `!(x <= limit)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod error;
pub mod exec;
pub mod holder_paths;
pub mod homogeneous;
pub mod linalg;
pub mod linear_flows;
pub mod manifold;
pub mod yde_solver;
pub mod young_integral;

pub use error::{Error, Result};
pub use exec::Exec;
pub use holder_paths::SampledPath;
