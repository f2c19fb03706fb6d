//! Bound-constrained optimization by domain warping.
//!
//! Problems with unrelaxable box constraints are solved by composing the
//! objective with a warp onto the open box and minimizing the resulting merit
//! function without constraints. [`adawarp`] drives the outer loop that sharpens
//! the warp between inner solves.

// `!(x > 0.0)` is how parameters reject NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adawarp;
pub mod bench;
pub mod error;
pub mod kkt;
pub mod linalg;
pub mod merit;
pub mod problems;
pub mod solvers;
pub mod warps;

pub use error::{Error, Result};
