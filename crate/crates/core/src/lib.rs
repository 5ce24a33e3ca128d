//! Commuting, locally bounded projectors onto Nedelec and Raviart-Thomas
//! spaces on tetrahedral meshes, with the global best-approximation
//! quantities used to test them.

// `!(x <= tol)` is deliberate: NaN residuals must fail.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cls;
pub mod error;
pub mod globalbest;
pub mod harness;
pub mod hcurl_proj;
pub mod hdiv_proj;
pub mod interp;
pub mod mesh;
pub mod polyspace;
pub mod source;
pub mod traces;

pub use error::{Error, Result};
