#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Filter failures carry the partial trajectory by value.
#![allow(clippy::result_large_err)]
extern crate alloc;

pub mod continuous_filter;
pub mod discrete_filter;
pub mod dynamics;
pub mod error;
pub mod families;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod oracles;
pub mod quad;
pub mod rng;

pub use error::{Error, Result};
pub use field::{Hint, ScalarField};
pub use linalg::Matrix;
pub use quad::{QuadratureSpec, Rule};
