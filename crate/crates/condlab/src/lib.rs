// SPDX-License-Identifier: Apache-2.0

// Index loops mirror the tensor formulas; `!(x > 0.0)` is used to reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod classifier;
pub mod error;
pub mod fd;
pub mod geometry;
pub mod model;
pub mod par;
pub mod profile;
pub mod quadrature;
pub mod sampling;
pub mod submanifold;
pub mod tensor;
pub mod zoo;

pub use error::{Error, Result};
