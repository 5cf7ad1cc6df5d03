// SPDX-License-Identifier: Apache-2.0

//! Command-line front end for condlab: scenario files, report pipelines and
//! the named verification examples.

// `!(a < b)` rejects NaN bounds along with reversed ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod examples;
pub mod expr;
pub mod scenario;
