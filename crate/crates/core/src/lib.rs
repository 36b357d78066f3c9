#![cfg_attr(not(test), no_std)]
// NaN must fail range checks, and index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod features;
pub mod filter;
pub mod linalg;
pub mod logistic;
pub mod signal;
pub mod spd;
pub mod synth;

pub use error::{Error, Result};
