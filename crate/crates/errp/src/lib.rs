//! File formats, reports and the `errp` command line on top of [`errp_core`].

// NaN must fail range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub use errp_core as core;

pub mod cli;
pub mod commands;
pub mod config;
pub mod container;
pub mod erp;
pub mod error;
pub mod report;
pub mod runner;

pub use error::{CliError, Result};
