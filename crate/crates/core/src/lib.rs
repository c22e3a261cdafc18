#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod discrepancy;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod ladder;
pub mod linear_testbed;
pub mod model;
pub mod optimize;
pub mod parallel;
pub mod pde;
pub mod penalty;
pub mod problem;
pub mod synthdata;
pub mod transfer;
mod tridiag;

pub use error::{Error, Result};
