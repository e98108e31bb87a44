//! Numerical lab for the slow-diffusion evolutionary p-Laplace equation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod domain;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod linalg;
mod newton;
pub mod operator;
pub mod elliptic;
pub mod parabolic;

pub use error::{Error, Result};
pub use newton::NewtonReport;
