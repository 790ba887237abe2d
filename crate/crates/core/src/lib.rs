// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod cellsolve;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod grid;
pub mod linalg;
pub mod materials;
pub mod output;
pub mod plot;
pub mod quadrature;
pub mod stepper;

pub use error::{Error, Result};
