//! Multivariate orthogonal polynomials from discrete measures via the
//! multivariate Stieltjes procedure, with moment-based baselines and diagnostics.

pub mod diag;
pub mod error;
pub mod eval_core;
pub mod experiment;
pub mod linalg;
pub mod measure;
pub mod mindex;
pub mod mm;
pub mod ms;
pub mod output;
pub mod recurrence;
pub mod tensor_oracle;
pub mod uni_ttr;

pub use error::{Error, Result};
