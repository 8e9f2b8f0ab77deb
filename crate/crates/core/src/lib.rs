//! Gene regulatory network inference with linear structural equation
//! models, informative priors, supervised baselines and a leakage-free
//! evaluation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod baselines;
pub mod dataio;
pub mod error;
pub mod evalbench;
pub mod models;
pub mod numkit;
pub mod training;

pub use error::{Error, Result};
