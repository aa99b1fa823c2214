//! Tabular evaluation of many general value functions in parallel from a
//! single behavior policy, with the variance-minimizing behavior update,
//! comparison baselines, exact oracles and an experiment harness.

pub mod baselines;
pub mod behavior;
pub mod env;
pub mod error;
pub mod gvf;
pub mod harness;
pub mod metrics;
pub mod oracles;
pub mod policy;
pub mod td;

pub use error::{Error, Result};
