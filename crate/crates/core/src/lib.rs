//! Joint UAV routing and mobile-edge offloading: model, checks, environments,
//! learners, exact oracle and context retrieval.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod env;
pub mod error;
pub mod exec;
pub mod learn;
pub mod model;
pub mod rng;
pub mod mec;
pub mod objective;
pub mod pipeline;
pub mod oracle;
pub mod retrieval;
pub mod routing;
pub mod trace;

pub use error::{Error, Result};
