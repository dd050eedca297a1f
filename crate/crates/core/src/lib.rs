//! Surgical workflow anticipation: synthetic workflows, transition priors, a
//! small transformer forecaster with hand-written gradients, naive baselines
//! and the evaluation suite.

pub mod baselines;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod priors;
pub mod rng;
pub mod simulate;

pub use error::{Result, SwagError};
