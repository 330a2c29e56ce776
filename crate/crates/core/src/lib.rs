//! Bayesian convolutional fault diagnosis with uncertainty-gated
//! out-of-distribution detection.

pub mod bayes;
pub mod diffcore;
pub mod error;
pub mod gate;
pub mod pipeline;
pub mod rng;
pub mod signals;
pub mod uq;

pub use error::{Error, Result};
