//! Gesture-conditioned stochastic video prediction.

pub mod autodiff;
pub mod batch;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objective;
pub mod rollout;

pub use error::{Error, Result};
