//! Discrete-event simulation of asynchronous SGD with dual-delayed gradient
//! aggregation, plus the usual asynchronous and synchronous baselines.

pub mod algorithms;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod objectives;
pub mod simclock;
pub mod state;

pub use error::{Error, Result};
