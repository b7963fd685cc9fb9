//! Moment-relaxation bounds for scalar polynomial stochastic optimal control.

pub mod conic;
pub mod error;
pub mod extract;
pub mod fixtures;
pub mod moments;
pub mod oracle;
pub mod pipeline;
pub mod poly;
pub mod problem;
pub mod relaxation;
pub mod sim;

pub use error::{Error, Result};
