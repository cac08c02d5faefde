//! Experiment runner for dynamic barrier gradient descent: JSON configs in,
//! CSV traces and summaries out.
//!
//! The `dbgd` binary wraps these functions; tests call them directly.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::Config;
pub use error::{HarnessError, Result};
