//! IO, estimator backends, reports and the command-line pipeline around
//! `pose-consensus-core`.

pub mod backend;
pub mod cache;
pub mod cli;
mod error;
pub mod manifest;
pub mod pipeline;
pub mod protocol;
pub mod report;
pub mod serve;
pub mod synth;

pub use error::{Error, Result};
