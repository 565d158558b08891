pub mod alignment;
pub mod backend;
pub mod cli;
pub mod concepts;
pub mod config;
pub mod cot;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod report;
pub mod rng;
pub use error::{Error, Result};
