//! Stance detection with sarcasm-detection pre-training.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod preprocess;
pub mod train;

pub use error::{Error, Result};
