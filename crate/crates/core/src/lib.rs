//! Planning and analysis toolkit for hyperparameter sweeps in low-resource
//! language LLM pretraining.

pub mod analysis;
pub mod budget;
pub mod cli;
pub mod error;
pub mod fit;
pub mod mixture;
pub mod search;
pub mod surrogate;
pub mod train;

pub use error::{Error, ErrorKind, Result};
