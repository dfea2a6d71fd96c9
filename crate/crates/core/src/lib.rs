pub mod autodiff;
pub mod classifier;
pub mod cli;
pub mod embeddings;
pub mod error;
pub mod evaluation;
mod params;
pub mod recurrent;
pub mod text;

pub use error::{Error, ErrorKind, Result};
