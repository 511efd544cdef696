//! Convolutional answer selection: corpus handling, layer primitives,
//! similarity metrics, the six encoder architectures, training and
//! evaluation.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod similarity;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
