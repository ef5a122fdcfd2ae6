pub mod datagen;
pub mod discovery;
pub mod diffcore;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;

pub use error::{Result, UncleError};
pub use graph::CausalMatrix;
