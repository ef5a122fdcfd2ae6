//! The UnCLe architecture and its two-stage training.

pub mod checkpoint;
mod config;
mod tcn;
mod train;
mod uncle;

pub use config::{ModelConfig, Preset, PresetRow, DEFAULT_ALPHA, DEFAULT_DROPOUT, DEFAULT_LAMBDA1};
pub use tcn::Tcn;
pub use train::{train, train_with, EpochRecord, Stage, Trainer};
pub(crate) use train::splitmix;
pub use uncle::{LossTerms, Normalization, UncleModel};

#[cfg(test)]
mod tests;
