//! Configuration, experiment scenarios, reports and model persistence.

pub mod config;
pub mod experiments;
pub mod model_file;
pub mod report;

pub use config::ExperimentConfig;
pub use model_file::{ModelFile, MODEL_MAGIC};
