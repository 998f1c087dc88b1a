//! Orchestration of the chain: configuration, staged runs over a bundle
//! directory, figures and training-set generation for external deblurrers.

pub mod config;
pub mod dataset;
pub mod figures;
pub mod metrics;
pub mod pipeline;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, Bundle, Manifest, Stage, StageError};
