//! Orchestration: config, on-disk formats and the pipeline commands.

pub mod config;
pub mod manifest;
pub mod pgm;
pub mod phases;

pub use config::{AblationMode, RunConfig, SweepAxis};
pub use manifest::{DatasetStore, Manifest};
pub use phases::Workspace;
