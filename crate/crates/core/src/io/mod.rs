//! Configuration, binary and text formats, and run manifests.

pub mod config;
pub mod formats;
pub mod manifest;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use manifest::{FileEntry, RunManifest};
