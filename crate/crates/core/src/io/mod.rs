//! Configuration text, experiment dispatch and output files.

pub mod config;
pub mod run;

pub use config::{parse_config, Experiment, RunConfig, StarkMode, TruncationKind};
pub use run::{execute, run, verify_outputs, write_outputs, Artifact, FileChecksum, RunManifest, RunOutput, MANIFEST_NAME};
