//! Pipeline runner behind the `geo-uq` binary: configuration, stages and
//! their JSONL artifacts.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::{run_stages, Context, Stage};
