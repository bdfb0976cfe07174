//! Command-line front end: configuration, mask ingestion and the plan /
//! simulate / compare / export commands.

pub mod config;
pub mod error;
pub mod mask;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::RunOptions;
