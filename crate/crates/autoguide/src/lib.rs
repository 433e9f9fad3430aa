//! Files, HTTP and cassette backends, the evaluation harness and the command
//! line for `autoguide-core`.

pub mod cassette;
pub mod cli;
pub mod config;
pub mod error;
pub mod files;
pub mod harness;
pub mod http;

pub use error::CliError;
