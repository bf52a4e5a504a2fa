//! Experiment harness for decentralized online gradient descent.
//!
//! Reads TOML experiment files, runs them on a thread pool through
//! `dogsim-core`, and writes CSV/text results. The `dogsim` binary wraps the
//! functions in [`commands`].

pub mod commands;
pub mod config;
pub mod error;
pub mod executor;
pub mod experiment;
pub mod formats;

pub use error::CliError;
