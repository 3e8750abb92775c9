//! Experiment runner for `smtde-core`: JSON configs in, long-format CSV and
//! JSON reports out.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{Experiment, Plan, RunConfig};
pub use error::CliError;
pub use run::{execute, run, RunOutput};
