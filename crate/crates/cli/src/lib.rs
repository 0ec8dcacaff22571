//! Command-line front end: configuration, file formats, plots and the
//! `sweep | curve | tongue | orbit | natfreq` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod plot;

pub use commands::{cmd_curve, cmd_natfreq, cmd_orbit, cmd_sweep, cmd_tongue, Common, Summary};
pub use config::Config;
pub use error::{CliError, CliResult};
