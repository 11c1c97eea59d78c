//! Command-line front end, file formats and parallel drivers for
//! [`bsdelab_core`].
//!
//! - [`config`]: TOML config files, flag overrides and provenance.
//! - [`commands`]: the `envelope`, `check`, `solve` and `experiment` drivers.
//! - [`report`]: JSON reports and CSV tables.
//! - [`exec`]: rayon executor; the worker count comes from `BSDELAB_WORKERS`.
//! - [`pathio`]: binary dump of simulated paths.

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod pathio;
pub mod report;

pub use error::{LabError, Result};
