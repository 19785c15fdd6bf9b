//! File formats, run directories and commands around `pulse_core`.
//!
//! A dataset directory holds `manifest.csv` and PCB1 clip files under
//! `clips/` (see [`format`]). A run directory holds the epoch log, the
//! pseudo-label audit, metrics and a checkpoint (see [`rundir`]).

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod loader;
pub mod manifest;
pub mod rundir;
pub mod signals;

pub use error::{Error, Result};
