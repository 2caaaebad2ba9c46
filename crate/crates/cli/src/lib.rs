//! Configuration, artifacts and subcommands of the `chemoblow` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod io;

pub use config::{ConfigError, InitialData, Mode, RunConfig, SweepAxes, Thresholds};
