//! Command-line front end: run configuration, checkpoints, trajectory
//! traces and plots, and the `train`, `eval`, `rollout` and `plot`
//! subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod plot;
pub mod trace;
