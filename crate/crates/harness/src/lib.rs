//! Configuration, CSV output and experiment sweeps behind the `fpf` CLI.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod manifest;
