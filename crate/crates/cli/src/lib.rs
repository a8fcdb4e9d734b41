//! Command-line driver for training, sweeps, validation and reference
//! solves. The binary in `main.rs` is a thin argument layer over
//! [`commands`].

pub mod checks;
pub mod commands;
pub mod config;
