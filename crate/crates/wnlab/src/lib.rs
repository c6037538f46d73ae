//! Experiment harness around `wnlab-core`: Monte Carlo risk estimation,
//! oracle and upper-function checks, rate-slope fits, file formats and the
//! configuration-driven runner behind the `wnlab` binary.

pub mod config;
pub mod gridio;
pub mod risk;
pub mod runner;
