//! HTTP service and command line for the visualization propagation engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod ops;
