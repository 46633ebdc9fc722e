//! Command-line entry point and local HTTP service around `oscr-core`.

pub mod api;
pub mod cli;
pub mod error;
pub mod service;
