//! Command-line front end and HTTP service for `nel-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod engine;
pub mod service;
