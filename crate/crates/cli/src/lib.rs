//! Pipeline driver: conversion, translation alignment, regime runs, result
//! grids, pseudo-perplexity and annotator agreement behind one config file.

pub mod commands;
pub mod config;
pub mod report;

use attrqa_core::Error;

pub use config::PipelineConfig;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Bad configuration or input data.
    pub const INVALID: i32 = 2;
    /// A model, translator or other backend failed.
    pub const BACKEND: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_backend_failure() => exit::BACKEND,
            _ => exit::INVALID,
        }
    }
}
