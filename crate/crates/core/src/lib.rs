//! Event-attribute extraction from historical adverts framed as extractive
//! question answering.
//!
//! The crate covers the whole pipeline around pluggable model backends:
//!
//! * [`data`]: annotated ads, SQuAD-v2 records, splits and corpus statistics
//! * [`conversion`]: ads to QA records, and question selection with a frozen model
//! * [`alignment`]: projecting gold answers into machine-translated contexts
//! * [`metrics`]: SQuAD-v2 span F1 / EM, agreement and diagnostic breakdowns
//! * [`mlm`]: masked-LM pseudo-perplexity
//! * [`model`]: backend contracts and deterministic mock backends
//! * [`regimes`]: zero-shot, few-shot, semi-supervised and cross-lingual runs

pub mod alignment;
pub mod conversion;
pub mod data;
pub mod error;
pub mod metrics;
pub mod mlm;
pub mod model;
pub mod regimes;
pub mod text;

pub use error::{Error, Result};
