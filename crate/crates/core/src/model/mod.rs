//! Backend-agnostic model contracts.
//!
//! Regimes only talk to models through [`QAModel`], [`TrainableQAModel`] and
//! [`PromptModel`]. Concrete checkpoints live behind these traits; the
//! [`mock`] backends are deterministic and make every regime testable.

mod exec;
pub mod mock;
mod registry;
mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::QARecord;
use crate::error::{Error, Result};
use crate::metrics::Prediction;
use crate::text;

pub use exec::{ExecPromptModel, ExecQaModel};
pub use registry::{prompt_backend, qa_backend, trainable_backend, BackendContext, PROMPT_BACKENDS, QA_BACKENDS};
pub use train::{fine_tune, run_joint_phase, run_mlm_phase, run_qa_phase, Objective, StepLog};

/// Raw output of an extractive QA backend for one (context, question).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaOutput {
    /// Best span, verbatim in the context; `""` means no answer.
    pub span_text: String,
    pub char_start: usize,
    pub answer_score: f64,
    pub no_answer_score: f64,
}

impl QaOutput {
    pub fn no_answer() -> Self {
        QaOutput {
            span_text: String::new(),
            char_start: 0,
            answer_score: f64::NEG_INFINITY,
            no_answer_score: 0.0,
        }
    }
}

/// Inference side of an extractive QA model. Must tolerate concurrent
/// read-only calls.
pub trait QAModel: Send + Sync {
    fn predict(&self, context: &str, question: &str) -> Result<QaOutput>;

    /// Opaque identifier of the model's exact state.
    fn fingerprint(&self) -> String;
}

/// A QA model that can also take optimisation steps. Steps mutate the
/// instance; [`fine_tune`] and the regimes clone first, so callers' models
/// are never changed.
pub trait TrainableQAModel: QAModel {
    fn boxed_clone(&self) -> Box<dyn TrainableQAModel>;

    fn qa_step(&mut self, batch: &[QARecord], config: &TrainConfig) -> Result<()>;

    fn mlm_step(&mut self, batch: &[String], config: &TrainConfig) -> Result<()>;
}

/// A text-to-text model queried with prompts.
pub trait PromptModel: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String>;

    fn is_deterministic(&self) -> bool {
        true
    }

    fn fingerprint(&self) -> String;
}

fn default_epochs() -> usize {
    5
}
fn default_learning_rate() -> f64 {
    5e-5
}
fn default_batch_size() -> usize {
    32
}
fn default_joint_batch() -> usize {
    16
}
fn default_max_sequence_length() -> usize {
    256
}

/// Training hyper-parameters. Anything not listed here is left at the
/// backend's own defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Per-objective batch when QA and MLM steps are interleaved.
    #[serde(default = "default_joint_batch")]
    pub joint_batch_per_objective: usize,
    #[serde(default)]
    pub weight_decay: f64,
    /// In model tokens.
    #[serde(default = "default_max_sequence_length")]
    pub max_sequence_length: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            joint_batch_per_objective: default_joint_batch(),
            weight_decay: 0.0,
            max_sequence_length: default_max_sequence_length(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("train config: {what}")));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.joint_batch_per_objective == 0 {
            return bad("batch sizes must be positive");
        }
        if 2 * self.joint_batch_per_objective != self.batch_size {
            return bad("joint per-objective batches must sum to batch_size");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.max_sequence_length == 0 {
            return bad("max_sequence_length must be positive");
        }
        Ok(())
    }
}

/// Extractive-QA prompt for text-to-text models.
pub fn qa_prompt(context: &str, question: &str) -> String {
    format!(
        "Given the following passage: {context}, answer the following question. \
         Note that the answer is present within the text. Question: {question}"
    )
}

/// Runs one record through a model and applies the no-answer threshold:
/// the prediction is empty when `no_answer_score - answer_score` exceeds
/// `null_threshold`.
pub fn predict_answer(model: &dyn QAModel, record: &QARecord, null_threshold: f64) -> Result<Prediction> {
    let out = model
        .predict(&record.context, &record.question)
        .map_err(|e| e.with_record(&record.id))?;
    if !out.span_text.is_empty() && !text::is_verbatim_at(&record.context, &out.span_text, out.char_start) {
        return Err(Error::Backend {
            record_id: Some(record.id.clone()),
            message: format!(
                "span {:?} is not verbatim in the context at offset {}",
                out.span_text, out.char_start
            ),
        });
    }
    let margin = out.no_answer_score - out.answer_score;
    let abstain = out.span_text.is_empty() || margin > null_threshold;
    Ok(Prediction {
        record_id: record.id.clone(),
        text: if abstain { String::new() } else { out.span_text },
        char_start: (!abstain).then_some(out.char_start),
        no_answer_score_margin: margin.is_finite().then_some(margin),
    })
}

/// [`predict_answer`] over many records, in parallel, keeping input order.
pub fn predict_all(model: &dyn QAModel, records: &[QARecord], null_threshold: f64) -> Result<Vec<Prediction>> {
    records
        .par_iter()
        .map(|r| predict_answer(model, r, null_threshold))
        .collect()
}
