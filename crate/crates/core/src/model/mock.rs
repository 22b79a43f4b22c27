//! Deterministic stand-in backends.
//!
//! Non-learning mocks still accept training steps so that every regime can
//! run against them; a step only advances the model's fingerprint.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{PromptModel, QAModel, QaOutput, TrainConfig, TrainableQAModel};
use crate::data::{Answer, QARecord};
use crate::error::Result;
use crate::text;

/// Running digest over everything a model has been trained on.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Lineage(String);

impl Lineage {
    fn new(name: &str) -> Self {
        Lineage(name.to_string())
    }

    fn extend<'a>(&mut self, tag: &str, parts: impl IntoIterator<Item = &'a str>) {
        let mut h = Sha256::new();
        h.update(self.0.as_bytes());
        h.update([0]);
        h.update(tag.as_bytes());
        for p in parts {
            h.update([0]);
            h.update(p.as_bytes());
        }
        self.0 = hex::encode(&h.finalize()[..16]);
    }

    fn step(&mut self, tag: &str, config: &TrainConfig, items: impl IntoIterator<Item = String>) {
        let cfg = format!("{}:{}:{}", config.seed, config.learning_rate, config.batch_size);
        let items: Vec<String> = items.into_iter().collect();
        self.extend(tag, std::iter::once(cfg.as_str()).chain(items.iter().map(String::as_str)));
    }
}

fn first_token(context: &str) -> QaOutput {
    match text::words(context).first() {
        Some(w) => QaOutput {
            span_text: context[w.byte_start..w.byte_end].to_string(),
            char_start: w.char_start,
            answer_score: 0.0,
            no_answer_score: f64::NEG_INFINITY,
        },
        None => QaOutput::no_answer(),
    }
}

fn answered(answer: &Answer) -> QaOutput {
    QaOutput {
        span_text: answer.text.clone(),
        char_start: answer.answer_start,
        answer_score: 1.0,
        no_answer_score: 0.0,
    }
}

/// Learns nothing but remembers: after a QA step it answers every seen
/// (context, question) with that record's first gold answer.
#[derive(Debug, Clone)]
pub struct MemorizingModel {
    memory: BTreeMap<(String, String), Option<Answer>>,
    lineage: Lineage,
}

impl MemorizingModel {
    pub fn new() -> Self {
        MemorizingModel {
            memory: BTreeMap::new(),
            lineage: Lineage::new("mock.memorize"),
        }
    }

    pub fn memorized(&self) -> usize {
        self.memory.len()
    }
}

impl Default for MemorizingModel {
    fn default() -> Self {
        Self::new()
    }
}

impl QAModel for MemorizingModel {
    fn predict(&self, context: &str, question: &str) -> Result<QaOutput> {
        let key = (context.to_string(), question.to_string());
        Ok(match self.memory.get(&key) {
            Some(Some(answer)) => answered(answer),
            _ => QaOutput::no_answer(),
        })
    }

    fn fingerprint(&self) -> String {
        format!("mock.memorize@{}", self.lineage.0)
    }
}

impl TrainableQAModel for MemorizingModel {
    fn boxed_clone(&self) -> Box<dyn TrainableQAModel> {
        Box::new(self.clone())
    }

    fn qa_step(&mut self, batch: &[QARecord], config: &TrainConfig) -> Result<()> {
        for r in batch {
            self.memory
                .insert((r.context.clone(), r.question.clone()), r.answers.first().cloned());
        }
        self.lineage.step("qa", config, batch.iter().map(|r| r.id.clone()));
        Ok(())
    }

    fn mlm_step(&mut self, batch: &[String], config: &TrainConfig) -> Result<()> {
        self.lineage.step("mlm", config, batch.iter().cloned());
        Ok(())
    }
}

macro_rules! frozen_trainable {
    ($ty:ty) => {
        impl TrainableQAModel for $ty {
            fn boxed_clone(&self) -> Box<dyn TrainableQAModel> {
                Box::new(self.clone())
            }

            fn qa_step(&mut self, batch: &[QARecord], config: &TrainConfig) -> Result<()> {
                self.lineage.step("qa", config, batch.iter().map(|r| r.id.clone()));
                Ok(())
            }

            fn mlm_step(&mut self, batch: &[String], config: &TrainConfig) -> Result<()> {
                self.lineage.step("mlm", config, batch.iter().cloned());
                Ok(())
            }
        }
    };
}

/// Always answers with the first word of the context and never abstains.
#[derive(Debug, Clone, Copy, Default)]
pub struct FirstTokenModel;

impl QAModel for FirstTokenModel {
    fn predict(&self, context: &str, _question: &str) -> Result<QaOutput> {
        Ok(first_token(context))
    }

    fn fingerprint(&self) -> String {
        "mock.first_token".into()
    }
}

/// [`FirstTokenModel`] wrapped so it can sit behind [`TrainableQAModel`].
#[derive(Debug, Clone)]
pub struct FrozenFirstToken {
    lineage: Lineage,
}

impl FrozenFirstToken {
    pub fn new() -> Self {
        FrozenFirstToken {
            lineage: Lineage::new("mock.first_token"),
        }
    }
}

impl Default for FrozenFirstToken {
    fn default() -> Self {
        Self::new()
    }
}

impl QAModel for FrozenFirstToken {
    fn predict(&self, context: &str, _question: &str) -> Result<QaOutput> {
        Ok(first_token(context))
    }

    fn fingerprint(&self) -> String {
        format!("mock.first_token@{}", self.lineage.0)
    }
}

frozen_trainable!(FrozenFirstToken);

/// Answers the first word of the context with fixed scores.
#[derive(Debug, Clone, Copy)]
pub struct FixedScoreModel {
    pub answer_score: f64,
    pub no_answer_score: f64,
}

impl QAModel for FixedScoreModel {
    fn predict(&self, context: &str, _question: &str) -> Result<QaOutput> {
        let mut out = first_token(context);
        out.answer_score = self.answer_score;
        out.no_answer_score = self.no_answer_score;
        Ok(out)
    }

    fn fingerprint(&self) -> String {
        format!("mock.fixed({},{})", self.answer_score, self.no_answer_score)
    }
}

/// Always predicts that there is no answer.
#[derive(Debug, Clone)]
pub struct NoAnswerModel {
    lineage: Lineage,
}

impl NoAnswerModel {
    pub fn new() -> Self {
        NoAnswerModel {
            lineage: Lineage::new("mock.no_answer"),
        }
    }
}

impl Default for NoAnswerModel {
    fn default() -> Self {
        Self::new()
    }
}

impl QAModel for NoAnswerModel {
    fn predict(&self, _context: &str, _question: &str) -> Result<QaOutput> {
        Ok(QaOutput {
            span_text: String::new(),
            char_start: 0,
            answer_score: 0.0,
            no_answer_score: f64::INFINITY,
        })
    }

    fn fingerprint(&self) -> String {
        format!("mock.no_answer@{}", self.lineage.0)
    }
}

frozen_trainable!(NoAnswerModel);

/// Fixed per-(context, question) outputs; anything unscripted gets no
/// answer.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    outputs: Arc<HashMap<(String, String), QaOutput>>,
    lineage: Lineage,
}

impl ScriptedModel {
    pub fn new(name: &str) -> Self {
        ScriptedModel {
            outputs: Arc::new(HashMap::new()),
            lineage: Lineage::new(&format!("mock.scripted.{name}")),
        }
    }

    /// Scripts `span` (located at its first occurrence) as the answer;
    /// `""` scripts an abstention.
    pub fn with_answer(self, context: &str, question: &str, span: &str) -> Self {
        let out = if span.is_empty() {
            QaOutput::no_answer()
        } else {
            let char_start = text::find_char_offset(context, span)
                .unwrap_or_else(|| panic!("scripted span {span:?} not in context"));
            QaOutput {
                span_text: span.to_string(),
                char_start,
                answer_score: 1.0,
                no_answer_score: 0.0,
            }
        };
        self.with_raw_output(context, question, out)
    }

    pub fn with_raw_output(mut self, context: &str, question: &str, out: QaOutput) -> Self {
        Arc::make_mut(&mut self.outputs).insert((context.to_string(), question.to_string()), out);
        self
    }
}

impl QAModel for ScriptedModel {
    fn predict(&self, context: &str, question: &str) -> Result<QaOutput> {
        Ok(self
            .outputs
            .get(&(context.to_string(), question.to_string()))
            .cloned()
            .unwrap_or_else(QaOutput::no_answer))
    }

    fn fingerprint(&self) -> String {
        self.lineage.0.clone()
    }
}

frozen_trainable!(ScriptedModel);

/// Answers every known (context, question) with its gold answer.
#[derive(Debug, Clone)]
pub struct OracleModel {
    inner: ScriptedModel,
}

impl OracleModel {
    pub fn from_records(records: &[QARecord]) -> Self {
        let mut inner = ScriptedModel::new("oracle");
        inner.lineage = Lineage::new("mock.oracle");
        for r in records {
            let out = r.answers.first().map(answered).unwrap_or_else(QaOutput::no_answer);
            inner = inner.with_raw_output(&r.context, &r.question, out);
        }
        OracleModel { inner }
    }
}

impl QAModel for OracleModel {
    fn predict(&self, context: &str, question: &str) -> Result<QaOutput> {
        self.inner.predict(context, question)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}

impl TrainableQAModel for OracleModel {
    fn boxed_clone(&self) -> Box<dyn TrainableQAModel> {
        Box::new(self.clone())
    }

    fn qa_step(&mut self, batch: &[QARecord], config: &TrainConfig) -> Result<()> {
        self.inner.qa_step(batch, config)
    }

    fn mlm_step(&mut self, batch: &[String], config: &TrainConfig) -> Result<()> {
        self.inner.mlm_step(batch, config)
    }
}

/// Prompt model answering from a fixed prompt → text table; unknown prompts
/// yield `""`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPromptModel {
    name: String,
    replies: HashMap<String, String>,
}

impl ScriptedPromptModel {
    pub fn new(name: &str) -> Self {
        ScriptedPromptModel {
            name: name.to_string(),
            replies: HashMap::new(),
        }
    }

    pub fn with_reply(mut self, prompt: impl Into<String>, reply: impl Into<String>) -> Self {
        self.replies.insert(prompt.into(), reply.into());
        self
    }
}

impl PromptModel for ScriptedPromptModel {
    fn generate(&self, prompt: &str) -> Result<String> {
        Ok(self.replies.get(prompt).cloned().unwrap_or_default())
    }

    fn fingerprint(&self) -> String {
        format!("mock.prompt.{}", self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_token_skips_leading_space() {
        let out = FirstTokenModel.predict("  Élise ran", "?").unwrap();
        assert_eq!((out.span_text.as_str(), out.char_start), ("Élise", 2));
        assert_eq!(FirstTokenModel.predict("   ", "?").unwrap().span_text, "");
    }

    #[test]
    fn frozen_mocks_advance_fingerprint_only() {
        let mut m = NoAnswerModel::new();
        let before = m.fingerprint();
        m.mlm_step(&["text".into()], &TrainConfig::default()).unwrap();
        assert_ne!(before, m.fingerprint());
        assert_eq!(m.predict("a b", "?").unwrap().span_text, "");
    }

    #[test]
    fn oracle_answers_gold() {
        let mut r = QARecord::impossible("ad", "given_name", "named Jack Smith", "Who?");
        r.answers.push(Answer {
            text: "Jack".into(),
            answer_start: 6,
        });
        r.is_impossible = false;
        let m = OracleModel::from_records(&[r]);
        assert_eq!(m.predict("named Jack Smith", "Who?").unwrap().span_text, "Jack");
        assert_eq!(m.predict("named Jack Smith", "Where?").unwrap().span_text, "");
    }
}
