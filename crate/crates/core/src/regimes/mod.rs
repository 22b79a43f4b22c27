//! Training and evaluation regimes.
//!
//! Every runner returns a [`RegimeRunResult`] carrying the metrics plus
//! enough provenance (settings, seeds, dataset hashes, step schedule) to
//! replay the run. With deterministic backends a replay reproduces the
//! metrics exactly.

mod holdout;
mod run_dir;
mod tri;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::kgram_best_match;
use crate::data::split::ranked_ids;
use crate::data::{Language, QARecord};
use crate::error::{Error, Result};
use crate::metrics::{BucketEdges, Evaluator, MetricsReport, Normalizer, Prediction};
use crate::model::{
    predict_all, qa_prompt, run_joint_phase, run_mlm_phase, run_qa_phase, PromptModel, QAModel, StepLog,
    TrainConfig, TrainableQAModel,
};
use crate::text;

pub use holdout::{holdout_split, run_attribute_holdout, run_attribute_holdout_grid, HoldoutScore};
pub use run_dir::{load_run_dir, write_run_dir, RunDirContents};
pub use tri::{adopt_by_vote, bootstrap_indices, run_tri_training, PseudoLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    ZeroShot,
    FewShot,
    FurtherPretrain,
    JointMlmQa,
    TriTraining,
    XlingSimple,
    XlingMlm,
    AttributeHoldout,
    PromptBaseline,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 9] = [
        RegimeKind::ZeroShot,
        RegimeKind::FewShot,
        RegimeKind::FurtherPretrain,
        RegimeKind::JointMlmQa,
        RegimeKind::TriTraining,
        RegimeKind::XlingSimple,
        RegimeKind::XlingMlm,
        RegimeKind::AttributeHoldout,
        RegimeKind::PromptBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegimeKind::ZeroShot => "zero_shot",
            RegimeKind::FewShot => "few_shot",
            RegimeKind::FurtherPretrain => "further_pretrain",
            RegimeKind::JointMlmQa => "joint_mlm_qa",
            RegimeKind::TriTraining => "tri_training",
            RegimeKind::XlingSimple => "xling_simple",
            RegimeKind::XlingMlm => "xling_mlm",
            RegimeKind::AttributeHoldout => "attribute_holdout",
            RegimeKind::PromptBaseline => "prompt_baseline",
        }
    }

    /// Kinds that fine-tune on a sampled training budget.
    pub fn needs_budget(self) -> bool {
        matches!(
            self,
            RegimeKind::FewShot
                | RegimeKind::FurtherPretrain
                | RegimeKind::JointMlmQa
                | RegimeKind::TriTraining
                | RegimeKind::XlingSimple
                | RegimeKind::XlingMlm
        )
    }

    pub fn needs_unlabeled(self) -> bool {
        matches!(
            self,
            RegimeKind::FurtherPretrain | RegimeKind::JointMlmQa | RegimeKind::TriTraining | RegimeKind::XlingMlm
        )
    }

    pub fn is_cross_lingual(self) -> bool {
        matches!(self, RegimeKind::XlingSimple | RegimeKind::XlingMlm)
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegimeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = RegimeKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!("unknown regime `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// What to run. Budgets count ads, not QA records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub kind: RegimeKind,
    #[serde(default)]
    pub budget: Option<usize>,
    pub source_lang: Language,
    pub target_lang: Language,
    #[serde(default)]
    pub unlabeled_corpus_ref: Option<String>,
    /// Tri-training rounds (default 1).
    #[serde(default)]
    pub rounds: Option<usize>,
    /// Held-out attribute for `attribute_holdout`.
    #[serde(default)]
    pub attribute: Option<String>,
}

impl RegimeSpec {
    pub fn new(kind: RegimeKind, lang: Language) -> Self {
        RegimeSpec {
            kind,
            budget: None,
            source_lang: lang,
            target_lang: lang,
            unlabeled_corpus_ref: None,
            rounds: None,
            attribute: None,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_target(mut self, lang: Language) -> Self {
        self.target_lang = lang;
        self
    }

    pub fn rounds(&self) -> usize {
        self.rounds.unwrap_or(1)
    }

    /// Checks the spec against the number of available training ads.
    pub fn validate(&self, n_train_ads: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("regime {}: {m}", self.kind)));
        if self.kind.needs_budget() {
            match self.budget {
                None => return bad("a budget is required".into()),
                Some(0) => return bad("budget must be positive".into()),
                Some(b) if b > n_train_ads => return bad(format!("budget {b} exceeds the {n_train_ads} training ads")),
                Some(_) => {}
            }
        }
        if self.kind.is_cross_lingual() == (self.source_lang == self.target_lang) {
            return if self.kind.is_cross_lingual() {
                bad("source and target languages must differ".into())
            } else {
                bad("source and target languages must match".into())
            };
        }
        if self.rounds == Some(0) {
            return bad("rounds must be positive".into());
        }
        if self.kind == RegimeKind::AttributeHoldout && self.attribute.as_deref().is_none_or(str::is_empty) {
            return bad("an attribute to hold out is required".into());
        }
        Ok(())
    }
}

/// Everything besides the data that determines a run's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub spec: RegimeSpec,
    pub train: TrainConfig,
    /// Predict no answer when `no_answer_score - answer_score` exceeds this.
    pub null_threshold: f64,
    pub normalizer: Normalizer,
    pub bucket_edges: BucketEdges,
    /// Seed for ad-budget sampling.
    pub sample_seed: u64,
}

impl RunSettings {
    pub fn new(spec: RegimeSpec) -> Self {
        RunSettings {
            spec,
            train: TrainConfig::default(),
            null_threshold: 0.0,
            normalizer: Normalizer::default(),
            bucket_edges: BucketEdges::Quintiles,
            sample_seed: 0,
        }
    }

    pub fn with_train(mut self, train: TrainConfig) -> Self {
        self.train = train;
        self
    }

    pub fn evaluator(&self) -> Evaluator {
        Evaluator::new(self.spec.target_lang)
            .with_normalizer(self.normalizer.clone())
            .with_bucket_edges(self.bucket_edges.clone())
    }

    /// Short stable digest of the settings; names run directories.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("settings serialize");
        hex::encode(&Sha256::digest(&json)[..6])
    }
}

/// Content hash of a record set (order-sensitive).
pub fn records_hash(records: &[QARecord]) -> String {
    let json = serde_json::to_vec(records).expect("records serialize");
    hex::encode(&Sha256::digest(&json)[..16])
}

/// Content hash of an unlabeled text corpus.
pub fn corpus_hash(corpus: &[String]) -> String {
    let mut h = Sha256::new();
    for s in corpus {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// `(phase, seconds)` in execution order.
    pub phases: Vec<(String, f64)>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub settings_hash: String,
    pub settings: RunSettings,
    pub seeds: Vec<u64>,
    pub dataset_hashes: BTreeMap<String, String>,
    pub base_model: String,
    /// Training phases in execution order, e.g. `["mlm", "qa"]`.
    pub phases: Vec<String>,
    pub step_logs: BTreeMap<String, StepLog>,
}

/// Regime-specific outputs beyond the headline metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDetails {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adopted_per_round: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labeled_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pseudo_labels: Vec<PseudoLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holdout: Vec<HoldoutScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_unmapped: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRunResult {
    pub spec: RegimeSpec,
    pub metrics: MetricsReport,
    pub model_fingerprint: String,
    pub timing: Timing,
    pub provenance: Provenance,
    pub details: RunDetails,
}

/// Collects provenance and phase timings while a runner executes.
struct Recorder<'a> {
    settings: &'a RunSettings,
    start: Instant,
    timing: Timing,
    seeds: Vec<u64>,
    dataset_hashes: BTreeMap<String, String>,
    phases: Vec<String>,
    step_logs: BTreeMap<String, StepLog>,
}

impl<'a> Recorder<'a> {
    fn new(settings: &'a RunSettings, expected: &[RegimeKind]) -> Result<Self> {
        if !expected.contains(&settings.spec.kind) {
            return Err(Error::InvalidArgument(format!(
                "regime runner for {} called with a {} spec",
                expected[0], settings.spec.kind
            )));
        }
        Ok(Recorder {
            settings,
            start: Instant::now(),
            timing: Timing::default(),
            seeds: Vec::new(),
            dataset_hashes: BTreeMap::new(),
            phases: Vec::new(),
            step_logs: BTreeMap::new(),
        })
    }

    fn records(&mut self, name: &str, records: &[QARecord]) {
        self.dataset_hashes.insert(name.into(), records_hash(records));
    }

    fn corpus(&mut self, name: &str, corpus: &[String]) {
        self.dataset_hashes.insert(name.into(), corpus_hash(corpus));
    }

    fn phase<T>(&mut self, name: &str, f: impl FnOnce(&mut StepLog) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let mut log = StepLog::default();
        let out = f(&mut log)?;
        self.timing.phases.push((name.into(), t.elapsed().as_secs_f64()));
        self.phases.push(name.into());
        if !log.steps.is_empty() {
            self.step_logs.insert(name.into(), log);
        }
        Ok(out)
    }

    fn evaluate(&mut self, model: &dyn QAModel, eval: &[QARecord]) -> Result<MetricsReport> {
        let preds = self.phase("eval", |_| predict_all(model, eval, self.settings.null_threshold))?;
        self.settings.evaluator().evaluate(&preds, eval)
    }

    fn finish(mut self, metrics: MetricsReport, base_model: String, fingerprint: String, details: RunDetails) -> RegimeRunResult {
        self.timing.total_seconds = self.start.elapsed().as_secs_f64();
        log::info!(
            "{} finished: f1 {:.2} over {} records in {:.2}s",
            self.settings.spec.kind,
            metrics.f1,
            metrics.n,
            self.timing.total_seconds
        );
        RegimeRunResult {
            spec: self.settings.spec.clone(),
            metrics,
            model_fingerprint: fingerprint,
            timing: self.timing,
            provenance: Provenance {
                settings_hash: self.settings.hash(),
                settings: self.settings.clone(),
                seeds: self.seeds,
                dataset_hashes: self.dataset_hashes,
                base_model,
                phases: self.phases,
                step_logs: self.step_logs,
            },
            details,
        }
    }
}

fn require_eval(eval: &[QARecord]) -> Result<()> {
    if eval.is_empty() {
        Err(Error::InvalidArgument("evaluation set is empty".into()))
    } else {
        Ok(())
    }
}

/// Records of `budget_ads` ads drawn by seeded rank. All records of a drawn
/// ad are kept, in input order. For a fixed seed a smaller budget always
/// draws a subset of a larger one.
pub fn sample_budget(records: &[QARecord], budget_ads: usize, seed: u64) -> Result<Vec<QARecord>> {
    let mut seen = HashSet::new();
    let ads: Vec<&str> = records
        .iter()
        .map(|r| r.source_ad_id.as_str())
        .filter(|id| seen.insert(*id))
        .collect();
    if budget_ads == 0 || budget_ads > ads.len() {
        return Err(Error::InvalidArgument(format!(
            "budget of {budget_ads} ads is outside 1..={}",
            ads.len()
        )));
    }
    let chosen: HashSet<&str> = ranked_ids(ads, seed).into_iter().take(budget_ads).collect();
    Ok(records
        .iter()
        .filter(|r| chosen.contains(r.source_ad_id.as_str()))
        .cloned()
        .collect())
}

/// Number of distinct source ads among `records`.
pub fn count_ads(records: &[QARecord]) -> usize {
    records.iter().map(|r| r.source_ad_id.as_str()).collect::<HashSet<_>>().len()
}

/// Applies the spec's budget to `train` (no-op for kinds without one).
pub fn budgeted_train(settings: &RunSettings, train: &[QARecord]) -> Result<Vec<QARecord>> {
    settings.spec.validate(count_ads(train))?;
    match (settings.spec.kind.needs_budget(), settings.spec.budget) {
        (true, Some(b)) => sample_budget(train, b, settings.sample_seed),
        _ => Ok(train.to_vec()),
    }
}

/// Evaluates `model` as is.
pub fn run_zero_shot(settings: &RunSettings, model: &dyn QAModel, eval: &[QARecord]) -> Result<RegimeRunResult> {
    let mut rec = Recorder::new(settings, &[RegimeKind::ZeroShot])?;
    require_eval(eval)?;
    rec.records("eval", eval);
    let metrics = rec.evaluate(model, eval)?;
    let fp = model.fingerprint();
    Ok(rec.finish(metrics, fp.clone(), fp, RunDetails::default()))
}

/// Fine-tunes a copy of `model` on `train`, then evaluates it.
pub fn run_few_shot(
    settings: &RunSettings,
    model: &dyn TrainableQAModel,
    train: &[QARecord],
    eval: &[QARecord],
) -> Result<RegimeRunResult> {
    let mut rec = Recorder::new(settings, &[RegimeKind::FewShot])?;
    require_eval(eval)?;
    rec.records("train", train);
    rec.records("eval", eval);
    rec.seeds.push(settings.train.seed);
    let mut m = model.boxed_clone();
    rec.phase("qa", |log| run_qa_phase(m.as_mut(), train, &settings.train, log))?;
    let metrics = rec.evaluate(m.as_ref(), eval)?;
    Ok(rec.finish(metrics, model.fingerprint(), m.fingerprint(), RunDetails::default()))
}

/// MLM on the unlabeled corpus, then QA fine-tuning.
pub fn run_further_pretrain(
    settings: &RunSettings,
    model: &dyn TrainableQAModel,
    unlabeled: &[String],
    train: &[QARecord],
    eval: &[QARecord],
) -> Result<RegimeRunResult> {
    let mut rec = Recorder::new(settings, &[RegimeKind::FurtherPretrain])?;
    require_eval(eval)?;
    rec.corpus("unlabeled", unlabeled);
    rec.records("train", train);
    rec.records("eval", eval);
    rec.seeds.push(settings.train.seed);
    let mut m = model.boxed_clone();
    rec.phase("mlm", |log| run_mlm_phase(m.as_mut(), unlabeled, &settings.train, log))?;
    rec.phase("qa", |log| run_qa_phase(m.as_mut(), train, &settings.train, log))?;
    let metrics = rec.evaluate(m.as_ref(), eval)?;
    Ok(rec.finish(metrics, model.fingerprint(), m.fingerprint(), RunDetails::default()))
}

/// QA and MLM steps interleaved 1:1.
pub fn run_joint_mlm_qa(
    settings: &RunSettings,
    model: &dyn TrainableQAModel,
    unlabeled: &[String],
    train: &[QARecord],
    eval: &[QARecord],
) -> Result<RegimeRunResult> {
    let mut rec = Recorder::new(settings, &[RegimeKind::JointMlmQa])?;
    require_eval(eval)?;
    rec.corpus("unlabeled", unlabeled);
    rec.records("train", train);
    rec.records("eval", eval);
    rec.seeds.push(settings.train.seed);
    let mut m = model.boxed_clone();
    rec.phase("joint", |log| run_joint_phase(m.as_mut(), train, unlabeled, &settings.train, log))?;
    let metrics = rec.evaluate(m.as_ref(), eval)?;
    Ok(rec.finish(metrics, model.fingerprint(), m.fingerprint(), RunDetails::default()))
}

/// Trains on source-language records and evaluates on the target language.
/// `xling_mlm` interleaves MLM steps on target-language text.
pub fn run_cross_lingual(
    settings: &RunSettings,
    model: &dyn TrainableQAModel,
    src_train: &[QARecord],
    tgt_eval: &[QARecord],
    tgt_unlabeled: Option<&[String]>,
) -> Result<RegimeRunResult> {
    let mut rec = Recorder::new(settings, &[RegimeKind::XlingSimple, RegimeKind::XlingMlm])?;
    require_eval(tgt_eval)?;
    rec.records("train", src_train);
    rec.records("eval", tgt_eval);
    rec.seeds.push(settings.train.seed);
    let mut m = model.boxed_clone();
    match settings.spec.kind {
        RegimeKind::XlingMlm => {
            let corpus = tgt_unlabeled
                .ok_or_else(|| Error::InvalidArgument("xling_mlm needs target-language unlabeled text".into()))?;
            rec.corpus("unlabeled", corpus);
            rec.phase("joint", |log| run_joint_phase(m.as_mut(), src_train, corpus, &settings.train, log))?;
        }
        _ => rec.phase("qa", |log| run_qa_phase(m.as_mut(), src_train, &settings.train, log))?,
    }
    let metrics = rec.evaluate(m.as_ref(), tgt_eval)?;
    Ok(rec.finish(metrics, model.fingerprint(), m.fingerprint(), RunDetails::default()))
}

/// How a free-text generation is mapped back onto the context.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMapping {
    /// The generation must occur verbatim in the context.
    #[default]
    Exact,
    /// Verbatim if possible, otherwise the closest word window.
    Fuzzy,
}

impl FromStr for PromptMapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(PromptMapping::Exact),
            "fuzzy" => Ok(PromptMapping::Fuzzy),
            other => Err(Error::InvalidArgument(format!("unknown mapping `{other}` (expected exact or fuzzy)"))),
        }
    }
}

/// Maps a generation to a context span; `None` when it cannot be placed.
pub fn map_generation(context: &str, generation: &str, mapping: PromptMapping) -> Option<(String, usize)> {
    let g = generation.trim();
    if g.is_empty() {
        return None;
    }
    if let Some(start) = text::find_char_offset(context, g) {
        return Some((g.to_string(), start));
    }
    match mapping {
        PromptMapping::Exact => None,
        PromptMapping::Fuzzy => {
            kgram_best_match(context, g, text::word_count(g).max(1)).map(|m| (m.span_text, m.char_start))
        }
    }
}

/// Prompts a text-to-text model per record and scores the mapped spans.
/// Generations that cannot be mapped count as no-answer predictions.
pub fn run_prompt_baseline(
    settings: &RunSettings,
    pm: &dyn PromptModel,
    eval: &[QARecord],
    mapping: PromptMapping,
) -> Result<RegimeRunResult> {
    let mut rec = Recorder::new(settings, &[RegimeKind::PromptBaseline])?;
    require_eval(eval)?;
    rec.records("eval", eval);
    if !pm.is_deterministic() {
        log::warn!("prompt model {} is not deterministic; reruns may differ", pm.fingerprint());
    }
    let preds: Vec<(Prediction, bool)> = rec.phase("generate", |_| {
        eval.par_iter()
            .map(|r| {
                let generation = pm.generate(&qa_prompt(&r.context, &r.question)).map_err(|e| e.with_record(&r.id))?;
                Ok(match map_generation(&r.context, &generation, mapping) {
                    Some((span, start)) => (
                        Prediction {
                            char_start: Some(start),
                            ..Prediction::new(&r.id, span)
                        },
                        false,
                    ),
                    None => (Prediction::no_answer(&r.id), !generation.trim().is_empty()),
                })
            })
            .collect::<Result<_>>()
    })?;
    let unmapped = preds.iter().filter(|(_, u)| *u).count();
    let preds: Vec<Prediction> = preds.into_iter().map(|(p, _)| p).collect();
    let metrics = settings.evaluator().evaluate(&preds, eval)?;
    let fp = pm.fingerprint();
    Ok(rec.finish(
        metrics,
        fp.clone(),
        fp,
        RunDetails {
            prompt_unmapped: Some(unmapped),
            ..RunDetails::default()
        },
    ))
}
