//! SQuAD-v2 style answer scoring.
//!
//! Text is normalized the way the official SQuAD evaluation does it
//! (lower-case, drop punctuation, drop articles, collapse whitespace) and
//! compared as token bags. Multiple gold answers score as the maximum over
//! golds; a record with no gold answers only accepts the empty prediction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AdDocument, Language, QARecord};
use crate::error::{Error, Result};
use crate::text::word_count;

/// Typographic punctuation common in transcribed historical print, stripped
/// in addition to ASCII punctuation.
const EXTRA_PUNCTUATION: &[char] = &[
    '«', '»', '‹', '›', '„', '‚', '“', '”', '‘', '’', '–', '—', '…', '·', '¶', '§', '¿', '¡',
];

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCTUATION.contains(&c)
}

/// Text normalizer with per-language article lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalizer {
    articles: BTreeMap<Language, Vec<String>>,
}

impl Default for Normalizer {
    /// English drops `a`, `an`, `the`; French and Dutch drop nothing.
    fn default() -> Self {
        let mut articles = BTreeMap::new();
        articles.insert(Language::En, vec!["a".into(), "an".into(), "the".into()]);
        Normalizer { articles }
    }
}

impl Normalizer {
    /// A normalizer that removes no articles in any language.
    pub fn without_articles() -> Self {
        Normalizer {
            articles: BTreeMap::new(),
        }
    }

    pub fn with_articles(mut self, language: Language, articles: &[&str]) -> Self {
        self.articles
            .insert(language, articles.iter().map(|a| a.to_lowercase()).collect());
        self
    }

    pub fn articles(&self, language: Language) -> &[String] {
        self.articles.get(&language).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tokens(&self, text: &str, language: Language) -> Vec<String> {
        let cleaned: String = text
            .to_lowercase()
            .chars()
            .filter(|c| !is_punctuation(*c))
            .collect();
        let articles = self.articles(language);
        cleaned
            .split_whitespace()
            .filter(|tok| !articles.iter().any(|a| a == tok))
            .map(str::to_string)
            .collect()
    }

    pub fn span_f1(&self, pred: &str, golds: &[&str], language: Language) -> f64 {
        let pred_tokens = self.tokens(pred, language);
        if golds.is_empty() {
            return token_f1(&pred_tokens, &[]);
        }
        golds
            .iter()
            .map(|g| token_f1(&pred_tokens, &self.tokens(g, language)))
            .fold(0.0, f64::max)
    }

    pub fn exact_match(&self, pred: &str, golds: &[&str], language: Language) -> f64 {
        let pred_tokens = self.tokens(pred, language);
        if golds.is_empty() {
            return if pred_tokens.is_empty() { 1.0 } else { 0.0 };
        }
        let hit = golds.iter().any(|g| self.tokens(g, language) == pred_tokens);
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

pub fn normalize(text: &str, language: Language) -> Vec<String> {
    Normalizer::default().tokens(text, language)
}

/// F1 over token multisets. Two empty bags agree (1.0); an empty bag
/// against a non-empty one scores 0.0.
pub fn token_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in pred {
        if let Some(c) = gold_counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-overlap F1 with the default normalizer, max over `golds`.
pub fn span_f1(pred: &str, golds: &[&str], language: Language) -> f64 {
    Normalizer::default().span_f1(pred, golds, language)
}

/// A model's answer for one evaluation record. Empty `text` means the model
/// predicted that the record has no answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub record_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_answer_score_margin: Option<f64>,
}

impl Prediction {
    pub fn new(record_id: impl Into<String>, text: impl Into<String>) -> Self {
        Prediction {
            record_id: record_id.into(),
            text: text.into(),
            char_start: None,
            no_answer_score_margin: None,
        }
    }

    pub fn no_answer(record_id: impl Into<String>) -> Self {
        Self::new(record_id, "")
    }

    pub fn is_no_answer(&self) -> bool {
        self.text.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub f1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percentages in [0, 100].
    pub f1: f64,
    pub exact_match: f64,
    pub n: usize,
    pub per_attribute: BTreeMap<String, GroupScore>,
    pub per_length_bucket: IndexMap<String, GroupScore>,
}

impl MetricsReport {
    /// `attribute<TAB>f1<TAB>n` rows, header first.
    pub fn per_attribute_tsv(&self) -> String {
        let mut out = String::from("attribute\tf1\tn\n");
        for (attr, g) in &self.per_attribute {
            let _ = writeln!(out, "{attr}\t{:.2}\t{}", g.f1, g.n);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub record_id: String,
    pub attribute: String,
    pub context_words: usize,
    pub f1: f64,
    pub exact_match: f64,
}

/// Length bucket boundaries: bucket `i` holds contexts of at most `edges[i]`
/// words (and more than `edges[i-1]`); a final bucket holds the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BucketEdges {
    /// Quintiles of the evaluated contexts' word counts.
    Quintiles,
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluator {
    pub language: Language,
    pub normalizer: Normalizer,
    pub bucket_edges: BucketEdges,
}

impl Evaluator {
    pub fn new(language: Language) -> Self {
        Evaluator {
            language,
            normalizer: Normalizer::default(),
            bucket_edges: BucketEdges::Quintiles,
        }
    }

    pub fn with_bucket_edges(mut self, edges: BucketEdges) -> Self {
        self.bucket_edges = edges;
        self
    }

    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Self {
        self.normalizer = normalizer;
        self
    }

    /// Scores every record against its prediction, in record order.
    pub fn score_records(&self, preds: &[Prediction], records: &[QARecord]) -> Result<Vec<RecordScore>> {
        let by_id = match_predictions(preds, records)?;
        Ok(records
            .par_iter()
            .map(|r| {
                let pred = &by_id[r.id.as_str()].text;
                let golds = r.gold_texts();
                RecordScore {
                    record_id: r.id.clone(),
                    attribute: r.attribute.clone(),
                    context_words: word_count(&r.context),
                    f1: self.normalizer.span_f1(pred, &golds, self.language),
                    exact_match: self.normalizer.exact_match(pred, &golds, self.language),
                }
            })
            .collect())
    }

    pub fn evaluate(&self, preds: &[Prediction], records: &[QARecord]) -> Result<MetricsReport> {
        let mut scores = self.score_records(preds, records)?;
        // Fixed summation order makes the report independent of input order.
        scores.sort_by(|a, b| a.record_id.cmp(&b.record_id));

        let n = scores.len();
        let f1 = mean_percent(scores.iter().map(|s| s.f1), n);
        let exact_match = mean_percent(scores.iter().map(|s| s.exact_match), n);

        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in &scores {
            groups.entry(s.attribute.clone()).or_default().push(s.f1);
        }
        let per_attribute = groups
            .into_iter()
            .map(|(attr, v)| {
                let n = v.len();
                (attr, GroupScore { f1: mean_percent(v.into_iter(), n), n })
            })
            .collect();

        let edges = match &self.bucket_edges {
            BucketEdges::Quintiles => quintile_edges(scores.iter().map(|s| s.context_words)),
            BucketEdges::Fixed(e) => e.clone(),
        };
        let per_length_bucket = bucket_scores(&scores, &edges)?;

        Ok(MetricsReport {
            f1,
            exact_match,
            n,
            per_attribute,
            per_length_bucket,
        })
    }

    /// F1 per context-length bucket; empty buckets are omitted.
    pub fn length_buckets(
        &self,
        records: &[QARecord],
        preds: &[Prediction],
        edges: &[usize],
    ) -> Result<IndexMap<String, GroupScore>> {
        let mut scores = self.score_records(preds, records)?;
        scores.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        bucket_scores(&scores, edges)
    }
}

fn mean_percent(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    100.0 * values.sum::<f64>() / n as f64
}

fn match_predictions<'p>(preds: &'p [Prediction], records: &[QARecord]) -> Result<HashMap<&'p str, &'p Prediction>> {
    let record_ids: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    let mut duplicate = Vec::new();
    let mut unknown = Vec::new();
    for p in preds {
        if !record_ids.contains(p.record_id.as_str()) {
            unknown.push(p.record_id.clone());
        } else if by_id.insert(&p.record_id, p).is_some() {
            duplicate.push(p.record_id.clone());
        }
    }
    let mut missing: Vec<String> = records
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if missing.is_empty() && duplicate.is_empty() && unknown.is_empty() {
        return Ok(by_id);
    }
    for v in [&mut missing, &mut duplicate, &mut unknown] {
        v.sort();
        v.dedup();
    }
    Err(Error::PredictionMismatch {
        missing,
        duplicate,
        unknown,
    })
}

/// Word-count edges splitting `counts` into (up to) five equal-frequency
/// buckets. Duplicate edges collapse, so the result is strictly increasing.
pub fn quintile_edges(counts: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut sorted: Vec<usize> = counts.collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_unstable();
    let max = *sorted.last().unwrap();
    let mut edges: Vec<usize> = (1..5)
        .map(|q| sorted[(q * sorted.len()).div_ceil(5).saturating_sub(1)])
        .filter(|&e| e < max)
        .collect();
    edges.dedup();
    edges
}

fn bucket_label(edges: &[usize], idx: usize) -> String {
    let lo = if idx == 0 { 0 } else { edges[idx - 1] + 1 };
    match edges.get(idx) {
        Some(hi) => format!("{lo}-{hi}"),
        None => format!("{lo}+"),
    }
}

fn bucket_scores(scores: &[RecordScore], edges: &[usize]) -> Result<IndexMap<String, GroupScore>> {
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "bucket edges must be strictly increasing: {edges:?}"
        )));
    }
    let mut sums = vec![(0.0f64, 0usize); edges.len() + 1];
    for s in scores {
        let idx = edges.partition_point(|&e| e < s.context_words);
        sums[idx].0 += s.f1;
        sums[idx].1 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(i, (sum, n))| {
            (
                bucket_label(edges, i),
                GroupScore {
                    f1: 100.0 * sum / n as f64,
                    n,
                },
            )
        })
        .collect())
}

/// Pairwise inter-annotator agreement in percent.
///
/// For every (ad, attribute) annotated by either side, each span of one
/// annotator is scored against the other annotator's spans as golds and the
/// unit score is the mean over those spans; a unit one side left empty
/// scores 0. The result averages both directions.
pub fn pairwise_iaa(ann_a: &[AdDocument], ann_b: &[AdDocument], language: Language) -> Result<f64> {
    pairwise_iaa_with(ann_a, ann_b, language, &Normalizer::default())
}

pub fn pairwise_iaa_with(
    ann_a: &[AdDocument],
    ann_b: &[AdDocument],
    language: Language,
    normalizer: &Normalizer,
) -> Result<f64> {
    let ids_a: Vec<&str> = ann_a.iter().map(|d| d.id.as_str()).collect();
    let ids_b: HashMap<&str, &AdDocument> = ann_b.iter().map(|d| (d.id.as_str(), d)).collect();
    let set_a: HashSet<&str> = ids_a.iter().copied().collect();
    if set_a.len() != ids_b.len() || ids_a.len() != ann_b.len() || !set_a.iter().all(|id| ids_b.contains_key(id)) {
        let mut diff: Vec<String> = set_a
            .symmetric_difference(&ids_b.keys().copied().collect())
            .map(|s| s.to_string())
            .collect();
        diff.sort();
        return Err(Error::InvalidArgument(format!(
            "annotation sets cover different ads: [{}]",
            diff.join(", ")
        )));
    }

    let spans_by_attr = |doc: &AdDocument| -> BTreeMap<String, Vec<String>> {
        let mut m: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for ann in &doc.annotations {
            m.entry(ann.attribute.clone()).or_default().push(ann.span_text.clone());
        }
        m
    };
    let direction = |preds: &[String], golds: &[String]| -> f64 {
        if preds.is_empty() {
            return 0.0;
        }
        let golds: Vec<&str> = golds.iter().map(String::as_str).collect();
        let total: f64 = preds
            .iter()
            .map(|p| if golds.is_empty() { 0.0 } else { normalizer.span_f1(p, &golds, language) })
            .sum();
        total / preds.len() as f64
    };

    let mut a_to_b = 0.0;
    let mut b_to_a = 0.0;
    let mut units = 0usize;
    let mut sorted_a: Vec<&AdDocument> = ann_a.iter().collect();
    sorted_a.sort_by(|x, y| x.id.cmp(&y.id));
    for doc_a in sorted_a {
        let a = spans_by_attr(doc_a);
        let b = spans_by_attr(ids_b[doc_a.id.as_str()]);
        let attrs: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
        for attr in attrs {
            let empty = Vec::new();
            let sa = a.get(attr).unwrap_or(&empty);
            let sb = b.get(attr).unwrap_or(&empty);
            a_to_b += direction(sa, sb);
            b_to_a += direction(sb, sa);
            units += 1;
        }
    }
    if units == 0 {
        // Neither annotator marked anything: full agreement.
        return Ok(100.0);
    }
    Ok(100.0 * (a_to_b + b_to_a) / (2.0 * units as f64))
}
