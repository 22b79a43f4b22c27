//! Core domain types: annotated ads, QA records, splits and corpus
//! statistics.
//!
//! All character offsets (`char_start`, `answer_start`) count Unicode code
//! points, not bytes. This matches SQuAD's convention and keeps French and
//! Dutch diacritics one position wide.

mod questions;
pub(crate) mod split;
mod squad;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

pub use questions::{AttributeQuestionMap, RUNAWAYS_ATTRIBUTES};
pub use split::{ad_rank_key, split_by_ad, AdSplit, DatasetSplit};
pub use squad::{load_squad_file, parse_squad_str, save_squad_file, to_squad_string};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
    Nl,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::En, Language::Fr, Language::Nl];

    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
            Language::Nl => "nl",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "fr" => Ok(Language::Fr),
            "nl" => Ok(Language::Nl),
            other => Err(Error::InvalidArgument(format!(
                "unsupported language `{other}` (expected en, fr or nl)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeAnnotation {
    pub attribute: String,
    pub span_text: String,
    pub char_start: usize,
}

/// One transcribed advert and its attribute annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdDocument {
    pub id: String,
    pub text: String,
    pub language: Language,
    #[serde(default)]
    pub annotations: Vec<AttributeAnnotation>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl AdDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>, language: Language) -> Self {
        AdDocument {
            id: id.into(),
            text: text.into(),
            language,
            annotations: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Adds an annotation at the first occurrence of `span` in the text.
    /// Returns `false` (and adds nothing) when the span does not occur.
    pub fn annotate(&mut self, attribute: &str, span: &str) -> bool {
        match text::find_char_offset(&self.text, span) {
            Some(char_start) => {
                self.annotations.push(AttributeAnnotation {
                    attribute: attribute.to_string(),
                    span_text: span.to_string(),
                    char_start,
                });
                true
            }
            None => false,
        }
    }

    pub fn annotation_is_verbatim(&self, ann: &AttributeAnnotation) -> bool {
        !ann.span_text.is_empty() && text::is_verbatim_at(&self.text, &ann.span_text, ann.char_start)
    }
}

/// Checks corpus-level invariants: non-empty, unique ad ids.
pub fn validate_corpus(ads: &[AdDocument]) -> Result<()> {
    if let Some(ad) = ads.iter().find(|ad| ad.id.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "ad with empty id (text starts {:?})",
            ad.text.chars().take(30).collect::<String>()
        )));
    }
    let mut seen = HashSet::new();
    let mut dups: Vec<String> = ads
        .iter()
        .filter(|ad| !seen.insert(ad.id.as_str()))
        .map(|ad| ad.id.clone())
        .collect();
    if dups.is_empty() {
        Ok(())
    } else {
        dups.sort();
        dups.dedup();
        Err(Error::DuplicateIds(dups))
    }
}

/// Reads a corpus stored as JSON Lines, one [`AdDocument`] per line.
pub fn load_ads_jsonl(path: &Path) -> Result<Vec<AdDocument>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ads = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ad: AdDocument = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("{}:{}", path.display(), lineno + 1), e.to_string()))?;
        ads.push(ad);
    }
    validate_corpus(&ads)?;
    Ok(ads)
}

pub fn save_ads_jsonl(ads: &[AdDocument], path: &Path) -> Result<()> {
    validate_corpus(ads)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ad in ads {
        let line = serde_json::to_string(ad).expect("AdDocument serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub answer_start: usize,
}

/// One extractive-QA instance with SQuAD-v2 semantics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<Answer>,
    pub is_impossible: bool,
    pub attribute: String,
    pub source_ad_id: String,
}

const ID_SEPARATOR: &str = "::";

impl QARecord {
    /// `<ad_id>::<attribute>`
    pub fn make_id(ad_id: &str, attribute: &str) -> String {
        format!("{ad_id}{ID_SEPARATOR}{attribute}")
    }

    /// The attribute encoded in a record id, or `""` for ids that do not
    /// follow the `<ad_id>::<attribute>` scheme.
    pub fn attribute_from_id(id: &str) -> &str {
        id.rsplit_once(ID_SEPARATOR).map(|(_, attr)| attr).unwrap_or("")
    }

    pub fn impossible(ad_id: &str, attribute: &str, context: &str, question: &str) -> Self {
        QARecord {
            id: Self::make_id(ad_id, attribute),
            context: context.to_string(),
            question: question.to_string(),
            answers: Vec::new(),
            is_impossible: true,
            attribute: attribute.to_string(),
            source_ad_id: ad_id.to_string(),
        }
    }

    pub fn gold_texts(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }

    /// Checks the flag/answers agreement and that every answer is verbatim
    /// at its offset.
    pub fn is_consistent(&self) -> bool {
        self.is_impossible == self.answers.is_empty()
            && self
                .answers
                .iter()
                .all(|a| !a.text.is_empty() && text::is_verbatim_at(&self.context, &a.text, a.answer_start))
    }

    /// Same record with the answers removed, as an unlabeled example.
    pub fn stripped(&self) -> QARecord {
        QARecord {
            answers: Vec::new(),
            is_impossible: true,
            ..self.clone()
        }
    }
}

/// Fails with [`Error::Integrity`] listing every inconsistent record.
pub fn check_records(records: &[QARecord]) -> Result<()> {
    let bad: Vec<String> = records
        .iter()
        .filter(|r| !r.is_consistent())
        .map(|r| r.id.clone())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Integrity { ids: bad })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_ads: usize,
    pub n_annotations: usize,
    pub per_attribute_counts: BTreeMap<String, usize>,
    pub per_language_counts: BTreeMap<Language, usize>,
}

pub fn corpus_stats(ads: &[AdDocument]) -> CorpusStats {
    let mut stats = CorpusStats {
        n_ads: ads.len(),
        ..CorpusStats::default()
    };
    for ad in ads {
        *stats.per_language_counts.entry(ad.language).or_default() += 1;
        for ann in &ad.annotations {
            *stats.per_attribute_counts.entry(ann.attribute.clone()).or_default() += 1;
        }
    }
    stats.n_annotations = stats.per_attribute_counts.values().sum();
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ad(id: &str) -> AdDocument {
        let mut ad = AdDocument::new(id, "RUN away from his master, a negro man. FIVE POUNDS reward.", Language::En);
        assert!(ad.annotate("racial_descriptor", "negro"));
        assert!(ad.annotate("total_reward", "FIVE POUNDS"));
        assert!(ad.annotate("racial_descriptor", "man"));
        ad
    }

    #[test]
    fn stats_of_empty_corpus_are_zero() {
        let s = corpus_stats(&[]);
        assert_eq!(s, CorpusStats::default());
    }

    #[test]
    fn stats_count_per_attribute() {
        let s = corpus_stats(&[ad("a1")]);
        assert_eq!(s.n_ads, 1);
        assert_eq!(s.n_annotations, 3);
        assert_eq!(s.per_attribute_counts["racial_descriptor"], 2);
        assert_eq!(s.per_attribute_counts["total_reward"], 1);
        assert_eq!(s.per_language_counts[&Language::En], 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = validate_corpus(&[ad("x"), ad("y"), ad("x")]).unwrap_err();
        assert!(matches!(err, Error::DuplicateIds(ids) if ids == vec!["x".to_string()]));
    }

    #[test]
    fn attribute_round_trips_through_id() {
        let id = QARecord::make_id("ad::7", "total_reward");
        assert_eq!(QARecord::attribute_from_id(&id), "total_reward");
        assert_eq!(QARecord::attribute_from_id("56be4db0acb8001400a502ec"), "");
    }

    #[test]
    fn annotation_verbatim_check() {
        let mut a = ad("a");
        assert!(a.annotations.iter().all(|ann| a.annotation_is_verbatim(ann)));
        a.annotations[1].char_start += 1;
        assert!(!a.annotation_is_verbatim(&a.annotations[1]));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ads.jsonl");
        let ads = vec![ad("a"), ad("b")];
        save_ads_jsonl(&ads, &path).unwrap();
        assert_eq!(load_ads_jsonl(&path).unwrap(), ads);
    }
}
