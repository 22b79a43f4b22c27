//! Projection of gold answers into machine-translated contexts.
//!
//! Translating a context `c` and its answer `a` separately does not
//! guarantee that the translated answer `aᵗ` occurs in the translated
//! context `cᵗ`. When it does not, we search `cᵗ` for the word window most
//! similar to `aᵗ`, widening the window over five sizes starting at
//! `k0 = max(words(aᵗ), words(a))`. If nothing reaches the score threshold,
//! the same search is repeated with the untranslated answer `a` (names and
//! dates often survive translation unchanged). Records whose answers cannot
//! be projected are dropped.

mod translate;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Answer, AttributeQuestionMap, Language, QARecord};
use crate::error::{Error, Result};
use crate::text::{self, word_count};

pub use translate::{CachedTranslator, CommandTranslator, IdentityTranslator, TranslationKey, Translator};

/// Minimum similarity for a fuzzy match.
pub const MIN_SCORE: f64 = 0.5;

/// Number of window sizes tried per query: `k0, k0+1, …, k0+4`.
pub const WINDOW_SWEEP: usize = 5;

/// Levenshtein distance over `char`s, two-row dynamic programme.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let subst = prev[j] + usize::from(ca != cb);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn fold(s: &str) -> Vec<char> {
    let lowered = s.to_lowercase();
    let mut out = Vec::with_capacity(lowered.len());
    for (i, w) in lowered.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.extend(w.chars());
    }
    out
}

/// `1 - lev(s1, s2) / max(|s1|, |s2|)` over case-folded, whitespace-collapsed
/// strings. Two strings that normalize to empty are identical (1.0).
pub fn similarity(s1: &str, s2: &str) -> f64 {
    let (a, b) = (fold(s1), fold(s2));
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

/// A span of a (translated) context chosen as an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanMatch {
    pub span_text: String,
    pub char_start: usize,
    pub score: f64,
}

/// Best-scoring window of exactly `k` consecutive words, if it scores at
/// least `min_score`. Ties go to the leftmost window.
pub fn kgram_best_match_with(context: &str, query: &str, k: usize, min_score: f64) -> Option<SpanMatch> {
    if k == 0 {
        return None;
    }
    let ws = text::words(context);
    if ws.len() < k {
        return None;
    }
    let query = fold(query);
    let mut best: Option<(f64, usize)> = None;
    for i in 0..=ws.len() - k {
        let window = &context[ws[i].byte_start..ws[i + k - 1].byte_end];
        let cand = fold(window);
        let longest = cand.len().max(query.len());
        let score = if longest == 0 {
            1.0
        } else {
            1.0 - levenshtein(&cand, &query) as f64 / longest as f64
        };
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, i));
        }
    }
    let (score, i) = best?;
    (score >= min_score).then(|| SpanMatch {
        span_text: context[ws[i].byte_start..ws[i + k - 1].byte_end].to_string(),
        char_start: ws[i].char_start,
        score,
    })
}

pub fn kgram_best_match(context: &str, query: &str, k: usize) -> Option<SpanMatch> {
    kgram_best_match_with(context, query, k, MIN_SCORE)
}

/// Which query produced a projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionSource {
    /// The translated answer `aᵗ`.
    Translated,
    /// The untranslated source answer `a`.
    SourceFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    #[serde(flatten)]
    pub span: SpanMatch,
    pub source: ProjectionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentProblem {
    pub source_answer: String,
    pub translated_context: String,
    pub translated_answer: String,
    /// Initial window size in words.
    pub k0: usize,
    pub result: Option<Projection>,
}

impl AlignmentProblem {
    pub fn new(source_answer: &str, translated_context: &str, translated_answer: &str) -> Self {
        AlignmentProblem {
            source_answer: source_answer.to_string(),
            translated_context: translated_context.to_string(),
            translated_answer: translated_answer.to_string(),
            k0: word_count(translated_answer).max(word_count(source_answer)).max(1),
            result: None,
        }
    }

    pub fn solve(&mut self) -> Option<&Projection> {
        self.result = project_answer(self);
        self.result.as_ref()
    }
}

/// Search parameters. The defaults are the published procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aligner {
    pub min_score: f64,
    pub sweep: usize,
}

impl Default for Aligner {
    fn default() -> Self {
        Aligner {
            min_score: MIN_SCORE,
            sweep: WINDOW_SWEEP,
        }
    }
}

impl Aligner {
    fn search(&self, context: &str, query: &str, k0: usize) -> Option<SpanMatch> {
        if let Some(char_start) = text::find_char_offset(context, query) {
            return Some(SpanMatch {
                span_text: query.to_string(),
                char_start,
                score: 1.0,
            });
        }
        let mut best: Option<SpanMatch> = None;
        for k in k0..k0 + self.sweep {
            if let Some(m) = kgram_best_match_with(context, query, k, self.min_score) {
                if best.as_ref().is_none_or(|b| m.score > b.score) {
                    best = Some(m);
                }
            }
        }
        best
    }

    pub fn project(&self, p: &AlignmentProblem) -> Option<Projection> {
        let k0 = p.k0.max(1);
        if let Some(span) = self.search(&p.translated_context, &p.translated_answer, k0) {
            return Some(Projection {
                span,
                source: ProjectionSource::Translated,
            });
        }
        if p.source_answer == p.translated_answer {
            return None;
        }
        self.search(&p.translated_context, &p.source_answer, k0)
            .map(|span| Projection {
                span,
                source: ProjectionSource::SourceFallback,
            })
    }
}

/// Projects with the default [`Aligner`]. An answer that occurs verbatim in
/// the translated context is taken as is (score 1.0, first occurrence).
pub fn project_answer(p: &AlignmentProblem) -> Option<Projection> {
    Aligner::default().project(p)
}

/// A translated record plus what happened to its answers.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRecord {
    pub record: QARecord,
    pub via_translated: usize,
    pub via_fallback: usize,
    pub dropped: usize,
}

/// Translates one record. Impossible records only need their context
/// translated and are always kept; answerable records keep the answers that
/// project and are dropped (`Ok(None)`) when none does.
pub fn align_record(
    src: &QARecord,
    tgt_question: &str,
    translator: &dyn Translator,
    src_lang: Language,
    tgt_lang: Language,
    aligner: &Aligner,
) -> Result<Option<AlignedRecord>> {
    let context = translator.translate(&src.context, src_lang, tgt_lang)?;
    let mut answers: Vec<Answer> = Vec::new();
    let (mut via_translated, mut via_fallback, mut dropped) = (0, 0, 0);
    for ans in &src.answers {
        let translated = translator.translate(&ans.text, src_lang, tgt_lang)?;
        let problem = AlignmentProblem::new(&ans.text, &context, &translated);
        match aligner.project(&problem) {
            Some(p) => {
                match p.source {
                    ProjectionSource::Translated => via_translated += 1,
                    ProjectionSource::SourceFallback => via_fallback += 1,
                }
                let projected = Answer {
                    text: p.span.span_text,
                    answer_start: p.span.char_start,
                };
                if !answers.contains(&projected) {
                    answers.push(projected);
                }
            }
            None => dropped += 1,
        }
    }
    if !src.is_impossible && answers.is_empty() {
        return Ok(None);
    }
    Ok(Some(AlignedRecord {
        record: QARecord {
            id: src.id.clone(),
            context,
            question: tgt_question.to_string(),
            is_impossible: answers.is_empty(),
            answers,
            attribute: src.attribute.clone(),
            source_ad_id: src.source_ad_id.clone(),
        },
        via_translated,
        via_fallback,
        dropped,
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub total: usize,
    pub impossible: usize,
    /// Answerable records whose answers all projected via `aᵗ`.
    pub projected_via_translated: usize,
    /// Answerable records where at least one answer needed the `a` fallback.
    pub projected_via_fallback: usize,
    pub discarded: usize,
    pub answers_dropped: usize,
    /// Ids left untranslated after a retryable translator failure.
    pub unprocessed: Vec<String>,
}

impl AlignmentReport {
    pub fn surviving(&self) -> usize {
        self.impossible + self.projected_via_translated + self.projected_via_fallback
    }
}

/// Translates a record set. Questions come from `target_questions` by
/// attribute. Retryable translator failures leave the record out and list it
/// in [`AlignmentReport::unprocessed`]; other errors abort.
pub fn align_records(
    records: &[QARecord],
    target_questions: &AttributeQuestionMap,
    translator: &dyn Translator,
    src_lang: Language,
    aligner: &Aligner,
) -> Result<(Vec<QARecord>, AlignmentReport)> {
    let tgt_lang = target_questions.language;
    if let Some(r) = records.iter().find(|r| !target_questions.contains(&r.attribute)) {
        return Err(Error::UnknownAttribute(r.attribute.clone()));
    }
    let outcomes: Vec<Result<Option<AlignedRecord>>> = records
        .par_iter()
        .map(|r| {
            let q = target_questions.get(&r.attribute).expect("checked above");
            align_record(r, q, translator, src_lang, tgt_lang, aligner)
        })
        .collect();

    let mut report = AlignmentReport {
        total: records.len(),
        ..AlignmentReport::default()
    };
    let mut out = Vec::new();
    for (src, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok(Some(aligned)) => {
                report.answers_dropped += aligned.dropped;
                if aligned.record.is_impossible {
                    report.impossible += 1;
                } else if aligned.via_fallback > 0 {
                    report.projected_via_fallback += 1;
                } else {
                    report.projected_via_translated += 1;
                }
                out.push(aligned.record);
            }
            Ok(None) => {
                report.discarded += 1;
                report.answers_dropped += src.answers.len();
            }
            Err(e) if e.is_retryable() => {
                log::warn!("record {} left unprocessed: {e}", src.id);
                report.unprocessed.push(src.id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity("cheval noir", "cheval noir"), 1.0);
        assert!((similarity("abc", "abd") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(similarity("", "abc"), 0.0);
        assert_eq!(similarity("", ""), 1.0);
        assert_eq!(similarity("Cheval   NOIR", "cheval noir"), 1.0);
    }

    #[test]
    fn levenshtein_basics() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert_eq!(levenshtein(&c("kitten"), &c("sitting")), 3);
        assert_eq!(levenshtein(&c(""), &c("abc")), 3);
        assert_eq!(levenshtein(&c("é"), &c("e")), 1);
    }

    proptest::proptest! {
        #[test]
        fn similarity_matches_reference_levenshtein(a in "[a-cA-C é]{0,12}", b in "[a-cA-C é]{0,12}") {
            let fold = |s: &str| s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
            let want = strsim::normalized_levenshtein(&fold(&a), &fold(&b));
            proptest::prop_assert_eq!(similarity(&a, &b), want);
            proptest::prop_assert!((0.0..=1.0).contains(&want));
        }
    }

    #[test]
    fn kgram_examples() {
        let m = kgram_best_match("le grand cheval noir", "cheval noir", 2).unwrap();
        assert_eq!((m.span_text.as_str(), m.char_start, m.score), ("cheval noir", 9, 1.0));
        // Windows "aa bb" and "bb cc" both score 0 against "zz yy".
        assert_eq!(kgram_best_match("aa bb cc", "zz yy", 2), None);
        assert_eq!(kgram_best_match("aa bb", "aa bb", 3), None);
    }

    #[test]
    fn kgram_ties_go_left() {
        let m = kgram_best_match("ab x ab", "ab", 1).unwrap();
        assert_eq!(m.char_start, 0);
    }

    #[test]
    fn projects_verbatim_answer_exactly() {
        let p = AlignmentProblem::new("five pounds sterling", "Une récompense de cinq livres.", "cinq livres");
        let r = project_answer(&p).unwrap();
        assert_eq!(r.span.span_text, "cinq livres");
        assert_eq!(r.span.char_start, 18);
        assert_eq!(r.span.score, 1.0);
        assert_eq!(r.source, ProjectionSource::Translated);
    }

    #[test]
    fn projects_near_match() {
        let ctx = "Il sera donné une recompense de quarante schellings à qui le ramènera";
        let mut p = AlignmentProblem::new("forty shillings", ctx, "quarante shillings");
        assert_eq!(p.k0, 2);
        let r = p.solve().unwrap().clone();
        assert_eq!(r.span.span_text, "quarante schellings");
        assert!(text::is_verbatim_at(ctx, &r.span.span_text, r.span.char_start));
        // 2 edits over 19 chars.
        assert!((r.span.score - 17.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn falls_back_to_source_answer() {
        let ctx = "Le nommé Quamino, âgé de vingt ans";
        let p = AlignmentProblem::new("Quamino", ctx, "Zzzzzzzz");
        let r = project_answer(&p).unwrap();
        assert_eq!(r.source, ProjectionSource::SourceFallback);
        assert_eq!(r.span.span_text, "Quamino");
        assert_eq!(r.span.score, 1.0);
    }

    #[test]
    fn unmatched_answer_is_none() {
        let p = AlignmentProblem::new("xyzzy", "aa bb cc dd", "qqqqq");
        assert_eq!(project_answer(&p), None);
    }

    fn record(context: &str, golds: &[&str]) -> QARecord {
        let answers: Vec<Answer> = golds
            .iter()
            .map(|g| Answer {
                text: g.to_string(),
                answer_start: text::find_char_offset(context, g).unwrap(),
            })
            .collect();
        QARecord {
            id: "ad::clothing".into(),
            context: context.into(),
            question: "What clothes did the person wear?".into(),
            is_impossible: answers.is_empty(),
            answers,
            attribute: "clothing".into(),
            source_ad_id: "ad".into(),
        }
    }

    #[test]
    fn align_record_filters_answers() {
        let src = record("wearing a blue coat and red breeches", &["a blue coat", "red breeches"]);
        let translator = IdentityTranslator::default()
            .with_entry("wearing a blue coat and red breeches", "portant un habit bleu et un manteau")
            .with_entry("a blue coat", "un habit bleu")
            .with_entry("red breeches", "culotte rouge");
        let out = align_record(&src, "Quels vêtements ?", &translator, Language::En, Language::Fr, &Aligner::default())
            .unwrap()
            .unwrap();
        assert_eq!(out.record.answers.len(), 1);
        assert_eq!(out.record.answers[0].text, "un habit bleu");
        assert_eq!(out.dropped, 1);
        assert!(out.record.is_consistent());
        assert_eq!(out.record.question, "Quels vêtements ?");
    }

    #[test]
    fn impossible_records_are_kept() {
        let src = record("no clothing mentioned", &[]);
        let out = align_record(&src, "?", &IdentityTranslator::default(), Language::En, Language::Fr, &Aligner::default())
            .unwrap()
            .unwrap();
        assert!(out.record.is_impossible);
    }

    #[test]
    fn align_records_reports_counts() {
        let mut qmap = AttributeQuestionMap::new(Language::Fr);
        qmap.insert("clothing", "Quels vêtements ?").unwrap();
        let records = vec![
            record("a blue coat", &["a blue coat"]),
            record("nothing here", &[]),
            record("the grey wig", &["grey wig"]),
        ];
        let translator = IdentityTranslator::default()
            .with_entry("the grey wig", "qqqq rrrr")
            .with_entry("grey wig", "zzzz");
        let (out, report) = align_records(&records, &qmap, &translator, Language::En, &Aligner::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(report.total, 3);
        assert_eq!(report.projected_via_translated, 1);
        assert_eq!(report.impossible, 1);
        assert_eq!(report.discarded, 1);
        assert_eq!(report.surviving(), 2);
    }
}
