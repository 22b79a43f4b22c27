//! Annotated ads to extractive-QA records, and choice of the question used
//! for each attribute.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AdDocument, AdSplit, Answer, AttributeQuestionMap, DatasetSplit, QARecord};
use crate::error::{Error, Result};
use crate::metrics::Evaluator;
use crate::model::{predict_all, QAModel};

/// An annotation dropped because its span is not verbatim in the ad text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub ad_id: String,
    pub attribute: String,
    pub span_text: String,
    pub char_start: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub n_ads: usize,
    pub answerable_records: usize,
    pub impossible_records: usize,
    /// Annotations kept as gold answers.
    pub answerable_annotations: usize,
    pub discarded: Vec<Discard>,
}

impl ConversionReport {
    pub fn total_records(&self) -> usize {
        self.answerable_records + self.impossible_records
    }
}

/// Converts one ad, in question-map order.
///
/// Each annotated attribute yields one answerable record carrying all of its
/// spans as gold answers. With `emit_negatives`, every other attribute of
/// the map yields an impossible record. An attribute whose spans all fail
/// the verbatim check yields nothing, neither answerable nor impossible.
pub fn ad_to_records(
    ad: &AdDocument,
    qmap: &AttributeQuestionMap,
    emit_negatives: bool,
) -> Result<(Vec<QARecord>, Vec<Discard>)> {
    let mut golds: BTreeMap<&str, Vec<Answer>> = BTreeMap::new();
    let mut rejected: BTreeMap<&str, usize> = BTreeMap::new();
    let mut discards = Vec::new();
    for ann in &ad.annotations {
        if !qmap.contains(&ann.attribute) {
            return Err(Error::UnknownAttribute(ann.attribute.clone()));
        }
        if ad.annotation_is_verbatim(ann) {
            let answer = Answer {
                text: ann.span_text.clone(),
                answer_start: ann.char_start,
            };
            let list = golds.entry(ann.attribute.as_str()).or_default();
            if !list.contains(&answer) {
                list.push(answer);
            }
        } else {
            log::warn!(
                "ad {}: discarding {} annotation {:?} at {} (not verbatim in text)",
                ad.id,
                ann.attribute,
                ann.span_text,
                ann.char_start
            );
            *rejected.entry(ann.attribute.as_str()).or_default() += 1;
            discards.push(Discard {
                ad_id: ad.id.clone(),
                attribute: ann.attribute.clone(),
                span_text: ann.span_text.clone(),
                char_start: ann.char_start,
            });
        }
    }

    let mut records = Vec::new();
    for (attribute, question) in qmap.iter() {
        match golds.remove(attribute) {
            Some(answers) => records.push(QARecord {
                id: QARecord::make_id(&ad.id, attribute),
                context: ad.text.clone(),
                question: question.to_string(),
                answers,
                is_impossible: false,
                attribute: attribute.to_string(),
                source_ad_id: ad.id.clone(),
            }),
            None if emit_negatives && !rejected.contains_key(attribute) => {
                records.push(QARecord::impossible(&ad.id, attribute, &ad.text, question))
            }
            None => {}
        }
    }
    Ok((records, discards))
}

/// Converts a corpus in parallel; output order follows input order.
pub fn convert_corpus(
    ads: &[AdDocument],
    qmap: &AttributeQuestionMap,
    emit_negatives: bool,
) -> Result<(Vec<QARecord>, ConversionReport)> {
    crate::data::validate_corpus(ads)?;
    let converted: Vec<(Vec<QARecord>, Vec<Discard>)> = ads
        .par_iter()
        .map(|ad| ad_to_records(ad, qmap, emit_negatives))
        .collect::<Result<_>>()?;

    let mut report = ConversionReport {
        n_ads: ads.len(),
        ..ConversionReport::default()
    };
    let mut records = Vec::new();
    for (recs, discards) in converted {
        for r in &recs {
            if r.is_impossible {
                report.impossible_records += 1;
            } else {
                report.answerable_records += 1;
                report.answerable_annotations += r.answers.len();
            }
        }
        records.extend(recs);
        report.discarded.extend(discards);
    }
    Ok((records, report))
}

impl AdSplit {
    /// Converts both sides of the split to records.
    pub fn to_records(&self, qmap: &AttributeQuestionMap, emit_negatives: bool) -> Result<DatasetSplit> {
        Ok(DatasetSplit {
            train: convert_corpus(&self.train, qmap, emit_negatives)?.0,
            validation: convert_corpus(&self.validation, qmap, emit_negatives)?.0,
            seed: self.seed,
        })
    }
}

/// Candidate phrasings of one attribute's question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCandidateSet {
    pub attribute: String,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub scores: Option<Vec<f64>>,
}

impl QuestionCandidateSet {
    pub fn new(attribute: &str, candidates: &[&str]) -> Self {
        QuestionCandidateSet {
            attribute: attribute.to_string(),
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
            scores: None,
        }
    }
}

/// One scored candidate in the selection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub attribute: String,
    pub candidate: String,
    /// F1 as a ratio in [0, 1].
    pub f1: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSelection {
    pub question: String,
    pub index: usize,
    pub log: Vec<CandidateScore>,
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Scores every candidate question with a frozen model on the records
/// `build_records(question)` returns and keeps the one with the highest F1.
pub fn select_best_question(
    cands: &QuestionCandidateSet,
    build_records: &dyn Fn(&str) -> Result<Vec<QARecord>>,
    frozen_model: &dyn QAModel,
    evaluator: &Evaluator,
) -> Result<QuestionSelection> {
    if cands.candidates.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no candidate questions for `{}`",
            cands.attribute
        )));
    }
    let mut scores = Vec::with_capacity(cands.candidates.len());
    for question in &cands.candidates {
        let records = build_records(question)?;
        let preds = predict_all(frozen_model, &records, 0.0)?;
        scores.push(evaluator.evaluate(&preds, &records)?.f1 / 100.0);
    }
    let index = argmax_first(&scores).expect("non-empty");
    let log = cands
        .candidates
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(i, (c, &f1))| CandidateScore {
            attribute: cands.attribute.clone(),
            candidate: c.clone(),
            f1,
            selected: i == index,
        })
        .collect();
    Ok(QuestionSelection {
        question: cands.candidates[index].clone(),
        index,
        log,
    })
}

/// Records for one attribute over `ads` with a given question: the
/// attribute's answerable records plus, with `emit_negatives`, an impossible
/// record for every ad lacking it.
pub fn attribute_records(
    ads: &[AdDocument],
    attribute: &str,
    question: &str,
    emit_negatives: bool,
) -> Result<Vec<QARecord>> {
    let mut single = AttributeQuestionMap::new(crate::data::Language::En);
    single.insert(attribute, question)?;
    let mut out = Vec::new();
    for ad in ads {
        let mut ad = ad.clone();
        ad.annotations.retain(|a| a.attribute == attribute);
        out.extend(ad_to_records(&ad, &single, emit_negatives)?.0);
    }
    Ok(out)
}

/// Selects one question per attribute, in `attributes` order. Only the
/// training ads should be passed in `train_ads`.
pub fn build_question_grid(
    attributes: &[&str],
    candidate_sets: &[QuestionCandidateSet],
    train_ads: &[AdDocument],
    frozen_model: &dyn QAModel,
    evaluator: &Evaluator,
    emit_negatives: bool,
) -> Result<(AttributeQuestionMap, Vec<CandidateScore>)> {
    let mut map = AttributeQuestionMap::new(evaluator.language);
    let mut log = Vec::new();
    for &attribute in attributes {
        let cands = candidate_sets
            .iter()
            .find(|c| c.attribute == attribute)
            .ok_or_else(|| Error::InvalidArgument(format!("no candidate set for attribute `{attribute}`")))?;
        let sel = if cands.candidates.len() == 1 {
            QuestionSelection {
                question: cands.candidates[0].clone(),
                index: 0,
                log: vec![CandidateScore {
                    attribute: attribute.to_string(),
                    candidate: cands.candidates[0].clone(),
                    f1: f64::NAN,
                    selected: true,
                }],
            }
        } else {
            let build = |q: &str| attribute_records(train_ads, attribute, q, emit_negatives);
            select_best_question(cands, &build, frozen_model, evaluator)?
        };
        map.insert(attribute, &sel.question)?;
        log.extend(sel.log);
    }
    Ok((map, log))
}

/// `attribute, candidate, f1, selected` TSV with a header row. Unscored
/// single candidates print `-` for F1.
pub fn selection_log_tsv(log: &[CandidateScore]) -> String {
    let mut out = String::from("attribute\tcandidate\tf1\tselected\n");
    for row in log {
        let f1 = if row.f1.is_nan() { "-".to_string() } else { format!("{:.4}", row.f1) };
        let _ = writeln!(out, "{}\t{}\t{}\t{}", row.attribute, row.candidate, f1, u8::from(row.selected));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeAnnotation, Language};
    use crate::model::mock::ScriptedModel;
    use proptest::prelude::*;

    const TEXT: &str = "RUN away, a Negro man named Jack, wearing a blue coat. Whoever secures him shall have FIVE POUNDS reward.";

    fn ad() -> AdDocument {
        let mut ad = AdDocument::new("ad42", TEXT, Language::En);
        assert!(ad.annotate("total_reward", "FIVE POUNDS"));
        ad
    }

    #[test]
    fn negatives_fill_the_question_map() {
        let qmap = AttributeQuestionMap::runaways_en();
        let (records, discards) = ad_to_records(&ad(), &qmap, true).unwrap();
        assert!(discards.is_empty());
        assert_eq!(records.len(), 35);
        assert_eq!(records.iter().filter(|r| !r.is_impossible).count(), 1);
        let answerable = records.iter().find(|r| !r.is_impossible).unwrap();
        assert_eq!(answerable.id, "ad42::total_reward");
        assert_eq!(answerable.question, "How much reward is offered?");
        assert!(records.iter().all(QARecord::is_consistent));
    }

    #[test]
    fn without_negatives_only_annotated_attributes() {
        let (records, _) = ad_to_records(&ad(), &AttributeQuestionMap::runaways_en(), false).unwrap();
        assert_eq!(records.len(), 1);
    }

    #[test]
    fn multiple_spans_become_multiple_golds() {
        let mut a = ad();
        assert!(a.annotate("clothing", "a blue coat"));
        assert!(a.annotate("clothing", "coat"));
        let (records, _) = ad_to_records(&a, &AttributeQuestionMap::runaways_en(), false).unwrap();
        let clothing = records.iter().find(|r| r.attribute == "clothing").unwrap();
        assert_eq!(clothing.answers.len(), 2);
        // Question-map order: clothing precedes total_reward.
        assert_eq!(records[0].attribute, "clothing");
    }

    #[test]
    fn non_verbatim_annotation_is_discarded() {
        let mut a = ad();
        a.annotations.push(AttributeAnnotation {
            attribute: "given_name".into(),
            span_text: "Jacob".into(),
            char_start: 28,
        });
        let (records, discards) = ad_to_records(&a, &AttributeQuestionMap::runaways_en(), true).unwrap();
        assert_eq!(discards.len(), 1);
        assert!(records.iter().all(|r| r.attribute != "given_name"));
        assert_eq!(records.len(), 34);
    }

    #[test]
    fn unknown_attribute_is_an_error() {
        let mut a = ad();
        a.annotate("favourite_colour", "blue");
        assert!(matches!(
            ad_to_records(&a, &AttributeQuestionMap::runaways_en(), true),
            Err(Error::UnknownAttribute(_))
        ));
    }

    #[test]
    fn corpus_report_counts() {
        let mut b = ad();
        b.id = "ad43".into();
        b.annotate("clothing", "a blue coat");
        b.annotate("clothing", "coat");
        let (records, report) = convert_corpus(&[ad(), b], &AttributeQuestionMap::runaways_en(), true).unwrap();
        assert_eq!(records.len(), 70);
        assert_eq!(report.answerable_records, 3);
        assert_eq!(report.answerable_annotations, 4);
        assert_eq!(report.impossible_records, 67);
        assert_eq!(records[0].source_ad_id, "ad42");
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_first(&[0.40, 0.55, 0.31]), Some(1));
        assert_eq!(argmax_first(&[0.50, 0.50]), Some(0));
        assert_eq!(argmax_first(&[]), None);
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_monotone_rescaling(
            scores in prop::collection::vec(0.0f64..1.0, 1..8),
            scale in 0.01f64..100.0,
            shift in -5.0f64..5.0,
        ) {
            let rescaled: Vec<f64> = scores.iter().map(|s| s * scale + shift).collect();
            let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
            prop_assert_eq!(argmax_first(&scores), argmax_first(&rescaled));
            prop_assert_eq!(argmax_first(&scores), argmax_first(&cubed));
        }
    }

    #[test]
    fn selects_the_question_the_model_answers_best() {
        let ads = vec![ad()];
        let good = "How much reward is offered?";
        let model = ScriptedModel::new("q").with_answer(TEXT, good, "FIVE POUNDS").with_answer(
            TEXT,
            "What is the reward?",
            "reward",
        );
        let cands = QuestionCandidateSet::new("total_reward", &["What is the reward?", good, "Reward?"]);
        let build = |q: &str| attribute_records(&ads, "total_reward", q, true);
        let sel = select_best_question(&cands, &build, &model, &Evaluator::new(Language::En)).unwrap();
        assert_eq!(sel.index, 1);
        assert_eq!(sel.question, good);
        assert_eq!(sel.log.iter().filter(|r| r.selected).count(), 1);
        assert_eq!(sel.log[0].f1, 0.0);

        let empty = QuestionCandidateSet::new("total_reward", &[]);
        assert!(select_best_question(&empty, &build, &model, &Evaluator::new(Language::En)).is_err());
    }

    #[test]
    fn grid_with_single_candidates_is_unchanged() {
        let sets = vec![
            QuestionCandidateSet::new("given_name", &["What is the given name of the person?"]),
            QuestionCandidateSet::new("total_reward", &["How much reward is offered?"]),
        ];
        let model = ScriptedModel::new("none");
        let ev = Evaluator::new(Language::En);
        let (map, log) = build_question_grid(&["given_name", "total_reward"], &sets, &[ad()], &model, &ev, true).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map.get("given_name"), Some("What is the given name of the person?"));
        assert_eq!(log.len(), 2);
        assert!(build_question_grid(&["clothing"], &sets, &[ad()], &model, &ev, true).is_err());
        assert!(selection_log_tsv(&log).contains("given_name\tWhat is the given name of the person?\t-\t1"));
    }
}
