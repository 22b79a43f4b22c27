use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require_eval, Recorder, RegimeKind, RegimeRunResult, RunDetails, RunSettings};
use crate::data::{Answer, Language, QARecord};
use crate::error::{Error, Result};
use crate::metrics::{Normalizer, Prediction};
use crate::model::{predict_all, run_qa_phase, TrainableQAModel};
use crate::text;

/// An unlabeled record adopted because at least two models agreed on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub round: usize,
    pub record_id: String,
    /// `""` when the agreed answer is "no answer".
    pub text: String,
    pub char_start: Option<usize>,
    /// Indices of the models that produced the agreed answer.
    pub agreeing: Vec<usize>,
}

impl PseudoLabel {
    fn apply(&self, unlabeled: &QARecord) -> QARecord {
        let mut r = unlabeled.stripped();
        if let Some(start) = self.char_start.filter(|_| !self.text.is_empty()) {
            r.answers = vec![Answer {
                text: self.text.clone(),
                answer_start: start,
            }];
            r.is_impossible = false;
        }
        r
    }
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Majority vote over three models' predictions for the same records.
///
/// Answers are compared after metric normalisation, so "The Horse" and
/// "horse" agree. A record is adopted when some two models agree, including
/// agreement that there is no answer. The label is the raw prediction of the
/// lowest-indexed agreeing model.
pub fn adopt_by_vote(
    round: usize,
    unlabeled: &[QARecord],
    votes: &[Vec<Prediction>; 3],
    normalizer: &Normalizer,
    language: Language,
) -> Result<Vec<PseudoLabel>> {
    for v in votes {
        if v.len() != unlabeled.len() || v.iter().zip(unlabeled).any(|(p, r)| p.record_id != r.id) {
            return Err(Error::InvalidArgument(
                "vote lists must follow the unlabeled records one-to-one".into(),
            ));
        }
    }
    let mut out = Vec::new();
    for (k, r) in unlabeled.iter().enumerate() {
        let norm: Vec<Vec<String>> = votes.iter().map(|v| normalizer.tokens(&v[k].text, language)).collect();
        let winner = (0..3).find(|&i| (0..3).any(|j| j != i && norm[j] == norm[i]));
        let Some(i) = winner else { continue };
        let pred = &votes[i][k];
        let char_start = match pred.char_start {
            Some(s) => Some(s),
            None if pred.text.is_empty() => None,
            None => text::find_char_offset(&r.context, &pred.text),
        };
        if !pred.text.is_empty() && char_start.is_none() {
            continue;
        }
        out.push(PseudoLabel {
            round,
            record_id: r.id.clone(),
            text: pred.text.clone(),
            char_start,
            agreeing: (0..3).filter(|&j| norm[j] == norm[i]).collect(),
        });
    }
    Ok(out)
}

/// Seed of model `m` in round `round`; the final model uses `m = 3`.
fn model_seed(base: u64, round: usize, m: usize) -> u64 {
    base.wrapping_add(1 + 4 * round as u64 + m as u64)
}

/// Iterative tri-training.
///
/// Each round trains three models from `factory(index, seed)` on distinct
/// bootstrap resamples of the labeled set; every still-unlabeled record the
/// models agree on joins the labeled set. A fresh model is then trained on
/// the augmented set and evaluated.
pub fn run_tri_training(
    settings: &RunSettings,
    factory: &dyn Fn(usize, u64) -> Result<Box<dyn TrainableQAModel>>,
    labeled: &[QARecord],
    unlabeled: &[QARecord],
    eval: &[QARecord],
) -> Result<RegimeRunResult> {
    let mut rec = Recorder::new(settings, &[RegimeKind::TriTraining])?;
    require_eval(eval)?;
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("tri-training needs labeled records".into()));
    }
    if let Some(r) = unlabeled.iter().find(|r| !r.answers.is_empty()) {
        return Err(Error::InvalidArgument(format!("unlabeled record `{}` carries answers", r.id)));
    }
    rec.records("labeled", labeled);
    rec.records("unlabeled", unlabeled);
    rec.records("eval", eval);

    let base = settings.train.seed;
    let lang = settings.spec.source_lang;
    let mut pool: Vec<QARecord> = unlabeled.to_vec();
    let mut train_set: Vec<QARecord> = labeled.to_vec();
    let mut details = RunDetails {
        labeled_sizes: vec![train_set.len()],
        ..RunDetails::default()
    };

    for round in 0..settings.spec.rounds() {
        let mut votes: Vec<Vec<Prediction>> = Vec::with_capacity(3);
        for m in 0..3 {
            let seed = model_seed(base, round, m);
            rec.seeds.push(seed);
            let wrap = |e: Error| Error::Round {
                round,
                source: Box::new(e),
            };
            let mut model = factory(m, seed).map_err(wrap)?;
            let sample: Vec<QARecord> = bootstrap_indices(train_set.len(), seed)
                .into_iter()
                .map(|i| train_set[i].clone())
                .collect();
            let cfg = settings.train.clone().with_seed(seed);
            let phase = format!("round{round}.model{m}");
            rec.phase(&phase, |log| run_qa_phase(model.as_mut(), &sample, &cfg, log))
                .map_err(wrap)?;
            votes.push(predict_all(model.as_ref(), &pool, settings.null_threshold).map_err(wrap)?);
        }
        let votes: [Vec<Prediction>; 3] = votes.try_into().expect("three vote lists");
        let adopted = adopt_by_vote(round, &pool, &votes, &settings.normalizer, lang)?;
        log::info!("tri-training round {round}: adopted {} of {} unlabeled records", adopted.len(), pool.len());

        let ids: HashSet<&str> = adopted.iter().map(|p| p.record_id.as_str()).collect();
        let mut remaining = Vec::with_capacity(pool.len() - adopted.len());
        let mut labels = adopted.iter();
        for r in pool {
            if ids.contains(r.id.as_str()) {
                let label = labels.next().expect("labels follow pool order");
                train_set.push(label.apply(&r));
            } else {
                remaining.push(r);
            }
        }
        pool = remaining;
        details.adopted_per_round.push(adopted.len());
        details.labeled_sizes.push(train_set.len());
        details.pseudo_labels.extend(adopted);
    }

    let rounds = settings.spec.rounds();
    let seed = model_seed(base, rounds, 3);
    rec.seeds.push(seed);
    let wrap = |e: Error| Error::Round {
        round: rounds,
        source: Box::new(e),
    };
    let mut model = factory(3, seed).map_err(wrap)?;
    let base_fp = model.fingerprint();
    rec.records("augmented", &train_set);
    let cfg = settings.train.clone().with_seed(seed);
    rec.phase("final", |log| run_qa_phase(model.as_mut(), &train_set, &cfg, log))?;
    let metrics = rec.evaluate(model.as_ref(), eval)?;
    Ok(rec.finish(metrics, base_fp, model.fingerprint(), details))
}
