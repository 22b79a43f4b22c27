use serde::{Deserialize, Serialize};

use super::{require_eval, Recorder, RegimeKind, RegimeRunResult, RunDetails, RunSettings};
use crate::data::QARecord;
use crate::error::{Error, Result};
use crate::model::{predict_all, run_qa_phase, TrainableQAModel};

/// F1 on one attribute's evaluation records for a model trained with the
/// attribute (`trained`) and without it (`heldout`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutScore {
    pub attribute: String,
    pub trained: f64,
    pub heldout: f64,
    pub n_eval: usize,
    pub n_train_removed: usize,
}

/// Splits `train` into (records of other attributes, records of
/// `attribute`), both in input order.
pub fn holdout_split(train: &[QARecord], attribute: &str) -> (Vec<QARecord>, Vec<QARecord>) {
    train.iter().cloned().partition(|r| r.attribute != attribute)
}

/// Standard vs held-out training for each attribute. The standard model is
/// trained once; one extra model is trained per attribute.
pub fn run_attribute_holdout_grid(
    settings: &RunSettings,
    factory: &dyn Fn() -> Result<Box<dyn TrainableQAModel>>,
    train: &[QARecord],
    eval: &[QARecord],
    attributes: &[String],
) -> Result<RegimeRunResult> {
    let mut rec = Recorder::new(settings, &[RegimeKind::AttributeHoldout])?;
    require_eval(eval)?;
    if attributes.is_empty() {
        return Err(Error::InvalidArgument("no attributes to hold out".into()));
    }
    let subsets: Vec<Vec<QARecord>> = attributes
        .iter()
        .map(|a| {
            let sub: Vec<QARecord> = eval.iter().filter(|r| &r.attribute == a).cloned().collect();
            if sub.is_empty() {
                Err(Error::UnknownAttribute(a.clone()))
            } else {
                Ok(sub)
            }
        })
        .collect::<Result<_>>()?;
    rec.records("train", train);
    rec.records("eval", eval);
    rec.seeds.push(settings.train.seed);

    let evaluator = settings.evaluator();
    let mut standard = factory()?;
    let base_fp = standard.fingerprint();
    rec.phase("qa.standard", |log| run_qa_phase(standard.as_mut(), train, &settings.train, log))?;
    let standard_preds = predict_all(standard.as_ref(), eval, settings.null_threshold)?;
    let metrics = evaluator.evaluate(&standard_preds, eval)?;

    let mut scores = Vec::with_capacity(attributes.len());
    for (attr, sub) in attributes.iter().zip(&subsets) {
        let (kept, removed) = holdout_split(train, attr);
        let mut m = factory()?;
        rec.phase(&format!("qa.without.{attr}"), |log| run_qa_phase(m.as_mut(), &kept, &settings.train, log))?;
        let heldout = evaluator.evaluate(&predict_all(m.as_ref(), sub, settings.null_threshold)?, sub)?;
        let trained = evaluator.evaluate(&predict_all(standard.as_ref(), sub, settings.null_threshold)?, sub)?;
        scores.push(HoldoutScore {
            attribute: attr.clone(),
            trained: trained.f1,
            heldout: heldout.f1,
            n_eval: sub.len(),
            n_train_removed: removed.len(),
        });
    }
    let fp = standard.fingerprint();
    Ok(rec.finish(
        metrics,
        base_fp,
        fp,
        RunDetails {
            holdout: scores,
            ..RunDetails::default()
        },
    ))
}

/// [`run_attribute_holdout_grid`] for one attribute.
pub fn run_attribute_holdout(
    settings: &RunSettings,
    factory: &dyn Fn() -> Result<Box<dyn TrainableQAModel>>,
    train: &[QARecord],
    eval: &[QARecord],
    attribute: &str,
) -> Result<HoldoutScore> {
    let result = run_attribute_holdout_grid(settings, factory, train, eval, &[attribute.to_string()])?;
    Ok(result.details.holdout.into_iter().next().expect("one attribute requested"))
}
