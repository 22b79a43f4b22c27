use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainableQAModel};
use crate::data::QARecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Qa,
    Mlm,
}

/// Every optimisation step taken, in order, with its batch size.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLog {
    pub steps: Vec<(Objective, usize)>,
}

impl StepLog {
    pub fn count(&self, objective: Objective) -> usize {
        self.steps.iter().filter(|(o, _)| *o == objective).count()
    }

    pub fn objectives(&self) -> Vec<Objective> {
        self.steps.iter().map(|(o, _)| *o).collect()
    }
}

fn epoch_order(n: usize, seed: u64, epoch: usize, stream: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_mul(1 << 20).wrapping_add(epoch as u64));
    order.shuffle(&mut rng);
    order
}

fn gather<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// QA steps over `records` for `config.epochs` epochs with seeded shuffling.
pub fn run_qa_phase(
    model: &mut dyn TrainableQAModel,
    records: &[QARecord],
    config: &TrainConfig,
    log: &mut StepLog,
) -> Result<()> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::InvalidArgument("no training records".into()));
    }
    for epoch in 0..config.epochs {
        for chunk in epoch_order(records.len(), config.seed, epoch, 1).chunks(config.batch_size) {
            model.qa_step(&gather(records, chunk), config)?;
            log.steps.push((Objective::Qa, chunk.len()));
        }
    }
    Ok(())
}

/// MLM steps over an unlabeled text corpus.
pub fn run_mlm_phase(
    model: &mut dyn TrainableQAModel,
    corpus: &[String],
    config: &TrainConfig,
    log: &mut StepLog,
) -> Result<()> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("unlabeled corpus is empty".into()));
    }
    for epoch in 0..config.epochs {
        for chunk in epoch_order(corpus.len(), config.seed, epoch, 2).chunks(config.batch_size) {
            model.mlm_step(&gather(corpus, chunk), config)?;
            log.steps.push((Objective::Mlm, chunk.len()));
        }
    }
    Ok(())
}

/// Interleaves QA and MLM steps strictly 1:1, each with
/// `joint_batch_per_objective` examples. Epochs are counted over the QA
/// records; the unlabeled corpus is cycled (reshuffled on each pass).
pub fn run_joint_phase(
    model: &mut dyn TrainableQAModel,
    records: &[QARecord],
    corpus: &[String],
    config: &TrainConfig,
    log: &mut StepLog,
) -> Result<()> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::InvalidArgument("no training records".into()));
    }
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("unlabeled corpus is empty".into()));
    }
    let per = config.joint_batch_per_objective;
    let mut mlm_pass = 0usize;
    let mut mlm_order = epoch_order(corpus.len(), config.seed, mlm_pass, 3);
    let mut mlm_pos = 0usize;
    for epoch in 0..config.epochs {
        for chunk in epoch_order(records.len(), config.seed, epoch, 1).chunks(per) {
            model.qa_step(&gather(records, chunk), config)?;
            log.steps.push((Objective::Qa, chunk.len()));

            let mut mlm_batch = Vec::with_capacity(per);
            while mlm_batch.len() < per {
                if mlm_pos == mlm_order.len() {
                    mlm_pass += 1;
                    mlm_order = epoch_order(corpus.len(), config.seed, mlm_pass, 3);
                    mlm_pos = 0;
                }
                mlm_batch.push(corpus[mlm_order[mlm_pos]].clone());
                mlm_pos += 1;
            }
            model.mlm_step(&mlm_batch, config)?;
            log.steps.push((Objective::Mlm, mlm_batch.len()));
        }
    }
    Ok(())
}

/// Returns a fine-tuned copy of `model`; the input is left unchanged.
pub fn fine_tune(
    model: &dyn TrainableQAModel,
    records: &[QARecord],
    config: &TrainConfig,
) -> Result<Box<dyn TrainableQAModel>> {
    let mut trained = model.boxed_clone();
    run_qa_phase(trained.as_mut(), records, config, &mut StepLog::default())?;
    Ok(trained)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mock::MemorizingModel;

    fn records(n: usize) -> Vec<QARecord> {
        (0..n)
            .map(|i| QARecord::impossible(&format!("ad{i}"), "a", "ctx", "q"))
            .collect()
    }

    #[test]
    fn qa_phase_step_count() {
        let mut m = MemorizingModel::new();
        let mut log = StepLog::default();
        run_qa_phase(&mut m, &records(70), &TrainConfig::default(), &mut log).unwrap();
        // ceil(70 / 32) = 3 steps per epoch, 5 epochs.
        assert_eq!(log.count(Objective::Qa), 15);
        assert_eq!(log.steps[2], (Objective::Qa, 6));
    }

    #[test]
    fn joint_phase_alternates_one_to_one() {
        let mut m = MemorizingModel::new();
        let mut log = StepLog::default();
        let corpus: Vec<String> = (0..5).map(|i| format!("line {i}")).collect();
        run_joint_phase(&mut m, &records(40), &corpus, &TrainConfig::default(), &mut log).unwrap();
        let objectives = log.objectives();
        assert_eq!(objectives.len(), 2 * 3 * 5);
        for pair in objectives.chunks(2) {
            assert_eq!(pair, [Objective::Qa, Objective::Mlm]);
        }
        assert!(log.steps.iter().filter(|(o, _)| *o == Objective::Mlm).all(|(_, n)| *n == 16));
    }

    #[test]
    fn shuffles_are_seeded() {
        assert_eq!(epoch_order(20, 1, 0, 1), epoch_order(20, 1, 0, 1));
        assert_ne!(epoch_order(20, 1, 0, 1), epoch_order(20, 1, 1, 1));
    }
}
