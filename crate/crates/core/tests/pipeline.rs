use attrqa_core::alignment::{align_records, Aligner, IdentityTranslator};
use attrqa_core::data::{
    parse_squad_str, split_by_ad, to_squad_string, AdDocument, AttributeQuestionMap, Language,
};
use attrqa_core::model::mock::{MemorizingModel, OracleModel};
use attrqa_core::model::TrainConfig;
use attrqa_core::regimes::{run_few_shot, run_zero_shot, RegimeKind, RegimeSpec, RunSettings};

fn corpus(n: usize) -> Vec<AdDocument> {
    (0..n)
        .map(|i| {
            let text = format!("Ran away, Tom{i}, in a red coat{i}. Reward of {} dollars.", 3 + i);
            let mut ad = AdDocument::new(format!("ad{i:02}"), text, Language::En);
            assert!(ad.annotate("given_name", &format!("Tom{i}")));
            if i % 3 != 0 {
                assert!(ad.annotate("clothing", &format!("a red coat{i}")));
            }
            ad
        })
        .collect()
}

#[test]
fn convert_split_train_and_score() {
    let qmap = AttributeQuestionMap::runaways_en();
    let split = split_by_ad(&corpus(20), 0.7, 3).unwrap();
    assert_eq!((split.train.len(), split.validation.len()), (14, 6));
    let records = split.to_records(&qmap, true).unwrap();
    assert_eq!(records.train.len(), 14 * qmap.len());

    // The SQuAD serialization round-trips.
    let reloaded = parse_squad_str(&to_squad_string(&records.train).unwrap()).unwrap();
    assert_eq!(reloaded, records.train);

    let settings = RunSettings::new(RegimeSpec::new(RegimeKind::FewShot, Language::En).with_budget(14))
        .with_train(TrainConfig { epochs: 1, ..TrainConfig::default() });
    let trained = run_few_shot(&settings, &MemorizingModel::new(), &records.train, &records.train).unwrap();
    assert_eq!(trained.metrics.f1, 100.0);
    assert_eq!(trained.metrics.n, records.train.len());

    let zero = RunSettings::new(RegimeSpec::new(RegimeKind::ZeroShot, Language::En));
    let oracle = OracleModel::from_records(&records.validation);
    let scored = run_zero_shot(&zero, &oracle, &records.validation).unwrap();
    assert_eq!(scored.metrics.f1, 100.0);
}

#[test]
fn identity_translation_keeps_every_answer() {
    let qmap = AttributeQuestionMap::runaways_en();
    let records = split_by_ad(&corpus(6), 0.5, 1).unwrap().to_records(&qmap, false).unwrap().train;
    let (aligned, report) =
        align_records(&records, &qmap, &IdentityTranslator::default(), Language::En, &Aligner::default()).unwrap();
    assert_eq!(report.discarded, 0);
    assert_eq!(aligned, records);
}
