#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use attrqa_core::data::{save_ads_jsonl, AdDocument, AttributeQuestionMap, Language};

pub const ATTRIBUTES: [(&str, &str); 4] = [
    ("name", "What is the name of the person?"),
    ("age", "How old is the person?"),
    ("clothing", "What clothes did the person wear?"),
    ("total_reward", "How much reward is offered?"),
];

/// `n` small adverts. Every ad names the person and the reward; every other
/// ad also gives an age, so negatives exist.
pub fn ads(n: usize) -> Vec<AdDocument> {
    (0..n)
        .map(|i| {
            let text = format!(
                "RAN away from the subscriber on the {d}th, a negro man named Jack{i}, about {a} years old, \
                 wearing a blue coat{i} and grey breeches. Whoever secures him shall receive {r} DOLLARS reward.",
                d = 1 + i % 28,
                a = 20 + i,
                r = 5 + i,
            );
            let mut ad = AdDocument::new(format!("ad{i:03}"), text, Language::En);
            assert!(ad.annotate("name", &format!("Jack{i}")));
            assert!(ad.annotate("clothing", &format!("a blue coat{i} and grey breeches")));
            assert!(ad.annotate("total_reward", &format!("{} DOLLARS", 5 + i)));
            if i % 2 == 0 {
                assert!(ad.annotate("age", &format!("about {} years old", 20 + i)));
            }
            ad
        })
        .collect()
}

pub fn question_map() -> AttributeQuestionMap {
    let mut m = AttributeQuestionMap::new(Language::En);
    for (a, q) in ATTRIBUTES {
        m.insert(a, q).unwrap();
    }
    m
}

/// Writes `ads.jsonl` and `questions.tsv` into `dir`.
pub fn write_inputs(dir: &Path, n_ads: usize) -> (PathBuf, PathBuf) {
    let ads_path = dir.join("ads.jsonl");
    let q_path = dir.join("questions.tsv");
    save_ads_jsonl(&ads(n_ads), &ads_path).unwrap();
    question_map().save_tsv(&q_path).unwrap();
    (ads_path, q_path)
}

pub fn attrqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrqa"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("ATTRQA_CACHE_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Converts the fixture and writes a 70/30 split; returns (train, validation).
pub fn prepared_split(dir: &Path, n_ads: usize) -> (PathBuf, PathBuf) {
    write_inputs(dir, n_ads);
    let out = attrqa(
        dir,
        &[
            "convert",
            "--set", "paths.ads='ads.jsonl'",
            "--set", "paths.questions='questions.tsv'",
            "--set", "paths.out='all.json'",
            "--set", "paths.split_dir='split'",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (dir.join("split/train.json"), dir.join("split/validation.json"))
}

pub const FEW_SHOT_CONFIG: &str = r#"
[paths]
train = "split/train.json"
eval = "split/train.json"
runs_dir = "runs"

[regime]
kind = "few_shot"
budget = 8
source_lang = "en"
target_lang = "en"

[train]
epochs = 2
batch_size = 8
joint_batch_per_objective = 4
seed = 11

[seeds]
sample = 5

[backends]
qa = "mock.memorize"
"#;
