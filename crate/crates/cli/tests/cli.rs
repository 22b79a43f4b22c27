mod common;

use std::fs;

use attrqa_core::data::load_squad_file;
use common::*;

#[test]
fn convert_writes_every_record() {
    let dir = tempfile::tempdir().unwrap();
    let (train, validation) = prepared_split(dir.path(), 20);
    let all = load_squad_file(&dir.path().join("all.json")).unwrap();
    assert_eq!(all.len(), 20 * ATTRIBUTES.len());
    assert_eq!(all.iter().filter(|r| !r.is_impossible).count(), 20 * 3 + 10);
    let (t, v) = (load_squad_file(&train).unwrap(), load_squad_file(&validation).unwrap());
    assert_eq!(t.len() + v.len(), all.len());
    assert_eq!(t.len(), 14 * ATTRIBUTES.len());
}

#[test]
fn convert_without_question_map_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), 3);
    let out = attrqa(dir.path(), &["convert", "--set", "paths.ads=ads.jsonl", "--set", "paths.out=x.json"]);
    assert_eq!(code(&out), 2);
    let out = attrqa(
        dir.path(),
        &["convert", "--set", "paths.ads=ads.jsonl", "--set", "paths.questions=missing.tsv", "--set", "paths.out=x.json"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[paths]\nads = \"a\"\nbogus = 1\n").unwrap();
    assert_eq!(code(&attrqa(dir.path(), &["--config", "c.toml", "convert"])), 2);
    assert_eq!(code(&attrqa(dir.path(), &["convert", "--set", "train.lr=0.1"])), 2);
}

#[test]
fn zero_shot_oracle_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    prepared_split(dir.path(), 10);
    let out = attrqa(
        dir.path(),
        &[
            "run",
            "--set", "paths.eval=split/validation.json",
            "--set", "regime.kind=zero_shot",
            "--set", "regime.source_lang=en",
            "--set", "regime.target_lang=en",
            "--set", "backends.qa=mock.oracle",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join(stdout(&out).trim());
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["f1"], 100.0);
    let log = fs::read_to_string(run_dir.join("log.txt")).unwrap();
    assert!(log.contains("dataset\teval\t"));
}

#[test]
fn invalid_regime_kind_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    prepared_split(dir.path(), 4);
    let out = attrqa(
        dir.path(),
        &[
            "run",
            "--set", "paths.eval=split/validation.json",
            "--set", "regime.kind=eleven_shot",
            "--set", "regime.source_lang=en",
            "--set", "regime.target_lang=en",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn oversized_budget_exits_2_and_missing_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    prepared_split(dir.path(), 20);
    fs::write(dir.path().join("c.toml"), FEW_SHOT_CONFIG).unwrap();
    assert_eq!(code(&attrqa(dir.path(), &["-c", "c.toml", "run", "--set", "regime.budget=99"])), 2);
    assert_eq!(
        code(&attrqa(dir.path(), &["-c", "c.toml", "run", "--set", "backends.qa=hf.roberta-base-squad2"])),
        3
    );
    assert_eq!(code(&attrqa(dir.path(), &["-c", "c.toml", "run", "--set", "backends.qa=gpt"])), 2);
}

#[test]
fn every_regime_runs_end_to_end_with_mocks() {
    let dir = tempfile::tempdir().unwrap();
    prepared_split(dir.path(), 20);
    fs::write(dir.path().join("c.toml"), FEW_SHOT_CONFIG).unwrap();
    fs::write(dir.path().join("unlabeled.txt"), "a line of old newspaper text\nanother line\n").unwrap();
    let cases: &[&[&str]] = &[
        &["regime.kind=few_shot"],
        &["regime.kind=further_pretrain", "paths.unlabeled_text=unlabeled.txt"],
        &["regime.kind=joint_mlm_qa", "paths.unlabeled_text=unlabeled.txt"],
        &["regime.kind=tri_training", "paths.unlabeled_records=split/validation.json", "regime.rounds=2"],
        &["regime.kind=xling_simple", "regime.target_lang=fr"],
        &["regime.kind=xling_mlm", "regime.target_lang=nl", "paths.unlabeled_text=unlabeled.txt"],
        &["regime.kind=attribute_holdout", "regime.attribute=age", "regime.budget=8"],
        &["regime.kind=prompt_baseline", "backends.prompt=mock.oracle"],
    ];
    for sets in cases {
        let mut args = vec!["-c", "c.toml", "run"];
        for s in *sets {
            args.extend(["--set", s]);
        }
        let out = attrqa(dir.path(), &args);
        assert_eq!(code(&out), 0, "{sets:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    // Kinds that take no budget ignore the configured one.
    let report = attrqa(dir.path(), &["report", "runs"]);
    assert_eq!(code(&report), 0);
    let table = stdout(&report);
    assert_eq!(table.lines().count(), 1 + cases.len());
    assert!(table.contains("prompt_baseline\ten"));
}

#[test]
fn cache_dir_env_override_and_identity_alignment() {
    let dir = tempfile::tempdir().unwrap();
    prepared_split(dir.path(), 6);
    fs::write(
        dir.path().join("fr.tsv"),
        "name\tQuel est le nom ?\nage\tQuel âge ?\nclothing\tQuels vêtements ?\ntotal_reward\tQuelle récompense ?\n",
    )
    .unwrap();
    let env_cache = dir.path().join("env_cache");
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_attrqa"))
        .current_dir(dir.path())
        .env("ATTRQA_CACHE_DIR", &env_cache)
        .args([
            "align",
            "--set", "paths.input=all.json",
            "--set", "paths.target_questions=fr.tsv",
            "--set", "paths.out=fr.json",
            "--set", "paths.cache_dir=config_cache",
            "--set", "options.target_language=fr",
            "--set", "backends.translator='sh -c cat sh'",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["report"]["discarded"], 0);
    assert_eq!(report["surviving"], 24);
    assert!(env_cache.join("translations.tsv").exists());
    assert!(!dir.path().join("config_cache").exists());
    let fr = load_squad_file(&dir.path().join("fr.json")).unwrap();
    assert!(fr.iter().all(|r| r.question.contains('?') && !r.question.starts_with("What")));
}

#[test]
fn align_rejects_empty_input_and_reports_cache_misses_as_backend_failures() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.json"), r#"{"version":"v2.0","data":[]}"#).unwrap();
    fs::write(dir.path().join("fr.tsv"), "name\tQuel est le nom ?\n").unwrap();
    let base = [
        "align",
        "--set", "paths.target_questions=fr.tsv",
        "--set", "paths.out=fr.json",
        "--set", "paths.cache_dir=cache",
        "--set", "options.target_language=fr",
    ];
    let mut args = base.to_vec();
    args.extend(["--set", "paths.input=empty.json"]);
    assert_eq!(code(&attrqa(dir.path(), &args)), 2);

    prepared_split(dir.path(), 2);
    fs::write(dir.path().join("fr.tsv"), "name\tNom ?\nage\tÂge ?\nclothing\tHabits ?\ntotal_reward\tPrime ?\n").unwrap();
    let mut args = base.to_vec();
    args.extend(["--set", "paths.input=all.json"]);
    assert_eq!(code(&attrqa(dir.path(), &args)), 3);
}

#[test]
fn perplexity_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("corpus.txt"), "one two three\nfour five\n").unwrap();
    fs::write(dir.path().join("empty.txt"), "\n\n").unwrap();
    let out = attrqa(
        dir.path(),
        &["perplexity", "--set", "paths.unlabeled_text=corpus.txt", "--set", "backends.scorers=['mock.uniform:17']"],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "model_name\tpp\ttotal_tokens\nmock.uniform:17\t17.0000\t5\n");

    let out = attrqa(
        dir.path(),
        &[
            "perplexity",
            "--set", "paths.unlabeled_text=corpus.txt",
            "--set", "backends.scorers=['mock.uniform:30', 'mock.uniform:3']",
        ],
    );
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("mock.uniform:3\t"));

    let out = attrqa(
        dir.path(),
        &["perplexity", "--set", "paths.unlabeled_text=empty.txt", "--set", "backends.scorers=['mock.uniform:17']"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn iaa_of_identical_annotations_is_100() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), 5);
    let out = attrqa(dir.path(), &["iaa", "ads.jsonl", "ads.jsonl"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "100.00\n");
}
