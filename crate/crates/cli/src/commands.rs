use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use attrqa_core::alignment::{align_records, Aligner, CachedTranslator, CommandTranslator, Translator};
use attrqa_core::conversion::convert_corpus;
use attrqa_core::data::{
    corpus_stats, load_ads_jsonl, load_squad_file, save_squad_file, split_by_ad, AttributeQuestionMap, QARecord,
};
use attrqa_core::metrics::{pairwise_iaa, BucketEdges, Normalizer};
use attrqa_core::mlm::{compare_models, perplexity_table_tsv, scorer_backend, tokenize_lines, MaskedScorer};
use attrqa_core::model::{prompt_backend, qa_backend, trainable_backend, BackendContext, TrainableQAModel};
use attrqa_core::regimes::{
    budgeted_train, load_run_dir, run_attribute_holdout_grid, run_cross_lingual, run_few_shot, run_further_pretrain,
    run_joint_mlm_qa, run_prompt_baseline, run_tri_training, run_zero_shot, write_run_dir, RegimeKind,
    RegimeRunResult, RunDirContents, RunSettings,
};
use attrqa_core::Error;
use serde_json::json;

use crate::config::PipelineConfig;
use crate::report::Grid;
use crate::CliError;

type CliResult<T> = Result<T, CliError>;

fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Core(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn save_records(records: &[QARecord], path: &Path) -> CliResult<()> {
    create_parent(path)?;
    save_squad_file(records, path)?;
    Ok(())
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value");
    s.push('\n');
    s
}

/// Annotated ads → SQuAD-v2 records (optionally also a train/validation
/// split). Returns the conversion report as JSON.
pub fn convert(cfg: &PipelineConfig) -> CliResult<String> {
    let ads = load_ads_jsonl(cfg.require("ads", &cfg.paths.ads)?)?;
    let qmap = AttributeQuestionMap::load_tsv(cfg.require("questions", &cfg.paths.questions)?, cfg.options.language)?;
    let out = cfg.require("out", &cfg.paths.out)?;
    let (records, report) = convert_corpus(&ads, &qmap, cfg.options.emit_negatives)?;
    save_records(&records, out)?;
    let mut split_sizes = serde_json::Value::Null;
    if let Some(dir) = &cfg.paths.split_dir {
        let split = split_by_ad(&ads, cfg.options.train_fraction, cfg.seeds.split)?;
        let recs = split.to_records(&qmap, cfg.options.emit_negatives)?;
        save_records(&recs.train, &dir.join("train.json"))?;
        save_records(&recs.validation, &dir.join("validation.json"))?;
        split_sizes = json!({
            "train_ads": split.train.len(),
            "validation_ads": split.validation.len(),
            "train_records": recs.train.len(),
            "validation_records": recs.validation.len(),
        });
    }
    log::info!(
        "converted {} ads into {} records ({} discarded annotations)",
        report.n_ads,
        report.total_records(),
        report.discarded.len()
    );
    Ok(pretty(&json!({
        "report": report,
        "stats": corpus_stats(&ads),
        "split": split_sizes,
    })))
}

/// Translates a SQuAD file and re-anchors its answers. Returns the
/// alignment report as JSON.
pub fn align(cfg: &PipelineConfig) -> CliResult<String> {
    let records = load_squad_file(cfg.require("input", &cfg.paths.input)?)?;
    if records.is_empty() {
        return Err(CliError::Config("input holds no records to align".into()));
    }
    let tgt = cfg
        .options
        .target_language
        .ok_or_else(|| CliError::Config("options.target_language is required for align".into()))?;
    if tgt == cfg.options.language {
        return Err(CliError::Config("source and target languages are the same".into()));
    }
    let tq = AttributeQuestionMap::load_tsv(cfg.require("target_questions", &cfg.paths.target_questions)?, tgt)?;
    let out = cfg.require("out", &cfg.paths.out)?;

    let cache_path = cfg.cache_dir().join("translations.tsv");
    create_parent(&cache_path)?;
    let inner: Option<Box<dyn Translator>> = match &cfg.backends.translator {
        Some(cmd) => Some(Box::new(CommandTranslator::new(
            cmd.split_whitespace().map(String::from).collect(),
        )?)),
        None => None,
    };
    let translator = CachedTranslator::open(&cache_path, inner)?;
    let (aligned, report) = align_records(&records, &tq, &translator, cfg.options.language, &Aligner::default())?;
    save_records(&aligned, out)?;
    if !report.unprocessed.is_empty() {
        log::warn!("{} records were not translated; rerun to retry them", report.unprocessed.len());
    }
    Ok(pretty(&json!({
        "report": report,
        "surviving": report.surviving(),
    })))
}

fn load_records(cfg: &PipelineConfig, what: &str, path: &Option<PathBuf>) -> CliResult<Vec<QARecord>> {
    Ok(load_squad_file(cfg.require(what, path)?)?)
}

fn settings(cfg: &PipelineConfig) -> CliResult<RunSettings> {
    let spec = cfg
        .regime
        .clone()
        .ok_or_else(|| CliError::Config("a [regime] table is required for run".into()))?;
    Ok(RunSettings {
        spec,
        train: cfg.train.clone(),
        null_threshold: cfg.options.null_threshold,
        normalizer: Normalizer::default(),
        bucket_edges: BucketEdges::Quintiles,
        sample_seed: cfg.seeds.sample,
    })
}

/// Executes the configured regime on the configured data.
pub fn execute(cfg: &PipelineConfig) -> CliResult<RegimeRunResult> {
    let settings = settings(cfg)?;
    let kind = settings.spec.kind;
    let eval = load_records(cfg, "eval", &cfg.paths.eval)?;
    let train = match kind {
        RegimeKind::ZeroShot | RegimeKind::PromptBaseline => Vec::new(),
        _ => load_records(cfg, "train", &cfg.paths.train)?,
    };
    let train = budgeted_train(&settings, &train)?;
    let unlabeled_text = if matches!(
        kind,
        RegimeKind::FurtherPretrain | RegimeKind::JointMlmQa | RegimeKind::XlingMlm
    ) {
        let lines = read_lines(cfg.require("unlabeled_text", &cfg.paths.unlabeled_text)?)?;
        if lines.is_empty() {
            return Err(CliError::Config("unlabeled text is empty".into()));
        }
        lines
    } else {
        Vec::new()
    };
    let ctx = BackendContext { gold: &eval };
    let qa = cfg.backends.qa.as_str();
    let trainable = || -> CliResult<Box<dyn TrainableQAModel>> { Ok(trainable_backend(qa, ctx)?) };

    let result = match kind {
        RegimeKind::ZeroShot => run_zero_shot(&settings, qa_backend(qa, ctx)?.as_ref(), &eval)?,
        RegimeKind::FewShot => run_few_shot(&settings, trainable()?.as_ref(), &train, &eval)?,
        RegimeKind::FurtherPretrain => {
            run_further_pretrain(&settings, trainable()?.as_ref(), &unlabeled_text, &train, &eval)?
        }
        RegimeKind::JointMlmQa => run_joint_mlm_qa(&settings, trainable()?.as_ref(), &unlabeled_text, &train, &eval)?,
        RegimeKind::XlingSimple => run_cross_lingual(&settings, trainable()?.as_ref(), &train, &eval, None)?,
        RegimeKind::XlingMlm => {
            run_cross_lingual(&settings, trainable()?.as_ref(), &train, &eval, Some(&unlabeled_text))?
        }
        RegimeKind::TriTraining => {
            let unlabeled: Vec<QARecord> = load_records(cfg, "unlabeled_records", &cfg.paths.unlabeled_records)?
                .iter()
                .map(QARecord::stripped)
                .collect();
            let factory = |_: usize, _: u64| trainable_backend(qa, ctx);
            run_tri_training(&settings, &factory, &train, &unlabeled, &eval)?
        }
        RegimeKind::AttributeHoldout => {
            let attr = settings.spec.attribute.clone().expect("validated above");
            let factory = || trainable_backend(qa, ctx);
            run_attribute_holdout_grid(&settings, &factory, &train, &eval, &[attr])?
        }
        RegimeKind::PromptBaseline => {
            let pm = prompt_backend(&cfg.backends.prompt, ctx)?;
            run_prompt_baseline(&settings, pm.as_ref(), &eval, cfg.options.mapping)?
        }
    };
    Ok(result)
}

fn run_log(result: &RegimeRunResult) -> String {
    let p = &result.provenance;
    let mut log = String::new();
    let _ = writeln!(log, "regime\t{}", result.spec.kind);
    let _ = writeln!(log, "settings_hash\t{}", p.settings_hash);
    let _ = writeln!(log, "base_model\t{}", p.base_model);
    let _ = writeln!(log, "model\t{}", result.model_fingerprint);
    for (name, hash) in &p.dataset_hashes {
        let _ = writeln!(log, "dataset\t{name}\t{hash}");
    }
    for (phase, secs) in &result.timing.phases {
        let steps = p.step_logs.get(phase).map(|l| l.steps.len()).unwrap_or(0);
        let _ = writeln!(log, "phase\t{phase}\t{steps} steps\t{secs:.3}s");
    }
    for (round, n) in result.details.adopted_per_round.iter().enumerate() {
        let _ = writeln!(log, "adopted\tround {round}\t{n}");
    }
    let _ = writeln!(log, "f1\t{:.4}", result.metrics.f1);
    let _ = writeln!(log, "exact_match\t{:.4}", result.metrics.exact_match);
    log
}

/// Runs the configured regime and persists it under the runs directory.
/// Returns the run directory.
pub fn run(cfg: &PipelineConfig, timestamp: &str) -> CliResult<PathBuf> {
    let result = execute(cfg)?;
    let dir = write_run_dir(&cfg.runs_dir(), timestamp, &result, &run_log(&result))?;
    log::info!("{}: f1 {:.2} → {}", result.spec.kind, result.metrics.f1, dir.display());
    Ok(dir)
}

fn collect_runs(path: &Path, out: &mut Vec<RunDirContents>) -> CliResult<()> {
    if path.join("config.json").is_file() {
        out.push(load_run_dir(path)?);
        return Ok(());
    }
    let entries = fs::read_dir(path).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    let mut children: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("config.json").is_file())
        .collect();
    if children.is_empty() {
        return Err(CliError::Config(format!("{} holds no runs", path.display())));
    }
    children.sort();
    for c in children {
        out.push(load_run_dir(&c)?);
    }
    Ok(())
}

/// Grid of F1 scores over the given run directories (or directories of
/// runs).
pub fn report(paths: &[PathBuf]) -> CliResult<String> {
    if paths.is_empty() {
        return Err(CliError::Config("report needs at least one run directory".into()));
    }
    let mut runs = Vec::new();
    for p in paths {
        collect_runs(p, &mut runs)?;
    }
    Ok(Grid::from_runs(&runs).render())
}

/// Pseudo-perplexity of the unlabeled text under each configured scorer.
pub fn perplexity(cfg: &PipelineConfig) -> CliResult<String> {
    let path = cfg.require("unlabeled_text", &cfg.paths.unlabeled_text)?;
    let corpus = tokenize_lines(&read_lines(path)?.join("\n"));
    if cfg.backends.scorers.is_empty() {
        return Err(CliError::Config("backends.scorers is empty".into()));
    }
    let scorers: Vec<(String, Box<dyn MaskedScorer>)> = cfg
        .backends
        .scorers
        .iter()
        .map(|name| Ok((name.clone(), scorer_backend(name)?)))
        .collect::<CliResult<_>>()?;
    let refs: Vec<(&str, &dyn MaskedScorer)> = scorers.iter().map(|(n, s)| (n.as_str(), s.as_ref())).collect();
    let rows = compare_models(&corpus, &refs, cfg.options.granularity)?;
    let table = perplexity_table_tsv(&rows);
    if let Some(out) = &cfg.paths.out {
        write_text(out, &table)?;
    }
    Ok(table)
}

/// Pairwise span-F1 agreement between two annotators' copies of the ads.
pub fn iaa(cfg: &PipelineConfig, a: &Path, b: &Path) -> CliResult<String> {
    let score = pairwise_iaa(&load_ads_jsonl(a)?, &load_ads_jsonl(b)?, cfg.options.language)?;
    Ok(format!("{score:.2}\n"))
}
