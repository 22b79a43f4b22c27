use std::path::{Path, PathBuf};

use attrqa_core::data::Language;
use attrqa_core::mlm::Granularity;
use attrqa_core::model::TrainConfig;
use attrqa_core::regimes::{PromptMapping, RegimeSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides `paths.cache_dir`.
pub const CACHE_DIR_ENV: &str = "ATTRQA_CACHE_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Annotated ads, JSON lines.
    pub ads: Option<PathBuf>,
    /// `attribute<TAB>question` map in the source language.
    pub questions: Option<PathBuf>,
    /// Question map in the target language (align).
    pub target_questions: Option<PathBuf>,
    /// SQuAD file to translate (align).
    pub input: Option<PathBuf>,
    /// Training records, SQuAD.
    pub train: Option<PathBuf>,
    /// Evaluation records, SQuAD.
    pub eval: Option<PathBuf>,
    /// Unlabeled text, one passage per line (MLM phases, perplexity).
    pub unlabeled_text: Option<PathBuf>,
    /// Unlabeled QA records for tri-training; answers are ignored.
    pub unlabeled_records: Option<PathBuf>,
    /// Main output file of convert, align and perplexity.
    pub out: Option<PathBuf>,
    /// When set, convert also writes a seeded train/validation split here.
    pub split_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Train/validation split.
    pub split: u64,
    /// Ad-budget sampling.
    pub sample: u64,
}

fn default_qa() -> String {
    "mock.memorize".into()
}
fn default_prompt() -> String {
    "mock.silent".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    #[serde(default = "default_qa")]
    pub qa: String,
    #[serde(default = "default_prompt")]
    pub prompt: String,
    /// Translation command (`program args…`, called with `<src> <tgt>`);
    /// without one, align only uses the cache.
    #[serde(default)]
    pub translator: Option<String>,
    #[serde(default)]
    pub scorers: Vec<String>,
}

impl Default for Backends {
    fn default() -> Self {
        Backends {
            qa: default_qa(),
            prompt: default_prompt(),
            translator: None,
            scorers: Vec::new(),
        }
    }
}

fn default_language() -> Language {
    Language::En
}
fn default_true() -> bool {
    true
}
fn default_fraction() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Language of `ads` and `questions`.
    #[serde(default = "default_language")]
    pub language: Language,
    #[serde(default)]
    pub target_language: Option<Language>,
    #[serde(default = "default_true")]
    pub emit_negatives: bool,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub null_threshold: f64,
    #[serde(default)]
    pub mapping: PromptMapping,
    #[serde(default)]
    pub granularity: Granularity,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            language: Language::En,
            target_language: None,
            emit_negatives: true,
            train_fraction: default_fraction(),
            null_threshold: 0.0,
            mapping: PromptMapping::Exact,
            granularity: Granularity::SubToken,
        }
    }
}

/// The single configuration file behind every subcommand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub regime: Option<RegimeSpec>,
    pub train: TrainConfig,
    pub seeds: Seeds,
    pub backends: Backends,
    pub options: Options,
}

/// Sets `a.b.c = value` in a TOML table, creating tables on the way. The
/// value is parsed as TOML, falling back to a plain string.
fn set_key(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Reads an optional TOML file, applies `key=value` overrides, then the
    /// cache-directory environment variable, and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let src = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&src)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            set_key(&mut table, o)?;
        }
        let mut config: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|d| !d.is_empty()) {
            config.paths.cache_dir = Some(PathBuf::from(dir));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        let f = self.options.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Config(format!("options.train_fraction must lie in (0, 1), got {f}")));
        }
        if self.options.null_threshold.is_nan() {
            return Err(CliError::Config("options.null_threshold is NaN".into()));
        }
        Ok(())
    }

    pub fn require<'a>(&self, what: &str, p: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        p.as_deref()
            .ok_or_else(|| CliError::Config(format!("paths.{what} is required for this command")))
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.paths.runs_dir.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.paths.cache_dir.clone().unwrap_or_else(|| PathBuf::from("cache"))
    }
}
