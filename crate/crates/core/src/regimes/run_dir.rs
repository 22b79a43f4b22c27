// Run directory layout:
//   <root>/<timestamp>-<settings hash>/
//     config.json             spec, provenance, fingerprint, timing, details
//     metrics.json            the MetricsReport only (stable across reruns)
//     per_attribute.tsv
//     adopted_pseudolabels.tsv
//     log.txt

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Provenance, RegimeRunResult, RegimeSpec, RunDetails, Timing};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

#[derive(Serialize)]
struct ConfigFile {
    spec: RegimeSpec,
    model_fingerprint: String,
    provenance: Provenance,
    timing: Timing,
    details: RunDetails,
}

/// What [`load_run_dir`] reads back.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDirContents {
    pub dir: PathBuf,
    pub spec: RegimeSpec,
    pub metrics: MetricsReport,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("run files serialize");
    s.push('\n');
    s
}

fn pseudo_label_tsv(details: &RunDetails) -> String {
    let mut out = String::from("round\trecord_id\tanswer\tchar_start\tagreeing\n");
    for p in &details.pseudo_labels {
        let start = p.char_start.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        let agreeing: Vec<String> = p.agreeing.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            p.round,
            p.record_id,
            p.text.replace(['\t', '\n', '\r'], " "),
            start,
            agreeing.join(",")
        );
    }
    out
}

/// Persists a run under `root` and returns its directory. A numeric suffix
/// is added if the directory name is already taken.
pub fn write_run_dir(root: &Path, timestamp: &str, result: &RegimeRunResult, log_text: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stem = format!("{timestamp}-{}", result.provenance.settings_hash);
    let mut dir = root.join(&stem);
    let mut n = 2;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                dir = root.join(format!("{stem}-{n}"));
                n += 1;
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    let config = ConfigFile {
        spec: result.spec.clone(),
        model_fingerprint: result.model_fingerprint.clone(),
        provenance: result.provenance.clone(),
        timing: result.timing.clone(),
        details: result.details.clone(),
    };
    write(&dir.join("config.json"), &pretty(&config))?;
    write(&dir.join("metrics.json"), &pretty(&result.metrics))?;
    write(&dir.join("per_attribute.tsv"), &result.metrics.per_attribute_tsv())?;
    write(&dir.join("adopted_pseudolabels.tsv"), &pseudo_label_tsv(&result.details))?;
    write(&dir.join("log.txt"), log_text)?;
    Ok(dir)
}

/// Reads the spec and metrics of a run directory.
pub fn load_run_dir(dir: &Path) -> Result<RunDirContents> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    // Only the spec is read back: provenance may hold non-finite floats,
    // which JSON stores as null.
    let config: serde_json::Value = serde_json::from_str(&read("config.json")?)
        .map_err(|e| Error::format(dir.join("config.json").display().to_string(), e.to_string()))?;
    let spec: RegimeSpec = serde_json::from_value(config["spec"].clone())
        .map_err(|e| Error::format(format!("{}:spec", dir.join("config.json").display()), e.to_string()))?;
    let metrics: MetricsReport = serde_json::from_str(&read("metrics.json")?)
        .map_err(|e| Error::format(dir.join("metrics.json").display().to_string(), e.to_string()))?;
    Ok(RunDirContents {
        dir: dir.to_path_buf(),
        spec,
        metrics,
    })
}
