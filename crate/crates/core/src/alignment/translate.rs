// Translator backends and the on-disk translation cache.
//
// Cache format: append-only UTF-8 TSV, one line per translation:
//   hash<TAB>src<TAB>tgt<TAB>input<TAB>output
// where hash is the first 16 bytes (hex) of SHA-256 over "src\0tgt\0input".
// Backslash, tab, CR and LF inside text fields are escaped as \\ \t \r \n.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use crate::data::Language;
use crate::error::{Error, Result};

/// Machine translation backend. Implementations must be deterministic
/// within a run; wrap remote services in a [`CachedTranslator`].
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, src: Language, tgt: Language) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TranslationKey {
    pub src: Language,
    pub tgt: Language,
    pub input: String,
}

impl TranslationKey {
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.src.code().as_bytes());
        h.update([0]);
        h.update(self.tgt.code().as_bytes());
        h.update([0]);
        h.update(self.input.as_bytes());
        hex::encode(&h.finalize()[..16])
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

/// Returns the text unchanged unless an explicit entry overrides it.
#[derive(Debug, Clone, Default)]
pub struct IdentityTranslator {
    entries: HashMap<String, String>,
}

impl IdentityTranslator {
    pub fn with_entry(mut self, input: &str, output: &str) -> Self {
        self.entries.insert(input.to_string(), output.to_string());
        self
    }
}

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _src: Language, _tgt: Language) -> Result<String> {
        Ok(self.entries.get(text).cloned().unwrap_or_else(|| text.to_string()))
    }
}

/// Runs `program args… <src> <tgt>` per request, text on stdin, translation
/// on stdout (one trailing newline stripped).
#[derive(Debug, Clone)]
pub struct CommandTranslator {
    command: Vec<String>,
}

impl CommandTranslator {
    pub fn new(command: Vec<String>) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::InvalidArgument("empty translator command".into()));
        }
        Ok(CommandTranslator { command })
    }
}

impl Translator for CommandTranslator {
    fn translate(&self, text: &str, src: Language, tgt: Language) -> Result<String> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(src.code())
            .arg(tgt.code())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start translator: {e}")))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(text.as_bytes())
            .map_err(|e| Error::Transport(format!("writing to translator: {e}")))?;
        let out = child
            .wait_with_output()
            .map_err(|e| Error::Transport(format!("waiting for translator: {e}")))?;
        if !out.status.success() {
            return Err(Error::Transport(format!(
                "translator exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let mut s = String::from_utf8(out.stdout).map_err(|e| Error::Transport(format!("translator output: {e}")))?;
        if s.ends_with('\n') {
            s.pop();
            if s.ends_with('\r') {
                s.pop();
            }
        }
        Ok(s)
    }
}

/// Memoizes another translator in an append-only TSV file. Without an inner
/// translator the cache is read-only and a miss is an error.
pub struct CachedTranslator {
    path: PathBuf,
    entries: RwLock<HashMap<TranslationKey, String>>,
    writer: Mutex<Option<File>>,
    inner: Option<Mutex<Box<dyn Translator>>>,
}

impl CachedTranslator {
    pub fn open(path: &Path, inner: Option<Box<dyn Translator>>) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.is_empty() {
                    continue;
                }
                let at = || format!("{}:{}", path.display(), lineno + 1);
                let cols: Vec<&str> = line.split('\t').collect();
                let [hash, src, tgt, input, output] = cols[..] else {
                    return Err(Error::format(at(), "expected 5 tab-separated columns"));
                };
                let key = TranslationKey {
                    src: src.parse()?,
                    tgt: tgt.parse()?,
                    input: unescape(input).ok_or_else(|| Error::format(at(), "bad escape in input"))?,
                };
                if key.hash() != hash {
                    return Err(Error::format(at(), "hash does not match the entry"));
                }
                let output = unescape(output).ok_or_else(|| Error::format(at(), "bad escape in output"))?;
                entries.insert(key, output);
            }
        }
        Ok(CachedTranslator {
            path: path.to_path_buf(),
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
            inner: inner.map(Mutex::new),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn append(&self, key: &TranslationKey, output: &str) -> Result<()> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if writer.is_none() {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| Error::io(&self.path, e))?;
            *writer = Some(file);
        }
        let line = format!(
            "{}\t{}\t{}\t{}\t{}\n",
            key.hash(),
            key.src,
            key.tgt,
            escape(&key.input),
            escape(output)
        );
        let file = writer.as_mut().expect("opened above");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

impl Translator for CachedTranslator {
    fn translate(&self, text: &str, src: Language, tgt: Language) -> Result<String> {
        let key = TranslationKey {
            src,
            tgt,
            input: text.to_string(),
        };
        if let Some(hit) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let Some(inner) = &self.inner else {
            return Err(Error::backend(format!(
                "no cached {src}→{tgt} translation for {:?} and no translator configured",
                text.chars().take(40).collect::<String>()
            )));
        };
        // One external call at a time; re-check in case another thread
        // filled the entry while we waited.
        let inner = inner.lock().expect("translator lock");
        if let Some(hit) = self.entries.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let output = inner.translate(text, src, tgt)?;
        self.append(&key, &output)?;
        self.entries.write().expect("cache lock").insert(key, output.clone());
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting(Arc<AtomicUsize>);

    impl Translator for Counting {
        fn translate(&self, text: &str, _src: Language, _tgt: Language) -> Result<String> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("«{}»", text.to_uppercase()))
        }
    }

    #[test]
    fn escaping_round_trips() {
        for s in ["plain", "tab\there", "line\nbreak\r", "back\\slash\\t", ""] {
            assert_eq!(unescape(&escape(s)).as_deref(), Some(s));
        }
        assert_eq!(unescape("bad\\x"), None);
    }

    #[test]
    fn cache_persists_and_avoids_repeat_calls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        let calls = Arc::new(AtomicUsize::new(0));

        let t = CachedTranslator::open(&path, Some(Box::new(Counting(calls.clone())))).unwrap();
        assert_eq!(t.translate("a\tb", Language::En, Language::Fr).unwrap(), "«A\tB»");
        assert_eq!(t.translate("a\tb", Language::En, Language::Fr).unwrap(), "«A\tB»");
        assert_eq!(t.translate("a\tb", Language::En, Language::Nl).unwrap(), "«A\tB»");
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        drop(t);

        let offline = CachedTranslator::open(&path, None).unwrap();
        assert_eq!(offline.len(), 2);
        assert_eq!(offline.translate("a\tb", Language::En, Language::Fr).unwrap(), "«A\tB»");
        assert!(offline.translate("new", Language::En, Language::Fr).is_err());
    }

    #[test]
    fn corrupt_cache_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        std::fs::write(&path, "deadbeef\ten\tfr\thello\tbonjour\n").unwrap();
        assert!(matches!(CachedTranslator::open(&path, None), Err(Error::Format { .. })));
    }

    #[cfg(unix)]
    #[test]
    fn command_translator_passes_languages() {
        let t = CommandTranslator::new(vec!["sh".into(), "-c".into(), "printf '%s>%s:' \"$1\" \"$2\"; cat".into(), "sh".into()]).unwrap();
        assert_eq!(t.translate("hello", Language::En, Language::Nl).unwrap(), "en>nl:hello");
        let failing = CommandTranslator::new(vec!["sh".into(), "-c".into(), "exit 3".into()]).unwrap();
        assert!(failing.translate("x", Language::En, Language::Fr).unwrap_err().is_retryable());
    }
}
