use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::Trace;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot encode trace: {0}")]
    Encode(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io { path: path.to_path_buf(), source }
}

/// Keeps `[A-Za-z0-9._-]`, replacing anything else with `_`.
fn sanitize(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.chars().all(|c| c == '.') {
        "_".to_string()
    } else {
        cleaned
    }
}

/// Path of a trace relative to the corpus root: `<date>/<target>__<scenario>.json`.
pub fn trace_path(trace: &Trace) -> PathBuf {
    let file = format!("{}__{}.json", sanitize(&trace.target.name), sanitize(&trace.scenario));
    Path::new(&trace.run_date()).join(file)
}

/// Writes a trace under `root` and returns its path. The file appears
/// atomically, so concurrent writers and readers never see partial files.
pub fn write_trace(root: &Path, trace: &Trace) -> Result<PathBuf, TraceError> {
    let path = root.join(trace_path(trace));
    let dir = path.parent().expect("trace path has a date directory");
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let json = serde_json::to_vec_pretty(trace)?;
    let tmp = path.with_extension(format!("json.{}.tmp", std::process::id()));
    fs::write(&tmp, json).map_err(io_error(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_error(&path))?;
    Ok(path)
}

pub fn read_trace(path: &Path) -> Result<Trace, String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub trace: Trace,
    /// Path relative to the corpus root.
    pub path: PathBuf,
}

/// Traces keyed by (run date, target name, scenario).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    entries: BTreeMap<(String, String, String), CorpusEntry>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a trace; returns false (and keeps the existing one) when the
    /// (date, target, scenario) key is taken.
    pub fn insert(&mut self, trace: Trace, path: PathBuf) -> bool {
        let key = (trace.run_date(), trace.target.name.clone(), trace.scenario.clone());
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, CorpusEntry { trace, path });
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.values()
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.entries.values().map(|e| &e.trace)
    }

    pub fn dates(&self) -> Vec<String> {
        let mut dates: Vec<String> = self.entries.keys().map(|k| k.0.clone()).collect();
        dates.dedup();
        dates
    }

    pub fn on_date<'a>(&'a self, date: &'a str) -> impl Iterator<Item = &'a CorpusEntry> + 'a {
        self.entries.iter().filter(move |(k, _)| k.0 == date).map(|(_, v)| v)
    }

    pub fn get(&self, date: &str, target: &str, scenario: &str) -> Option<&CorpusEntry> {
        self.entries.get(&(date.to_string(), target.to_string(), scenario.to_string()))
    }
}

/// A file that could not be added to a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusWarning {
    pub path: PathBuf,
    pub message: String,
}

/// Loads every `*.json` file below `root`. Unreadable, malformed and
/// duplicate traces are skipped and reported as warnings.
pub fn read_corpus(root: &Path) -> Result<(Corpus, Vec<CorpusWarning>), TraceError> {
    if !root.is_dir() {
        return Err(TraceError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut corpus = Corpus::new();
    let mut warnings = Vec::new();
    let walker = walkdir::WalkDir::new(root).sort_by_file_name();
    for entry in walker {
        let entry = match entry {
            Ok(entry) => entry,
            Err(e) => {
                let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
                warnings.push(CorpusWarning { path, message: e.to_string() });
                continue;
            }
        };
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let relative = path.strip_prefix(root).unwrap_or(path).to_path_buf();
        match read_trace(path) {
            Ok(trace) => {
                if !corpus.insert(trace, relative.clone()) {
                    warnings.push(CorpusWarning {
                        path: relative,
                        message: "duplicate (date, target, scenario); kept the first".into(),
                    });
                }
            }
            Err(message) => warnings.push(CorpusWarning { path: relative, message }),
        }
    }
    Ok((corpus, warnings))
}
