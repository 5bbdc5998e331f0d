//! Run directory layout and append-only JSONL persistence.
//!
//! ```text
//! runs/<run_id>/
//!   manifest.json
//!   migration/<dialect>__<db_id>.json
//!   predictions.jsonl
//!   verdicts.jsonl
//!   eval_errors.jsonl
//!   gap_classifications.jsonl
//!   incomplete.json
//!   report.md, report.csv
//!   targets/quirk/          embedded files behind the quirk dialect
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use xdialect_core::{Dialect, RunManifest};
use xdialect_engines::migration::MigrationReport;

use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const VERDICTS: &str = "verdicts.jsonl";
pub const EVAL_ERRORS: &str = "eval_errors.jsonl";
pub const GAP_CLASSIFICATIONS: &str = "gap_classifications.jsonl";
pub const INCOMPLETE: &str = "incomplete.json";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Clone)]
pub struct RunDir {
    id: String,
    root: PathBuf,
}

/// Why a stage stopped short; kept until a later attempt finishes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompleteStage {
    pub message: String,
    /// Example ids or db ids still to do.
    pub pending: Vec<String>,
}

impl RunDir {
    pub fn new(runs_dir: &Path, run_id: &str) -> Result<Self> {
        let ok = !run_id.is_empty()
            && !run_id.starts_with('.')
            && run_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !ok {
            return Err(HarnessError::Config(format!(
                "run id '{run_id}' must be letters, digits, '-', '_' or '.', not starting with '.'"
            )));
        }
        Ok(RunDir { id: run_id.to_string(), root: runs_dir.join(run_id) })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self) -> bool {
        self.path(MANIFEST).is_file()
    }

    /// Create the directory and write the manifest; fails if the run exists.
    pub fn create(&self, manifest: &RunManifest) -> Result<()> {
        std::fs::create_dir_all(&self.root)?;
        manifest.write_new(&self.path(MANIFEST)).map_err(|e| match e {
            xdialect_core::CoreError::ManifestExists(id) => HarnessError::RunExists(id),
            other => other.into(),
        })
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        if !self.exists() {
            return Err(HarnessError::RunMissing(self.id.clone()));
        }
        Ok(RunManifest::read(&self.path(MANIFEST))?)
    }

    pub fn quirk_dir(&self) -> PathBuf {
        self.root.join("targets").join("quirk")
    }

    pub fn migration_path(&self, dialect: &Dialect, db_id: &str) -> PathBuf {
        self.root.join("migration").join(format!("{}__{db_id}.json", dialect.id()))
    }

    pub fn write_migration(&self, report: &MigrationReport) -> Result<()> {
        write_json_atomic(&self.migration_path(&report.dialect, &report.db_id), report)
    }

    pub fn read_migration(&self, dialect: &Dialect, db_id: &str) -> Result<Option<MigrationReport>> {
        let path = self.migration_path(dialect, db_id);
        if !path.is_file() {
            return Ok(None);
        }
        let bytes = std::fs::read(&path)?;
        serde_json::from_slice(&bytes).map(Some).map_err(|e| HarnessError::file(&path, e))
    }

    pub fn incomplete(&self) -> Result<BTreeMap<String, IncompleteStage>> {
        let path = self.path(INCOMPLETE);
        if !path.is_file() {
            return Ok(BTreeMap::new());
        }
        serde_json::from_slice(&std::fs::read(&path)?).map_err(|e| HarnessError::file(&path, e))
    }

    /// Record (or with `None`, clear) an unfinished stage such as
    /// `generate:<model>:<dialect>`.
    pub fn set_incomplete(&self, stage: &str, state: Option<IncompleteStage>) -> Result<()> {
        let mut all = self.incomplete()?;
        match state {
            Some(s) => {
                all.insert(stage.to_string(), s);
            }
            None => {
                if all.remove(stage).is_none() {
                    return Ok(());
                }
            }
        }
        let path = self.path(INCOMPLETE);
        if all.is_empty() {
            std::fs::remove_file(&path).or_else(|e| if e.kind() == std::io::ErrorKind::NotFound { Ok(()) } else { Err(e) })?;
            return Ok(());
        }
        write_json_atomic(&path, &all)
    }
}

/// Pretty JSON through a temporary file and rename, so readers never see
/// half a file.
pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::file(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Append-only JSON Lines file shared by worker threads. Each record is
/// written and flushed as one line.
pub struct JsonlLog<T> {
    path: PathBuf,
    file: Mutex<File>,
    _records: PhantomData<fn(&T)>,
}

impl<T: Serialize> JsonlLog<T> {
    /// Open for appending. A final line without its newline (left by a
    /// crash mid-write) is cut off first.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        if !bytes.is_empty() && !bytes.ends_with(b"\n") {
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            file.set_len(keep as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(JsonlLog { path: path.to_path_buf(), file: Mutex::new(file), _records: PhantomData })
    }

    pub fn append(&self, record: &T) -> Result<()> {
        let mut line = serde_json::to_string(record).map_err(|e| HarnessError::file(&self.path, e))?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Every complete record in a JSONL file; a missing file is empty. An
/// unterminated last line is ignored as an interrupted write; any other
/// bad line is an error naming its line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(HarnessError::file(path, e)),
    };
    // split on bytes: a torn tail may end inside a multi-byte character
    let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    // whatever follows the last newline is an interrupted write, and
    // `JsonlLog::open` cuts it off, so it never counts
    lines.pop();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim_ascii().is_empty() {
            continue;
        }
        let v = serde_json::from_slice(line).map_err(|e| HarnessError::file(path, format!("line {}: {e}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        id: i64,
    }

    #[test]
    fn torn_tail_is_dropped_and_appends_continue_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, "{\"id\":1}\n{\"id\":2}\n{\"id\":").unwrap();
        assert_eq!(read_jsonl::<Row>(&path).unwrap(), [Row { id: 1 }, Row { id: 2 }]);
        let log = JsonlLog::open(&path).unwrap();
        log.append(&Row { id: 3 }).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"id\":1}\n{\"id\":2}\n{\"id\":3}\n");
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, "{\"id\":1}\nnot json\n{\"id\":2}\n").unwrap();
        let err = read_jsonl::<Row>(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(read_jsonl::<Row>(&dir.path().join("absent.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn run_ids_are_path_safe() {
        let root = Path::new("/tmp/runs");
        assert!(RunDir::new(root, "2024-06-01_a.b").is_ok());
        for bad in ["", "..", "../x", "a/b", ".hidden", "a b"] {
            assert!(RunDir::new(root, bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn incomplete_markers_come_and_go() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path(), "r").unwrap();
        std::fs::create_dir_all(run.root()).unwrap();
        let state = IncompleteStage { message: "HTTP 401".into(), pending: vec!["1".into(), "2".into()] };
        run.set_incomplete("generate:m:postgres", Some(state.clone())).unwrap();
        assert_eq!(run.incomplete().unwrap()["generate:m:postgres"], state);
        run.set_incomplete("generate:m:postgres", None).unwrap();
        assert!(run.incomplete().unwrap().is_empty());
        assert!(!run.path(INCOMPLETE).exists());
    }
}
