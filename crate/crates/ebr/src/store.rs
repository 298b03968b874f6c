//! Append-only bundle persistence: one JSON-lines log per analysis holding every
//! version, plus a snapshot of the latest one.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::bundle::AnalysisBundle;
use crate::files::{read_json, write_json_atomic, FileError};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("analysis {id:?}: version {got} does not follow {latest}")]
    VersionGap { id: String, latest: u64, got: u64 },
}

#[derive(Debug, Clone)]
pub struct BundleStore {
    root: PathBuf,
}

impl BundleStore {
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let root = root.join("bundles");
        fs::create_dir_all(&root).map_err(|source| StoreError::Io { path: root.clone(), source })?;
        Ok(Self { root })
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.log"))
    }

    fn snapshot_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.json"))
    }

    /// Ids of every stored analysis, sorted.
    pub fn ids(&self) -> Result<Vec<String>, StoreError> {
        let io = |source| StoreError::Io { path: self.root.clone(), source };
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().is_some_and(|e| e == "log") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Every complete version in the log, oldest first. A torn final line (from
    /// a crash mid-append) is ignored.
    pub fn history(&self, id: &str) -> Result<Vec<AnalysisBundle>, StoreError> {
        let path = self.log_path(id);
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let mut versions = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| StoreError::Io { path: path.clone(), source })?;
            match serde_json::from_str::<AnalysisBundle>(&line) {
                Ok(bundle) => versions.push(bundle),
                Err(_) => break,
            }
        }
        Ok(versions)
    }

    /// The latest version: the snapshot, unless the log got further before a
    /// crash interrupted the snapshot write.
    pub fn latest(&self, id: &str) -> Result<Option<AnalysisBundle>, StoreError> {
        let snapshot_path = self.snapshot_path(id);
        let snapshot: Option<AnalysisBundle> =
            if snapshot_path.exists() { Some(read_json(&snapshot_path)?) } else { None };
        let logged = self.history(id)?.pop();
        Ok(match (snapshot, logged) {
            (Some(s), Some(l)) => Some(if l.version > s.version { l } else { s }),
            (s, l) => s.or(l),
        })
    }

    /// Appends the next version. Its number must be exactly one past the latest.
    pub fn append(&self, bundle: &AnalysisBundle) -> Result<(), StoreError> {
        let latest = self.latest(&bundle.id)?.map_or(0, |b| b.version);
        if bundle.version != latest + 1 {
            return Err(StoreError::VersionGap { id: bundle.id.clone(), latest, got: bundle.version });
        }
        let path = self.log_path(&bundle.id);
        let io = |source| StoreError::Io { path: path.clone(), source };
        truncate_torn_tail(&path).map_err(io)?;
        let mut log = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        let mut line = serde_json::to_string(bundle).expect("bundles serialize");
        line.push('\n');
        log.write_all(line.as_bytes()).map_err(io)?;
        log.sync_all().map_err(io)?;
        write_json_atomic(&self.snapshot_path(&bundle.id), bundle)?;
        Ok(())
    }
}

/// Drops bytes after the last newline, left behind by an interrupted append.
fn truncate_torn_tail(path: &Path) -> std::io::Result<()> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e),
    };
    if bytes.last().is_some_and(|b| *b != b'\n') {
        let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{Mode, Status};
    use crate::files::Alert;

    fn bundle() -> AnalysisBundle {
        let alert = Alert { id: "a".into(), statement: "p(A)".parse().unwrap(), received_at: Default::default(), dedup_key: None };
        AnalysisBundle::new("A0001".into(), "v1".into(), alert, Mode::Autonomous)
    }

    #[test]
    fn versions_are_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = BundleStore::open(dir.path()).unwrap();
        let first = bundle();
        store.append(&first).unwrap();
        assert!(matches!(store.append(&first), Err(StoreError::VersionGap { .. })));
        let second = first.advance(Status::Generating, "generate");
        store.append(&second).unwrap();
        assert_eq!(store.latest("A0001").unwrap().unwrap(), second);
        assert_eq!(store.history("A0001").unwrap(), [first, second]);
        assert_eq!(store.ids().unwrap(), ["A0001"]);
        assert!(store.latest("nope").unwrap().is_none());
    }

    #[test]
    fn torn_log_line_and_stale_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let store = BundleStore::open(dir.path()).unwrap();
        let first = bundle();
        store.append(&first).unwrap();
        let second = first.advance(Status::Generating, "generate");
        // log written, snapshot not yet replaced
        let mut log = OpenOptions::new().append(true).open(store.log_path("A0001")).unwrap();
        writeln!(log, "{}", serde_json::to_string(&second).unwrap()).unwrap();
        write!(log, "{{\"id\": \"A00").unwrap();
        drop(log);
        assert_eq!(store.latest("A0001").unwrap().unwrap(), second);
        assert_eq!(store.history("A0001").unwrap().len(), 2);
        let third = second.advance(Status::Collecting, "collect");
        store.append(&third).unwrap();
        assert_eq!(store.history("A0001").unwrap().len(), 3);
    }
}
