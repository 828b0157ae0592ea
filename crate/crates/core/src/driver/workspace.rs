//! On-disk layout of a compile workspace.
//!
//! ```text
//! interfaces.json        registry, call edges, data flows
//! tests/...              generated test scripts
//! src/...                generated code
//! results/<node>.log     PASS|FAIL <case> <ms>, one line per case
//! results/feedback/<case>.txt
//! trace.json             exported trace store
//! trace.journal          tuple journal of the current run
//! transcript.log         agent exchanges, one JSON record per line
//! checkpoint.json        session state at the last node boundary
//! .lock                  held while a compile runs
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::CompileError;
use crate::dsl::Identifier;
use crate::system::{SourceFile, SystemState};
use crate::verification::{format_outcome_log, TestOutcome};

pub const INTERFACES_FILE: &str = "interfaces.json";
pub const TRACE_FILE: &str = "trace.json";
pub const TRACE_JOURNAL: &str = "trace.journal";
pub const TRANSCRIPT_FILE: &str = "transcript.log";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOCK_FILE: &str = ".lock";
pub const TESTS_DIR: &str = "tests";
pub const SRC_DIR: &str = "src";
pub const RESULTS_DIR: &str = "results";

const MANAGED_FILES: [&str; 5] = [INTERFACES_FILE, TRACE_FILE, TRACE_JOURNAL, TRANSCRIPT_FILE, CHECKPOINT_FILE];
const MANAGED_DIRS: [&str; 3] = [TESTS_DIR, SRC_DIR, RESULTS_DIR];

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> CompileError {
    CompileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn results_log(node: &Identifier) -> String {
        format!("{RESULTS_DIR}/{node}.log")
    }

    pub fn feedback_file(case: &Identifier) -> String {
        format!("{RESULTS_DIR}/feedback/{case}.txt")
    }

    pub fn ensure(&self) -> Result<(), CompileError> {
        fs::create_dir_all(&self.root).map_err(|e| io_err(&self.root, e))
    }

    /// Removes every output of a previous run, leaving unrelated files alone.
    pub fn clean(&self) -> Result<(), CompileError> {
        for name in MANAGED_FILES {
            let path = self.path(name);
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path, e)),
            }
        }
        for name in MANAGED_DIRS {
            let path = self.path(name);
            match fs::remove_dir_all(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path, e)),
            }
        }
        Ok(())
    }

    pub fn write(&self, rel: &str, content: &[u8]) -> Result<(), CompileError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, content).map_err(|e| io_err(&path, e))
    }

    /// Writes via a temporary sibling and a rename, so readers never see a torn file.
    pub fn write_atomic(&self, rel: &str, content: &[u8]) -> Result<(), CompileError> {
        let tmp = format!("{rel}.tmp");
        self.write(&tmp, content)?;
        fs::rename(self.path(&tmp), self.path(rel)).map_err(|e| io_err(&self.path(rel), e))
    }

    pub fn write_script(&self, rel: &str, content: &str) -> Result<(), CompileError> {
        self.write(rel, content.as_bytes())?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            let path = self.path(rel);
            fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    pub fn remove(&self, rel: &str) -> Result<(), CompileError> {
        let path = self.path(rel);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_err(&path, e)),
        }
    }

    pub fn write_files(&self, files: &[SourceFile]) -> Result<(), CompileError> {
        files.iter().try_for_each(|f| self.write(&f.path, f.content.as_bytes()))
    }

    pub fn remove_files(&self, files: &[SourceFile]) -> Result<(), CompileError> {
        files.iter().try_for_each(|f| self.remove(&f.path))
    }

    /// Writes the outcome log of `node` and one feedback file per failure,
    /// dropping feedback left by an earlier attempt.
    pub fn write_results(&self, node: &Identifier, outcomes: &[TestOutcome]) -> Result<(), CompileError> {
        self.write(&Self::results_log(node), format_outcome_log(outcomes).as_bytes())?;
        for outcome in outcomes {
            let rel = Self::feedback_file(&outcome.case_id);
            if outcome.passed {
                self.remove(&rel)?;
            } else {
                self.write(&rel, outcome.feedback.as_bytes())?;
            }
        }
        Ok(())
    }

    /// Every file below `dir`, as workspace-relative forward-slash paths.
    pub fn files_under(&self, dir: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![self.path(dir)];
        while let Some(current) = stack.pop() {
            let Ok(entries) = fs::read_dir(&current) else { continue };
            for entry in entries.flatten() {
                let path = entry.path();
                if path.is_dir() {
                    stack.push(path);
                } else if let Ok(rel) = path.strip_prefix(&self.root) {
                    let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                    out.push(parts.join("/"));
                }
            }
        }
        out.sort();
        out
    }

    /// Deletes generated files the checkpointed `system` does not account
    /// for, i.e. leftovers of work after the last node boundary.
    pub fn prune(&self, system: &SystemState) -> Result<Vec<String>, CompileError> {
        let mut keep: BTreeSet<String> = BTreeSet::new();
        for artifact in system.code.values() {
            keep.extend(artifact.files.iter().map(|f| f.path.clone()));
            keep.insert(Self::results_log(&artifact.node_id));
            if let Some(suite) = system.tests.get(&artifact.node_id) {
                for case in &suite.cases {
                    if system.outcomes.get(&case.id).is_some_and(|o| !o.passed) {
                        keep.insert(Self::feedback_file(&case.id));
                    }
                }
            }
        }
        keep.extend(system.cases().filter_map(|c| c.artifact_path.clone()));
        let mut removed = Vec::new();
        for dir in MANAGED_DIRS {
            for rel in self.files_under(dir) {
                if !keep.contains(&rel) {
                    self.remove(&rel)?;
                    removed.push(rel);
                }
            }
        }
        Ok(removed)
    }

    pub fn acquire_lock(&self) -> Result<WorkspaceLock, CompileError> {
        let path = self.path(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                use std::io::Write;
                let _ = writeln!(file, "{}", std::process::id());
                Ok(WorkspaceLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CompileError::Locked(path.display().to_string())),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

/// Removes the lock file when dropped.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of the code and test scripts attributed to `node`, read from disk.
pub fn node_artifact_digest(workspace: &Path, system: &SystemState, node: &Identifier) -> String {
    let mut paths: BTreeSet<String> = BTreeSet::new();
    if let Some(artifact) = system.code.values().find(|c| &c.node_id == node) {
        paths.extend(artifact.files.iter().map(|f| f.path.clone()));
    }
    if let Some(suite) = system.tests.get(node) {
        paths.extend(suite.cases.iter().filter_map(|c| c.artifact_path.clone()));
    }
    let mut hasher = Sha256::new();
    for rel in paths {
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        match fs::read(workspace.join(&rel)) {
            Ok(bytes) => {
                hasher.update((bytes.len() as u64).to_le_bytes());
                hasher.update(&bytes);
            }
            Err(_) => hasher.update(b"<missing>"),
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Every file of the workspace with run-dependent values blanked:
/// `timestamp_ms` and `duration_ms` keys in JSON and JSON-lines files and
/// the duration column of outcome logs. Two runs of the same project with the
/// same backend replies compare equal.
pub fn normalized_snapshot(workspace: &Path) -> BTreeMap<String, Vec<u8>> {
    let ws = Workspace::new(workspace);
    let mut out = BTreeMap::new();
    for rel in ws.files_under("") {
        if rel == LOCK_FILE {
            continue;
        }
        let Ok(bytes) = fs::read(workspace.join(&rel)) else { continue };
        let normalized = match std::str::from_utf8(&bytes) {
            Ok(text) if rel.starts_with(&format!("{RESULTS_DIR}/")) && rel.ends_with(".log") => text
                .lines()
                .map(|line| match line.rsplit_once(' ') {
                    Some((head, _)) => format!("{head} 0\n"),
                    None => format!("{line}\n"),
                })
                .collect::<String>()
                .into_bytes(),
            Ok(text) if rel.ends_with(".json") => match serde_json::from_str::<Value>(text) {
                Ok(mut value) => {
                    blank_volatile(&mut value);
                    serde_json::to_vec(&value).expect("JSON values serialize")
                }
                Err(_) => bytes,
            },
            Ok(text) if rel == TRANSCRIPT_FILE || rel == TRACE_JOURNAL => text
                .lines()
                .map(|line| match serde_json::from_str::<Value>(line) {
                    Ok(mut value) => {
                        blank_volatile(&mut value);
                        format!("{value}\n")
                    }
                    Err(_) => format!("{line}\n"),
                })
                .collect::<String>()
                .into_bytes(),
            _ => bytes,
        };
        out.insert(rel, normalized);
    }
    out
}

fn blank_volatile(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                if key == "timestamp_ms" || key == "duration_ms" {
                    *v = Value::from(0);
                } else {
                    blank_volatile(v);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(blank_volatile),
        _ => {}
    }
}
