use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentRequest, RequestKind};
use crate::dsl::Identifier;

/// One agent exchange, written as a single JSON line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub kind: RequestKind,
    pub node_id: Identifier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub attempt: u32,
    pub request: AgentRequest,
    /// The rendered user prompt. The system prompt is the fixed `system` template.
    pub prompt: String,
    pub raw_response: Option<String>,
    /// `ok` or the error code.
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Append-only exchange log, optionally mirrored to a JSONL file.
#[derive(Debug, Default)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
    file: Option<(PathBuf, File)>,
}

fn io_error(path: &Path, e: std::io::Error) -> AgentError {
    AgentError::Transcript(format!("{}: {e}", path.display()))
}

impl Transcript {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Starts a fresh log at `path`, replacing any previous one.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, AgentError> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        Ok(Self {
            records: Vec::new(),
            file: Some((path, file)),
        })
    }

    /// Reopens the log at `path` keeping only its first `keep` records, so a
    /// resumed run continues numbering where the checkpoint left off.
    pub fn resume(path: impl Into<PathBuf>, keep: usize) -> Result<Self, AgentError> {
        let path = path.into();
        let mut records = if path.exists() { Self::load(&path)? } else { Vec::new() };
        if records.len() < keep {
            return Err(AgentError::Transcript(format!(
                "{} holds {} records but the checkpoint expects {keep}",
                path.display(),
                records.len()
            )));
        }
        records.truncate(keep);
        let mut file = File::create(&path).map_err(|e| io_error(&path, e))?;
        for record in &records {
            let line = serde_json::to_string(record).expect("records serialize");
            writeln!(file, "{line}").map_err(|e| io_error(&path, e))?;
        }
        file.flush().map_err(|e| io_error(&path, e))?;
        let file = OpenOptions::new().append(true).open(&path).map_err(|e| io_error(&path, e))?;
        Ok(Self {
            records,
            file: Some((path, file)),
        })
    }

    /// Reads every complete record; a torn final line is dropped.
    pub fn load(path: &Path) -> Result<Vec<TranscriptRecord>, AgentError> {
        let file = File::open(path).map_err(|e| io_error(path, e))?;
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| io_error(path, e))?;
        let last = lines.len().saturating_sub(1);
        let mut records = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(record) => records.push(record),
                Err(_) if i == last => break,
                Err(e) => {
                    return Err(AgentError::Transcript(format!("{} line {}: {e}", path.display(), i + 1)))
                }
            }
        }
        Ok(records)
    }

    pub fn append(&mut self, record: TranscriptRecord) -> Result<(), AgentError> {
        if let Some((path, file)) = &mut self.file {
            let line = serde_json::to_string(&record).expect("records serialize");
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|e| io_error(path, e))?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }
}
