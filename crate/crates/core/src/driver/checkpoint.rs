use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::workspace::{io_err, Workspace, CHECKPOINT_FILE};
use super::CompileError;
use crate::agent::ImageCaption;
use crate::dsl::Identifier;
use crate::graph::NodeState;
use crate::system::SystemState;
use crate::trace::TraceTuple;

/// Session state at a node boundary; enough to continue an interrupted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// SHA-256 of the canonical serialization of the compiled document.
    pub document_sha256: String,
    pub states: BTreeMap<Identifier, NodeState>,
    /// Nodes whose interface and test synthesis already ran.
    pub synthesized: BTreeSet<Identifier>,
    #[serde(default)]
    pub captions: BTreeMap<Identifier, Vec<ImageCaption>>,
    pub system: SystemState,
    pub trace: Vec<TraceTuple>,
    /// Transcript records that belong to the checkpointed work.
    pub transcript_len: usize,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn load(workspace: &Workspace) -> Result<Option<Self>, CompileError> {
        let path = workspace.path(CHECKPOINT_FILE);
        let bytes = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        let checkpoint: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| CompileError::Checkpoint(format!("{}: {e}", path.display())))?;
        if checkpoint.version != Self::VERSION {
            return Err(CompileError::Checkpoint(format!(
                "checkpoint version {} is not supported",
                checkpoint.version
            )));
        }
        Ok(Some(checkpoint))
    }

    pub fn save(&self, workspace: &Workspace) -> Result<(), CompileError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("checkpoints serialize");
        bytes.push(b'\n');
        workspace.write_atomic(CHECKPOINT_FILE, &bytes)
    }
}
