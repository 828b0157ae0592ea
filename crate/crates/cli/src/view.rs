//! Read-only views over a workspace, shared by `report`, `trace` and `serve`.

use std::collections::BTreeMap;
use std::path::Path;

use reqc_core::driver::{Checkpoint, Workspace, TRACE_FILE};
use reqc_core::dsl::Node;
use reqc_core::trace::TraceError;
use reqc_core::verification::pass_rate;
use reqc_core::{Identifier, NodeState, PassRate, RequirementDoc, SystemState, TraceStore};
use serde::Serialize;

/// Node states and realized system as of the last node boundary.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub states: BTreeMap<Identifier, NodeState>,
    pub system: SystemState,
}

impl Snapshot {
    /// Reads `checkpoint.json`; an absent checkpoint yields an empty snapshot.
    pub fn load(workspace: &Path) -> Result<Self, String> {
        match Checkpoint::load(&Workspace::new(workspace)) {
            Ok(Some(c)) => Ok(Self {
                states: c.states,
                system: c.system,
            }),
            Ok(None) => Ok(Self::default()),
            Err(e) => Err(e.to_string()),
        }
    }

    pub fn state(&self, node: &Identifier) -> NodeState {
        self.states.get(node).copied().unwrap_or(NodeState::Unprocessed)
    }

    pub fn rows(&self, doc: Option<&RequirementDoc>) -> Vec<NodeRow> {
        let ids: Vec<Identifier> = match doc {
            Some(doc) => doc.nodes().into_iter().map(|n| n.id.clone()).collect(),
            None => self.states.keys().cloned().collect(),
        };
        ids.into_iter()
            .map(|id| {
                let interfaces = self.system.interfaces.entries().iter().filter(|e| e.owner == id.as_str()).count();
                let cases: Vec<&Identifier> = self.system.tests.get(&id).map(|s| s.case_ids().collect()).unwrap_or_default();
                let outcomes: Vec<_> = cases.iter().filter_map(|c| self.system.outcomes.get(*c).cloned()).collect();
                NodeRow {
                    name: doc.and_then(|d| d.root.find(id.as_str())).map(|n| n.name.clone()),
                    state: self.state(&id),
                    interfaces,
                    tests: cases.len(),
                    pass_rate: pass_rate(&outcomes).ok(),
                    id,
                }
            })
            .collect()
    }

    /// Verification edges whose test has no passing outcome.
    pub fn error_count(&self) -> usize {
        let passed = |t: &Identifier| self.system.outcomes.get(t).is_some_and(|o| o.passed);
        self.system.ver_edges.iter().filter(|(_, t)| !passed(t)).count()
    }

    pub fn pass_rate(&self) -> Option<PassRate> {
        let outcomes: Vec<_> = self.system.outcomes.values().cloned().collect();
        pass_rate(&outcomes).ok()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeRow {
    pub id: Identifier,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub state: NodeState,
    pub interfaces: usize,
    pub tests: usize,
    pub pass_rate: Option<PassRate>,
}

pub fn format_table(rows: &[NodeRow]) -> String {
    let width = rows.iter().map(|r| r.id.as_str().len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:<11}  {:>10}  {:>5}  {:>9}\n", "NODE", "STATE", "INTERFACES", "TESTS", "PASS RATE");
    for r in rows {
        let state = serde_json::to_value(r.state).unwrap();
        let rate = r.pass_rate.map_or_else(|| "-".to_owned(), |p| p.to_string());
        out.push_str(&format!(
            "{:<width$}  {:<11}  {:>10}  {:>5}  {:>9}\n",
            r.id.as_str(),
            state.as_str().unwrap_or_default(),
            r.interfaces,
            r.tests,
            rate
        ));
    }
    out
}

pub fn load_trace(workspace: &Path) -> Result<TraceStore, String> {
    let path = workspace.join(TRACE_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => TraceStore::import(&bytes).map_err(|e: TraceError| format!("{}: {e}", path.display())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(TraceStore::new()),
        Err(e) => Err(format!("{}: {e}", path.display())),
    }
}

/// A node with its subtree, as served to the editor.
#[derive(Debug, Clone, Serialize)]
pub struct TreeNode {
    pub id: Identifier,
    pub name: String,
    pub state: NodeState,
    pub management: bool,
    pub description: String,
    pub dependencies: Vec<Identifier>,
    pub scenarios: Vec<reqc_core::dsl::Scenario>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn of(node: &Node, snapshot: &Snapshot) -> Self {
        Self {
            id: node.id.clone(),
            name: node.name.clone(),
            state: snapshot.state(&node.id),
            management: node.is_management(),
            description: node.description.render(),
            dependencies: node.dependencies.clone(),
            scenarios: node.scenarios.clone(),
            children: node.children.iter().map(|c| Self::of(c, snapshot)).collect(),
        }
    }
}
