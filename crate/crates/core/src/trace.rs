//! Traceability records linking requirements to interfaces, tests, and code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsl::Identifier;
use crate::finding::Finding;
use crate::graph::{NodeState, ReqGraph};
use crate::interface::InterfaceId;
use crate::system::SystemState;

pub mod codes {
    pub const DANGLING_REFERENCE: &str = "DANGLING_REFERENCE";
    pub const UNTRACED_NODE: &str = "UNTRACED_NODE";
    pub const UNTRACED_SCENARIO: &str = "UNTRACED_SCENARIO";
    pub const ORPHAN_INTERFACE: &str = "ORPHAN_INTERFACE";
    pub const ORPHAN_TEST: &str = "ORPHAN_TEST";
    pub const UNMATCHED_IMPL_EDGE: &str = "UNMATCHED_IMPL_EDGE";
    pub const UNMATCHED_VER_EDGE: &str = "UNMATCHED_VER_EDGE";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementKind {
    Node,
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequirementRef {
    pub kind: RequirementKind,
    pub id: Identifier,
}

impl RequirementRef {
    pub fn node(id: Identifier) -> Self {
        Self {
            kind: RequirementKind::Node,
            id,
        }
    }

    pub fn scenario(id: Identifier) -> Self {
        Self {
            kind: RequirementKind::Scenario,
            id,
        }
    }
}

/// Links one requirement to what realizes it. Scenario-level tuples and
/// fast-tracked management nodes carry no code artifact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceTuple {
    pub requirement: RequirementRef,
    #[serde(default)]
    pub interfaces: BTreeSet<InterfaceId>,
    #[serde(default)]
    pub tests: BTreeSet<Identifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<Identifier>,
}

impl TraceTuple {
    pub fn empty(requirement: RequirementRef) -> Self {
        Self {
            requirement,
            interfaces: BTreeSet::new(),
            tests: BTreeSet::new(),
            code: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKey {
    Requirement,
    Interface,
    Test,
    Code,
}

/// Lets `record` validate tuple endpoints without knowing where they live.
pub trait TraceEndpoints {
    fn has_requirement(&self, r: &RequirementRef) -> bool;
    fn has_interface(&self, id: &InterfaceId) -> bool;
    fn has_test(&self, id: &Identifier) -> bool;
    fn has_code(&self, id: &Identifier) -> bool;
}

/// The graph and system of one compile session.
pub struct SessionEndpoints<'a> {
    pub graph: &'a ReqGraph,
    pub system: &'a SystemState,
}

impl TraceEndpoints for SessionEndpoints<'_> {
    fn has_requirement(&self, r: &RequirementRef) -> bool {
        match r.kind {
            RequirementKind::Node => self.graph.node(r.id.as_str()).is_some(),
            RequirementKind::Scenario => self.graph.scenario(r.id.as_str()).is_some(),
        }
    }

    fn has_interface(&self, id: &InterfaceId) -> bool {
        self.system.interfaces.contains(id)
    }

    fn has_test(&self, id: &Identifier) -> bool {
        self.system.has_case(id.as_str())
    }

    fn has_code(&self, id: &Identifier) -> bool {
        self.system.code.contains_key(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("DANGLING_REFERENCE: {0}")]
    Dangling(String),
    #[error("CORRUPT_FILE: {0}")]
    Corrupt(String),
    #[error("UNSUPPORTED_VERSION: trace format version {0} is newer than {max}", max = TraceStore::VERSION)]
    UnsupportedVersion(u64),
    #[error("cannot write trace journal: {0}")]
    Journal(String),
}

/// Append-only tuple list with one index per lookup direction.
#[derive(Debug, Default)]
pub struct TraceStore {
    tuples: Vec<TraceTuple>,
    by_requirement: BTreeMap<String, Vec<usize>>,
    by_interface: BTreeMap<String, Vec<usize>>,
    by_test: BTreeMap<String, Vec<usize>>,
    by_code: BTreeMap<String, Vec<usize>>,
    journal: Option<(PathBuf, File)>,
}

impl Clone for TraceStore {
    fn clone(&self) -> Self {
        Self::from_tuples(self.tuples.clone())
    }
}

impl PartialEq for TraceStore {
    fn eq(&self, other: &Self) -> bool {
        self.tuples == other.tuples
    }
}

impl Eq for TraceStore {}

#[derive(Serialize, Deserialize)]
struct TraceFile {
    format: String,
    version: u64,
    tuples: Vec<TraceTuple>,
}

impl TraceStore {
    pub const FORMAT: &'static str = "reqc-trace";
    pub const VERSION: u64 = 1;

    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store from a tuple list, collapsing duplicates.
    pub fn from_tuples(tuples: impl IntoIterator<Item = TraceTuple>) -> Self {
        let mut store = Self::new();
        for tuple in tuples {
            store.insert(tuple);
        }
        store
    }

    pub fn tuples(&self) -> &[TraceTuple] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Mirrors every recorded tuple to `path` as one JSON line.
    pub fn attach_journal(&mut self, path: impl Into<PathBuf>) -> Result<(), TraceError> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| TraceError::Journal(format!("{}: {e}", path.display())))?;
        self.journal = Some((path, file));
        Ok(())
    }

    /// Rebuilds a store from a journal written by [`attach_journal`](Self::attach_journal).
    /// A torn final line, as left by a crash mid-write, is ignored.
    pub fn replay_journal(path: &Path) -> Result<Self, TraceError> {
        let file = File::open(path).map_err(|e| TraceError::Corrupt(format!("{}: {e}", path.display())))?;
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| TraceError::Corrupt(e.to_string()))?;
        let mut store = Self::new();
        let last = lines.len().saturating_sub(1);
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TraceTuple>(line) {
                Ok(tuple) => {
                    store.insert(tuple);
                }
                Err(_) if i == last => break,
                Err(e) => return Err(TraceError::Corrupt(format!("journal line {}: {e}", i + 1))),
            }
        }
        Ok(store)
    }

    /// Adds `tuple` after checking every endpoint. Returns false when an
    /// identical tuple was already present.
    pub fn record(&mut self, tuple: TraceTuple, endpoints: &dyn TraceEndpoints) -> Result<bool, TraceError> {
        if !endpoints.has_requirement(&tuple.requirement) {
            return Err(TraceError::Dangling(format!("requirement {}", tuple.requirement.id)));
        }
        if let Some(missing) = tuple.interfaces.iter().find(|i| !endpoints.has_interface(i)) {
            return Err(TraceError::Dangling(format!("interface {missing}")));
        }
        if let Some(missing) = tuple.tests.iter().find(|t| !endpoints.has_test(t)) {
            return Err(TraceError::Dangling(format!("test {missing}")));
        }
        if let Some(code) = tuple.code.as_ref().filter(|c| !endpoints.has_code(c)) {
            return Err(TraceError::Dangling(format!("code artifact {code}")));
        }
        if self.tuples.contains(&tuple) {
            return Ok(false);
        }
        if let Some((path, file)) = &mut self.journal {
            let line = serde_json::to_string(&tuple).expect("trace tuples serialize");
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|e| TraceError::Journal(format!("{}: {e}", path.display())))?;
        }
        self.insert(tuple);
        Ok(true)
    }

    fn insert(&mut self, tuple: TraceTuple) -> bool {
        let same_requirement = self.by_requirement.get(tuple.requirement.id.as_str());
        if same_requirement.is_some_and(|slots| slots.iter().any(|&i| self.tuples[i] == tuple)) {
            return false;
        }
        let at = self.tuples.len();
        let add = |index: &mut BTreeMap<String, Vec<usize>>, key: &str| match index.get_mut(key) {
            Some(slots) if slots.last() == Some(&at) => {}
            Some(slots) => slots.push(at),
            None => {
                index.insert(key.to_owned(), vec![at]);
            }
        };
        add(&mut self.by_requirement, tuple.requirement.id.as_str());
        for i in &tuple.interfaces {
            add(&mut self.by_interface, i.as_str());
        }
        for t in &tuple.tests {
            add(&mut self.by_test, t.as_str());
        }
        if let Some(c) = &tuple.code {
            add(&mut self.by_code, c.as_str());
        }
        self.tuples.push(tuple);
        true
    }

    /// All tuples holding `id` in the `key` position, in insertion order.
    pub fn query(&self, key: TraceKey, id: &str) -> Vec<&TraceTuple> {
        let index = match key {
            TraceKey::Requirement => &self.by_requirement,
            TraceKey::Interface => &self.by_interface,
            TraceKey::Test => &self.by_test,
            TraceKey::Code => &self.by_code,
        };
        index
            .get(id)
            .map(|slots| slots.iter().map(|&i| &self.tuples[i]).collect())
            .unwrap_or_default()
    }

    /// Linear-scan equivalent of [`query`](Self::query), used to cross-check the indexes.
    pub fn scan(&self, key: TraceKey, id: &str) -> Vec<&TraceTuple> {
        self.tuples
            .iter()
            .filter(|t| match key {
                TraceKey::Requirement => t.requirement.id == id,
                TraceKey::Interface => t.interfaces.iter().any(|i| i.as_str() == id),
                TraceKey::Test => t.tests.iter().any(|x| x == id),
                TraceKey::Code => t.code.as_ref().is_some_and(|c| c == id),
            })
            .collect()
    }

    pub fn export(&self) -> Vec<u8> {
        let file = TraceFile {
            format: Self::FORMAT.to_owned(),
            version: Self::VERSION,
            tuples: self.tuples.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file).expect("trace file serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn import(bytes: &[u8]) -> Result<Self, TraceError> {
        // The header is checked first so a newer file fails on its version, not its shape.
        #[derive(Deserialize)]
        struct Header {
            format: Option<String>,
            version: Option<serde_json::Value>,
        }
        let header: Header = serde_json::from_slice(bytes).map_err(|e| TraceError::Corrupt(e.to_string()))?;
        if header.format.as_deref() != Some(Self::FORMAT) {
            return Err(TraceError::Corrupt(format!("missing \"format\": \"{}\" tag", Self::FORMAT)));
        }
        let version = header
            .version
            .and_then(|v| v.as_u64())
            .ok_or_else(|| TraceError::Corrupt("missing numeric \"version\"".into()))?;
        if version > Self::VERSION {
            return Err(TraceError::UnsupportedVersion(version));
        }
        let file: TraceFile = serde_json::from_slice(bytes).map_err(|e| TraceError::Corrupt(e.to_string()))?;
        Ok(Self::from_tuples(file.tuples))
    }
}

impl fmt::Display for TraceTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |items: Vec<&str>| if items.is_empty() { "-".to_owned() } else { items.join(",") };
        write!(
            f,
            "{} {} | interfaces: {} | tests: {} | code: {}",
            match self.requirement.kind {
                RequirementKind::Node => "node",
                RequirementKind::Scenario => "scenario",
            },
            self.requirement.id,
            join(self.interfaces.iter().map(|i| i.as_str()).collect()),
            join(self.tests.iter().map(|t| t.as_str()).collect()),
            self.code.as_ref().map_or("-", |c| c.as_str()),
        )
    }
}

/// Cross-checks the store against the realized system.
pub fn check_consistency(
    store: &TraceStore,
    system: &SystemState,
    graph: &ReqGraph,
    states: &BTreeMap<Identifier, NodeState>,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let has_node_tuple = |id: &str| {
        store
            .query(TraceKey::Requirement, id)
            .iter()
            .any(|t| t.requirement.kind == RequirementKind::Node)
    };
    for node_id in graph.node_ids() {
        if states.get(node_id) != Some(&NodeState::Done) {
            continue;
        }
        if !has_node_tuple(node_id.as_str()) {
            findings.push(Finding::new(
                codes::UNTRACED_NODE,
                node_id.as_str(),
                format!("node {node_id} is done but has no trace tuple"),
            ));
        }
        let view = graph.node(node_id.as_str()).expect("node ids come from the graph");
        if view.is_management() {
            continue;
        }
        for scenario in view.scenarios.iter().map(|s| &s.id) {
            let traced = store
                .query(TraceKey::Requirement, scenario.as_str())
                .iter()
                .any(|t| t.requirement.kind == RequirementKind::Scenario);
            if !traced {
                findings.push(Finding::new(
                    codes::UNTRACED_SCENARIO,
                    scenario.as_str(),
                    format!("scenario {scenario} of done node {node_id} has no trace tuple"),
                ));
            }
        }
    }
    for entry in system.interfaces.entries() {
        let id = entry.signature.id();
        if store.query(TraceKey::Interface, id.as_str()).is_empty() {
            findings.push(Finding::new(
                codes::ORPHAN_INTERFACE,
                id.as_str(),
                format!("interface {id} appears in no trace tuple"),
            ));
        }
    }
    for case in system.cases() {
        if store.query(TraceKey::Test, case.id.as_str()).is_empty() {
            findings.push(Finding::new(
                codes::ORPHAN_TEST,
                case.id.as_str(),
                format!("test {} appears in no trace tuple", case.id),
            ));
        }
    }
    for (interface, code) in &system.impl_edges {
        let matched = store
            .query(TraceKey::Code, code.as_str())
            .iter()
            .any(|t| t.interfaces.contains(interface));
        if !matched {
            findings.push(Finding::new(
                codes::UNMATCHED_IMPL_EDGE,
                code.as_str(),
                format!("implementation edge {interface} -> {code} matches no trace tuple"),
            ));
        }
    }
    for (code, test) in &system.ver_edges {
        let matched = store.query(TraceKey::Code, code.as_str()).iter().any(|t| t.tests.contains(test));
        if !matched {
            findings.push(Finding::new(
                codes::UNMATCHED_VER_EDGE,
                code.as_str(),
                format!("verification edge {code} -> {test} matches no trace tuple"),
            ));
        }
    }
    findings
}
