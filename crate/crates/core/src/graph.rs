//! The requirement graph: the child tree plus the dependency and
//! prerequisite edge families, and the compile schedule derived from it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsl::{self, codes, Identifier, MultiModalText, Node, RequirementDoc, Scenario};
use crate::finding::Finding;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("{code}: {}", render_path(witness))]
    Cycle { code: &'static str, witness: Vec<Identifier> },
    #[error("UNKNOWN_NODE: {0}")]
    UnknownNode(String),
    #[error("document is not valid: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidDocument(Vec<Finding>),
}

impl GraphError {
    pub fn code(&self) -> &'static str {
        match self {
            GraphError::Cycle { code, .. } => code,
            GraphError::UnknownNode(_) => "UNKNOWN_NODE",
            GraphError::InvalidDocument(_) => "INVALID_DOCUMENT",
        }
    }
}

fn render_path(ids: &[Identifier]) -> String {
    ids.iter().map(Identifier::as_str).collect::<Vec<_>>().join(" -> ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Unprocessed,
    Working,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal node state transition {from:?} -> {to:?}")]
pub struct IllegalTransition {
    pub from: NodeState,
    pub to: NodeState,
}

impl NodeState {
    /// Unprocessed -> Working -> Done; anything else is rejected.
    pub fn advance(self, to: NodeState) -> Result<NodeState, IllegalTransition> {
        match (self, to) {
            (NodeState::Unprocessed, NodeState::Working) | (NodeState::Working, NodeState::Done) => Ok(to),
            (from, to) => Err(IllegalTransition { from, to }),
        }
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeState::Unprocessed => "unprocessed",
            NodeState::Working => "working",
            NodeState::Done => "done",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Interface and test synthesis.
    Red,
    /// Budgeted implementation.
    Green,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub node_id: Identifier,
    pub phase: Phase,
}

impl ScheduleEntry {
    pub fn red(node_id: Identifier) -> Self {
        Self { node_id, phase: Phase::Red }
    }

    pub fn green(node_id: Identifier) -> Self {
        Self { node_id, phase: Phase::Green }
    }
}

impl fmt::Display for ScheduleEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.phase {
            Phase::Red => write!(f, "RED {}", self.node_id),
            Phase::Green => write!(f, "GREEN {}", self.node_id),
        }
    }
}

/// One line per entry, `RED <id>` / `GREEN <id>`.
pub fn format_schedule(schedule: &[ScheduleEntry]) -> String {
    schedule.iter().map(|e| format!("{e}\n")).collect()
}

/// A node without its subtree; children are referenced by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: Identifier,
    pub name: String,
    pub description: MultiModalText,
    pub dependencies: Vec<Identifier>,
    pub scenarios: Vec<Scenario>,
    pub children: Vec<Identifier>,
}

impl NodeView {
    fn of(node: &Node) -> Self {
        Self {
            id: node.id.clone(),
            name: node.name.clone(),
            description: node.description.clone(),
            dependencies: node.dependencies.clone(),
            scenarios: node.scenarios.clone(),
            children: node.children.iter().map(|c| c.id.clone()).collect(),
        }
    }

    pub fn is_management(&self) -> bool {
        self.scenarios.is_empty() && self.description.is_blank()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The dependency (edge source).
    pub from: Identifier,
    /// The dependent node (edge target).
    pub to: Identifier,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dependency edge {} -> {}: {} is implemented before {}",
            self.from, self.to, self.to, self.from
        )
    }
}

/// Immutable index over a validated document.
#[derive(Debug, Clone)]
pub struct ReqGraph {
    root: Identifier,
    order: Vec<Identifier>,
    nodes: HashMap<Identifier, NodeView>,
    parent: HashMap<Identifier, Identifier>,
    scenario_owner: BTreeMap<Identifier, Identifier>,
    dependency_edges: Vec<(Identifier, Identifier)>,
    prerequisite_edges: Vec<(Identifier, Identifier)>,
}

pub fn build_graph(doc: &RequirementDoc) -> Result<ReqGraph, GraphError> {
    let structural: Vec<Finding> = dsl::validate_document(doc)
        .errors
        .into_iter()
        .filter(|f| f.code != codes::CYCLE_IN_DEPENDENCIES && f.code != codes::CYCLE_IN_PREREQUISITES)
        .collect();
    if !structural.is_empty() {
        return Err(GraphError::InvalidDocument(structural));
    }
    if let Some(witness) = dependency_cycle(&doc.root) {
        return Err(GraphError::Cycle {
            code: codes::CYCLE_IN_DEPENDENCIES,
            witness,
        });
    }
    if let Some(witness) = prerequisite_cycle(&doc.root) {
        return Err(GraphError::Cycle {
            code: codes::CYCLE_IN_PREREQUISITES,
            witness,
        });
    }

    let mut graph = ReqGraph {
        root: doc.root.id.clone(),
        order: Vec::new(),
        nodes: HashMap::new(),
        parent: HashMap::new(),
        scenario_owner: BTreeMap::new(),
        dependency_edges: Vec::new(),
        prerequisite_edges: Vec::new(),
    };
    for node in doc.nodes() {
        graph.order.push(node.id.clone());
        graph.nodes.insert(node.id.clone(), NodeView::of(node));
        for child in &node.children {
            graph.parent.insert(child.id.clone(), node.id.clone());
        }
        for dep in &node.dependencies {
            graph.dependency_edges.push((dep.clone(), node.id.clone()));
        }
        for scenario in &node.scenarios {
            graph.scenario_owner.insert(scenario.id.clone(), node.id.clone());
            for prereq in &scenario.prerequisites {
                graph.prerequisite_edges.push((prereq.clone(), scenario.id.clone()));
            }
        }
    }
    Ok(graph)
}

impl ReqGraph {
    pub fn root(&self) -> &Identifier {
        &self.root
    }

    /// Node ids in document (pre-)order.
    pub fn node_ids(&self) -> &[Identifier] {
        &self.order
    }

    pub fn node(&self, id: &str) -> Option<&NodeView> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn children(&self, id: &str) -> &[Identifier] {
        self.nodes.get(id).map(|n| n.children.as_slice()).unwrap_or(&[])
    }

    pub fn parent(&self, id: &str) -> Option<&Identifier> {
        self.parent.get(id)
    }

    /// `(parent, child)` pairs in document order.
    pub fn child_edges(&self) -> Vec<(Identifier, Identifier)> {
        self.order
            .iter()
            .flat_map(|p| self.children(p.as_str()).iter().map(move |c| (p.clone(), c.clone())))
            .collect()
    }

    /// `(dependency, dependent)` pairs.
    pub fn dependency_edges(&self) -> &[(Identifier, Identifier)] {
        &self.dependency_edges
    }

    /// `(prerequisite, scenario)` pairs.
    pub fn prerequisite_edges(&self) -> &[(Identifier, Identifier)] {
        &self.prerequisite_edges
    }

    pub fn scenario_owner(&self, scenario: &str) -> Option<&Identifier> {
        self.scenario_owner.get(scenario)
    }

    pub fn scenario(&self, scenario: &str) -> Option<&Scenario> {
        let owner = self.scenario_owner.get(scenario)?;
        self.nodes[owner].scenarios.iter().find(|s| s.id == scenario)
    }

    /// All scenario ids, in document order.
    pub fn scenario_ids(&self) -> Vec<Identifier> {
        self.order
            .iter()
            .flat_map(|n| self.nodes[n].scenarios.iter().map(|s| s.id.clone()))
            .collect()
    }

    /// Parent chain from the immediate parent up to the root.
    pub fn get_ancestors(&self, node_id: &str) -> Result<Vec<Identifier>, GraphError> {
        if !self.nodes.contains_key(node_id) {
            return Err(GraphError::UnknownNode(node_id.to_owned()));
        }
        let mut out = Vec::new();
        let mut cursor = node_id;
        while let Some(parent) = self.parent.get(cursor) {
            out.push(parent.clone());
            cursor = parent.as_str();
        }
        Ok(out)
    }

    pub fn depth(&self, node_id: &str) -> Option<usize> {
        self.get_ancestors(node_id).ok().map(|a| a.len())
    }

    /// The mission order of the depth-first driver: `Red` on entry, children
    /// in document order, `Green` on exit.
    pub fn plan_schedule(&self) -> Vec<ScheduleEntry> {
        let mut out = Vec::with_capacity(self.order.len() * 2);
        // Explicit stack so very deep trees do not exhaust the call stack.
        enum Visit<'a> {
            Enter(&'a Identifier),
            Exit(&'a Identifier),
        }
        let mut stack = vec![Visit::Enter(&self.root)];
        while let Some(visit) = stack.pop() {
            match visit {
                Visit::Enter(id) => {
                    out.push(ScheduleEntry::red(id.clone()));
                    stack.push(Visit::Exit(id));
                    for child in self.children(id.as_str()).iter().rev() {
                        stack.push(Visit::Enter(child));
                    }
                }
                Visit::Exit(id) => out.push(ScheduleEntry::green(id.clone())),
            }
        }
        out
    }

    /// Dependency edges `u -> v` whose dependent `v` is implemented before `u`.
    pub fn dependency_order_check(&self, schedule: &[ScheduleEntry]) -> Vec<Violation> {
        let green_at: HashMap<&Identifier, usize> = schedule
            .iter()
            .enumerate()
            .filter(|(_, e)| e.phase == Phase::Green)
            .map(|(i, e)| (&e.node_id, i))
            .collect();
        self.dependency_edges
            .iter()
            .filter(|(u, v)| match (green_at.get(u), green_at.get(v)) {
                (Some(gu), Some(gv)) => gv < gu,
                _ => false,
            })
            .map(|(u, v)| Violation {
                from: u.clone(),
                to: v.clone(),
            })
            .collect()
    }
}

/// First cycle along `depends-on` links, as `[a, b, ..., a]`.
pub(crate) fn dependency_cycle(root: &Node) -> Option<Vec<Identifier>> {
    let nodes = root.walk();
    let order: Vec<&Identifier> = nodes.iter().map(|n| &n.id).collect();
    let adjacency: HashMap<&Identifier, Vec<&Identifier>> =
        nodes.iter().map(|n| (&n.id, n.dependencies.iter().collect())).collect();
    find_cycle(&order, &adjacency)
}

/// First cycle along `prerequisite` links, as `[a, b, ..., a]`.
pub(crate) fn prerequisite_cycle(root: &Node) -> Option<Vec<Identifier>> {
    let scenarios: Vec<&Scenario> = root.walk().into_iter().flat_map(|n| n.scenarios.iter()).collect();
    let order: Vec<&Identifier> = scenarios.iter().map(|s| &s.id).collect();
    let adjacency: HashMap<&Identifier, Vec<&Identifier>> =
        scenarios.iter().map(|s| (&s.id, s.prerequisites.iter().collect())).collect();
    find_cycle(&order, &adjacency)
}

/// Iterative three-colour DFS. Edges to unknown vertices are ignored.
fn find_cycle<'a>(
    order: &[&'a Identifier],
    adjacency: &HashMap<&'a Identifier, Vec<&'a Identifier>>,
) -> Option<Vec<Identifier>> {
    let mut finished: HashSet<&Identifier> = HashSet::new();
    for &start in order {
        if finished.contains(start) {
            continue;
        }
        // (vertex, next edge index); `path` mirrors the grey vertices.
        let mut stack: Vec<(&Identifier, usize)> = vec![(start, 0)];
        let mut on_path: HashSet<&Identifier> = HashSet::from([start]);
        while let Some((vertex, edge)) = stack.last_mut() {
            let vertex = *vertex;
            let next = adjacency.get(vertex).and_then(|succ| succ.get(*edge)).copied();
            *edge += 1;
            match next {
                Some(succ) if on_path.contains(succ) => {
                    let from = stack.iter().position(|(v, _)| *v == succ).expect("grey vertex on stack");
                    let mut witness: Vec<Identifier> = stack[from..].iter().map(|(v, _)| (*v).clone()).collect();
                    witness.push(succ.clone());
                    return Some(witness);
                }
                Some(succ) if !finished.contains(succ) && adjacency.contains_key(succ) => {
                    on_path.insert(succ);
                    stack.push((succ, 0));
                }
                Some(_) => {}
                None => {
                    on_path.remove(vertex);
                    finished.insert(vertex);
                    stack.pop();
                }
            }
        }
    }
    None
}
