//! The realized system tuple: interfaces, tests, code, and the edges between them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dsl::Identifier;
use crate::interface::{CallGraph, InterfaceId, InterfaceRegistry};
use crate::verification::{TestCase, TestOutcome, TestSuite};

/// A file produced by the agent, relative to the workspace root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub content: String,
}

/// The kept implementation of one requirement node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeArtifact {
    pub id: Identifier,
    pub node_id: Identifier,
    pub files: Vec<SourceFile>,
    /// GenCode attempts spent on this artifact.
    pub attempts: u32,
    pub passed: bool,
}

impl CodeArtifact {
    pub fn id_for(node_id: &Identifier) -> Identifier {
        Identifier::new(format!("code-{node_id}")).expect("prefixing keeps an identifier valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SystemError {
    #[error("DUPLICATE_TEST: test case {0} is already registered")]
    DuplicateTest(Identifier),
    #[error("DUPLICATE_CODE: code artifact {0} is already registered")]
    DuplicateCode(Identifier),
    #[error("DANGLING_REFERENCE: {0}")]
    Dangling(String),
}

/// Cardinalities of every component, used to check monotone growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSizes {
    pub interfaces: usize,
    pub tests: usize,
    pub code: usize,
    pub call_edges: usize,
    pub impl_edges: usize,
    pub ver_edges: usize,
}

impl SystemSizes {
    /// True when no component shrank going from `self` to `later`.
    pub fn le(&self, later: &SystemSizes) -> bool {
        self.interfaces <= later.interfaces
            && self.tests <= later.tests
            && self.code <= later.code
            && self.call_edges <= later.call_edges
            && self.impl_edges <= later.impl_edges
            && self.ver_edges <= later.ver_edges
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub interfaces: InterfaceRegistry,
    /// One suite per node that went through interface synthesis.
    pub tests: BTreeMap<Identifier, TestSuite>,
    pub code: BTreeMap<Identifier, CodeArtifact>,
    pub call_edges: CallGraph,
    /// (interface, code artifact)
    pub impl_edges: BTreeSet<(InterfaceId, Identifier)>,
    /// (code artifact, test case)
    pub ver_edges: BTreeSet<(Identifier, Identifier)>,
    /// Most recent outcome of every executed test case.
    #[serde(default)]
    pub outcomes: BTreeMap<Identifier, TestOutcome>,
}

impl SystemState {
    pub fn sizes(&self) -> SystemSizes {
        SystemSizes {
            interfaces: self.interfaces.len(),
            tests: self.test_count(),
            code: self.code.len(),
            call_edges: self.call_edges.len(),
            impl_edges: self.impl_edges.len(),
            ver_edges: self.ver_edges.len(),
        }
    }

    pub fn test_count(&self) -> usize {
        self.tests.values().map(|s| s.cases.len()).sum()
    }

    pub fn cases(&self) -> impl Iterator<Item = &TestCase> {
        self.tests.values().flat_map(|s| s.cases.iter())
    }

    pub fn find_case(&self, id: &str) -> Option<&TestCase> {
        self.cases().find(|c| c.id == id)
    }

    pub fn has_case(&self, id: &str) -> bool {
        self.find_case(id).is_some()
    }

    /// Adds a node's suite, rejecting test ids that are already taken.
    pub fn register_suite(&mut self, node_id: &Identifier, suite: TestSuite) -> Result<(), SystemError> {
        let mut seen = BTreeSet::new();
        for case in &suite.cases {
            if self.has_case(case.id.as_str()) || !seen.insert(&case.id) {
                return Err(SystemError::DuplicateTest(case.id.clone()));
            }
        }
        self.tests.insert(node_id.clone(), suite);
        Ok(())
    }

    pub fn register_code(&mut self, artifact: CodeArtifact) -> Result<(), SystemError> {
        if self.code.contains_key(&artifact.id) {
            return Err(SystemError::DuplicateCode(artifact.id));
        }
        self.code.insert(artifact.id.clone(), artifact);
        Ok(())
    }

    pub fn add_impl_edge(&mut self, interface: InterfaceId, code: Identifier) -> Result<(), SystemError> {
        if !self.interfaces.contains(&interface) {
            return Err(SystemError::Dangling(format!("interface {interface}")));
        }
        if !self.code.contains_key(&code) {
            return Err(SystemError::Dangling(format!("code artifact {code}")));
        }
        self.impl_edges.insert((interface, code));
        Ok(())
    }

    pub fn add_ver_edge(&mut self, code: Identifier, test: Identifier) -> Result<(), SystemError> {
        if !self.code.contains_key(&code) {
            return Err(SystemError::Dangling(format!("code artifact {code}")));
        }
        if !self.has_case(test.as_str()) {
            return Err(SystemError::Dangling(format!("test case {test}")));
        }
        self.ver_edges.insert((code, test));
        Ok(())
    }

    /// The code artifact that currently owns `path`, if any.
    pub fn path_owner(&self, path: &str) -> Option<&CodeArtifact> {
        self.code.values().find(|c| c.files.iter().any(|f| f.path == path))
    }
}
