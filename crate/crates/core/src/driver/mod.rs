//! The compile driver.
//!
//! [`compile`] walks the requirement tree depth first. On entry to a node it
//! synthesizes the node's interfaces and test suite (top-down, with ancestor
//! interfaces offered for adaptation); after all children are done it runs the
//! budgeted GenCode / ExecuteTest loop (bottom-up). Every artifact lands in
//! the workspace, and the session is checkpointed at each node boundary.

mod checkpoint;
mod metrics;
mod workspace;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{
    AgentBackend, AgentError, AgentRequest, AgentResponse, Budget, Gateway, ImageCaption, PromptSet, RequestContext,
    RequestKind, RequirementBrief, TestScript, Transcript,
};
use crate::dsl::{serialize_document, validate_document, Identifier, RequirementDoc};
use crate::finding::Finding;
use crate::graph::{build_graph, GraphError, NodeState, Phase, ReqGraph};
use crate::interface::{
    check_signature, CallGraph, InterfaceId, InterfaceSig, InterfacesDocument, RegisteredInterface,
};
use crate::system::{CodeArtifact, SourceFile, SystemError, SystemState};
use crate::trace::{RequirementRef, SessionEndpoints, TraceError, TraceStore, TraceTuple};
use crate::verification::{
    check_case, derive_test_skeletons, execute_suite, pass_rate, PassRate, RunnerUnavailable, TestCase, TestOutcome,
    TestRunner, TestSuite,
};

pub use checkpoint::Checkpoint;
pub use metrics::{alignment_metric, implementation_error_count, MissingOutcome};
pub use workspace::{
    node_artifact_digest, normalized_snapshot, Workspace, WorkspaceLock, CHECKPOINT_FILE, INTERFACES_FILE, LOCK_FILE, RESULTS_DIR,
    SRC_DIR, TESTS_DIR, TRACE_FILE, TRACE_JOURNAL, TRANSCRIPT_FILE,
};

pub mod codes {
    pub const REJECTED_SIGNATURE: &str = "REJECTED_SIGNATURE";
    pub const REJECTED_ARTIFACT: &str = "REJECTED_ARTIFACT";
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("document does not validate: {}", join_findings(.0))]
    InvalidDocument(Vec<Finding>),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{node}: {source}")]
    Agent {
        node: Identifier,
        #[source]
        source: AgentError,
    },
    #[error("{code}: {kind} reply for {node} still invalid after a re-ask: {}", .findings.join("; "))]
    Rejected {
        code: &'static str,
        node: Identifier,
        kind: RequestKind,
        findings: Vec<String>,
    },
    #[error("{node}: {source}")]
    Runner {
        node: Identifier,
        #[source]
        source: RunnerUnavailable,
    },
    #[error("IO: {path}: {message}")]
    Io { path: String, message: String },
    #[error("LOCKED: workspace is in use ({0} exists; remove it if no compile is running)")]
    Locked(String),
    #[error("HALTED: stopped as requested after {done} completed nodes")]
    Halted { done: usize },
    #[error("CHECKPOINT: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    System(#[from] SystemError),
}

fn join_findings(findings: &[Finding]) -> String {
    findings.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl CompileError {
    pub fn code(&self) -> &'static str {
        match self {
            CompileError::InvalidDocument(_) => "INVALID_DOCUMENT",
            CompileError::Graph(e) => e.code(),
            CompileError::Agent { source, .. } => source.code(),
            CompileError::Rejected { code, .. } => code,
            CompileError::Runner { .. } => "RUNNER_UNAVAILABLE",
            CompileError::Io { .. } => "IO",
            CompileError::Locked(_) => "LOCKED",
            CompileError::Halted { .. } => "HALTED",
            CompileError::Checkpoint(_) => "CHECKPOINT",
            CompileError::Trace(TraceError::Dangling(_)) => "DANGLING_REFERENCE",
            CompileError::Trace(_) => "TRACE",
            CompileError::System(_) => "SYSTEM",
        }
    }
}

/// Where to stop a run early; used to exercise checkpoint/resume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltPoint {
    /// After this many nodes reached Done in this run.
    AfterDone(usize),
    /// After this many agent invocations in this run, possibly mid-node.
    AfterInvokes(usize),
}

#[derive(Debug, Clone)]
pub struct CompileConfig {
    pub workspace: PathBuf,
    pub budget: Budget,
    /// Continue from `checkpoint.json` when present.
    pub resume: bool,
    pub halt: Option<HaltPoint>,
    pub prompts: PromptSet,
}

impl CompileConfig {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        Self {
            workspace: workspace.into(),
            budget: Budget::default(),
            resume: false,
            halt: None,
            prompts: PromptSet::default(),
        }
    }
}

/// Progress notifications, in the order things happen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum CompileEvent {
    Started {
        nodes: usize,
        resumed: bool,
    },
    State {
        node: Identifier,
        state: NodeState,
    },
    /// A Red (synthesis) or Green (implementation) mission begins.
    Mission {
        node: Identifier,
        phase: Phase,
    },
    Attempt {
        node: Identifier,
        attempt: u32,
        budget_remaining: u32,
    },
    Outcome {
        node: Identifier,
        case_id: Identifier,
        passed: bool,
        feedback: String,
    },
    NodeDone {
        node: Identifier,
        /// None for fast-tracked management nodes.
        passed: Option<bool>,
        attempts: u32,
    },
    Finished {
        summary: CompileSummary,
    },
    Failed {
        code: String,
        message: String,
    },
}

pub trait CompileObserver {
    fn on_event(&mut self, event: &CompileEvent, system: &SystemState);
}

impl<F: FnMut(&CompileEvent, &SystemState)> CompileObserver for F {
    fn on_event(&mut self, event: &CompileEvent, system: &SystemState) {
        self(event, system)
    }
}

pub struct NoopObserver;

impl CompileObserver for NoopObserver {
    fn on_event(&mut self, _: &CompileEvent, _: &SystemState) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileSummary {
    pub all_done: bool,
    pub nodes: usize,
    pub interfaces: usize,
    pub tests: usize,
    pub code_artifacts: usize,
    pub pass_rate: Option<PassRate>,
    pub alignment: f64,
    pub error_count: usize,
    pub transcript_len: usize,
}

impl CompileSummary {
    pub fn compute(
        graph: &ReqGraph,
        states: &BTreeMap<Identifier, NodeState>,
        system: &SystemState,
        transcript_len: usize,
    ) -> Self {
        let outcomes: Vec<TestOutcome> = system.outcomes.values().cloned().collect();
        // Edges without an outcome cannot occur after a completed run; count them as failures otherwise.
        let error_count = system
            .ver_edges
            .iter()
            .filter(|(_, t)| !system.outcomes.get(t).is_some_and(|o| o.passed))
            .count();
        Self {
            all_done: states.values().all(|s| *s == NodeState::Done),
            nodes: graph.len(),
            interfaces: system.interfaces.len(),
            tests: system.test_count(),
            code_artifacts: system.code.len(),
            pass_rate: pass_rate(&outcomes).ok(),
            alignment: alignment_metric(system, graph),
            error_count,
            transcript_len,
        }
    }
}

#[derive(Debug)]
pub struct CompileReport {
    pub states: BTreeMap<Identifier, NodeState>,
    pub system: SystemState,
    pub trace: TraceStore,
    pub summary: CompileSummary,
}

/// Compiles `doc` into `config.workspace`.
pub fn compile(
    doc: &RequirementDoc,
    backend: Box<dyn AgentBackend>,
    runner: &dyn TestRunner,
    config: &CompileConfig,
    observer: &mut dyn CompileObserver,
) -> Result<CompileReport, CompileError> {
    let report = validate_document(doc);
    if !report.errors.is_empty() {
        return Err(CompileError::InvalidDocument(report.errors));
    }
    let graph = build_graph(doc)?;
    let ws = Workspace::new(&config.workspace);
    ws.ensure()?;
    let _lock = ws.acquire_lock()?;
    let doc_hash = workspace::sha256_hex(serialize_document(doc).as_bytes());

    let checkpoint = if config.resume { Checkpoint::load(&ws)? } else { None };
    let resumed = checkpoint.is_some();
    let mut session = match checkpoint {
        Some(cp) => {
            if cp.document_sha256 != doc_hash {
                return Err(CompileError::Checkpoint(
                    "the document changed since the checkpoint was written; compile without --resume".into(),
                ));
            }
            ws.prune(&cp.system)?;
            let transcript = Transcript::resume(ws.path(TRANSCRIPT_FILE), cp.transcript_len)
                .map_err(|e| CompileError::Checkpoint(e.to_string()))?;
            // Re-journal the checkpointed tuples so the journal covers the whole run.
            ws.remove(TRACE_JOURNAL)?;
            let mut trace = TraceStore::new();
            trace.attach_journal(ws.path(TRACE_JOURNAL))?;
            for tuple in cp.trace {
                trace.record(tuple, &AcceptAll)?;
            }
            let gateway = Gateway::new(backend, config.prompts.clone(), transcript);
            Session {
                states: cp.states,
                synthesized: cp.synthesized,
                captions: cp.captions,
                system: cp.system,
                ..Session::new(&graph, doc, &ws, runner, observer, config, doc_hash, gateway, trace)
            }
        }
        None => {
            ws.clean()?;
            let transcript = Transcript::create(ws.path(TRANSCRIPT_FILE)).map_err(|e| CompileError::Io {
                path: ws.path(TRANSCRIPT_FILE).display().to_string(),
                message: e.to_string(),
            })?;
            let mut trace = TraceStore::new();
            trace.attach_journal(ws.path(TRACE_JOURNAL))?;
            let gateway = Gateway::new(backend, config.prompts.clone(), transcript);
            Session::new(&graph, doc, &ws, runner, observer, config, doc_hash, gateway, trace)
        }
    };

    session.emit(CompileEvent::Started {
        nodes: graph.len(),
        resumed,
    });
    let root = graph.root().clone();
    let result = session.compile_node(&root);
    session.persist_outputs()?;
    match result {
        Ok(()) => {
            let summary = CompileSummary::compute(&graph, &session.states, &session.system, session.gateway.transcript().len());
            session.emit(CompileEvent::Finished {
                summary: summary.clone(),
            });
            Ok(CompileReport {
                states: session.states,
                system: session.system,
                trace: session.trace,
                summary,
            })
        }
        Err(e) => {
            session.emit(CompileEvent::Failed {
                code: e.code().to_owned(),
                message: e.to_string(),
            });
            Err(e)
        }
    }
}

struct AcceptAll;

impl crate::trace::TraceEndpoints for AcceptAll {
    fn has_requirement(&self, _: &RequirementRef) -> bool {
        true
    }
    fn has_interface(&self, _: &InterfaceId) -> bool {
        true
    }
    fn has_test(&self, _: &Identifier) -> bool {
        true
    }
    fn has_code(&self, _: &Identifier) -> bool {
        true
    }
}

struct Session<'a> {
    graph: &'a ReqGraph,
    doc_dir: PathBuf,
    doc_hash: String,
    ws: &'a Workspace,
    runner: &'a dyn TestRunner,
    observer: &'a mut dyn CompileObserver,
    budget: Budget,
    halt: Option<HaltPoint>,
    states: BTreeMap<Identifier, NodeState>,
    synthesized: BTreeSet<Identifier>,
    captions: BTreeMap<Identifier, Vec<ImageCaption>>,
    system: SystemState,
    trace: TraceStore,
    gateway: Gateway,
    invokes: usize,
    done: usize,
}

/// Interfaces and suite produced for one node by synthesis.
struct Design {
    interfaces: Vec<InterfaceId>,
    suite: TestSuite,
}

impl<'a> Session<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        graph: &'a ReqGraph,
        doc: &RequirementDoc,
        ws: &'a Workspace,
        runner: &'a dyn TestRunner,
        observer: &'a mut dyn CompileObserver,
        config: &CompileConfig,
        doc_hash: String,
        gateway: Gateway,
        trace: TraceStore,
    ) -> Self {
        let doc_dir = doc
            .source_path
            .as_deref()
            .and_then(|p| Path::new(p).parent().map(Path::to_path_buf))
            .unwrap_or_default();
        Self {
            graph,
            doc_dir,
            doc_hash,
            ws,
            runner,
            observer,
            budget: config.budget,
            halt: config.halt,
            states: graph.node_ids().iter().map(|id| (id.clone(), NodeState::Unprocessed)).collect(),
            synthesized: BTreeSet::new(),
            captions: BTreeMap::new(),
            system: SystemState::default(),
            trace,
            gateway,
            invokes: 0,
            done: 0,
        }
    }

    fn emit(&mut self, event: CompileEvent) {
        self.observer.on_event(&event, &self.system);
    }

    fn set_state(&mut self, node: &Identifier, to: NodeState) {
        let from = self.states[node];
        let next = from.advance(to).expect("the driver only makes legal transitions");
        self.states.insert(node.clone(), next);
        self.emit(CompileEvent::State {
            node: node.clone(),
            state: next,
        });
    }

    fn invoke(&mut self, request: &AgentRequest) -> Result<AgentResponse, CompileError> {
        let result = self.gateway.invoke(request);
        self.invokes += 1;
        let response = result.map_err(|source| CompileError::Agent {
            node: request.node_id.clone(),
            source,
        })?;
        if self.halt == Some(HaltPoint::AfterInvokes(self.invokes)) {
            return Err(CompileError::Halted { done: self.done });
        }
        Ok(response)
    }

    /// Sends `request`, re-asking once with the problems listed when the
    /// reply fails `check`.
    fn ask<T>(
        &mut self,
        mut request: AgentRequest,
        reask_attempt: u32,
        code: &'static str,
        check: impl Fn(&Self, AgentResponse) -> Result<T, Vec<String>>,
    ) -> Result<T, CompileError> {
        let response = self.invoke(&request)?;
        let findings = match check(self, response) {
            Ok(value) => return Ok(value),
            Err(findings) => findings,
        };
        request.attempt = reask_attempt;
        request.review = findings;
        let response = self.invoke(&request)?;
        check(self, response).map_err(|findings| CompileError::Rejected {
            code,
            node: request.node_id.clone(),
            kind: request.kind(),
            findings,
        })
    }

    fn brief(&self, node: &Identifier) -> RequirementBrief {
        let view = self.graph.node(node.as_str()).expect("node ids come from the graph");
        RequirementBrief {
            id: view.id.clone(),
            name: view.name.clone(),
            description: view.description.render(),
            image_captions: self.captions.get(node).cloned().unwrap_or_default(),
            scenarios: view.scenarios.clone(),
            dependencies: view.dependencies.clone(),
            parent: self.graph.parent(node.as_str()).cloned(),
        }
    }

    fn signatures(&self, ids: &[InterfaceId]) -> Vec<InterfaceSig> {
        ids.iter()
            .filter_map(|id| self.system.interfaces.get(id.as_str()))
            .map(|e| e.signature.clone())
            .collect()
    }

    fn owned_interfaces(&self, node: &Identifier) -> Vec<InterfaceId> {
        self.system
            .interfaces
            .entries()
            .iter()
            .filter(|e| e.owner == node.as_str())
            .map(|e| e.signature.id().clone())
            .collect()
    }

    fn compile_node(&mut self, node: &Identifier) -> Result<(), CompileError> {
        if self.states[node] == NodeState::Unprocessed {
            self.set_state(node, NodeState::Working);
        }
        let management = self.graph.node(node.as_str()).expect("known node").is_management();
        let design = if self.synthesized.contains(node) {
            Design {
                interfaces: self.owned_interfaces(node),
                suite: self.system.tests.get(node).cloned().unwrap_or_default(),
            }
        } else {
            self.emit(CompileEvent::Mission {
                node: node.clone(),
                phase: Phase::Red,
            });
            let design = if management {
                Design {
                    interfaces: Vec::new(),
                    suite: TestSuite::new(node.clone(), Vec::new()),
                }
            } else {
                self.synthesize_interface(node)?
            };
            self.synthesized.insert(node.clone());
            design
        };

        for child in self.graph.children(node.as_str()).to_vec() {
            match self.states[&child] {
                NodeState::Done => {}
                NodeState::Unprocessed | NodeState::Working => self.compile_node(&child)?,
            }
            let child_interfaces = self.owned_interfaces(&child);
            self.system
                .call_edges
                .add_call_edges(&self.system.interfaces.clone(), &design.interfaces, &child_interfaces)
                .expect("both ends are registered interfaces");
        }

        self.emit(CompileEvent::Mission {
            node: node.clone(),
            phase: Phase::Green,
        });
        let (passed, attempts) = if management {
            self.trace
                .record(TraceTuple::empty(RequirementRef::node(node.clone())), &SessionEndpoints {
                    graph: self.graph,
                    system: &self.system,
                })?;
            (None, 0)
        } else {
            let artifact = self.generate_implementation(node, &design)?;
            let result = (Some(artifact.passed), artifact.attempts);
            self.commit(node, &design, artifact)?;
            result
        };
        self.set_state(node, NodeState::Done);
        self.done += 1;
        self.emit(CompileEvent::NodeDone {
            node: node.clone(),
            passed,
            attempts,
        });
        self.checkpoint()?;
        if self.halt == Some(HaltPoint::AfterDone(self.done)) {
            return Err(CompileError::Halted { done: self.done });
        }
        Ok(())
    }

    fn synthesize_interface(&mut self, node: &Identifier) -> Result<Design, CompileError> {
        self.caption_images(node)?;
        let brief = self.brief(node);

        let mut ancestors = self.graph.get_ancestors(node.as_str())?;
        ancestors.reverse();
        let ancestor_entries: Vec<RegisteredInterface> = ancestors
            .iter()
            .flat_map(|a| {
                self.system
                    .interfaces
                    .entries()
                    .iter()
                    .filter(move |e| e.owner == a.as_str())
                    .cloned()
            })
            .collect();

        let mut adapted: Vec<RegisteredInterface> = Vec::new();
        let mut reused_tests: Vec<Identifier> = Vec::new();
        for entry in &ancestor_entries {
            let ancestor_id = entry.signature.id().clone();
            let ancestor_tests: Vec<TestCase> = self
                .system
                .cases()
                .filter(|c| c.targets.contains(&ancestor_id))
                .cloned()
                .collect();
            let mut request = AgentRequest::new(
                node.clone(),
                RequestContext::AdaptInterface {
                    requirement: brief.clone(),
                    interface: entry.signature.clone(),
                    ancestor_tests: ancestor_tests.clone(),
                },
            );
            request.subject = Some(ancestor_id.to_string());
            let taken: BTreeSet<InterfaceId> = adapted.iter().map(|e| e.signature.id().clone()).collect();
            let (sig, tests) = self.ask(request, 2, codes::REJECTED_SIGNATURE, |s, response| {
                let AgentResponse::Adapted { interface, reused_tests } = response else {
                    return Err(vec!["expected an adapted reply".into()]);
                };
                let mut problems = Vec::new();
                if let Some(sig) = &interface {
                    problems.extend(check_signature(sig).iter().map(ToString::to_string));
                    if s.system.interfaces.contains(sig.id()) || taken.contains(sig.id()) {
                        problems.push(format!("adapted interface needs a fresh id; {} is taken", sig.id()));
                    }
                }
                for t in &reused_tests {
                    if !ancestor_tests.iter().any(|c| &c.id == t) {
                        problems.push(format!("reused test {t} is not a test of {ancestor_id}"));
                    }
                }
                if problems.is_empty() {
                    Ok((interface, reused_tests))
                } else {
                    Err(problems)
                }
            })?;
            if let Some(sig) = sig {
                adapted.push(RegisteredInterface {
                    owner: node.to_string(),
                    adapted_from: Some(entry.signature.id().clone()),
                    signature: sig,
                });
                for t in tests {
                    if !reused_tests.contains(&t) {
                        reused_tests.push(t);
                    }
                }
            }
        }

        let request = AgentRequest::new(
            node.clone(),
            RequestContext::SynthesizeInterfaces {
                requirement: brief.clone(),
                ancestor_interfaces: ancestor_entries.iter().map(|e| e.signature.clone()).collect(),
                adapted_interfaces: adapted.iter().map(|e| e.signature.clone()).collect(),
            },
        );
        let taken: BTreeSet<InterfaceId> = adapted.iter().map(|e| e.signature.id().clone()).collect();
        let fresh = self.ask(request, 2, codes::REJECTED_SIGNATURE, |s, response| {
            let AgentResponse::Interfaces { interfaces } = response else {
                return Err(vec!["expected an interfaces reply".into()]);
            };
            let mut problems = Vec::new();
            let mut seen = taken.clone();
            for sig in &interfaces {
                problems.extend(check_signature(sig).iter().map(ToString::to_string));
                if s.system.interfaces.contains(sig.id()) || !seen.insert(sig.id().clone()) {
                    problems.push(format!("interface id {} is already taken", sig.id()));
                }
            }
            if problems.is_empty() {
                Ok(interfaces)
            } else {
                Err(problems)
            }
        })?;

        let mut interfaces = Vec::new();
        let registrations = adapted.into_iter().chain(fresh.into_iter().map(|signature| RegisteredInterface {
            owner: node.to_string(),
            adapted_from: None,
            signature,
        }));
        for entry in registrations {
            interfaces.push(entry.signature.id().clone());
            self.system
                .interfaces
                .register(entry)
                .expect("ids were checked to be fresh");
        }
        self.write_interfaces()?;

        let suite = self.generate_test_suite(node, &brief, &interfaces, &reused_tests)?;
        self.system.register_suite(node, suite.clone())?;
        Ok(Design { interfaces, suite })
    }

    fn caption_images(&mut self, node: &Identifier) -> Result<(), CompileError> {
        let view = self.graph.node(node.as_str()).expect("known node");
        let mut paths: Vec<String> = Vec::new();
        for image in view.description.images() {
            if !paths.contains(&image.path) {
                paths.push(image.path.clone());
            }
        }
        let mut captions = Vec::new();
        for path in paths {
            let file = self.doc_dir.join(&path);
            let mut request = AgentRequest::new(
                node.clone(),
                RequestContext::CaptionImage {
                    image_path: path.clone(),
                    image_file: file.is_file().then(|| file.display().to_string()),
                },
            );
            request.subject = Some(path.clone());
            let text = self.ask(request, 2, codes::REJECTED_ARTIFACT, |_, response| match response {
                AgentResponse::Caption { text } => Ok(text),
                _ => Err(vec!["expected a caption reply".into()]),
            })?;
            captions.push(ImageCaption { path, text });
        }
        self.captions.insert(node.clone(), captions);
        Ok(())
    }

    fn generate_test_suite(
        &mut self,
        node: &Identifier,
        brief: &RequirementBrief,
        interfaces: &[InterfaceId],
        reused_tests: &[Identifier],
    ) -> Result<TestSuite, CompileError> {
        let view = self.graph.node(node.as_str()).expect("known node");
        let prerequisites: BTreeSet<&Identifier> = view.scenarios.iter().flat_map(|s| &s.prerequisites).collect();
        let mut ancestor_tests: Vec<TestCase> = Vec::new();
        for id in reused_tests {
            if let Some(case) = self.system.find_case(id.as_str()) {
                ancestor_tests.push(case.clone());
            }
        }
        for case in self.system.cases() {
            let by_prerequisite = case.source_scenario.as_ref().is_some_and(|s| prerequisites.contains(s));
            if by_prerequisite && !ancestor_tests.iter().any(|c| c.id == case.id) {
                ancestor_tests.push(case.clone());
            }
        }
        let sigs = self.signatures(interfaces);
        let mut skeletons: Vec<TestCase> = view
            .scenarios
            .iter()
            .flat_map(|s| derive_test_skeletons(s, &sigs, &ancestor_tests))
            .collect();
        let kinds = |id: &InterfaceId| sigs.iter().find(|s| s.id() == id).map(InterfaceSig::kind);
        let known = |id: &Identifier| self.system.has_case(id.as_str()) || ancestor_tests.iter().any(|c| &c.id == id);
        let problems: Vec<String> = skeletons.iter().flat_map(|c| check_case(c, &kinds, &known)).collect();
        if !problems.is_empty() {
            return Err(CompileError::Rejected {
                code: codes::REJECTED_ARTIFACT,
                node: node.clone(),
                kind: RequestKind::GenerateTestScripts,
                findings: problems,
            });
        }
        if skeletons.is_empty() {
            return Ok(TestSuite::new(node.clone(), skeletons));
        }

        let request = AgentRequest::new(
            node.clone(),
            RequestContext::GenerateTestScripts {
                requirement: brief.clone(),
                interfaces: sigs.clone(),
                skeletons: skeletons.clone(),
            },
        );
        let expected: Vec<Identifier> = skeletons.iter().map(|c| c.id.clone()).collect();
        let scripts = self.ask(request, 2, codes::REJECTED_ARTIFACT, |s, response| {
            let AgentResponse::TestScripts { scripts } = response else {
                return Err(vec!["expected a test_scripts reply".into()]);
            };
            let problems = check_scripts(&s.system, &expected, &scripts);
            if problems.is_empty() {
                Ok(scripts)
            } else {
                Err(problems)
            }
        })?;
        for script in &scripts {
            self.ws.write_script(&script.path, &script.content)?;
        }
        for case in &mut skeletons {
            case.artifact_path = scripts.iter().find(|s| s.case_id == case.id).map(|s| s.path.clone());
        }
        Ok(TestSuite::new(node.clone(), skeletons))
    }

    fn generate_implementation(&mut self, node: &Identifier, design: &Design) -> Result<CodeArtifact, CompileError> {
        let brief = self.brief(node);
        let own: BTreeSet<&InterfaceId> = design.interfaces.iter().collect();
        let dependency_ids: BTreeSet<InterfaceId> = design
            .interfaces
            .iter()
            .flat_map(|i| self.system.call_edges.callees_of(i).cloned())
            .collect();
        let dependencies = self.signatures(&dependency_ids.into_iter().collect::<Vec<_>>());
        let call_graph: Vec<(InterfaceId, InterfaceId)> =
            self.system.call_edges.edges.iter().filter(|(a, _)| own.contains(a)).cloned().collect();
        let trace = self.descendant_trace(node);
        let interfaces = self.signatures(&design.interfaces);
        let code_id = CodeArtifact::id_for(node);

        let mut counter = self.budget.start();
        let mut feedback = String::new();
        let mut passed = false;
        let mut attempt = 0;
        let mut files: Vec<SourceFile> = Vec::new();
        while !passed && counter.spend() {
            attempt += 1;
            self.emit(CompileEvent::Attempt {
                node: node.clone(),
                attempt,
                budget_remaining: counter.remaining(),
            });
            let mut request = AgentRequest::new(
                node.clone(),
                RequestContext::GenerateCode {
                    requirement: brief.clone(),
                    interfaces: interfaces.clone(),
                    dependencies: dependencies.clone(),
                    call_graph: call_graph.clone(),
                    trace: trace.clone(),
                    tests: design.suite.cases.clone(),
                    feedback: feedback.clone(),
                    budget_remaining: counter.remaining(),
                },
            );
            request.attempt = attempt;
            let candidate = self.ask(request, attempt, codes::REJECTED_ARTIFACT, |s, response| {
                let AgentResponse::Code { files } = response else {
                    return Err(vec!["expected a code reply".into()]);
                };
                let problems = check_code_files(&s.system, &code_id, &files);
                if problems.is_empty() {
                    Ok(files)
                } else {
                    Err(problems)
                }
            })?;
            self.ws.remove_files(&files)?;
            self.ws.write_files(&candidate)?;
            files = candidate;

            let outcomes = execute_suite(&design.suite, self.runner, self.ws.root()).map_err(|source| {
                CompileError::Runner {
                    node: node.clone(),
                    source,
                }
            })?;
            self.ws.write_results(node, &outcomes)?;
            passed = outcomes.iter().all(|o| o.passed);
            feedback = outcomes
                .iter()
                .filter(|o| !o.passed)
                .map(|o| format!("{}:\n{}", o.case_id, o.feedback.trim_end()))
                .collect::<Vec<_>>()
                .join("\n\n");
            for outcome in outcomes {
                self.emit(CompileEvent::Outcome {
                    node: node.clone(),
                    case_id: outcome.case_id.clone(),
                    passed: outcome.passed,
                    feedback: outcome.feedback.clone(),
                });
                self.system.outcomes.insert(outcome.case_id.clone(), outcome);
            }
        }
        Ok(CodeArtifact {
            id: code_id,
            node_id: node.clone(),
            files,
            attempts: attempt,
            passed,
        })
    }

    /// Registers the kept artifact, its edges, and the node's trace tuples.
    fn commit(&mut self, node: &Identifier, design: &Design, artifact: CodeArtifact) -> Result<(), CompileError> {
        let code_id = artifact.id.clone();
        self.system.register_code(artifact)?;
        for interface in &design.interfaces {
            self.system.add_impl_edge(interface.clone(), code_id.clone())?;
        }
        for case in &design.suite.cases {
            self.system.add_ver_edge(code_id.clone(), case.id.clone())?;
        }
        let interfaces: BTreeSet<InterfaceId> = design.interfaces.iter().cloned().collect();
        let mut tuples = vec![TraceTuple {
            requirement: RequirementRef::node(node.clone()),
            interfaces: interfaces.clone(),
            tests: design.suite.cases.iter().map(|c| c.id.clone()).collect(),
            code: Some(code_id),
        }];
        let view = self.graph.node(node.as_str()).expect("known node");
        for scenario in &view.scenarios {
            tuples.push(TraceTuple {
                requirement: RequirementRef::scenario(scenario.id.clone()),
                interfaces: interfaces.clone(),
                tests: design
                    .suite
                    .cases
                    .iter()
                    .filter(|c| c.source_scenario.as_ref() == Some(&scenario.id))
                    .map(|c| c.id.clone())
                    .collect(),
                code: None,
            });
        }
        for tuple in tuples {
            self.trace.record(tuple, &SessionEndpoints {
                graph: self.graph,
                system: &self.system,
            })?;
        }
        Ok(())
    }

    fn descendant_trace(&self, node: &Identifier) -> Vec<TraceTuple> {
        let mut below: BTreeSet<Identifier> = BTreeSet::new();
        let mut stack: Vec<Identifier> = self.graph.children(node.as_str()).to_vec();
        while let Some(id) = stack.pop() {
            stack.extend(self.graph.children(id.as_str()).iter().cloned());
            below.insert(id);
        }
        self.trace
            .tuples()
            .iter()
            .filter(|t| t.requirement.kind == crate::trace::RequirementKind::Node && below.contains(&t.requirement.id))
            .cloned()
            .collect()
    }

    fn write_interfaces(&self) -> Result<(), CompileError> {
        let doc = InterfacesDocument::new(&self.system.interfaces, &self.system.call_edges);
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("interfaces serialize");
        bytes.push(b'\n');
        self.ws.write_atomic(INTERFACES_FILE, &bytes)
    }

    fn persist_outputs(&self) -> Result<(), CompileError> {
        self.write_interfaces()?;
        self.ws.write_atomic(TRACE_FILE, &self.trace.export())
    }

    fn checkpoint(&mut self) -> Result<(), CompileError> {
        self.persist_outputs()?;
        Checkpoint {
            version: Checkpoint::VERSION,
            document_sha256: self.doc_hash.clone(),
            states: self.states.clone(),
            synthesized: self.synthesized.clone(),
            captions: self.captions.clone(),
            system: self.system.clone(),
            trace: self.trace.tuples().to_vec(),
            transcript_len: self.gateway.transcript().len(),
        }
        .save(self.ws)
    }
}

fn check_scripts(system: &SystemState, expected: &[Identifier], scripts: &[TestScript]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut paths = BTreeSet::new();
    for script in scripts {
        if !expected.contains(&script.case_id) {
            problems.push(format!("script for unknown test case {}", script.case_id));
        }
        if !script.path.starts_with(&format!("{TESTS_DIR}/")) {
            problems.push(format!("script {} must live under {TESTS_DIR}/", script.path));
        }
        if !paths.insert(script.path.as_str()) || system.cases().any(|c| c.artifact_path.as_deref() == Some(&script.path)) {
            problems.push(format!("script path {} is already used", script.path));
        }
    }
    for id in expected {
        match scripts.iter().filter(|s| &s.case_id == id).count() {
            0 => problems.push(format!("no script for test case {id}")),
            1 => {}
            n => problems.push(format!("{n} scripts for test case {id}")),
        }
    }
    problems
}

fn check_code_files(system: &SystemState, code_id: &Identifier, files: &[SourceFile]) -> Vec<String> {
    let mut problems = Vec::new();
    let mut paths = BTreeSet::new();
    for file in files {
        if !file.path.starts_with(&format!("{SRC_DIR}/")) {
            problems.push(format!("code file {} must live under {SRC_DIR}/", file.path));
        }
        if !paths.insert(file.path.as_str()) {
            problems.push(format!("code file {} appears twice", file.path));
        }
        if let Some(owner) = system.path_owner(&file.path).filter(|c| &c.id != code_id) {
            problems.push(format!("{} belongs to {} and may not be changed", file.path, owner.id));
        }
    }
    problems
}

/// Interface-level call edges `(i_r, i_v)` for every child `v` of `node`.
pub fn expected_call_edges(graph: &ReqGraph, system: &SystemState, node: &str) -> CallGraph {
    let owned = |n: &str| -> Vec<InterfaceId> {
        system
            .interfaces
            .entries()
            .iter()
            .filter(|e| e.owner == n)
            .map(|e| e.signature.id().clone())
            .collect()
    };
    let mut calls = CallGraph::default();
    let parents = owned(node);
    for child in graph.children(node) {
        for p in &parents {
            for c in owned(child.as_str()) {
                calls.edges.insert((p.clone(), c));
            }
        }
    }
    calls
}
