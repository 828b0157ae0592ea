//! HTTP observer/editor API. Reads see the last node boundary; writes to the
//! document are refused while a compile runs.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{stream, Stream, StreamExt};
use reqc_core::dsl::{load_document, Scenario, ValidationReport};
use reqc_core::trace::{check_consistency, TraceKey};
use reqc_core::{
    build_graph, compile, serialize_document, validate_document, Budget, CompileConfig, CompileEvent, CompileSummary,
    Finding, Identifier, NodeState, RequirementDoc, SystemState,
};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;

use crate::commands::{boundary, COMPILE_STACK};
use crate::config::Config;
use crate::view::{load_trace, Snapshot, TreeNode};
use crate::Exit;

pub const INVALID_BODY: &str = "INVALID_BODY";

#[derive(Debug, Default)]
struct RunState {
    active: bool,
    run: u64,
    history: Vec<CompileEvent>,
    summary: Option<CompileSummary>,
    error: Option<Value>,
}

pub struct AppState {
    config: Config,
    doc_path: PathBuf,
    doc: RwLock<RequirementDoc>,
    snapshot: RwLock<Snapshot>,
    run: Mutex<RunState>,
    events: broadcast::Sender<(u64, CompileEvent)>,
}

impl AppState {
    /// Loads the document and whatever checkpoint the workspace holds.
    pub fn new(config: Config, doc_path: &Path) -> Result<Arc<Self>, String> {
        let doc = load_document(doc_path).map_err(|e| format!("{}: {e}", doc_path.display()))?;
        let snapshot = Snapshot::load(&config.workspace)?;
        let (events, _) = broadcast::channel(4096);
        Ok(Arc::new(Self {
            config,
            doc_path: doc_path.to_owned(),
            doc: RwLock::new(doc),
            snapshot: RwLock::new(snapshot),
            run: Mutex::new(RunState::default()),
            events,
        }))
    }

    pub fn is_compiling(&self) -> bool {
        self.run.lock().unwrap().active
    }

    fn record(&self, event: CompileEvent) {
        let mut run = self.run.lock().unwrap();
        run.history.push(event.clone());
        let _ = self.events.send((run.run, event));
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/graph", get(graph))
        .route("/api/node/{id}", get(get_node).put(put_node))
        .route("/api/compile", post(start_compile))
        .route("/api/compile/status", get(status))
        .route("/api/compile/events", get(events))
        .route("/api/trace", get(trace))
        .route("/api/tests/{case_id}/outcome", get(outcome))
        .with_state(state)
}

/// Binds the configured port and serves until interrupted.
pub fn run(config: &Config, doc_path: &Path, err: &mut dyn Write) -> Exit {
    let state = match AppState::new(config.clone(), doc_path) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return Exit::Unreadable;
        }
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
    let addr = format!("127.0.0.1:{}", config.port);
    let listener = match runtime.block_on(tokio::net::TcpListener::bind(&addr)) {
        Ok(l) => l,
        Err(e) => {
            let _ = writeln!(err, "cannot listen on {addr}: {e}");
            return Exit::Invalid;
        }
    };
    let _ = writeln!(err, "serving {} on http://{addr}", doc_path.display());
    match runtime.block_on(async { axum::serve(listener, router(state)).await }) {
        Ok(()) => Exit::Ok,
        Err(e) => {
            let _ = writeln!(err, "server stopped: {e}");
            Exit::Invalid
        }
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": {"code": code, "message": message.into()}}))).into_response()
}

fn unprocessable(report: &ValidationReport) -> Response {
    (StatusCode::UNPROCESSABLE_ENTITY, Json(report)).into_response()
}

/// Opaque token that changes whenever the document does.
fn revision(doc: &RequirementDoc) -> String {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    serialize_document(doc).hash(&mut h);
    format!("{:016x}", h.finish())
}

fn edges(doc: &RequirementDoc) -> (Vec<(Identifier, Identifier)>, Vec<(Identifier, Identifier)>) {
    let deps = doc
        .nodes()
        .into_iter()
        .flat_map(|n| n.dependencies.iter().map(move |d| (d.clone(), n.id.clone())))
        .collect();
    let prereqs = doc
        .scenarios()
        .flat_map(|(_, s)| s.prerequisites.iter().map(move |p| (p.clone(), s.id.clone())))
        .collect();
    (deps, prereqs)
}

async fn graph(State(state): State<Arc<AppState>>) -> Response {
    let doc = state.doc.read().unwrap();
    let snapshot = state.snapshot.read().unwrap();
    let (dependency_edges, prerequisite_edges) = edges(&doc);
    Json(json!({
        "revision": revision(&doc),
        "root": TreeNode::of(&doc.root, &snapshot),
        "dependency_edges": dependency_edges,
        "prerequisite_edges": prerequisite_edges,
        "validation": validate_document(&doc),
    }))
    .into_response()
}

async fn get_node(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let doc = state.doc.read().unwrap();
    let Some(node) = doc.root.find(&id) else {
        return error(StatusCode::NOT_FOUND, "UNKNOWN_NODE", format!("no node {id}"));
    };
    let snapshot = state.snapshot.read().unwrap();
    Json(json!({
        "id": node.id,
        "name": node.name,
        "description": node.description.render(),
        "dependencies": node.dependencies,
        "scenarios": node.scenarios,
        "children": node.children.iter().map(|c| &c.id).collect::<Vec<_>>(),
        "state": snapshot.state(&node.id),
        "revision": revision(&doc),
    }))
    .into_response()
}

/// Replacement content for one node; its children are kept.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEdit {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub dependencies: Vec<Identifier>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

async fn put_node(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let edit: NodeEdit = match serde_json::from_slice(&body) {
        Ok(e) => e,
        Err(e) => {
            return unprocessable(&ValidationReport {
                errors: vec![Finding::new(INVALID_BODY, id, e.to_string())],
                warnings: vec![],
            })
        }
    };
    // Holding the run lock keeps a compile from starting mid-edit.
    let run = state.run.lock().unwrap();
    if run.active {
        return error(StatusCode::CONFLICT, "COMPILE_ACTIVE", "documents cannot be edited while a compile runs");
    }
    let mut doc = state.doc.write().unwrap();
    if let Some(expected) = headers.get("if-match").and_then(|v| v.to_str().ok()) {
        let current = revision(&doc);
        if expected.trim_matches('"') != current {
            return error(StatusCode::CONFLICT, "STALE_REVISION", format!("document is at revision {current}"));
        }
    }
    let mut edited = doc.clone();
    let Some(node) = edited.root.find_mut(&id) else {
        return error(StatusCode::NOT_FOUND, "UNKNOWN_NODE", format!("no node {id}"));
    };
    node.name = edit.name;
    node.description = reqc_core::dsl::MultiModalText::parse(&edit.description);
    node.dependencies = edit.dependencies;
    node.scenarios = edit.scenarios;
    let report = validate_document(&edited);
    if !report.is_ok() {
        return unprocessable(&report);
    }
    let text = serialize_document(&edited);
    let tmp = state.doc_path.with_extension("req.tmp");
    if let Err(e) = std::fs::write(&tmp, &text).and_then(|()| std::fs::rename(&tmp, &state.doc_path)) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "IO", e.to_string());
    }
    *doc = edited;
    drop(run);
    Json(json!({"id": id, "revision": revision(&doc), "warnings": report.warnings})).into_response()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompileRequest {
    #[serde(default)]
    pub resume: bool,
    pub budget: Option<u32>,
}

async fn start_compile(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: CompileRequest = if body.is_empty() {
        CompileRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => return error(StatusCode::BAD_REQUEST, INVALID_BODY, e.to_string()),
        }
    };
    let budget = match Budget::new(request.budget.unwrap_or(state.config.budget)) {
        Ok(b) => b,
        Err(_) => return error(StatusCode::BAD_REQUEST, INVALID_BODY, "budget must be at least 1"),
    };
    let Some(spec) = state.config.backend.clone() else {
        return error(StatusCode::BAD_REQUEST, "NO_BACKEND", "the server was started without --backend");
    };
    let mut run = state.run.lock().unwrap();
    if run.active {
        return error(StatusCode::CONFLICT, "COMPILE_ACTIVE", "a compile is already running");
    }
    let doc = state.doc.read().unwrap().clone();
    let report = validate_document(&doc);
    if !report.is_ok() {
        return unprocessable(&report);
    }
    let backend = match spec.build() {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.code(), e.to_string()),
    };
    let mut config = CompileConfig::new(&state.config.workspace);
    config.budget = budget;
    config.resume = request.resume;
    *run = RunState {
        active: true,
        run: run.run + 1,
        ..RunState::default()
    };
    let run_id = run.run;
    drop(run);

    let worker = state.clone();
    let spawned = std::thread::Builder::new()
        .name("reqc-compile".into())
        .stack_size(COMPILE_STACK)
        .spawn(move || run_compile(worker, doc, backend, config));
    if let Err(e) = spawned {
        state.run.lock().unwrap().active = false;
        return error(StatusCode::INTERNAL_SERVER_ERROR, "IO", e.to_string());
    }
    (StatusCode::ACCEPTED, Json(json!({"run": run_id}))).into_response()
}

fn run_compile(state: Arc<AppState>, doc: RequirementDoc, backend: Box<dyn reqc_core::AgentBackend>, config: CompileConfig) {
    let runner = state.config.runner.build();
    let mut states: BTreeMap<Identifier, NodeState> = BTreeMap::new();
    let mut observer = |event: &CompileEvent, system: &SystemState| {
        if let CompileEvent::State { node, state: s } = event {
            states.insert(node.clone(), *s);
        }
        if boundary(event) {
            let mut snap = state.snapshot.write().unwrap();
            snap.states.clone_from(&states);
            snap.system = system.clone();
        }
        state.record(event.clone());
    };
    let result = compile(&doc, backend, &runner, &config, &mut observer);
    let terminal = matches!(
        state.run.lock().unwrap().history.last(),
        Some(CompileEvent::Finished { .. } | CompileEvent::Failed { .. })
    );
    match result {
        Ok(report) => {
            *state.snapshot.write().unwrap() = Snapshot {
                states: report.states,
                system: report.system,
            };
            if !terminal {
                state.record(CompileEvent::Finished {
                    summary: report.summary.clone(),
                });
            }
            let mut run = state.run.lock().unwrap();
            run.summary = Some(report.summary);
            run.active = false;
        }
        Err(e) => {
            if !terminal {
                state.record(CompileEvent::Failed {
                    code: e.code().to_owned(),
                    message: e.to_string(),
                });
            }
            let mut run = state.run.lock().unwrap();
            run.error = Some(json!({"code": e.code(), "message": e.to_string()}));
            run.active = false;
        }
    }
}

async fn status(State(state): State<Arc<AppState>>) -> Response {
    let run = state.run.lock().unwrap();
    let snapshot = state.snapshot.read().unwrap();
    let budget_remaining: BTreeMap<&Identifier, u32> = run
        .history
        .iter()
        .filter_map(|e| match e {
            CompileEvent::Attempt {
                node, budget_remaining, ..
            } => Some((node, *budget_remaining)),
            _ => None,
        })
        .collect();
    Json(json!({
        "active": run.active,
        "run": run.run,
        "events": run.history.len(),
        "last_event": run.history.last(),
        "states": snapshot.states,
        "budget_remaining": budget_remaining,
        "pass_rate": snapshot.pass_rate(),
        "error_count": snapshot.error_count(),
        "summary": run.summary,
        "error": run.error,
    }))
    .into_response()
}

fn sse_event(event: &CompileEvent) -> Event {
    let value = serde_json::to_value(event).expect("events serialize");
    let name = value["event"].as_str().unwrap_or("event").to_owned();
    Event::default().event(name).data(value.to_string())
}

fn is_terminal(event: &CompileEvent) -> bool {
    matches!(event, CompileEvent::Finished { .. } | CompileEvent::Failed { .. })
}

/// Replays the current (or last) run and follows it live until it ends.
/// With no run yet, waits for the next one.
async fn events(State(state): State<Arc<AppState>>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let (history, rx, target, done) = {
        let run = state.run.lock().unwrap();
        let rx = state.events.subscribe();
        let target = if run.active || run.run > 0 { run.run } else { run.run + 1 };
        let done = !run.active && run.run > 0 || run.history.last().is_some_and(is_terminal);
        (run.history.clone(), rx, target, done)
    };
    let replay = stream::iter(history.iter().map(sse_event).map(Ok).collect::<Vec<_>>());
    let live = stream::unfold((rx, done), move |(mut rx, done)| async move {
        if done {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok((run, event)) if run == target => {
                    let end = is_terminal(&event);
                    return Some((Ok(sse_event(&event)), (rx, end)));
                }
                Ok(_) | Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(replay.chain(live)).keep_alive(KeepAlive::default())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceParams {
    pub req: Option<String>,
    pub code: Option<String>,
    pub interface: Option<String>,
    pub test: Option<String>,
    #[serde(default)]
    pub check: bool,
}

async fn trace(State(state): State<Arc<AppState>>, params: Result<Query<TraceParams>, axum::extract::rejection::QueryRejection>) -> Response {
    let Ok(Query(params)) = params else {
        return error(StatusCode::BAD_REQUEST, "BAD_QUERY", "expected one of req, code, interface, test, or check=true");
    };
    let store = match load_trace(&state.config.workspace) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "CORRUPT_FILE", e),
    };
    if params.check {
        let doc = state.doc.read().unwrap();
        let graph = match build_graph(&doc) {
            Ok(g) => g,
            Err(e) => return error(StatusCode::CONFLICT, e.code(), e.to_string()),
        };
        let snapshot = state.snapshot.read().unwrap();
        let findings = check_consistency(&store, &snapshot.system, &graph, &snapshot.states);
        return Json(json!({"ok": findings.is_empty(), "findings": findings})).into_response();
    }
    let keys: Vec<(TraceKey, String)> = [
        (TraceKey::Requirement, params.req),
        (TraceKey::Code, params.code),
        (TraceKey::Interface, params.interface),
        (TraceKey::Test, params.test),
    ]
    .into_iter()
    .filter_map(|(k, v)| v.map(|v| (k, v)))
    .collect();
    let tuples: Vec<_> = match keys.as_slice() {
        [] => store.tuples().iter().collect(),
        [(key, id)] => store.query(*key, id),
        _ => return error(StatusCode::BAD_REQUEST, "BAD_QUERY", "give at most one of req, code, interface, test"),
    };
    Json(json!({"tuples": tuples})).into_response()
}

async fn outcome(State(state): State<Arc<AppState>>, UrlPath(case_id): UrlPath<String>) -> Response {
    let snapshot = state.snapshot.read().unwrap();
    let system = &snapshot.system;
    let Some((node, case)) = system
        .tests
        .iter()
        .find_map(|(node, suite)| suite.cases.iter().find(|c| c.id.as_str() == case_id).map(|c| (node, c)))
    else {
        return error(StatusCode::NOT_FOUND, "UNKNOWN_TEST", format!("no test case {case_id}"));
    };
    Json(json!({
        "case_id": case.id,
        "node": node,
        "kind": case.kind,
        "targets": case.targets,
        "artifact_path": case.artifact_path,
        "outcome": system.outcomes.get(&case.id),
    }))
    .into_response()
}
