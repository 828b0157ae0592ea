//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the report reads top to bottom:
//! `cargo test -p reqc-core --test acceptance`.

mod common;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqc_core::agent::{Budget, FixtureBackend};
use reqc_core::driver::{
    compile, implementation_error_count, node_artifact_digest, normalized_snapshot, CompileConfig, CompileEvent,
    CompileReport, NoopObserver,
};
use reqc_core::dsl::{parse_document, serialize_document, validate_document, Identifier, RequirementDoc};
use reqc_core::graph::{build_graph, NodeState, Phase, ReqGraph, ScheduleEntry};
use reqc_core::interface::{InterfaceId, InterfaceKind};
use reqc_core::system::{CodeArtifact, SystemState};
use reqc_core::trace::{check_consistency, TraceStore};
use reqc_core::verification::{
    classify_test_kind, pass_rate, ProcessRunner, TestCase, TestKind, TestOutcome, TestSuite,
};
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn compile_fixture(doc: &RequirementDoc, fixtures: &Value, ws: &Path, budget: u32) -> CompileReport {
    let mut config = CompileConfig::new(ws);
    config.budget = Budget::new(budget).unwrap();
    let backend = Box::new(FixtureBackend::from_json(&fixtures.to_string()).unwrap());
    compile(doc, backend, &ProcessRunner::default(), &config, &mut NoopObserver).expect("fixture compile")
}

fn transcript(ws: &Path) -> Vec<Value> {
    std::fs::read_to_string(ws.join("transcript.log"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// A random compile tree and its fixtures; about a third of the nodes need a retry.
fn random_project(rng: &mut ChaCha8Rng, max_nodes: usize) -> (RequirementDoc, Value) {
    let doc = compile_tree(rng, max_nodes);
    let mut first_pass = BTreeMap::new();
    for node in doc.nodes() {
        if rng.random_bool(0.3) {
            first_pass.insert(node.id.to_string(), 2);
        }
    }
    (doc, tree_fixtures(&first_pass))
}

fn c1_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let mut nodes = 0;
    for i in 0..500 {
        let text = serialize_document(&random_document(&mut rng, 60));
        let once = parse_document(&text).map_err(|e| format!("document {i}: {e}"))?;
        let twice = parse_document(&serialize_document(&once)).map_err(|e| format!("document {i}: {e}"))?;
        ensure(once == twice, || format!("document {i} changed on round trip"))?;
        nodes += once.nodes().len();
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("500 documents, {nodes} nodes, {:.2}s", elapsed.as_secs_f64()))
}

fn c2_sample_document() -> Outcome {
    let doc = sample();
    let report = validate_document(&doc);
    ensure(report.errors.is_empty(), || format!("validation errors: {:?}", report.errors))?;
    let graph = build_graph(&doc).map_err(|e| e.to_string())?;
    let deps: Vec<(String, String)> =
        graph.dependency_edges().iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    ensure(deps == [("REQ-2-1".into(), "REQ-2-2".into())], || format!("dependency edges {deps:?}"))?;
    let prereqs: Vec<(String, String)> =
        graph.prerequisite_edges().iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    let expected = [("SCE-DB-03".to_owned(), "SCE-DB-04".to_owned()), ("SCE-DB-04".into(), "SCE-DB-05".into())];
    ensure(prereqs == expected, || format!("prerequisite edges {prereqs:?}"))?;
    let modules = graph.children(graph.root().as_str()).len();
    ensure(modules == 2, || format!("{modules} modules under ROOT"))?;
    Ok("trainticket.req validates; REQ-2-1->REQ-2-2; SCE-DB-03->SCE-DB-04->SCE-DB-05".into())
}

/// Brute-force DFS check: every node once per phase, Red before Green, an
/// ancestor's Red/Green bracket its descendants, and earlier subtrees in
/// document order finish before later ones start.
fn schedule_violations(graph: &ReqGraph, schedule: &[ScheduleEntry]) -> Vec<String> {
    let (children, parent) = tree_of(graph);
    let mut red = BTreeMap::new();
    let mut green = BTreeMap::new();
    let mut out = Vec::new();
    for (i, e) in schedule.iter().enumerate() {
        let slot = if e.phase == Phase::Red { &mut red } else { &mut green };
        if slot.insert(e.node_id.clone(), i).is_some() {
            out.push(format!("{} {:?} twice", e.node_id, e.phase));
        }
    }
    let ids = graph.node_ids();
    if red.len() != ids.len() || green.len() != ids.len() || schedule.len() != 2 * ids.len() {
        out.push("schedule does not cover every node exactly twice".into());
        return out;
    }
    let path = |n: &Identifier| {
        let mut chain = vec![n.clone()];
        while let Some(p) = parent.get(chain.last().unwrap()) {
            chain.push(p.clone());
        }
        chain.reverse();
        chain
    };
    for u in ids {
        if red[u] > green[u] {
            out.push(format!("{u}: Green before Red"));
        }
        for v in ids {
            if u == v {
                continue;
            }
            let (pu, pv) = (path(u), path(v));
            if pv.starts_with(&pu) {
                if !(red[u] < red[v] && green[v] < green[u]) {
                    out.push(format!("{u} does not bracket descendant {v}"));
                }
            } else if !pu.starts_with(&pv) {
                let split = pu.iter().zip(&pv).take_while(|(a, b)| a == b).count();
                let siblings = &children[&pu[split - 1]];
                let (a, b) = (&pu[split], &pv[split]);
                let u_first = siblings.iter().position(|c| c == a) < siblings.iter().position(|c| c == b);
                if u_first && green[u] > red[v] {
                    out.push(format!("{u} finishes after later subtree {v} starts"));
                }
            }
        }
    }
    out
}

fn c3_schedule_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0;
    for i in 0..200 {
        let doc = compile_tree(&mut rng, 50);
        let graph = build_graph(&doc).map_err(|e| e.to_string())?;
        let violations = schedule_violations(&graph, &graph.plan_schedule());
        ensure(violations.is_empty(), || format!("tree {i}: {violations:?}"))?;
        total += graph.len();
    }
    Ok(format!("200 trees, {total} nodes, 0 violations"))
}

fn phase_of(kind: &str) -> Phase {
    if kind == "generate_code" {
        Phase::Green
    } else {
        Phase::Red
    }
}

fn c4_driver_faithfulness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut gencodes = 0;
    for i in 0..50 {
        let (doc, fixtures) = random_project(&mut rng, 12);
        let dir = tempfile::tempdir().unwrap();
        let report = compile_fixture(&doc, &fixtures, dir.path(), 3);
        let graph = build_graph(&doc).unwrap();
        let planned: Vec<(String, Phase)> =
            graph.plan_schedule().into_iter().map(|e| (e.node_id.to_string(), e.phase)).collect();

        let records = transcript(dir.path());
        let mut observed: Vec<(String, Phase)> = Vec::new();
        for r in &records {
            let entry = (r["node_id"].as_str().unwrap().to_owned(), phase_of(r["kind"].as_str().unwrap()));
            if observed.last() != Some(&entry) {
                observed.push(entry);
            }
        }
        ensure(observed == planned, || format!("tree {i}: transcript order {observed:?} vs plan {planned:?}"))?;

        // Call edges from the tree and the interface owners, independent of the driver's own edges.
        let owned = |node: &str| -> Vec<InterfaceId> {
            report
                .system
                .interfaces
                .entries()
                .iter()
                .filter(|e| e.owner == node)
                .map(|e| e.signature.id().clone())
                .collect()
        };
        let mut e_call: BTreeSet<(InterfaceId, InterfaceId)> = BTreeSet::new();
        for (parent, child) in graph.child_edges() {
            for a in owned(parent.as_str()) {
                for b in owned(child.as_str()) {
                    e_call.insert((a.clone(), b));
                }
            }
        }
        for r in records.iter().filter(|r| r["kind"] == "generate_code") {
            let node = r["node_id"].as_str().unwrap();
            let mine: BTreeSet<InterfaceId> = owned(node).into_iter().collect();
            let expected: BTreeSet<String> = e_call
                .iter()
                .filter(|(a, _)| mine.contains(a))
                .map(|(_, b)| b.to_string())
                .collect();
            let given: BTreeSet<String> = r["request"]["context"]["dependencies"]
                .as_array()
                .unwrap()
                .iter()
                .map(|s| s["id"].as_str().unwrap().to_owned())
                .collect();
            ensure(given == expected, || format!("tree {i}, {node}: callee set {given:?} vs {expected:?}"))?;
            gencodes += 1;
        }
    }
    Ok(format!("50 trees, {gencodes} GenCode requests, 0 mismatches"))
}

const ONE_NODE: &str = r#"node ROOT "counter" {
  description: "A counter."
  scenario S-ROOT "count" { step { given: "" when: "the user clicks" then: "the count grows" } }
}"#;

fn c5_budget() -> Outcome {
    let doc = parse_document(ONE_NODE).unwrap();
    let mut checked = 0;
    for b in [1u32, 2, 3, 5] {
        for first_pass in 1..=6u32 {
            let fixtures = tree_fixtures(&BTreeMap::from([("ROOT".to_owned(), first_pass)]));
            let dir = tempfile::tempdir().unwrap();
            let report = compile_fixture(&doc, &fixtures, dir.path(), b);
            let invokes = transcript(dir.path()).iter().filter(|r| r["kind"] == "generate_code").count() as u32;
            let expected = b.min(first_pass);
            ensure(invokes == expected, || format!("b={b}, first pass {first_pass}: {invokes} GenCode calls"))?;
            let artifact = &report.system.code[&id("code-ROOT")];
            ensure(artifact.passed == (first_pass <= b), || format!("b={b}, first pass {first_pass}: passed flag"))?;
            ensure(artifact.attempts == expected, || format!("b={b}: attempts {}", artifact.attempts))?;
            let kept = std::fs::read_to_string(dir.path().join("src/ROOT.txt")).unwrap();
            ensure(kept.contains(&format!("(attempt {expected})")), || format!("b={b}: kept {kept:?}"))?;
            ensure(artifact.files[0].content == kept, || "registered artifact differs from the file".into())?;
            checked += 1;
        }
    }
    Ok(format!("{checked} scripted runs over b in {{1,2,3,5}}; last artifact retained on exhaustion"))
}

/// The rule table, written independently of the implementation.
fn expected_kind(targets: &[InterfaceKind]) -> Option<TestKind> {
    use InterfaceKind::*;
    let count = |k| targets.iter().filter(|&&t| t == k).count();
    let (ui, api, db) = (count(Ui), count(Api), count(Db));
    match targets.len() {
        1 => Some(TestKind::Unit),
        2 if ui == 1 && api == 1 => Some(TestKind::EndToEnd),
        2 if api == 2 || (api == 1 && db == 1) => Some(TestKind::Integration),
        n if n >= 3 && ui >= 1 && api >= 1 => Some(TestKind::EndToEnd),
        _ => None,
    }
}

fn c6_kind_table() -> Outcome {
    use InterfaceKind::*;
    let kinds = [Ui, Api, Db];
    let mut combos: Vec<Vec<InterfaceKind>> = vec![vec![]];
    let mut all = Vec::new();
    for _ in 0..4 {
        combos = combos
            .iter()
            .flat_map(|c| kinds.iter().map(move |k| [c.clone(), vec![*k]].concat()))
            .collect();
        all.extend(combos.clone());
    }
    let mut defined = BTreeSet::new();
    for targets in &all {
        let got = classify_test_kind(targets).ok();
        let want = expected_kind(targets);
        ensure(got == want, || format!("{targets:?}: got {got:?}, table says {want:?}"))?;
        if targets.len() <= 2 && want.is_some() {
            let mut key = targets.clone();
            key.sort();
            defined.insert(key);
        }
    }
    ensure(defined.len() == 6, || format!("{} defined short combinations", defined.len()))?;
    ensure(classify_test_kind(&[]).is_err(), || "empty target list accepted".into())?;
    Ok(format!("{} ordered combinations of 1-4 targets, 6 defined pairs/singles, 0 deviations", all.len()))
}

fn c7_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let n = rng.random_range(1..300);
        let bias: f64 = rng.random_range(0.0..1.0);
        let outcomes: Vec<TestOutcome> = (0..n)
            .map(|k| TestOutcome {
                case_id: id(&format!("T{k}")),
                passed: rng.random_bool(bias),
                feedback: "x".into(),
                duration_ms: 0,
            })
            .collect();
        let passed = outcomes.iter().filter(|o| o.passed).count();
        let direct = 100.0 * passed as f64 / n as f64;
        let rate = pass_rate(&outcomes).unwrap();
        let shown: f64 = rate.to_string().parse().unwrap();
        ensure((shown - direct).abs() <= 0.005 + 1e-9, || format!("vector {i}: {shown} vs {direct}"))?;
        ensure(format!("{direct:.2}") == rate.to_string() || (shown - direct).abs() < 0.01, || {
            format!("vector {i}: rounding")
        })?;
    }

    for i in 0..500 {
        let tests = rng.random_range(1..40);
        let cases: Vec<TestCase> = (0..tests).map(|k| case(&format!("T{k}"))).collect();
        let mut system = SystemState::default();
        system.tests.insert(id("N"), TestSuite::new(id("N"), cases));
        let codes = rng.random_range(1..5);
        for c in 0..codes {
            system
                .register_code(CodeArtifact {
                    id: id(&format!("code-{c}")),
                    node_id: id("N"),
                    files: vec![],
                    attempts: 1,
                    passed: false,
                })
                .unwrap();
        }
        for _ in 0..rng.random_range(0..60) {
            let _ = system.add_ver_edge(
                id(&format!("code-{}", rng.random_range(0..codes))),
                id(&format!("T{}", rng.random_range(0..tests))),
            );
        }
        let outcomes: BTreeMap<Identifier, TestOutcome> = (0..tests)
            .map(|k| {
                let o = TestOutcome {
                    case_id: id(&format!("T{k}")),
                    passed: rng.random_bool(0.6),
                    feedback: "x".into(),
                    duration_ms: 0,
                };
                (o.case_id.clone(), o)
            })
            .collect();
        let indicator_sum: usize = system
            .ver_edges
            .iter()
            .map(|(_, t)| usize::from(!outcomes[t].passed))
            .sum();
        let got = implementation_error_count(&system, &outcomes).map_err(|e| e.to_string())?;
        ensure(got == indicator_sum, || format!("edge set {i}: {got} vs {indicator_sum}"))?;
    }
    Ok("1000 outcome vectors within 0.01; 500 verification-edge/outcome sets exact".into())
}

fn case(name: &str) -> TestCase {
    TestCase {
        id: id(name),
        kind: TestKind::Unit,
        targets: vec![],
        operation: None,
        source_scenario: None,
        fixtures: vec![],
        fixture_notes: vec![],
        actions: vec![],
        assertions: vec![],
        artifact_path: None,
    }
}

/// Every fixture project the criteria below run against.
fn projects() -> Vec<(String, RequirementDoc, Value)> {
    let mut out = vec![("trainticket".to_owned(), sample(), sample_fixtures())];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..8 {
        let (doc, fixtures) = random_project(&mut rng, 15);
        out.push((format!("random-{i}"), doc, fixtures));
    }
    out
}

fn c8_trace_completeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut deletions = 0;
    let mut runs = Vec::new();
    for (name, doc, fixtures) in projects() {
        let dir = tempfile::tempdir().unwrap();
        let report = compile_fixture(&doc, &fixtures, dir.path(), 3);
        let graph = build_graph(&doc).unwrap();
        let findings = check_consistency(&report.trace, &report.system, &graph, &report.states);
        ensure(findings.is_empty(), || format!("{name}: {findings:?}"))?;
        runs.push((name, graph, report));
    }
    while deletions < 20 {
        let (name, graph, report) = runs.choose(&mut rng).unwrap();
        let mut tuples = report.trace.tuples().to_vec();
        let victim = rng.random_range(0..tuples.len());
        let removed = tuples.remove(victim);
        let mutated = TraceStore::from_tuples(tuples);
        let findings = check_consistency(&mutated, &report.system, graph, &report.states);
        ensure(!findings.is_empty(), || format!("{name}: deleting {removed} went unnoticed"))?;
        deletions += 1;
    }
    Ok(format!("{} compiles with 0 findings; 20 random deletions all detected", runs.len()))
}

fn c9_determinism() -> Outcome {
    let mut files = 0;
    for (name, doc, fixtures) in projects().into_iter().take(4) {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        compile_fixture(&doc, &fixtures, a.path(), 3);
        compile_fixture(&doc, &fixtures, b.path(), 3);
        let (sa, sb) = (normalized_snapshot(a.path()), normalized_snapshot(b.path()));
        ensure(sa.keys().eq(sb.keys()), || format!("{name}: different file sets"))?;
        for (path, bytes) in &sa {
            ensure(&sb[path] == bytes, || format!("{name}: {path} differs"))?;
        }
        let trace_a = std::fs::read(a.path().join("trace.json")).unwrap();
        let trace_b = std::fs::read(b.path().join("trace.json")).unwrap();
        ensure(trace_a == trace_b, || format!("{name}: trace.json differs"))?;
        files += sa.len();
    }
    Ok(format!("4 projects compiled twice, {files} files identical"))
}

fn c10_non_regression() -> Outcome {
    let mut boundaries = 0;
    for (name, doc, fixtures) in projects() {
        let dir = tempfile::tempdir().unwrap();
        let ws = dir.path().to_path_buf();
        let digests: RefCell<BTreeMap<Identifier, String>> = RefCell::new(BTreeMap::new());
        let failure: RefCell<Option<String>> = RefCell::new(None);
        let mut observer = |event: &CompileEvent, system: &SystemState| {
            let CompileEvent::NodeDone { node, .. } = event else { return };
            let mut known = digests.borrow_mut();
            for (done, digest) in known.iter() {
                if &node_artifact_digest(&ws, system, done) != digest {
                    failure.borrow_mut().get_or_insert(format!("{name}: {done} changed while finishing {node}"));
                }
            }
            known.insert(node.clone(), node_artifact_digest(&ws, system, node));
        };
        let backend = Box::new(FixtureBackend::from_json(&fixtures.to_string()).unwrap());
        let report = compile(&doc, backend, &ProcessRunner::default(), &CompileConfig::new(&ws), &mut observer)
            .map_err(|e| e.to_string())?;
        if let Some(f) = failure.into_inner() {
            return Err(f);
        }
        for (node, digest) in digests.borrow().iter() {
            ensure(&node_artifact_digest(&ws, &report.system, node) == digest, || {
                format!("{name}: {node} changed after its boundary")
            })?;
        }
        ensure(report.states.values().all(|s| *s == NodeState::Done), || format!("{name}: not all done"))?;
        boundaries += digests.borrow().len();
    }
    Ok(format!("{boundaries} node boundaries over 9 projects, no Done artifact modified"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("grammar round-trip", c1_round_trip),
        ("sample document conformance", c2_sample_document),
        ("schedule oracle", c3_schedule_oracle),
        ("driver faithfulness", c4_driver_faithfulness),
        ("budget semantics", c5_budget),
        ("test-kind table", c6_kind_table),
        ("metrics", c7_metrics),
        ("traceability completeness", c8_trace_completeness),
        ("determinism", c9_determinism),
        ("non-regression", c10_non_regression),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {message}"))
        });
        let ms = started.elapsed().as_millis();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} ({ms} ms)", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} ({ms} ms)", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
