//! Generators and helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use reqc_core::dsl::{load_document, Identifier, ImageRef, MultiModalText, Node, RequirementDoc, Scenario, Segment, Step};
use reqc_core::graph::ReqGraph;
use serde_json::{json, Value};

pub fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

pub fn sample() -> RequirementDoc {
    load_document(example("trainticket.req")).unwrap()
}

pub fn sample_fixtures() -> Value {
    serde_json::from_str(&std::fs::read_to_string(example("trainticket.fixtures.json")).unwrap()).unwrap()
}

pub fn id(s: &str) -> Identifier {
    Identifier::new(s).unwrap()
}

const WORDS: &[&str] = &[
    "login", "user", "ticket", "search", "the", "page", "clicks", "button", "is", "shown", "a", "form", "list",
];
const ODD: &[&str] = &["\"quoted\"", "back\\slash", "tab\there", "ünïcödé", "line\nbreak", "{braces}", "![image](", "))"];

fn text<R: Rng>(rng: &mut R, max_words: usize, odd: bool) -> String {
    let n = rng.random_range(0..=max_words);
    let mut words: Vec<String> = (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
    if odd && rng.random_bool(0.3) {
        words.push(ODD.choose(rng).unwrap().to_string());
    }
    words.join(" ")
}

fn nonempty<R: Rng>(rng: &mut R, odd: bool) -> String {
    let mut t = text(rng, 6, odd);
    if t.trim().is_empty() {
        t = "something happens".into();
    }
    t
}

fn description<R: Rng>(rng: &mut R, odd: bool) -> MultiModalText {
    let mut segments = Vec::new();
    for _ in 0..rng.random_range(0..4) {
        if odd && rng.random_bool(0.3) {
            segments.push(Segment::Image(ImageRef::new(format!("shots/s{}.png", rng.random_range(0..5)))));
        } else {
            segments.push(Segment::Text(text(rng, 8, odd)));
        }
    }
    MultiModalText::from_segments(segments)
}

/// Random node ids in document order; `parents[i]` is the index of node `i`'s parent.
pub fn random_shape<R: Rng>(rng: &mut R, nodes: usize) -> Vec<Option<usize>> {
    (0..nodes)
        .map(|i| if i == 0 { None } else { Some(rng.random_range(0..i)) })
        .collect()
}

fn assemble(mut nodes: Vec<Node>, parents: &[Option<usize>]) -> Node {
    // Children are attached in index order, so document order follows creation order.
    for i in (1..nodes.len()).rev() {
        let child = nodes.pop().unwrap();
        let parent = parents[i].unwrap();
        nodes[parent].children.insert(0, child);
    }
    nodes.pop().unwrap()
}

/// A valid document exercising the whole grammar: escapes, images,
/// multi-line text, dependencies and prerequisites (both acyclic).
pub fn random_document<R: Rng>(rng: &mut R, max_nodes: usize) -> RequirementDoc {
    let count = rng.random_range(1..=max_nodes);
    let parents = random_shape(rng, count);
    let mut scenario_ids: Vec<Identifier> = Vec::new();
    let mut nodes = Vec::new();
    for i in 0..count {
        let mut node = Node::new(id(&format!("REQ-{i}")), text(rng, 3, true));
        node.description = description(rng, true);
        if i > 0 {
            for _ in 0..rng.random_range(0..3) {
                let dep = id(&format!("REQ-{}", rng.random_range(0..i)));
                if !node.dependencies.contains(&dep) {
                    node.dependencies.push(dep);
                }
            }
        }
        for s in 0..rng.random_range(0..3) {
            let sid = id(&format!("SCE-{i}_{s}"));
            let mut prerequisites = Vec::new();
            if !scenario_ids.is_empty() && rng.random_bool(0.4) {
                prerequisites.push(scenario_ids.choose(rng).unwrap().clone());
            }
            let steps = (0..rng.random_range(1..4))
                .map(|_| Step {
                    given: text(rng, 5, true),
                    when: nonempty(rng, true),
                    then: nonempty(rng, true),
                })
                .collect();
            node.scenarios.push(Scenario {
                id: sid.clone(),
                name: text(rng, 3, true),
                prerequisites,
                steps,
            });
            scenario_ids.push(sid);
        }
        nodes.push(node);
    }
    RequirementDoc::new(assemble(nodes, &parents))
}

/// A compilable tree: every node has one scenario with one step and will
/// get one DB interface `db.<node>`.
pub fn compile_tree<R: Rng>(rng: &mut R, max_nodes: usize) -> RequirementDoc {
    let count = rng.random_range(1..=max_nodes);
    let parents = random_shape(rng, count);
    let nodes = (0..count)
        .map(|i| {
            let mut node = Node::new(id(&format!("N{i}")), format!("node {i}"));
            node.description = MultiModalText::parse(&format!("Feature {i}."));
            let prerequisites = match parents[i] {
                Some(p) if rng.random_bool(0.5) => vec![id(&format!("S-N{p}"))],
                _ => vec![],
            };
            node.scenarios.push(Scenario {
                id: id(&format!("S-N{i}")),
                name: format!("use {i}"),
                prerequisites,
                steps: vec![Step {
                    given: if i % 2 == 0 { String::new() } else { "the parent works".into() },
                    when: format!("feature {i} is used"),
                    then: "it responds".into(),
                }],
            });
            node
        })
        .collect();
    RequirementDoc::new(assemble(nodes, &parents))
}

/// Wildcard fixtures for [`compile_tree`] documents. Nodes listed in
/// `first_pass` pass their tests only from that GenCode attempt on.
pub fn tree_fixtures(first_pass: &BTreeMap<String, u32>) -> Value {
    let mut entries = vec![
        json!({"kind": "synthesize_interfaces", "node": "*", "response": {"interfaces": [
            {"type": "db", "id": "db.{node_id}", "entities": [{"name": "Row", "attributes": ["id"]}]}]}}),
        json!({"kind": "adapt_interface", "node": "*", "response": {"interface": null, "reused_tests": []}}),
        json!({"kind": "generate_test_scripts", "node": "*", "response": {"scripts": [
            {"case_id": "*", "path": "tests/{case_id}.sh",
             "content": "#!/bin/sh\ngrep -q PASS src/{node_id}.txt || { echo \"{case_id}: src/{node_id}.txt does not say PASS\"; exit 1; }\n"}]}}),
        json!({"kind": "generate_code", "node": "*", "response": {"files": [
            {"path": "src/{node_id}.txt", "content": "{node_id} PASS (attempt {attempt})\n"}]}}),
    ];
    for (node, attempt) in first_pass {
        if *attempt == 1 {
            continue;
        }
        entries.push(json!({"kind": "generate_code", "node": node, "response": {"files": [
            {"path": "src/{node_id}.txt", "content": "{node_id} FAIL (attempt {attempt})\n"}]}}));
        entries.push(json!({"kind": "generate_code", "node": node, "attempt": attempt, "response": {"files": [
            {"path": "src/{node_id}.txt", "content": "{node_id} PASS (attempt {attempt})\n"}]}}));
    }
    json!({"version": 1, "entries": entries})
}

/// Children lists and parent links of `graph`, for independent checks.
pub fn tree_of(graph: &ReqGraph) -> (BTreeMap<Identifier, Vec<Identifier>>, BTreeMap<Identifier, Identifier>) {
    let mut children = BTreeMap::new();
    let mut parent = BTreeMap::new();
    for id in graph.node_ids() {
        children.insert(id.clone(), graph.children(id.as_str()).to_vec());
        for c in graph.children(id.as_str()) {
            parent.insert(c.clone(), id.clone());
        }
    }
    (children, parent)
}
