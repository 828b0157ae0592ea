//! Deterministic inputs for the benchmarks.

use reqc_core::dsl::{MultiModalText, Node, Scenario, Step};
use reqc_core::trace::{RequirementRef, TraceTuple};
use reqc_core::{Identifier, InterfaceId, RequirementDoc, TraceStore};

fn id(s: String) -> Identifier {
    Identifier::new(s).expect("generated ids are valid")
}

/// A tree of `nodes` nodes with the given fan-out, filled breadth-first.
/// Every node has one two-step scenario; each scenario after the first
/// requires its predecessor, and each later sibling depends on the first.
pub fn synthetic_document(nodes: usize, fan_out: usize) -> RequirementDoc {
    assert!(nodes > 0 && fan_out > 0);
    let mut all: Vec<Node> = (0..nodes)
        .map(|i| {
            let mut node = Node::new(id(format!("N{i}")), format!("Feature {i}"));
            node.description = MultiModalText::parse(&format!("The system offers feature {i} to signed-in users."));
            node.scenarios.push(Scenario {
                id: id(format!("S{i}")),
                name: format!("use feature {i}"),
                prerequisites: if i > 0 { vec![id(format!("S{}", i - 1))] } else { vec![] },
                steps: vec![
                    Step {
                        given: "a signed-in user".into(),
                        when: format!("the user opens feature {i}"),
                        then: "the page lists the results".into(),
                    },
                    Step {
                        given: String::new(),
                        when: "the user confirms".into(),
                        then: "a confirmation is shown".into(),
                    },
                ],
            });
            node
        })
        .collect();
    for i in (1..nodes).rev() {
        let parent = (i - 1) / fan_out;
        let first_sibling = parent * fan_out + 1;
        if i != first_sibling {
            all[i].dependencies.push(id(format!("N{first_sibling}")));
        }
        let child = all.pop().expect("index in range");
        all[parent].children.insert(0, child);
    }
    RequirementDoc::new(all.pop().expect("at least one node"))
}

/// A store of `n` node tuples, each with three interfaces and four tests.
pub fn synthetic_store(n: usize) -> TraceStore {
    TraceStore::from_tuples((0..n).map(|i| TraceTuple {
        requirement: RequirementRef::node(id(format!("N{i}"))),
        interfaces: (0..3).map(|k| InterfaceId::new(format!("db.n{i}-{k}"))).collect(),
        tests: (0..4).map(|k| id(format!("T-{i}-{k}"))).collect(),
        code: Some(id(format!("code-N{i}"))),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use reqc_core::{build_graph, parse_document, serialize_document, validate_document};

    #[test]
    fn generated_documents_validate_and_round_trip() {
        let doc = synthetic_document(40, 3);
        assert!(validate_document(&doc).is_ok());
        assert_eq!(build_graph(&doc).unwrap().len(), 40);
        let text = serialize_document(&doc);
        assert!(parse_document(&text).unwrap().same_tree(&doc));
    }

    #[test]
    fn stores_hold_every_tuple() {
        assert_eq!(synthetic_store(25).len(), 25);
    }
}
