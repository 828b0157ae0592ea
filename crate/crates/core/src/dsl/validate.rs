use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ast::{ImageRef, Identifier, RequirementDoc};
use crate::finding::Finding;
use crate::graph;

pub const DUP_NODE_ID: &str = "DUP_NODE_ID";
pub const DUP_SCENARIO_ID: &str = "DUP_SCENARIO_ID";
pub const UNRESOLVED_DEPENDENCY: &str = "UNRESOLVED_DEPENDENCY";
pub const UNRESOLVED_PREREQUISITE: &str = "UNRESOLVED_PREREQUISITE";
pub const SELF_DEPENDENCY: &str = "SELF_DEPENDENCY";
pub const EMPTY_STEPS: &str = "EMPTY_STEPS";
pub const EMPTY_STEP_FIELD: &str = "EMPTY_STEP_FIELD";
pub const CYCLE_IN_DEPENDENCIES: &str = "CYCLE_IN_DEPENDENCIES";
pub const CYCLE_IN_PREREQUISITES: &str = "CYCLE_IN_PREREQUISITES";
pub const MISSING_IMAGE_FILE: &str = "MISSING_IMAGE_FILE";
pub const NODE_WITHOUT_SCENARIOS: &str = "NODE_WITHOUT_SCENARIOS";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: &str) -> bool {
        self.errors.iter().any(|f| f.code == code)
    }
}

/// Checks every structural invariant of a document. Findings are data; this
/// never fails.
pub fn validate_document(doc: &RequirementDoc) -> ValidationReport {
    let mut report = ValidationReport::default();
    let nodes = doc.nodes();

    let mut node_ids = HashSet::new();
    let mut scenario_ids = HashSet::new();
    for node in &nodes {
        if !node_ids.insert(&node.id) {
            report.errors.push(Finding::new(
                DUP_NODE_ID,
                node.id.as_str(),
                format!("node id {} is declared more than once", node.id),
            ));
        }
        for scenario in &node.scenarios {
            if !scenario_ids.insert(&scenario.id) {
                report.errors.push(Finding::new(
                    DUP_SCENARIO_ID,
                    scenario.id.as_str(),
                    format!("scenario id {} is declared more than once", scenario.id),
                ));
            }
        }
    }

    for node in &nodes {
        for dep in &node.dependencies {
            if dep == &node.id {
                report.errors.push(Finding::new(
                    SELF_DEPENDENCY,
                    node.id.as_str(),
                    format!("node {} lists itself as a dependency", node.id),
                ));
            } else if !node_ids.contains(dep) {
                report.errors.push(Finding::new(
                    UNRESOLVED_DEPENDENCY,
                    node.id.as_str(),
                    format!("dependency {dep} of node {} does not exist", node.id),
                ));
            }
        }
        for scenario in &node.scenarios {
            for prereq in &scenario.prerequisites {
                if !scenario_ids.contains(prereq) {
                    report.errors.push(Finding::new(
                        UNRESOLVED_PREREQUISITE,
                        scenario.id.as_str(),
                        format!("prerequisite {prereq} of scenario {} does not exist", scenario.id),
                    ));
                }
            }
            if scenario.steps.is_empty() {
                report.errors.push(Finding::new(
                    EMPTY_STEPS,
                    scenario.id.as_str(),
                    format!("scenario {} has no steps", scenario.id),
                ));
            }
            for (index, step) in scenario.steps.iter().enumerate() {
                for (field, value) in [("when", &step.when), ("then", &step.then)] {
                    if value.trim().is_empty() {
                        report.errors.push(Finding::new(
                            EMPTY_STEP_FIELD,
                            scenario.id.as_str(),
                            format!("step {} of scenario {} has an empty `{field}`", index + 1, scenario.id),
                        ));
                    }
                }
            }
        }
        if node.scenarios.is_empty() && node.children.is_empty() {
            report.warnings.push(Finding::new(
                NODE_WITHOUT_SCENARIOS,
                node.id.as_str(),
                format!("node {} has neither scenarios nor children", node.id),
            ));
        }
    }

    // Cycle search only makes sense once every reference resolves.
    if report.errors.is_empty() {
        if let Some(cycle) = graph::dependency_cycle(&doc.root) {
            report.errors.push(Finding::new(
                CYCLE_IN_DEPENDENCIES,
                cycle[0].as_str(),
                format!("dependency cycle: {}", join(&cycle)),
            ));
        }
        if let Some(cycle) = graph::prerequisite_cycle(&doc.root) {
            report.errors.push(Finding::new(
                CYCLE_IN_PREREQUISITES,
                cycle[0].as_str(),
                format!("prerequisite cycle: {}", join(&cycle)),
            ));
        }
    }

    if let Some(source) = &doc.source_path {
        let base = Path::new(source).parent().unwrap_or(Path::new(""));
        let mut seen = BTreeSet::new();
        for (node_id, image) in extract_images(doc) {
            if !base.join(&image.path).exists() && seen.insert((node_id.clone(), image.path.clone())) {
                report.warnings.push(Finding::new(
                    MISSING_IMAGE_FILE,
                    node_id.as_str(),
                    format!("image {} not found relative to {source}", image.path),
                ));
            }
        }
    }

    report
}

fn join(ids: &[Identifier]) -> String {
    ids.iter().map(Identifier::as_str).collect::<Vec<_>>().join(" -> ")
}

/// Every image tag in the document, in document order.
pub fn extract_images(doc: &RequirementDoc) -> Vec<(Identifier, ImageRef)> {
    doc.nodes()
        .into_iter()
        .flat_map(|node| node.description.images().map(move |img| (node.id.clone(), img.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_document;

    fn codes(report: &ValidationReport) -> Vec<&str> {
        report.errors.iter().map(|f| f.code.as_str()).collect()
    }

    #[test]
    fn self_dependency() {
        let doc = parse_document(
            r#"node ROOT "r" { description: "" children { node REQ-A "a" { description: "x" dependencies: [REQ-A] } } }"#,
        )
        .unwrap();
        let report = validate_document(&doc);
        assert_eq!(codes(&report), vec![SELF_DEPENDENCY]);
    }

    #[test]
    fn unresolved_prerequisite() {
        let doc = parse_document(
            r#"node ROOT "r" { description: ""
                scenario S1 "s" { prerequisites: [SCE-X] step { given: "" when: "w" then: "t" } } }"#,
        )
        .unwrap();
        assert_eq!(codes(&validate_document(&doc)), vec![UNRESOLVED_PREREQUISITE]);
    }

    #[test]
    fn duplicates_and_empty_steps() {
        let doc = parse_document(
            r#"node ROOT "r" { description: ""
                scenario S1 "s" { }
                children { node ROOT "dup" { description: "" scenario S1 "again" { step { given: "" when: "" then: "t" } } } } }"#,
        )
        .unwrap();
        let report = validate_document(&doc);
        let c = codes(&report);
        assert!(c.contains(&DUP_NODE_ID));
        assert!(c.contains(&DUP_SCENARIO_ID));
        assert!(c.contains(&EMPTY_STEPS));
        assert!(c.contains(&EMPTY_STEP_FIELD));
    }

    #[test]
    fn dependency_cycle_is_an_error() {
        let doc = parse_document(
            r#"node ROOT "r" { description: "" children {
                node A "a" { description: "" dependencies: [B] }
                node B "b" { description: "" dependencies: [A] } } }"#,
        )
        .unwrap();
        let report = validate_document(&doc);
        assert_eq!(codes(&report), vec![CYCLE_IN_DEPENDENCIES]);
        assert!(report.errors[0].message.contains("A -> B -> A"));
    }

    #[test]
    fn warnings() {
        let mut doc = parse_document(r#"node ROOT "r" { description: "see ![image](nope/missing.png)" }"#).unwrap();
        doc.source_path = Some("/nonexistent-dir/doc.req".into());
        let report = validate_document(&doc);
        assert!(report.is_ok());
        let w: Vec<&str> = report.warnings.iter().map(|f| f.code.as_str()).collect();
        assert_eq!(w, vec![NODE_WITHOUT_SCENARIOS, MISSING_IMAGE_FILE]);
    }

    #[test]
    fn images_in_order() {
        let doc = parse_document(
            r#"node ROOT "r" { description: "none" children {
                node REQ-1 "a" { description: "![image](shots/login.png) and ![image](shots/b.png)" } } }"#,
        )
        .unwrap();
        let images = extract_images(&doc);
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].0, "REQ-1");
        assert_eq!(images[0].1.path, "shots/login.png");
        assert_eq!(images[1].1.path, "shots/b.png");
        let plain = parse_document(r#"node ROOT "r" { description: "" }"#).unwrap();
        assert!(extract_images(&plain).is_empty());
    }
}
