use std::collections::{BTreeMap, BTreeSet};

use crate::dsl::Identifier;
use crate::graph::ReqGraph;
use crate::system::SystemState;
use crate::verification::TestOutcome;

/// Share of the document's scenarios that at least one test case was
/// derived from. A document without scenarios scores 0.
pub fn alignment_metric(system: &SystemState, graph: &ReqGraph) -> f64 {
    let scenarios = graph.scenario_ids();
    if scenarios.is_empty() {
        return 0.0;
    }
    let sourced: BTreeSet<&Identifier> = system.cases().filter_map(|c| c.source_scenario.as_ref()).collect();
    let covered = scenarios.iter().filter(|s| sourced.contains(s)).count();
    covered as f64 / scenarios.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("MISSING_OUTCOME: no outcome for verification edge {code} -> {test}")]
pub struct MissingOutcome {
    pub code: Identifier,
    pub test: Identifier,
}

/// Number of verification edges whose test did not pass.
pub fn implementation_error_count(
    system: &SystemState,
    outcomes: &BTreeMap<Identifier, TestOutcome>,
) -> Result<usize, MissingOutcome> {
    let mut failing = 0;
    for (code, test) in &system.ver_edges {
        match outcomes.get(test) {
            Some(outcome) if outcome.passed => {}
            Some(_) => failing += 1,
            None => {
                return Err(MissingOutcome {
                    code: code.clone(),
                    test: test.clone(),
                })
            }
        }
    }
    Ok(failing)
}
