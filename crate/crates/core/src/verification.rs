//! Test artifacts: kinds, skeleton derivation from Given/When/Then steps,
//! execution through a runner adapter, and the pass-rate metric.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dsl::{Identifier, Scenario};
use crate::interface::{InterfaceId, InterfaceKind, InterfaceSig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    EndToEnd,
    Integration,
    Unit,
}

impl TestKind {
    pub fn tag(self) -> &'static str {
        match self {
            TestKind::EndToEnd => "E2E",
            TestKind::Integration => "INT",
            TestKind::Unit => "UNIT",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::EndToEnd => "end-to-end",
            TestKind::Integration => "integration",
            TestKind::Unit => "unit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifyError {
    #[error("UNSUPPORTED_PAIR: no test kind validates {0}")]
    UnsupportedPair(String),
    #[error("EMPTY_TARGETS: a test needs at least one target")]
    EmptyTargets,
}

/// UI+API is end-to-end; API+API and API+DB are integration; a single
/// interface is a unit. Three or more targets form an end-to-end test when
/// they include at least one UI and one API. Everything else is rejected.
pub fn classify_test_kind(targets: &[InterfaceKind]) -> Result<TestKind, ClassifyError> {
    use InterfaceKind::*;
    let has = |k: InterfaceKind| targets.contains(&k);
    match targets {
        [] => Err(ClassifyError::EmptyTargets),
        [_] => Ok(TestKind::Unit),
        [a, b] => match (a.min(b), a.max(b)) {
            (Ui, Api) => Ok(TestKind::EndToEnd),
            (Api, Api) | (Api, Db) => Ok(TestKind::Integration),
            _ => Err(ClassifyError::UnsupportedPair(describe(targets))),
        },
        _ if has(Ui) && has(Api) => Ok(TestKind::EndToEnd),
        _ => Err(ClassifyError::UnsupportedPair(describe(targets))),
    }
}

fn describe(targets: &[InterfaceKind]) -> String {
    targets.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" <-> ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: Identifier,
    pub kind: TestKind,
    pub targets: Vec<InterfaceId>,
    /// Set for unit tests of a single API data operation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_scenario: Option<Identifier>,
    /// Ancestor test cases reused as fixtures.
    #[serde(default)]
    pub fixtures: Vec<Identifier>,
    /// Given text not covered by a reusable fixture.
    #[serde(default)]
    pub fixture_notes: Vec<String>,
    #[serde(default)]
    pub actions: Vec<String>,
    #[serde(default)]
    pub assertions: Vec<String>,
    /// Workspace-relative path of the runnable script, once generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_path: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub node_id: Option<Identifier>,
    pub cases: Vec<TestCase>,
}

impl TestSuite {
    pub fn new(node_id: Identifier, cases: Vec<TestCase>) -> Self {
        Self {
            node_id: Some(node_id),
            cases,
        }
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &Identifier> {
        self.cases.iter().map(|c| &c.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub case_id: Identifier,
    pub passed: bool,
    pub feedback: String,
    pub duration_ms: u64,
}

/// Checks the per-kind target arity and that fixtures resolve.
pub fn check_case(case: &TestCase, kinds: &dyn Fn(&InterfaceId) -> Option<InterfaceKind>, known_cases: &dyn Fn(&Identifier) -> bool) -> Vec<String> {
    let mut problems = Vec::new();
    let target_kinds: Option<Vec<InterfaceKind>> = case.targets.iter().map(kinds).collect();
    match target_kinds {
        None => problems.push(format!("{}: target interface not registered", case.id)),
        Some(target_kinds) => match classify_test_kind(&target_kinds) {
            Ok(kind) if kind == case.kind => {}
            Ok(kind) => problems.push(format!("{}: declared {} but targets classify as {kind}", case.id, case.kind)),
            Err(e) => problems.push(format!("{}: {e}", case.id)),
        },
    }
    for fixture in &case.fixtures {
        if !known_cases(fixture) {
            problems.push(format!("{}: fixture {fixture} is not a known test case", case.id));
        }
    }
    problems
}

fn case_id(scenario: &Identifier, kind: TestKind, n: usize) -> Identifier {
    Identifier::new(format!("T-{scenario}-{}-{n}", kind.tag())).expect("derived from a valid identifier")
}

/// Turns one scenario into test skeletons for the given interfaces.
///
/// * end-to-end: every (UI, API) pair, asserting consistency of each event
///   the API sends back to the UI;
/// * integration: every API pair and every (API, DB) pair;
/// * unit: every interface on its own, plus one per API data operation.
///
/// `When` text becomes actions and `Then` text becomes assertions for every
/// skeleton. Ancestor tests sourced from one of the scenario's prerequisites
/// are wired in as fixtures; when any are found they stand in for the first
/// step's `Given`, and remaining `Given` text is kept as inline notes.
pub fn derive_test_skeletons(
    scenario: &Scenario,
    interfaces: &[InterfaceSig],
    ancestor_tests: &[TestCase],
) -> Vec<TestCase> {
    let prerequisites: BTreeSet<&Identifier> = scenario.prerequisites.iter().collect();
    let mut fixtures: Vec<Identifier> = Vec::new();
    for test in ancestor_tests {
        let sourced = test.source_scenario.as_ref().is_some_and(|s| prerequisites.contains(s));
        if sourced && !fixtures.contains(&test.id) {
            fixtures.push(test.id.clone());
        }
    }
    let skip_givens = usize::from(!fixtures.is_empty());
    let fixture_notes: Vec<String> = scenario
        .steps
        .iter()
        .skip(skip_givens)
        .map(|s| s.given.trim())
        .filter(|g| !g.is_empty())
        .map(str::to_owned)
        .collect();
    let actions: Vec<String> = scenario.steps.iter().map(|s| s.when.clone()).collect();
    let assertions: Vec<String> = scenario.steps.iter().map(|s| s.then.clone()).collect();

    let mut counters = [0usize; 3];
    let mut out = Vec::new();
    let mut push = |kind: TestKind, targets: Vec<InterfaceId>, operation: Option<String>, extra: Vec<String>, extra_actions: Vec<String>| {
        let slot = kind as usize;
        counters[slot] += 1;
        let mut case_actions = actions.clone();
        case_actions.extend(extra_actions);
        let mut case_assertions = assertions.clone();
        case_assertions.extend(extra);
        out.push(TestCase {
            id: case_id(&scenario.id, kind, counters[slot]),
            kind,
            targets,
            operation,
            source_scenario: Some(scenario.id.clone()),
            fixtures: fixtures.clone(),
            fixture_notes: fixture_notes.clone(),
            actions: case_actions,
            assertions: case_assertions,
            artifact_path: None,
        });
    };

    let of_kind = |k: InterfaceKind| interfaces.iter().filter(move |i| i.kind() == k);

    for ui in of_kind(InterfaceKind::Ui) {
        for api in of_kind(InterfaceKind::Api) {
            let replies: Vec<String> = api
                .outgoing()
                .iter()
                .filter(|sent| ui.incoming().iter().any(|r| r.name == sent.name && r.payload == sent.payload))
                .map(|e| format!("response consistent with {e}"))
                .collect();
            let requests: Vec<String> = ui
                .outgoing()
                .iter()
                .filter(|sent| api.incoming().iter().any(|r| r.name == sent.name && r.payload == sent.payload))
                .map(|e| format!("submit {e} from {}", ui.id()))
                .collect();
            push(TestKind::EndToEnd, vec![ui.id().clone(), api.id().clone()], None, replies, requests);
        }
    }
    let apis: Vec<&InterfaceSig> = of_kind(InterfaceKind::Api).collect();
    for (i, a) in apis.iter().enumerate() {
        for b in &apis[i + 1..] {
            push(TestKind::Integration, vec![a.id().clone(), b.id().clone()], None, vec![], vec![]);
        }
    }
    for api in &apis {
        for db in of_kind(InterfaceKind::Db) {
            push(TestKind::Integration, vec![api.id().clone(), db.id().clone()], None, vec![], vec![]);
        }
    }
    for sig in interfaces {
        push(TestKind::Unit, vec![sig.id().clone()], None, vec![], vec![]);
        if let InterfaceSig::Api(api) = sig {
            for op in &api.operations {
                push(
                    TestKind::Unit,
                    vec![sig.id().clone()],
                    Some(op.header.clone()),
                    vec![],
                    vec![format!("call {}", op.header)],
                );
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub passed: bool,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("RUNNER_UNAVAILABLE: {0}")]
pub struct RunnerUnavailable(pub String);

/// Adapter that executes one generated test artifact.
pub trait TestRunner: Send + Sync {
    /// `Err` only when the runner cannot launch anything at all; a test that
    /// crashes is a failed `RunResult`.
    fn run(&self, case: &TestCase, workspace: &Path) -> Result<RunResult, RunnerUnavailable>;

    fn parallel_safe(&self) -> bool {
        false
    }
}

/// Launches one process per artifact: exit status 0 passes, combined
/// stdout/stderr becomes feedback. `.sh` artifacts run under `sh` unless an
/// explicit interpreter is configured; anything else is executed directly.
#[derive(Debug, Clone, Default)]
pub struct ProcessRunner {
    pub interpreter: Option<String>,
    pub parallel: bool,
}

impl TestRunner for ProcessRunner {
    fn run(&self, case: &TestCase, workspace: &Path) -> Result<RunResult, RunnerUnavailable> {
        let Some(rel) = &case.artifact_path else {
            return Ok(RunResult {
                passed: false,
                output: format!("test {} has no generated artifact", case.id),
            });
        };
        let path = workspace.join(rel);
        if !path.is_file() {
            return Ok(RunResult {
                passed: false,
                output: format!("test artifact {rel} does not exist"),
            });
        }
        let interpreter = self
            .interpreter
            .clone()
            .or_else(|| rel.ends_with(".sh").then(|| "sh".to_owned()));
        let mut command = match &interpreter {
            Some(program) => {
                let mut c = Command::new(program);
                c.arg(rel);
                c
            }
            None => Command::new(&path),
        };
        command.current_dir(workspace).env("REQC_TEST_CASE", case.id.as_str());
        match command.output() {
            Ok(output) => {
                let mut text = String::from_utf8_lossy(&output.stdout).into_owned();
                text.push_str(&String::from_utf8_lossy(&output.stderr));
                Ok(RunResult {
                    passed: output.status.success(),
                    output: text,
                })
            }
            Err(e) if interpreter.is_some() && e.kind() == std::io::ErrorKind::NotFound => Err(RunnerUnavailable(
                format!("cannot launch {}: {e}", interpreter.unwrap_or_default()),
            )),
            Err(e) => Ok(RunResult {
                passed: false,
                output: format!("failed to launch {rel}: {e}"),
            }),
        }
    }

    fn parallel_safe(&self) -> bool {
        self.parallel
    }
}

fn outcome_of(case: &TestCase, result: RunResult, duration_ms: u64) -> TestOutcome {
    let feedback = if result.passed || !result.output.trim().is_empty() {
        result.output
    } else {
        format!("test {} failed without output", case.id)
    };
    TestOutcome {
        case_id: case.id.clone(),
        passed: result.passed,
        feedback,
        duration_ms,
    }
}

/// Runs every case of `suite`, one outcome per case in case order.
pub fn execute_suite(
    suite: &TestSuite,
    runner: &dyn TestRunner,
    workspace: &Path,
) -> Result<Vec<TestOutcome>, RunnerUnavailable> {
    let run_one = |case: &TestCase| -> Result<TestOutcome, RunnerUnavailable> {
        let started = Instant::now();
        let result = runner.run(case, workspace)?;
        Ok(outcome_of(case, result, started.elapsed().as_millis() as u64))
    };
    if runner.parallel_safe() && suite.cases.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = suite.cases.iter().map(|case| scope.spawn(move || run_one(case))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("test runner thread panicked"))
                .collect()
        })
    } else {
        suite.cases.iter().map(run_one).collect()
    }
}

/// `PASS|FAIL <case_id> <duration_ms>`, one line per outcome.
pub fn format_outcome_log(outcomes: &[TestOutcome]) -> String {
    outcomes
        .iter()
        .map(|o| format!("{} {} {}\n", if o.passed { "PASS" } else { "FAIL" }, o.case_id, o.duration_ms))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("EMPTY_OUTCOMES: pass rate of an empty outcome list is undefined")]
pub struct EmptyOutcomes;

/// `passed / total`, kept as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRate {
    pub passed: usize,
    pub total: usize,
}

impl PassRate {
    pub fn percent(&self) -> f64 {
        100.0 * self.passed as f64 / self.total as f64
    }

    /// Percentage in hundredths, rounded half up with integer arithmetic.
    pub fn hundredths(&self) -> u64 {
        let (p, t) = (self.passed as u64, self.total as u64);
        (20_000 * p + t) / (2 * t)
    }
}

impl fmt::Display for PassRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.hundredths();
        write!(f, "{}.{:02}", h / 100, h % 100)
    }
}

pub fn pass_rate(outcomes: &[TestOutcome]) -> Result<PassRate, EmptyOutcomes> {
    if outcomes.is_empty() {
        return Err(EmptyOutcomes);
    }
    Ok(PassRate {
        passed: outcomes.iter().filter(|o| o.passed).count(),
        total: outcomes.len(),
    })
}
