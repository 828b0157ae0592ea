//! Requirement compiler core.
//!
//! Turns a requirement document into interfaces, test suites, code and a
//! traceability record by walking the requirement tree depth-first:
//! interfaces and tests are synthesized on the way down, implementations are
//! generated and verified against those tests on the way back up.

pub mod agent;
pub mod driver;
pub mod dsl;
pub mod finding;
pub mod graph;
pub mod interface;
pub mod system;
pub mod trace;
pub mod verification;

pub use dsl::{parse_document, serialize_document, validate_document, Identifier, RequirementDoc};
pub use finding::Finding;
pub use graph::{build_graph, NodeState, Phase, ReqGraph, ScheduleEntry};
pub use agent::{AgentBackend, AgentError, BackendSpec, Budget, FixtureBackend, Gateway, HttpBackend, PromptSet};
pub use driver::{
    compile, CompileConfig, CompileError, CompileEvent, CompileObserver, CompileReport, CompileSummary, HaltPoint,
};
pub use interface::{InterfaceId, InterfaceKind, InterfaceSig};
pub use system::SystemState;
pub use trace::{TraceStore, TraceTuple};
pub use verification::{PassRate, ProcessRunner, TestCase, TestKind, TestOutcome, TestSuite};
