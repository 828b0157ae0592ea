//! The boundary to whatever makes generative decisions.
//!
//! Every request goes through a [`Gateway`], which renders the prompt for the
//! request kind, asks the configured [`AgentBackend`] for a reply, checks the
//! reply against the expected response shape, and appends one record to the
//! transcript. Backends only move text; parsing and validation happen here.

mod fixture;
mod http;
pub mod prompt;
mod transcript;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::dsl::{Identifier, Scenario};
use crate::interface::{InterfaceId, InterfaceSig};
use crate::system::SourceFile;
use crate::trace::TraceTuple;
use crate::verification::TestCase;

pub use fixture::{FixtureBackend, FixtureEntry};
pub use http::{HttpBackend, HttpConfig};
pub use prompt::{PromptSet, PromptTemplate};
pub use transcript::{Transcript, TranscriptRecord};

pub mod codes {
    pub const TRANSPORT: &str = "TRANSPORT";
    pub const MALFORMED_RESPONSE: &str = "MALFORMED_RESPONSE";
    pub const REFUSAL: &str = "REFUSAL";
    pub const MISSING_PLACEHOLDER: &str = "MISSING_PLACEHOLDER";
    pub const BAD_TEMPLATE: &str = "BAD_TEMPLATE";
    pub const TRANSCRIPT: &str = "TRANSCRIPT";
    pub const CONFIG: &str = "CONFIG";
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error("TRANSPORT: {0}")]
    Transport(String),
    #[error("MALFORMED_RESPONSE: {message}")]
    MalformedResponse { message: String, raw: Option<String> },
    #[error("REFUSAL: {0}")]
    Refusal(String),
    #[error("MISSING_PLACEHOLDER: template needs {{{0}}}")]
    MissingPlaceholder(String),
    #[error("BAD_TEMPLATE: {template}: {message}")]
    BadTemplate { template: String, message: String },
    #[error("TRANSCRIPT: {0}")]
    Transcript(String),
    #[error("CONFIG: {0}")]
    Config(String),
}

impl AgentError {
    pub fn code(&self) -> &'static str {
        match self {
            AgentError::Transport(_) => codes::TRANSPORT,
            AgentError::MalformedResponse { .. } => codes::MALFORMED_RESPONSE,
            AgentError::Refusal(_) => codes::REFUSAL,
            AgentError::MissingPlaceholder(_) => codes::MISSING_PLACEHOLDER,
            AgentError::BadTemplate { .. } => codes::BAD_TEMPLATE,
            AgentError::Transcript(_) => codes::TRANSCRIPT,
            AgentError::Config(_) => codes::CONFIG,
        }
    }

    pub fn malformed(message: impl Into<String>, raw: Option<String>) -> Self {
        AgentError::MalformedResponse {
            message: message.into(),
            raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    SynthesizeInterfaces,
    AdaptInterface,
    GenerateTestScripts,
    GenerateCode,
    CaptionImage,
}

impl RequestKind {
    pub const ALL: [RequestKind; 5] = [
        RequestKind::SynthesizeInterfaces,
        RequestKind::AdaptInterface,
        RequestKind::GenerateTestScripts,
        RequestKind::GenerateCode,
        RequestKind::CaptionImage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::SynthesizeInterfaces => "synthesize_interfaces",
            RequestKind::AdaptInterface => "adapt_interface",
            RequestKind::GenerateTestScripts => "generate_test_scripts",
            RequestKind::GenerateCode => "generate_code",
            RequestKind::CaptionImage => "caption_image",
        }
    }

    /// The `kind` tag of the reply this request expects.
    pub fn response_tag(self) -> &'static str {
        match self {
            RequestKind::SynthesizeInterfaces => "interfaces",
            RequestKind::AdaptInterface => "adapted",
            RequestKind::GenerateTestScripts => "test_scripts",
            RequestKind::GenerateCode => "code",
            RequestKind::CaptionImage => "caption",
        }
    }

    fn template_id(self) -> &'static str {
        self.as_str()
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCaption {
    pub path: String,
    pub text: String,
}

/// What the agent is told about the requirement node itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementBrief {
    pub id: Identifier,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub image_captions: Vec<ImageCaption>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
    /// Declared cross-tree dependencies, passed along as context only.
    #[serde(default)]
    pub dependencies: Vec<Identifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<Identifier>,
}

impl RequirementBrief {
    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {} {}\n", self.id, self.name);
        if let Some(parent) = &self.parent {
            out.push_str(&format!("Parent: {parent}\n"));
        }
        let description = self.description.trim();
        out.push('\n');
        out.push_str(if description.is_empty() { "(no description)" } else { description });
        out.push('\n');
        if !self.image_captions.is_empty() {
            out.push_str("\nUI Descriptions:\n");
            for c in &self.image_captions {
                out.push_str(&format!("- {}:\n{}\n", c.path, c.text.trim_end()));
            }
        }
        if !self.dependencies.is_empty() {
            let deps: Vec<&str> = self.dependencies.iter().map(Identifier::as_str).collect();
            out.push_str(&format!("\nDepends on: {}\n", deps.join(", ")));
        }
        out.push_str("\nAcceptance Scenarios:\n");
        if self.scenarios.is_empty() {
            out.push_str("(none)\n");
        }
        for s in &self.scenarios {
            out.push_str(&format!("- {} {}", s.id, s.name));
            if !s.prerequisites.is_empty() {
                let pre: Vec<&str> = s.prerequisites.iter().map(Identifier::as_str).collect();
                out.push_str(&format!(" (after {})", pre.join(", ")));
            }
            out.push('\n');
            for step in &s.steps {
                out.push_str(&format!(
                    "  - Given {}\n    When {}\n    Then {}\n",
                    step.given, step.when, step.then
                ));
            }
        }
        out
    }
}

/// Inputs of one request, one variant per request kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestContext {
    SynthesizeInterfaces {
        requirement: RequirementBrief,
        ancestor_interfaces: Vec<InterfaceSig>,
        adapted_interfaces: Vec<InterfaceSig>,
    },
    AdaptInterface {
        requirement: RequirementBrief,
        interface: InterfaceSig,
        ancestor_tests: Vec<TestCase>,
    },
    GenerateTestScripts {
        requirement: RequirementBrief,
        interfaces: Vec<InterfaceSig>,
        skeletons: Vec<TestCase>,
    },
    GenerateCode {
        requirement: RequirementBrief,
        interfaces: Vec<InterfaceSig>,
        /// Callees of this node's interfaces.
        dependencies: Vec<InterfaceSig>,
        call_graph: Vec<(InterfaceId, InterfaceId)>,
        trace: Vec<TraceTuple>,
        tests: Vec<TestCase>,
        feedback: String,
        budget_remaining: u32,
    },
    CaptionImage {
        image_path: String,
        /// Resolved location of the image on disk, when known.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image_file: Option<String>,
    },
}

impl RequestContext {
    pub fn kind(&self) -> RequestKind {
        match self {
            RequestContext::SynthesizeInterfaces { .. } => RequestKind::SynthesizeInterfaces,
            RequestContext::AdaptInterface { .. } => RequestKind::AdaptInterface,
            RequestContext::GenerateTestScripts { .. } => RequestKind::GenerateTestScripts,
            RequestContext::GenerateCode { .. } => RequestKind::GenerateCode,
            RequestContext::CaptionImage { .. } => RequestKind::CaptionImage,
        }
    }

    /// Template variables for this context.
    pub fn variables(&self) -> BTreeMap<&'static str, String> {
        fn listing<T: Serialize>(items: &[T]) -> String {
            if items.is_empty() {
                "(none)".to_owned()
            } else {
                serde_json::to_string_pretty(items).expect("context values serialize")
            }
        }
        let mut vars = BTreeMap::new();
        match self {
            RequestContext::SynthesizeInterfaces {
                requirement,
                ancestor_interfaces,
                adapted_interfaces,
            } => {
                vars.insert("requirement", requirement.to_markdown());
                vars.insert("ancestor_interfaces", listing(ancestor_interfaces));
                vars.insert("adapted_interfaces", listing(adapted_interfaces));
            }
            RequestContext::AdaptInterface {
                requirement,
                interface,
                ancestor_tests,
            } => {
                vars.insert("requirement", requirement.to_markdown());
                vars.insert("interface", serde_json::to_string_pretty(interface).expect("serializes"));
                vars.insert("ancestor_tests", listing(ancestor_tests));
            }
            RequestContext::GenerateTestScripts {
                requirement,
                interfaces,
                skeletons,
            } => {
                vars.insert("requirement", requirement.to_markdown());
                vars.insert("interfaces", listing(interfaces));
                vars.insert("skeletons", listing(skeletons));
            }
            RequestContext::GenerateCode {
                requirement,
                interfaces,
                dependencies,
                call_graph,
                trace,
                tests,
                feedback,
                budget_remaining,
            } => {
                vars.insert("requirement", requirement.to_markdown());
                vars.insert("interfaces", listing(interfaces));
                vars.insert("dependencies", listing(dependencies));
                let edges: Vec<String> = call_graph.iter().map(|(a, b)| format!("{a} -> {b}")).collect();
                vars.insert(
                    "call_graph",
                    if edges.is_empty() { "(none)".to_owned() } else { edges.join("\n") },
                );
                let tuples: Vec<String> = trace.iter().map(ToString::to_string).collect();
                vars.insert(
                    "trace",
                    if tuples.is_empty() { "(none)".to_owned() } else { tuples.join("\n") },
                );
                vars.insert("tests", listing(tests));
                vars.insert(
                    "feedback",
                    if feedback.is_empty() { "(none)".to_owned() } else { feedback.clone() },
                );
                vars.insert("budget_remaining", budget_remaining.to_string());
            }
            RequestContext::CaptionImage { image_path, .. } => {
                vars.insert("image_path", image_path.clone());
            }
        }
        vars
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub node_id: Identifier,
    /// Narrows the request within a node: the ancestor interface being
    /// adapted, or the image being captioned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    /// 1-based; a validation re-ask or a later GenCode attempt counts up.
    pub attempt: u32,
    /// Problems found in the previous reply to the same request.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub review: Vec<String>,
    pub context: RequestContext,
}

impl AgentRequest {
    pub fn new(node_id: Identifier, context: RequestContext) -> Self {
        Self {
            node_id,
            subject: None,
            attempt: 1,
            review: Vec::new(),
            context,
        }
    }

    pub fn kind(&self) -> RequestKind {
        self.context.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestScript {
    pub case_id: Identifier,
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentResponse {
    Interfaces {
        interfaces: Vec<InterfaceSig>,
    },
    Adapted {
        interface: Option<InterfaceSig>,
        #[serde(default)]
        reused_tests: Vec<Identifier>,
    },
    TestScripts {
        scripts: Vec<TestScript>,
    },
    Code {
        files: Vec<SourceFile>,
    },
    Caption {
        text: String,
    },
}

impl AgentResponse {
    pub fn tag(&self) -> &'static str {
        match self {
            AgentResponse::Interfaces { .. } => "interfaces",
            AgentResponse::Adapted { .. } => "adapted",
            AgentResponse::TestScripts { .. } => "test_scripts",
            AgentResponse::Code { .. } => "code",
            AgentResponse::Caption { .. } => "caption",
        }
    }
}

/// Workspace-relative, forward-slash, no `..`, no absolute or empty paths.
pub fn is_safe_relative_path(path: &str) -> bool {
    !path.is_empty()
        && !path.starts_with('/')
        && !path.contains('\\')
        && !path.contains(':')
        && path.split('/').all(|part| !part.is_empty() && part != "." && part != "..")
}

/// Strips a Markdown code fence, if the whole reply is wrapped in one.
fn unfence(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses a backend reply into the response shape `kind` expects.
pub fn parse_response(kind: RequestKind, raw: &str) -> Result<AgentResponse, AgentError> {
    let malformed = |message: String| AgentError::malformed(message, Some(raw.to_owned()));
    let body = unfence(raw);
    let mut value: serde_json::Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(_) if kind == RequestKind::CaptionImage && !body.is_empty() => {
            return Ok(AgentResponse::Caption { text: body.to_owned() })
        }
        Err(e) => return Err(malformed(format!("reply is not JSON: {e}"))),
    };
    let Some(object) = value.as_object_mut() else {
        return Err(malformed("reply is not a JSON object".into()));
    };
    let tag = kind.response_tag();
    match object.get("kind").and_then(|k| k.as_str()) {
        None => {
            object.insert("kind".into(), tag.into());
        }
        Some(found) if found != tag => {
            return Err(malformed(format!("expected a \"{tag}\" reply, got \"{found}\"")));
        }
        Some(_) => {}
    }
    let response: AgentResponse =
        serde_json::from_value(value).map_err(|e| malformed(format!("reply does not match the {tag} shape: {e}")))?;
    match &response {
        AgentResponse::TestScripts { scripts } => {
            if let Some(bad) = scripts.iter().find(|s| !is_safe_relative_path(&s.path)) {
                return Err(malformed(format!("unsafe script path {:?}", bad.path)));
            }
        }
        AgentResponse::Code { files } => {
            if let Some(bad) = files.iter().find(|f| !is_safe_relative_path(&f.path)) {
                return Err(malformed(format!("unsafe code path {:?}", bad.path)));
            }
        }
        AgentResponse::Caption { text } if text.trim().is_empty() => {
            return Err(malformed("empty caption".into()));
        }
        _ => {}
    }
    Ok(response)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

/// Something that turns a rendered prompt into reply text.
pub trait AgentBackend: Send {
    fn name(&self) -> String;

    fn complete(&self, request: &AgentRequest, prompt: &RenderedPrompt) -> Result<String, AgentError>;
}

/// `fixture:<path>` or `http`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BackendSpec {
    Fixture(PathBuf),
    Http,
}

impl FromStr for BackendSpec {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("fixture", path)) if !path.is_empty() => Ok(BackendSpec::Fixture(PathBuf::from(path))),
            _ if s == "http" => Ok(BackendSpec::Http),
            _ => Err(AgentError::Config(format!(
                "backend {s:?}: expected \"fixture:<path>\" or \"http\""
            ))),
        }
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = AgentError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Fixture(path) => write!(f, "fixture:{}", path.display()),
            BackendSpec::Http => f.write_str("http"),
        }
    }
}

impl From<BackendSpec> for String {
    fn from(value: BackendSpec) -> Self {
        value.to_string()
    }
}

impl BackendSpec {
    /// Builds the backend; the HTTP backend reads `REQC_HTTP_BASE`,
    /// `REQC_MODEL` and `REQC_API_KEY`.
    pub fn build(&self) -> Result<Box<dyn AgentBackend>, AgentError> {
        match self {
            BackendSpec::Fixture(path) => Ok(Box::new(FixtureBackend::load(path)?)),
            BackendSpec::Http => Ok(Box::new(HttpBackend::new(HttpConfig::from_env()?)?)),
        }
    }
}

/// The `b` of the implementation loop: how many GenCode attempts a node gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Budget {
    max_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("budget must be a positive number of attempts")]
pub struct InvalidBudget;

impl Budget {
    pub const DEFAULT: u32 = 3;

    pub fn new(max_attempts: u32) -> Result<Self, InvalidBudget> {
        if max_attempts == 0 {
            Err(InvalidBudget)
        } else {
            Ok(Self { max_attempts })
        }
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts
    }

    pub fn start(&self) -> BudgetCounter {
        BudgetCounter {
            remaining: self.max_attempts,
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_attempts: Self::DEFAULT,
        }
    }
}

impl TryFrom<u32> for Budget {
    type Error = InvalidBudget;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Budget::new(value)
    }
}

impl From<Budget> for u32 {
    fn from(value: Budget) -> Self {
        value.max_attempts
    }
}

/// Attempts left within one implementation loop. Never goes below zero.
#[derive(Debug, Clone)]
pub struct BudgetCounter {
    remaining: u32,
}

impl BudgetCounter {
    pub fn remaining(&self) -> u32 {
        self.remaining
    }

    /// Takes one attempt, returning false once the budget is spent.
    pub fn spend(&mut self) -> bool {
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        true
    }
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Renders, dispatches, validates and logs every agent request of a session.
pub struct Gateway {
    backend: Box<dyn AgentBackend>,
    prompts: PromptSet,
    transcript: Transcript,
}

impl Gateway {
    pub fn new(backend: Box<dyn AgentBackend>, prompts: PromptSet, transcript: Transcript) -> Self {
        Self {
            backend,
            prompts,
            transcript,
        }
    }

    pub fn backend_name(&self) -> String {
        self.backend.name()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn render(&self, request: &AgentRequest) -> Result<RenderedPrompt, AgentError> {
        let kind = request.kind();
        let mut vars = request.context.variables();
        vars.insert("node_id", request.node_id.to_string());
        vars.insert("attempt", request.attempt.to_string());
        let mut user = self.prompts.get(kind.template_id()).render(&vars)?;
        if !request.review.is_empty() {
            user.push_str("\n## Previous Reply Rejected\n");
            for problem in &request.review {
                user.push_str(&format!("- {problem}\n"));
            }
        }
        let system = match kind {
            RequestKind::CaptionImage => String::new(),
            _ => self.prompts.get(prompt::SYSTEM).render(&vars)?,
        };
        Ok(RenderedPrompt { system, user })
    }

    /// Sends one request. Exactly one transcript record is appended whatever
    /// the outcome.
    pub fn invoke(&mut self, request: &AgentRequest) -> Result<AgentResponse, AgentError> {
        let timestamp_ms = now_millis();
        let mut prompt_text = String::new();
        let mut raw_response = None;
        let result = self.render(request).and_then(|prompt| {
            prompt_text = prompt.user.clone();
            let raw = self.backend.complete(request, &prompt)?;
            raw_response = Some(raw.clone());
            parse_response(request.kind(), &raw)
        });
        if let Err(AgentError::MalformedResponse { raw: Some(raw), .. }) = &result {
            raw_response.get_or_insert_with(|| raw.clone());
        }
        let record = TranscriptRecord {
            seq: self.transcript.len() as u64 + 1,
            timestamp_ms,
            kind: request.kind(),
            node_id: request.node_id.clone(),
            subject: request.subject.clone(),
            attempt: request.attempt,
            request: request.clone(),
            prompt: prompt_text,
            raw_response,
            outcome: match &result {
                Ok(_) => "ok".to_owned(),
                Err(e) => e.code().to_owned(),
            },
            error: result.as_ref().err().map(ToString::to_string),
        };
        self.transcript.append(record)?;
        result
    }
}
