use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgentBackend, AgentError, AgentRequest, RenderedPrompt, RequestContext, RequestKind};

/// One canned reply.
///
/// An entry answers requests of its `kind` for `node` (`"*"` matches any
/// node). `subject`, when set, must equal the request subject (`"*"` matches
/// any). `attempt` is the first attempt the entry applies to; later attempts
/// reuse it until a higher-numbered entry takes over. Exact node and subject
/// matches beat wildcards, then the highest applicable attempt wins.
///
/// Exactly one of `response`, `refusal` or `raw` is given. In `response`
/// string values, `{node_id}`, `{attempt}` and `{subject}` are substituted,
/// and a test script whose `case_id` is `"*"` is expanded once per skeleton
/// in the request with `{case_id}` substituted as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub kind: RequestKind,
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal: Option<String>,
    /// Reply text passed through untouched, for exercising parse failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FixtureFile {
    #[serde(default = "default_version")]
    version: u32,
    entries: Vec<FixtureEntry>,
}

fn default_version() -> u32 {
    1
}

/// Deterministic backend answering from a fixture file.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    name: String,
    entries: Vec<FixtureEntry>,
}

const WILDCARD: &str = "*";

impl FixtureBackend {
    pub fn new(entries: Vec<FixtureEntry>) -> Result<Self, AgentError> {
        for (i, e) in entries.iter().enumerate() {
            let given = [e.response.is_some(), e.refusal.is_some(), e.raw.is_some()];
            if given.iter().filter(|&&g| g).count() != 1 {
                return Err(AgentError::Config(format!(
                    "fixture entry {i} ({} {}): give exactly one of response, refusal, raw",
                    e.kind, e.node
                )));
            }
            if e.attempt == Some(0) {
                return Err(AgentError::Config(format!("fixture entry {i}: attempts start at 1")));
            }
        }
        Ok(Self {
            name: "fixture".into(),
            entries,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let file: FixtureFile =
            serde_json::from_str(text).map_err(|e| AgentError::Config(format!("fixture file: {e}")))?;
        if file.version != 1 {
            return Err(AgentError::Config(format!("fixture file version {} is not supported", file.version)));
        }
        Self::new(file.entries)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::Config(format!("cannot read fixtures {}: {e}", path.display())))?;
        let mut backend = Self::from_json(&text)?;
        backend.name = format!("fixture:{}", path.display());
        Ok(backend)
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }

    /// The entry that answers `request`, if any.
    pub fn lookup(&self, request: &AgentRequest) -> Option<&FixtureEntry> {
        let mut best: Option<((bool, bool, u32), &FixtureEntry)> = None;
        for entry in &self.entries {
            if entry.kind != request.kind() {
                continue;
            }
            let node_exact = entry.node == request.node_id.as_str();
            if !node_exact && entry.node != WILDCARD {
                continue;
            }
            let subject_exact = match (&entry.subject, &request.subject) {
                (None, _) => false,
                (Some(s), _) if s == WILDCARD => false,
                (Some(s), Some(r)) if s == r => true,
                _ => continue,
            };
            let attempt = entry.attempt.unwrap_or(1);
            if attempt > request.attempt {
                continue;
            }
            let rank = (node_exact, subject_exact, attempt);
            if best.as_ref().is_none_or(|(b, _)| rank > *b) {
                best = Some((rank, entry));
            }
        }
        best.map(|(_, e)| e)
    }
}

fn substitute(value: &mut Value, vars: &[(&str, &str)]) {
    match value {
        Value::String(s) => {
            for (name, replacement) in vars {
                let hole = format!("{{{name}}}");
                if s.contains(&hole) {
                    *s = s.replace(&hole, replacement);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| substitute(v, vars)),
        Value::Object(map) => map.values_mut().for_each(|v| substitute(v, vars)),
        _ => {}
    }
}

fn expand_script_wildcards(response: &mut Value, request: &AgentRequest) {
    let RequestContext::GenerateTestScripts { skeletons, .. } = &request.context else {
        return;
    };
    let Some(scripts) = response.get_mut("scripts").and_then(Value::as_array_mut) else {
        return;
    };
    let mut expanded = Vec::new();
    for script in scripts.drain(..) {
        if script.get("case_id").and_then(Value::as_str) == Some(WILDCARD) {
            for case in skeletons {
                let mut copy = script.clone();
                copy["case_id"] = Value::String(case.id.to_string());
                substitute(&mut copy, &[("case_id", case.id.as_str())]);
                expanded.push(copy);
            }
        } else {
            expanded.push(script);
        }
    }
    *scripts = expanded;
}

impl AgentBackend for FixtureBackend {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, request: &AgentRequest, _prompt: &RenderedPrompt) -> Result<String, AgentError> {
        let Some(entry) = self.lookup(request) else {
            return Err(AgentError::malformed(
                format!(
                    "no fixture for ({}, {}, {}, attempt {})",
                    request.kind(),
                    request.node_id,
                    request.subject.as_deref().unwrap_or("-"),
                    request.attempt
                ),
                None,
            ));
        };
        if let Some(reason) = &entry.refusal {
            return Err(AgentError::Refusal(reason.clone()));
        }
        if let Some(raw) = &entry.raw {
            return Ok(raw.clone());
        }
        let mut response = entry.response.clone().expect("checked at load");
        let attempt = request.attempt.to_string();
        substitute(
            &mut response,
            &[
                ("node_id", request.node_id.as_str()),
                ("attempt", &attempt),
                ("subject", request.subject.as_deref().unwrap_or("")),
            ],
        );
        expand_script_wildcards(&mut response, request);
        Ok(serde_json::to_string(&response).expect("JSON values serialize"))
    }
}
