use std::collections::BTreeMap;
use std::path::Path;

use super::AgentError;

/// A prompt body with `{name}` holes. `{{` and `}}` render as literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece<'a> {
    Text(&'a str),
    Brace(char),
    Hole(&'a str),
}

fn is_hole_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn pieces(body: &str) -> Result<Vec<Piece<'_>>, String> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(at) = rest.find(['{', '}']) {
        if at > 0 {
            out.push(Piece::Text(&rest[..at]));
        }
        let tail = &rest[at..];
        if tail.starts_with("{{") {
            out.push(Piece::Brace('{'));
            rest = &tail[2..];
        } else if tail.starts_with("}}") {
            out.push(Piece::Brace('}'));
            rest = &tail[2..];
        } else if tail.starts_with('{') {
            let close = tail.find('}').ok_or("unclosed '{'")?;
            let name = &tail[1..close];
            if !is_hole_name(name) {
                return Err(format!("invalid placeholder {{{name}}}"));
            }
            out.push(Piece::Hole(name));
            rest = &tail[close + 1..];
        } else {
            return Err("stray '}' (write '}}' for a literal brace)".into());
        }
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Result<Self, AgentError> {
        let template = Self {
            id: id.into(),
            body: body.into(),
        };
        pieces(&template.body).map_err(|message| AgentError::BadTemplate {
            template: template.id.clone(),
            message,
        })?;
        Ok(template)
    }

    /// Names of every placeholder, in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut names = Vec::new();
        for piece in pieces(&self.body).unwrap_or_default() {
            if let Piece::Hole(name) = piece {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }

    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, AgentError> {
        let parsed = pieces(&self.body).map_err(|message| AgentError::BadTemplate {
            template: self.id.clone(),
            message,
        })?;
        let mut out = String::with_capacity(self.body.len());
        for piece in parsed {
            match piece {
                Piece::Text(text) => out.push_str(text),
                Piece::Brace(c) => out.push(c),
                Piece::Hole(name) => match vars.get(name) {
                    Some(value) => out.push_str(value),
                    None => return Err(AgentError::MissingPlaceholder(name.to_owned())),
                },
            }
        }
        Ok(out)
    }
}

pub const SYSTEM: &str = "system";
pub const SYNTHESIZE_INTERFACES: &str = "synthesize_interfaces";
pub const ADAPT_INTERFACE: &str = "adapt_interface";
pub const GENERATE_TEST_SCRIPTS: &str = "generate_test_scripts";
pub const GENERATE_CODE: &str = "generate_code";
pub const CAPTION_IMAGE: &str = "caption_image";

const DEFAULTS: [(&str, &str); 6] = [
    (SYSTEM, include_str!("../../prompts/system.md")),
    (SYNTHESIZE_INTERFACES, include_str!("../../prompts/synthesize_interfaces.md")),
    (ADAPT_INTERFACE, include_str!("../../prompts/adapt_interface.md")),
    (GENERATE_TEST_SCRIPTS, include_str!("../../prompts/generate_test_scripts.md")),
    (GENERATE_CODE, include_str!("../../prompts/generate_code.md")),
    (CAPTION_IMAGE, include_str!("../../prompts/caption_image.md")),
];

/// The templates used by a gateway, keyed by id.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let templates = DEFAULTS
            .iter()
            .map(|(id, body)| {
                let t = PromptTemplate::new(*id, *body).expect("shipped templates are well-formed");
                (id.to_string(), t)
            })
            .collect();
        Self { templates }
    }
}

impl PromptSet {
    /// Shipped defaults, with any `<id>.md` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, AgentError> {
        let mut set = Self::default();
        for (id, _) in DEFAULTS {
            let path = dir.join(format!("{id}.md"));
            if path.is_file() {
                let body = std::fs::read_to_string(&path).map_err(|e| AgentError::BadTemplate {
                    template: id.to_owned(),
                    message: format!("{}: {e}", path.display()),
                })?;
                set.templates.insert(id.to_owned(), PromptTemplate::new(id, body)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> &PromptTemplate {
        &self.templates[id]
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}
