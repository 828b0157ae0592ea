use std::fmt;

use serde::{Deserialize, Serialize};

/// A requirement, scenario, or test-case identifier.
///
/// Identifiers match `[A-Za-z][A-Za-z0-9_-]*`; they end up in file names and
/// trace keys, so nothing outside that charset is admitted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Identifier(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid identifier {0:?}: expected [A-Za-z][A-Za-z0-9_-]*")]
pub struct InvalidIdentifier(pub String);

impl Identifier {
    pub fn new(text: impl Into<String>) -> Result<Self, InvalidIdentifier> {
        let text = text.into();
        if Self::is_valid(&text) {
            Ok(Self(text))
        } else {
            Err(InvalidIdentifier(text))
        }
    }

    pub fn is_valid(text: &str) -> bool {
        let mut chars = text.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() => {}
            _ => return false,
        }
        chars.all(is_id_continue)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub(crate) fn is_id_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

impl TryFrom<String> for Identifier {
    type Error = InvalidIdentifier;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Identifier::new(value)
    }
}

impl From<Identifier> for String {
    fn from(value: Identifier) -> Self {
        value.0
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for Identifier {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for Identifier {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl PartialEq<str> for Identifier {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for Identifier {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// An `![image](path)` tag inside a description.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub path: String,
}

impl ImageRef {
    pub fn new(path: impl Into<String>) -> Self {
        Self { path: path.into() }
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "![image]({})", self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Text(String),
    Image(ImageRef),
}

/// Description text interleaved with image tags.
///
/// Adjacent text spans are always merged, so two texts that render to the
/// same string have the same segment list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MultiModalText {
    segments: Vec<Segment>,
}

const IMAGE_OPEN: &str = "![image](";

impl MultiModalText {
    /// Splits raw description text into text spans and image references.
    pub fn parse(source: &str) -> Self {
        let mut out = Self::default();
        let mut rest = source;
        while let Some(start) = rest.find(IMAGE_OPEN) {
            let after = &rest[start + IMAGE_OPEN.len()..];
            let close = after
                .char_indices()
                .find(|&(_, c)| c == ')' || c == '\n')
                .filter(|&(i, c)| c == ')' && i > 0);
            match close {
                Some((end, _)) => {
                    out.push_text(&rest[..start]);
                    out.segments.push(Segment::Image(ImageRef::new(&after[..end])));
                    rest = &after[end + 1..];
                }
                None => {
                    // Not a well-formed tag; keep the opener as plain text.
                    out.push_text(&rest[..start + IMAGE_OPEN.len()]);
                    rest = after;
                }
            }
        }
        out.push_text(rest);
        out
    }

    pub fn from_segments(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut out = Self::default();
        for segment in segments {
            match segment {
                Segment::Text(text) => out.push_text(&text),
                Segment::Image(image) => out.segments.push(Segment::Image(image)),
            }
        }
        out
    }

    fn push_text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(Segment::Text(last)) = self.segments.last_mut() {
            last.push_str(text);
        } else {
            self.segments.push(Segment::Text(text.to_owned()));
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Image(image) => Some(image),
            Segment::Text(_) => None,
        })
    }

    /// True when the description carries neither non-blank text nor images.
    pub fn is_blank(&self) -> bool {
        self.segments.iter().all(|s| match s {
            Segment::Text(t) => t.trim().is_empty(),
            Segment::Image(_) => false,
        })
    }

    /// Reassembles the source text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Text(text) => out.push_str(text),
                Segment::Image(image) => out.push_str(&image.to_string()),
            }
        }
        out
    }
}

impl fmt::Display for MultiModalText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for MultiModalText {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for MultiModalText {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Ok(Self::parse(&text))
    }
}

/// One Given/When/Then step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub given: String,
    pub when: String,
    pub then: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: Identifier,
    pub name: String,
    #[serde(default)]
    pub prerequisites: Vec<Identifier>,
    #[serde(default)]
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: Identifier,
    pub name: String,
    #[serde(default)]
    pub description: MultiModalText,
    #[serde(default)]
    pub dependencies: Vec<Identifier>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub children: Vec<Node>,
}

impl Node {
    pub fn new(id: Identifier, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
            description: MultiModalText::default(),
            dependencies: Vec::new(),
            scenarios: Vec::new(),
            children: Vec::new(),
        }
    }

    /// Pre-order walk over this node and its descendants.
    pub fn walk(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    pub fn find(&self, id: &str) -> Option<&Node> {
        self.walk().into_iter().find(|n| n.id == id)
    }

    pub fn find_mut(&mut self, id: &str) -> Option<&mut Node> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    /// A node with no scenarios and no description content (text or images).
    pub fn is_management(&self) -> bool {
        self.scenarios.is_empty() && self.description.is_blank()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementDoc {
    pub root: Node,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<String>,
}

impl RequirementDoc {
    pub fn new(root: Node) -> Self {
        Self {
            root,
            source_path: None,
        }
    }

    /// Tree equality, ignoring where the document was loaded from.
    pub fn same_tree(&self, other: &RequirementDoc) -> bool {
        self.root == other.root
    }

    pub fn nodes(&self) -> Vec<&Node> {
        self.root.walk()
    }

    pub fn scenarios(&self) -> impl Iterator<Item = (&Node, &Scenario)> {
        self.nodes()
            .into_iter()
            .flat_map(|n| n.scenarios.iter().map(move |s| (n, s)))
    }
}
