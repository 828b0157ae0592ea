//! The requirement document language.
//!
//! A document is a single root `node` block. Nodes carry a description that
//! may embed `![image](path)` tags, an optional `dependencies` list,
//! `scenario` blocks made of Given/When/Then `step`s, and a `children` block
//! of nested nodes. See `docs/dsl-grammar.md` for the full concrete grammar.

mod ast;
mod lexer;
mod parser;
mod serialize;
mod validate;

use std::fmt;

pub use ast::{
    Identifier, ImageRef, InvalidIdentifier, MultiModalText, Node, RequirementDoc, Scenario, Segment, Step,
};
pub use parser::MAX_DEPTH;
pub use serialize::serialize_document;
pub use validate::{extract_images, validate_document, ValidationReport};

pub mod codes {
    pub use super::validate::{
        CYCLE_IN_DEPENDENCIES, CYCLE_IN_PREREQUISITES, DUP_NODE_ID, DUP_SCENARIO_ID, EMPTY_STEPS,
        EMPTY_STEP_FIELD, MISSING_IMAGE_FILE, NODE_WITHOUT_SCENARIOS, SELF_DEPENDENCY,
        UNRESOLVED_DEPENDENCY, UNRESOLVED_PREREQUISITE,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    /// Grammar production that was being parsed.
    pub production: &'static str,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: in {}: {}", self.line, self.column, self.production, self.message)
    }
}

pub fn parse_document(source: &str) -> Result<RequirementDoc, ParseError> {
    parser::Parser::new(source)?.document()
}

/// Like [`parse_document`] but accepts raw bytes, rejecting invalid UTF-8.
pub fn parse_bytes(source: &[u8]) -> Result<RequirementDoc, ParseError> {
    match std::str::from_utf8(source) {
        Ok(text) => parse_document(text),
        Err(e) => {
            let prefix = &source[..e.valid_up_to()];
            let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
            let column = prefix.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
            Err(ParseError {
                line,
                column,
                production: "RequirementDoc",
                message: "input is not valid UTF-8".to_owned(),
            })
        }
    }
}

/// Reads and parses a `.req` file, recording its path on the document.
pub fn load_document(path: impl AsRef<std::path::Path>) -> Result<RequirementDoc, LoadError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut doc = parse_bytes(&bytes)?;
    doc.source_path = Some(path.display().to_string());
    Ok(doc)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
}
