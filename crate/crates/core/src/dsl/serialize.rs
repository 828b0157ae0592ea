use std::fmt::Write;

use super::ast::{Identifier, Node, RequirementDoc, Scenario};

/// Canonical text form: two-space indentation, LF line endings, keys in
/// grammar order, empty `dependencies`/`prerequisites`/`children` omitted.
pub fn serialize_document(doc: &RequirementDoc) -> String {
    let mut out = String::new();
    write_node(&mut out, &doc.root, 0);
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_node(out: &mut String, node: &Node, level: usize) {
    indent(out, level);
    let _ = writeln!(out, "node {} {} {{", node.id, quote(&node.name));
    indent(out, level + 1);
    let _ = writeln!(out, "description: {}", description_literal(&node.description.render()));
    if !node.dependencies.is_empty() {
        indent(out, level + 1);
        let _ = writeln!(out, "dependencies: {}", id_list(&node.dependencies));
    }
    for scenario in &node.scenarios {
        write_scenario(out, scenario, level + 1);
    }
    if !node.children.is_empty() {
        indent(out, level + 1);
        out.push_str("children {\n");
        for child in &node.children {
            write_node(out, child, level + 2);
        }
        indent(out, level + 1);
        out.push_str("}\n");
    }
    indent(out, level);
    out.push_str("}\n");
}

fn write_scenario(out: &mut String, scenario: &Scenario, level: usize) {
    indent(out, level);
    let _ = writeln!(out, "scenario {} {} {{", scenario.id, quote(&scenario.name));
    if !scenario.prerequisites.is_empty() {
        indent(out, level + 1);
        let _ = writeln!(out, "prerequisites: {}", id_list(&scenario.prerequisites));
    }
    for step in &scenario.steps {
        indent(out, level + 1);
        out.push_str("step {\n");
        for (key, value) in [("given", &step.given), ("when", &step.when), ("then", &step.then)] {
            indent(out, level + 2);
            let _ = writeln!(out, "{key}: {}", quote(value));
        }
        indent(out, level + 1);
        out.push_str("}\n");
    }
    indent(out, level);
    out.push_str("}\n");
}

fn id_list(ids: &[Identifier]) -> String {
    let joined: Vec<&str> = ids.iter().map(Identifier::as_str).collect();
    format!("[{}]", joined.join(", "))
}

/// Multi-line descriptions use the triple-quoted form when it can carry the
/// text verbatim.
fn description_literal(text: &str) -> String {
    let triple_safe = text.contains('\n') && !text.contains("\"\"\"") && !text.ends_with('"');
    if triple_safe {
        format!("\"\"\"\n{text}\"\"\"")
    } else {
        quote(text)
    }
}

pub(crate) fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
