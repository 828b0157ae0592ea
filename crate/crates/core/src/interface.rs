//! Interface signatures (UI, API, DB), the events that connect them, data-flow
//! matching and the interface call graph.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::finding::Finding;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InterfaceId(pub String);

impl InterfaceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InterfaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for InterfaceId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// JSON value kinds allowed in event payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    String,
    Number,
    Boolean,
    Object,
    Array,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PayloadField {
    pub name: String,
    #[serde(rename = "type")]
    pub field_type: FieldType,
}

/// Ordered payload fields. Equality ignores field order.
#[derive(Debug, Clone, Default, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PayloadSchema {
    pub fields: Vec<PayloadField>,
}

impl PayloadSchema {
    pub fn new(fields: impl IntoIterator<Item = (&'static str, FieldType)>) -> Self {
        Self {
            fields: fields
                .into_iter()
                .map(|(name, field_type)| PayloadField {
                    name: name.to_owned(),
                    field_type,
                })
                .collect(),
        }
    }

    fn canonical(&self) -> BTreeSet<&PayloadField> {
        self.fields.iter().collect()
    }
}

impl PartialEq for PayloadSchema {
    fn eq(&self, other: &Self) -> bool {
        self.fields.len() == other.fields.len() && self.canonical() == other.canonical()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub name: String,
    #[serde(default)]
    pub payload: PayloadSchema,
}

impl Event {
    pub fn new(name: impl Into<String>, payload: PayloadSchema) -> Self {
        Self {
            name: name.into(),
            payload,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fields: Vec<String> = self
            .payload
            .fields
            .iter()
            .map(|p| format!("{}: {}", p.name, serde_json::to_value(p.field_type).unwrap().as_str().unwrap()))
            .collect();
        write!(f, "{}({})", self.name, fields.join(", "))
    }
}

/// A function header such as `authService.login(username: string, password: string) -> LoginResponse`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataOperation {
    pub header: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationHeader {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub returns: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed operation header at byte {offset}: {message}")]
pub struct HeaderError {
    pub offset: usize,
    pub message: String,
}

impl DataOperation {
    pub fn new(header: impl Into<String>) -> Self {
        Self { header: header.into() }
    }

    pub fn parse(&self) -> Result<OperationHeader, HeaderError> {
        HeaderParser {
            src: &self.header,
            pos: 0,
        }
        .header()
    }
}

/// `header := path '(' [param {',' param}] ')' '->' type`
/// `path := ident {'.' ident}`, `param := ident ':' type`,
/// `type := ident ['<' type {',' type} '>'] {'[]'}`
struct HeaderParser<'a> {
    src: &'a str,
    pos: usize,
}

impl HeaderParser<'_> {
    fn err<T>(&self, message: &str) -> Result<T, HeaderError> {
        Err(HeaderError {
            offset: self.pos,
            message: message.to_owned(),
        })
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(0, char::len_utf8);
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, HeaderError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit())))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return self.err("expected identifier");
        }
        self.pos += len;
        Ok(rest[..len].to_owned())
    }

    fn type_expr(&mut self) -> Result<String, HeaderError> {
        let mut out = self.ident()?;
        if self.eat("<") {
            let mut args = vec![self.type_expr()?];
            while self.eat(",") {
                args.push(self.type_expr()?);
            }
            if !self.eat(">") {
                return self.err("expected `>`");
            }
            out = format!("{out}<{}>", args.join(", "));
        }
        while self.eat("[]") {
            out.push_str("[]");
        }
        Ok(out)
    }

    fn header(mut self) -> Result<OperationHeader, HeaderError> {
        let mut name = self.ident()?;
        while self.eat(".") {
            name.push('.');
            name.push_str(&self.ident()?);
        }
        if !self.eat("(") {
            return self.err("expected `(`");
        }
        let mut params = Vec::new();
        if !self.eat(")") {
            loop {
                let param = self.ident()?;
                if !self.eat(":") {
                    return self.err("expected `:` after parameter name");
                }
                params.push((param, self.type_expr()?));
                if self.eat(")") {
                    break;
                }
                if !self.eat(",") {
                    return self.err("expected `,` or `)`");
                }
            }
        }
        if !self.eat("->") {
            return self.err("expected `->`");
        }
        let returns = self.type_expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return self.err("trailing input");
        }
        Ok(OperationHeader { name, params, returns })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiInterfaceSig {
    pub id: InterfaceId,
    pub name: String,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub layout_notes: String,
    #[serde(default)]
    pub produces: Vec<Event>,
    #[serde(default)]
    pub consumes: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiInterfaceSig {
    pub id: InterfaceId,
    pub name: String,
    #[serde(default)]
    pub location: String,
    pub accepts: Event,
    #[serde(default)]
    pub operations: Vec<DataOperation>,
    #[serde(default)]
    pub emits: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    #[serde(default)]
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbInterfaceSig {
    pub id: InterfaceId,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    Ui,
    Api,
    Db,
}

impl fmt::Display for InterfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterfaceKind::Ui => "UI",
            InterfaceKind::Api => "API",
            InterfaceKind::Db => "DB",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InterfaceSig {
    Ui(UiInterfaceSig),
    Api(ApiInterfaceSig),
    Db(DbInterfaceSig),
}

impl InterfaceSig {
    pub fn id(&self) -> &InterfaceId {
        match self {
            InterfaceSig::Ui(s) => &s.id,
            InterfaceSig::Api(s) => &s.id,
            InterfaceSig::Db(s) => &s.id,
        }
    }

    pub fn kind(&self) -> InterfaceKind {
        match self {
            InterfaceSig::Ui(_) => InterfaceKind::Ui,
            InterfaceSig::Api(_) => InterfaceKind::Api,
            InterfaceSig::Db(_) => InterfaceKind::Db,
        }
    }

    /// Events this interface sends out.
    pub fn outgoing(&self) -> &[Event] {
        match self {
            InterfaceSig::Ui(s) => &s.produces,
            InterfaceSig::Api(s) => &s.emits,
            InterfaceSig::Db(_) => &[],
        }
    }

    /// Events this interface receives.
    pub fn incoming(&self) -> &[Event] {
        match self {
            InterfaceSig::Ui(s) => &s.consumes,
            InterfaceSig::Api(s) => std::slice::from_ref(&s.accepts),
            InterfaceSig::Db(_) => &[],
        }
    }
}

pub mod codes {
    pub const EMPTY_ID: &str = "EMPTY_ID";
    pub const EMPTY_EVENT_NAME: &str = "EMPTY_EVENT_NAME";
    pub const DUP_PAYLOAD_FIELD: &str = "DUP_PAYLOAD_FIELD";
    pub const SELF_CONSUMED_EVENT: &str = "SELF_CONSUMED_EVENT";
    pub const NO_OPERATIONS: &str = "NO_OPERATIONS";
    pub const BAD_OPERATION_HEADER: &str = "BAD_OPERATION_HEADER";
    pub const NO_ENTITIES: &str = "NO_ENTITIES";
    pub const DUP_ENTITY: &str = "DUP_ENTITY";
    pub const DUP_ATTRIBUTE: &str = "DUP_ATTRIBUTE";
    pub const EMPTY_NAME: &str = "EMPTY_NAME";
    pub const SCHEMA_MISMATCH: &str = "SCHEMA_MISMATCH";
}

fn check_event(id: &InterfaceId, event: &Event, findings: &mut Vec<Finding>) {
    if event.name.trim().is_empty() {
        findings.push(Finding::new(codes::EMPTY_EVENT_NAME, id.as_str(), "event with an empty name"));
    }
    let mut seen = HashSet::new();
    for field in &event.payload.fields {
        if !seen.insert(field.name.as_str()) {
            findings.push(Finding::new(
                codes::DUP_PAYLOAD_FIELD,
                id.as_str(),
                format!("event {} declares payload field {} twice", event.name, field.name),
            ));
        }
    }
}

/// Every violated signature invariant; empty iff the signature is well formed.
pub fn check_signature(sig: &InterfaceSig) -> Vec<Finding> {
    let mut findings = Vec::new();
    let id = sig.id();
    if id.0.trim().is_empty() {
        findings.push(Finding::new(codes::EMPTY_ID, "", "interface with an empty id"));
    }
    match sig {
        InterfaceSig::Ui(ui) => {
            for event in ui.produces.iter().chain(&ui.consumes) {
                check_event(id, event, &mut findings);
            }
            let produced: BTreeSet<&str> = ui.produces.iter().map(|e| e.name.as_str()).collect();
            for event in &ui.consumes {
                if produced.contains(event.name.as_str()) {
                    findings.push(Finding::new(
                        codes::SELF_CONSUMED_EVENT,
                        id.as_str(),
                        format!("UI both produces and consumes {}", event.name),
                    ));
                }
            }
        }
        InterfaceSig::Api(api) => {
            check_event(id, &api.accepts, &mut findings);
            for event in &api.emits {
                check_event(id, event, &mut findings);
            }
            if api.operations.is_empty() {
                findings.push(Finding::new(codes::NO_OPERATIONS, id.as_str(), "API declares no data operations"));
            }
            for op in &api.operations {
                if let Err(e) = op.parse() {
                    findings.push(Finding::new(
                        codes::BAD_OPERATION_HEADER,
                        id.as_str(),
                        format!("{:?}: {e}", op.header),
                    ));
                }
            }
        }
        InterfaceSig::Db(db) => {
            if db.entities.is_empty() {
                findings.push(Finding::new(codes::NO_ENTITIES, id.as_str(), "DB interface declares no entities"));
            }
            let mut names = HashSet::new();
            for entity in &db.entities {
                if entity.name.trim().is_empty() {
                    findings.push(Finding::new(codes::EMPTY_NAME, id.as_str(), "entity with an empty name"));
                }
                if !names.insert(entity.name.as_str()) {
                    findings.push(Finding::new(
                        codes::DUP_ENTITY,
                        id.as_str(),
                        format!("entity {} declared twice", entity.name),
                    ));
                }
                let mut attrs = HashSet::new();
                for attr in &entity.attributes {
                    if !attrs.insert(attr.as_str()) {
                        findings.push(Finding::new(
                            codes::DUP_ATTRIBUTE,
                            id.as_str(),
                            format!("entity {} declares attribute {attr} twice", entity.name),
                        ));
                    }
                }
            }
        }
    }
    findings
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataFlow {
    pub producer: InterfaceId,
    pub consumer: InterfaceId,
    pub event_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SchemaMismatch {
    pub producer: InterfaceId,
    pub consumer: InterfaceId,
    pub event_name: String,
}

impl SchemaMismatch {
    pub fn finding(&self) -> Finding {
        Finding::new(
            codes::SCHEMA_MISMATCH,
            self.consumer.as_str(),
            format!(
                "{} emits {} with a payload that differs from what {} accepts",
                self.producer, self.event_name, self.consumer
            ),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMatch {
    pub flows: Vec<DataFlow>,
    pub mismatches: Vec<SchemaMismatch>,
}

/// Links every producer of an event to every other interface consuming an
/// event of the same name. Payloads must be structurally equal; name matches
/// with differing payloads are reported as mismatches instead of flows.
///
/// Output is sorted, so it does not depend on input order.
pub fn match_data_flows<'a>(interfaces: impl IntoIterator<Item = &'a InterfaceSig>) -> FlowMatch {
    let interfaces: Vec<&InterfaceSig> = interfaces.into_iter().collect();
    let mut flows = BTreeSet::new();
    let mut mismatches = BTreeSet::new();
    for producer in &interfaces {
        for sent in producer.outgoing() {
            for consumer in &interfaces {
                if consumer.id() == producer.id() {
                    continue;
                }
                for received in consumer.incoming().iter().filter(|e| e.name == sent.name) {
                    if received.payload == sent.payload {
                        flows.insert(DataFlow {
                            producer: producer.id().clone(),
                            consumer: consumer.id().clone(),
                            event_name: sent.name.clone(),
                        });
                    } else {
                        mismatches.insert(SchemaMismatch {
                            producer: producer.id().clone(),
                            consumer: consumer.id().clone(),
                            event_name: sent.name.clone(),
                        });
                    }
                }
            }
        }
    }
    FlowMatch {
        flows: flows.into_iter().collect(),
        mismatches: mismatches.into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("UNKNOWN_INTERFACE: {0}")]
pub struct UnknownInterface(pub InterfaceId);

/// Caller -> callee edges between interfaces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CallGraph {
    pub edges: BTreeSet<(InterfaceId, InterfaceId)>,
}

impl CallGraph {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, caller: &str, callee: &str) -> bool {
        self.edges
            .iter()
            .any(|(a, b)| a.as_str() == caller && b.as_str() == callee)
    }

    pub fn callees_of<'a>(&'a self, caller: &'a InterfaceId) -> impl Iterator<Item = &'a InterfaceId> + 'a {
        self.edges.iter().filter(move |(a, _)| a == caller).map(|(_, b)| b)
    }

    /// Adds the full cross product `parents x children`. Existing edges are
    /// kept, so repeated application is a no-op.
    pub fn add_call_edges(
        &mut self,
        registry: &InterfaceRegistry,
        parents: &[InterfaceId],
        children: &[InterfaceId],
    ) -> Result<(), UnknownInterface> {
        for id in parents.iter().chain(children) {
            if !registry.contains(id) {
                return Err(UnknownInterface(id.clone()));
            }
        }
        for parent in parents {
            for child in children {
                self.edges.insert((parent.clone(), child.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisteredInterface {
    /// Requirement node that synthesized (or adapted) this signature.
    pub owner: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapted_from: Option<InterfaceId>,
    pub signature: InterfaceSig,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("DUPLICATE_INTERFACE: {0}")]
pub struct DuplicateInterface(pub InterfaceId);

/// All signatures of a compile session, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RegisteredInterface>", into = "Vec<RegisteredInterface>")]
pub struct InterfaceRegistry {
    entries: Vec<RegisteredInterface>,
    index: BTreeMap<InterfaceId, usize>,
}

impl TryFrom<Vec<RegisteredInterface>> for InterfaceRegistry {
    type Error = DuplicateInterface;

    fn try_from(entries: Vec<RegisteredInterface>) -> Result<Self, Self::Error> {
        Self::from_entries(entries)
    }
}

impl From<InterfaceRegistry> for Vec<RegisteredInterface> {
    fn from(registry: InterfaceRegistry) -> Self {
        registry.entries
    }
}

impl InterfaceRegistry {
    pub fn from_entries(entries: Vec<RegisteredInterface>) -> Result<Self, DuplicateInterface> {
        let mut registry = Self::default();
        for entry in entries {
            registry.register(entry)?;
        }
        Ok(registry)
    }

    pub fn register(&mut self, entry: RegisteredInterface) -> Result<(), DuplicateInterface> {
        let id = entry.signature.id().clone();
        if self.index.contains_key(&id) {
            return Err(DuplicateInterface(id));
        }
        self.index.insert(id, self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn contains(&self, id: &InterfaceId) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&RegisteredInterface> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[RegisteredInterface] {
        &self.entries
    }

    pub fn signatures(&self) -> impl Iterator<Item = &InterfaceSig> {
        self.entries.iter().map(|e| &e.signature)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The `interfaces.json` document: tagged signatures plus edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfacesDocument {
    pub version: u32,
    pub interfaces: Vec<RegisteredInterface>,
    pub call_edges: Vec<(InterfaceId, InterfaceId)>,
    pub data_flows: Vec<DataFlow>,
    pub schema_mismatches: Vec<SchemaMismatch>,
}

impl InterfacesDocument {
    pub const VERSION: u32 = 1;

    pub fn new(registry: &InterfaceRegistry, calls: &CallGraph) -> Self {
        let flows = match_data_flows(registry.signatures());
        Self {
            version: Self::VERSION,
            interfaces: registry.entries().to_vec(),
            call_edges: calls.edges.iter().cloned().collect(),
            data_flows: flows.flows,
            schema_mismatches: flows.mismatches,
        }
    }
}

#[cfg(test)]
pub(crate) mod samples {
    use super::*;

    pub fn login_ui() -> InterfaceSig {
        InterfaceSig::Ui(UiInterfaceSig {
            id: InterfaceId::new("ui.login-form"),
            name: "LoginForm".into(),
            location: "frontend/src/components/LoginForm".into(),
            layout_notes: String::new(),
            produces: vec![login_clicked()],
            consumes: vec![login_response()],
        })
    }

    pub fn login_clicked() -> Event {
        Event::new(
            "LoginClicked",
            PayloadSchema::new([("username", FieldType::String), ("password", FieldType::String)]),
        )
    }

    pub fn login_response() -> Event {
        Event::new(
            "LoginResponse",
            PayloadSchema::new([("success", FieldType::Boolean), ("message", FieldType::String)]),
        )
    }

    pub fn auth_api() -> InterfaceSig {
        InterfaceSig::Api(ApiInterfaceSig {
            id: InterfaceId::new("api.auth-login"),
            name: "POST /api/login".into(),
            location: "backend/routes/auth".into(),
            accepts: login_clicked(),
            operations: vec![DataOperation::new(
                "authService.login(username: string, password: string) -> LoginResponse",
            )],
            emits: vec![login_response()],
        })
    }

    pub fn user_db() -> InterfaceSig {
        InterfaceSig::Db(DbInterfaceSig {
            id: InterfaceId::new("db.user"),
            entities: vec![Entity {
                name: "User".into(),
                attributes: vec!["username".into(), "passwordHash".into()],
            }],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::samples::*;
    use super::*;

    #[test]
    fn login_flows_both_directions() {
        let sigs = [login_ui(), auth_api(), user_db()];
        let result = match_data_flows(&sigs);
        assert!(result.mismatches.is_empty());
        assert_eq!(
            result.flows,
            vec![
                DataFlow {
                    producer: InterfaceId::new("api.auth-login"),
                    consumer: InterfaceId::new("ui.login-form"),
                    event_name: "LoginResponse".into()
                },
                DataFlow {
                    producer: InterfaceId::new("ui.login-form"),
                    consumer: InterfaceId::new("api.auth-login"),
                    event_name: "LoginClicked".into()
                },
            ]
        );
    }

    #[test]
    fn payload_type_mismatch_reported_not_linked() {
        let producer = InterfaceSig::Ui(UiInterfaceSig {
            id: InterfaceId::new("p"),
            name: "p".into(),
            location: String::new(),
            layout_notes: String::new(),
            produces: vec![Event::new("E", PayloadSchema::new([("a", FieldType::String)]))],
            consumes: vec![],
        });
        let consumer = InterfaceSig::Api(ApiInterfaceSig {
            id: InterfaceId::new("c"),
            name: "c".into(),
            location: String::new(),
            accepts: Event::new("E", PayloadSchema::new([("a", FieldType::Number)])),
            operations: vec![DataOperation::new("f() -> void")],
            emits: vec![],
        });
        let result = match_data_flows([&producer, &consumer]);
        assert!(result.flows.is_empty());
        assert_eq!(result.mismatches.len(), 1);
        assert_eq!(result.mismatches[0].finding().code, codes::SCHEMA_MISMATCH);
    }

    #[test]
    fn payload_equality_ignores_order() {
        let a = PayloadSchema::new([("x", FieldType::String), ("y", FieldType::Number)]);
        let b = PayloadSchema::new([("y", FieldType::Number), ("x", FieldType::String)]);
        let c = PayloadSchema::new([("x", FieldType::String), ("x", FieldType::String), ("y", FieldType::Number)]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn signatures_checked() {
        assert!(check_signature(&user_db()).is_empty());
        assert!(check_signature(&auth_api()).is_empty());
        assert!(check_signature(&login_ui()).is_empty());

        let mut api = auth_api();
        if let InterfaceSig::Api(a) = &mut api {
            a.operations.clear();
        }
        let findings = check_signature(&api);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].code, codes::NO_OPERATIONS);

        let mut ui = login_ui();
        if let InterfaceSig::Ui(u) = &mut ui {
            u.consumes.push(login_clicked());
        }
        let findings = check_signature(&ui);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].code, codes::SELF_CONSUMED_EVENT);

        let db = InterfaceSig::Db(DbInterfaceSig {
            id: InterfaceId::new("db"),
            entities: vec![
                Entity { name: "A".into(), attributes: vec!["x".into(), "x".into()] },
                Entity { name: "A".into(), attributes: vec![] },
            ],
        });
        let codes: Vec<String> = check_signature(&db).into_iter().map(|f| f.code).collect();
        assert_eq!(codes, vec![codes::DUP_ATTRIBUTE, codes::DUP_ENTITY]);
    }

    #[test]
    fn operation_headers() {
        let op = DataOperation::new("authService.login(username: string, password: string) -> LoginResponse");
        let header = op.parse().unwrap();
        assert_eq!(header.name, "authService.login");
        assert_eq!(header.params.len(), 2);
        assert_eq!(header.returns, "LoginResponse");

        let generic = DataOperation::new("repo.find(ids: Array<number>[]) -> Map<string, User>");
        assert_eq!(generic.parse().unwrap().returns, "Map<string, User>");

        for bad in ["authService.login(username, password)", "f(x: ) -> y", "f() ->", "f() -> a b", "(x: y) -> z"] {
            assert!(DataOperation::new(bad).parse().is_err(), "{bad}");
        }
    }

    #[test]
    fn call_edges_cross_product_idempotent() {
        let mut registry = InterfaceRegistry::default();
        for id in ["P1", "C1", "C2"] {
            registry
                .register(RegisteredInterface {
                    owner: "N".into(),
                    adapted_from: None,
                    signature: InterfaceSig::Db(DbInterfaceSig { id: InterfaceId::new(id), entities: vec![] }),
                })
                .unwrap();
        }
        let p = [InterfaceId::new("P1")];
        let c = [InterfaceId::new("C1"), InterfaceId::new("C2")];
        let mut graph = CallGraph::default();
        graph.add_call_edges(&registry, &p, &c).unwrap();
        assert_eq!(graph.len(), 2);
        assert!(graph.contains("P1", "C1") && graph.contains("P1", "C2"));
        let snapshot = graph.clone();
        graph.add_call_edges(&registry, &p, &c).unwrap();
        assert_eq!(graph, snapshot);
        graph.add_call_edges(&registry, &p, &[]).unwrap();
        assert_eq!(graph, snapshot);
        assert_eq!(
            graph.add_call_edges(&registry, &p, &[InterfaceId::new("nope")]),
            Err(UnknownInterface(InterfaceId::new("nope")))
        );
    }

    #[test]
    fn registry_rejects_duplicates_and_round_trips() {
        let mut registry = InterfaceRegistry::default();
        let entry = RegisteredInterface { owner: "REQ-1".into(), adapted_from: None, signature: user_db() };
        registry.register(entry.clone()).unwrap();
        assert!(registry.register(entry).is_err());
        let json = serde_json::to_string(&registry).unwrap();
        let back: InterfaceRegistry = serde_json::from_str(&json).unwrap();
        assert_eq!(back, registry);
        assert!(json.contains("\"type\":\"db\""));
    }
}
