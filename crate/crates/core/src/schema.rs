//! A minimal structured-schema language for action bodies and tool parameters.
//!
//! Schemas are deliberately small: an object with named, typed fields. They
//! can be rendered to JSON Schema for the wire, described as text for prompts,
//! and used to validate `serde_json::Value` payloads.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Type of a single schema field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldType {
    Integer,
    Number,
    String,
    Boolean,
    /// One of a fixed set of string values.
    Enum { values: Vec<String> },
    Array { items: Box<FieldType> },
    Object { schema: Schema },
    /// String-keyed map with homogeneous values.
    Map { values: Box<FieldType> },
}

impl FieldType {
    pub fn array(items: FieldType) -> Self {
        FieldType::Array { items: Box::new(items) }
    }

    pub fn map(values: FieldType) -> Self {
        FieldType::Map { values: Box::new(values) }
    }

    pub fn enumeration<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FieldType::Enum { values: values.into_iter().map(Into::into).collect() }
    }

    fn name(&self) -> &'static str {
        match self {
            FieldType::Integer => "integer",
            FieldType::Number => "number",
            FieldType::String => "string",
            FieldType::Boolean => "boolean",
            FieldType::Enum { .. } => "enum",
            FieldType::Array { .. } => "array",
            FieldType::Object { .. } => "object",
            FieldType::Map { .. } => "map",
        }
    }

    fn to_json_schema(&self) -> Value {
        match self {
            FieldType::Integer => json!({"type": "integer"}),
            FieldType::Number => json!({"type": "number"}),
            FieldType::String => json!({"type": "string"}),
            FieldType::Boolean => json!({"type": "boolean"}),
            FieldType::Enum { values } => json!({"type": "string", "enum": values}),
            FieldType::Array { items } => json!({"type": "array", "items": items.to_json_schema()}),
            FieldType::Object { schema } => schema.to_json_schema(),
            FieldType::Map { values } => {
                json!({"type": "object", "additionalProperties": values.to_json_schema()})
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            FieldType::Enum { values } => format!("one of {}", values.join("|")),
            FieldType::Array { items } => format!("list of {}", items.describe()),
            FieldType::Object { schema } => format!("object {}", schema.describe_inline()),
            FieldType::Map { values } => format!("map from name to {}", values.describe()),
            other => other.name().to_string(),
        }
    }

    fn example(&self) -> Value {
        match self {
            FieldType::Integer => json!(0),
            FieldType::Number => json!(0.0),
            FieldType::String => json!(""),
            FieldType::Boolean => json!(false),
            FieldType::Enum { values } => {
                values.first().map(|v| Value::String(v.clone())).unwrap_or(Value::Null)
            }
            FieldType::Array { .. } => json!([]),
            FieldType::Object { schema } => schema.example(),
            FieldType::Map { .. } => json!({}),
        }
    }

    fn type_of(value: &Value) -> &'static str {
        match value {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
            Value::Number(_) => "number",
            Value::String(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        }
    }

    fn check(&self, path: &str, value: &Value, out: &mut Vec<Violation>) {
        let mismatch = |out: &mut Vec<Violation>| {
            out.push(Violation {
                field: path.to_string(),
                cause: ViolationCause::TypeMismatch {
                    expected: self.name().to_string(),
                    found: Self::type_of(value).to_string(),
                },
            })
        };
        match (self, value) {
            (FieldType::Integer, Value::Number(n)) if n.is_i64() || n.is_u64() => {}
            (FieldType::Number, Value::Number(_)) => {}
            (FieldType::String, Value::String(_)) => {}
            (FieldType::Boolean, Value::Bool(_)) => {}
            (FieldType::Enum { values }, Value::String(s)) => {
                if !values.iter().any(|v| v == s) {
                    out.push(Violation {
                        field: path.to_string(),
                        cause: ViolationCause::NotInEnum { value: s.clone() },
                    });
                }
            }
            (FieldType::Array { items }, Value::Array(elems)) => {
                for (i, elem) in elems.iter().enumerate() {
                    items.check(&format!("{path}[{i}]"), elem, out);
                }
            }
            (FieldType::Object { schema }, Value::Object(map)) => schema.check_object(path, map, out),
            (FieldType::Map { values }, Value::Object(map)) => {
                for (key, elem) in map {
                    values.check(&join_path(path, key), elem, out);
                }
            }
            _ => mismatch(out),
        }
    }
}

/// A named, typed field of an object schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    #[serde(flatten)]
    pub ty: FieldType,
    #[serde(default = "default_true")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

fn default_true() -> bool {
    true
}

/// Object schema. Strict schemas reject unknown fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub fields: Vec<Field>,
    #[serde(default = "default_true")]
    pub strict: bool,
}

impl Schema {
    pub fn new(name: impl Into<String>) -> Self {
        Schema { name: name.into(), fields: Vec::new(), strict: true }
    }

    pub fn required(mut self, name: impl Into<String>, ty: FieldType) -> Self {
        self.fields.push(Field { name: name.into(), ty, required: true, description: None });
        self
    }

    pub fn optional(mut self, name: impl Into<String>, ty: FieldType) -> Self {
        self.fields.push(Field { name: name.into(), ty, required: false, description: None });
        self
    }

    /// Attach a description to the most recently added field.
    pub fn describe_last(mut self, text: impl Into<String>) -> Self {
        if let Some(field) = self.fields.last_mut() {
            field.description = Some(text.into());
        }
        self
    }

    pub fn lenient(mut self) -> Self {
        self.strict = false;
        self
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// JSON Schema rendering used on the wire (tool parameters, response_format).
    pub fn to_json_schema(&self) -> Value {
        let mut properties = Map::new();
        let mut required = Vec::new();
        for field in &self.fields {
            let mut prop = field.ty.to_json_schema();
            if let (Some(desc), Value::Object(obj)) = (&field.description, &mut prop) {
                obj.insert("description".into(), Value::String(desc.clone()));
            }
            properties.insert(field.name.clone(), prop);
            if field.required {
                required.push(Value::String(field.name.clone()));
            }
        }
        json!({
            "type": "object",
            "title": self.name,
            "properties": properties,
            "required": required,
            "additionalProperties": !self.strict,
        })
    }

    /// Human-readable description, one field per line.
    pub fn describe(&self) -> String {
        let mut out = format!("Respond with a JSON object \"{}\" with fields:", self.name);
        for field in &self.fields {
            out.push_str(&format!(
                "\n- {} ({}{})",
                field.name,
                field.ty.describe(),
                if field.required { "" } else { ", optional" }
            ));
            if let Some(desc) = &field.description {
                out.push_str(&format!(": {desc}"));
            }
        }
        out
    }

    fn describe_inline(&self) -> String {
        let parts: Vec<String> = self
            .fields
            .iter()
            .map(|f| format!("{}: {}", f.name, f.ty.describe()))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    /// A minimal payload that satisfies this schema (required fields only).
    pub fn example(&self) -> Value {
        let mut map = Map::new();
        for field in self.fields.iter().filter(|f| f.required) {
            map.insert(field.name.clone(), field.ty.example());
        }
        Value::Object(map)
    }

    fn check_object(&self, path: &str, map: &Map<String, Value>, out: &mut Vec<Violation>) {
        for field in &self.fields {
            let field_path = join_path(path, &field.name);
            match map.get(&field.name) {
                None | Some(Value::Null) if field.required => out.push(Violation {
                    field: field_path,
                    cause: ViolationCause::Missing,
                }),
                None | Some(Value::Null) => {}
                Some(value) => field.ty.check(&field_path, value, out),
            }
        }
        if self.strict {
            for key in map.keys() {
                if self.field(key).is_none() {
                    out.push(Violation {
                        field: join_path(path, key),
                        cause: ViolationCause::Unknown,
                    });
                }
            }
        }
    }
}

fn join_path(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Why a payload failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum ViolationCause {
    Missing,
    TypeMismatch { expected: String, found: String },
    NotInEnum { value: String },
    Unknown,
    NotAnObject,
    InvalidJson { detail: String },
}

/// A single validation failure, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    #[serde(flatten)]
    pub cause: ViolationCause,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.cause {
            ViolationCause::Missing => write!(f, "missing \"{}\"", self.field),
            ViolationCause::TypeMismatch { expected, found } => write!(
                f,
                "type mismatch \"{}\": expected {expected}, found {found}",
                self.field
            ),
            ViolationCause::NotInEnum { value } => {
                write!(f, "value \"{value}\" not allowed for \"{}\"", self.field)
            }
            ViolationCause::Unknown => write!(f, "unknown field \"{}\"", self.field),
            ViolationCause::NotAnObject => write!(f, "payload is not a JSON object"),
            ViolationCause::InvalidJson { detail } => write!(f, "invalid JSON: {detail}"),
        }
    }
}

/// Check `body` against `schema`.
///
/// Returns every violation found rather than stopping at the first one.
pub fn validate_action(body: &Value, schema: &Schema) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    match body {
        Value::Object(map) => schema.check_object("", map, &mut violations),
        _ => violations.push(Violation { field: String::new(), cause: ViolationCause::NotAnObject }),
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
