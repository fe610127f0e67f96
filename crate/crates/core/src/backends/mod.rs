//! Completion backends and the machinery shared by every agent that talks to one.
//!
//! A backend maps a [`CompletionRequest`] (chat turns, optional tools, optional
//! response schema) to a [`CompletionResult`]. Three providers exist:
//! [`ScriptedBackend`] (rule table, for tests and offline runs),
//! [`ReplayBackend`] (recorded transcripts keyed by request fingerprint) and
//! [`RemoteBackend`] (chat-completions-compatible HTTP endpoint).

mod parse;
mod remote;
mod replay;
mod scripted;
mod tool_loop;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_structured, stage_two_prompt, ParseFailure, ParseOutcome, ParseSettings};
pub use remote::{parse_wire_response, wire_request, RemoteBackend, RemoteConfig};
pub use replay::{fingerprint, FingerprintMode, RecordingBackend, ReplayBackend, TranscriptEntry};
pub use scripted::ScriptedBackend;
pub use tool_loop::{run_tool_loop, LoopSettings, ToolLoopOutcome, DEFAULT_MAX_TOOL_ROUNDS};

use crate::protocol::ToolSpec;
use crate::schema::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub id: String,
    pub name: String,
    pub arguments_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<ToolCallRequest>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatTurn {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatTurn { role, content: content.into(), tool_calls: None, tool_call_id: None }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(result: &CompletionResult) -> Self {
        ChatTurn {
            role: Role::Assistant,
            content: result.content.clone(),
            tool_calls: (!result.tool_calls.is_empty()).then(|| result.tool_calls.clone()),
            tool_call_id: None,
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::Tool,
            content: content.into(),
            tool_calls: None,
            tool_call_id: Some(call_id.into()),
        }
    }
}

/// Schema-only view of a tool, as sent to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDef {
    pub name: String,
    pub description: String,
    pub parameters: Schema,
}

impl From<&ToolSpec> for ToolDef {
    fn from(spec: &ToolSpec) -> Self {
        ToolDef {
            name: spec.name.clone(),
            description: spec.description.clone(),
            parameters: spec.parameters.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub turns: Vec<ChatTurn>,
    pub model_id: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<ToolDef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_schema: Option<Schema>,
    pub max_retries: u32,
}

impl CompletionRequest {
    pub fn new(turns: Vec<ChatTurn>, model_id: impl Into<String>, temperature: f64) -> Self {
        CompletionRequest {
            turns,
            model_id: model_id.into(),
            temperature,
            tools: None,
            response_schema: None,
            max_retries: 0,
        }
    }

    /// Plain-text rendering of the turns, used by scripted rule predicates.
    pub fn rendered(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push_str(turn.role.as_str());
            out.push_str(": ");
            out.push_str(&turn.content);
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.turns.is_empty() {
            return Err(BackendError::InvalidRequest("no turns".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        validate_turns(&self.turns).map_err(BackendError::InvalidRequest)
    }
}

/// Every tool turn must answer exactly one earlier, not yet answered, tool call.
pub fn validate_turns(turns: &[ChatTurn]) -> Result<(), String> {
    let mut open: HashSet<&str> = HashSet::new();
    for (idx, turn) in turns.iter().enumerate() {
        match turn.role {
            Role::Assistant => {
                for call in turn.tool_calls.iter().flatten() {
                    if !open.insert(call.id.as_str()) {
                        return Err(format!("turn {idx}: duplicate tool call id {}", call.id));
                    }
                }
            }
            Role::Tool => {
                let id = turn
                    .tool_call_id
                    .as_deref()
                    .ok_or_else(|| format!("turn {idx}: tool turn without tool_call_id"))?;
                if !open.remove(id) {
                    return Err(format!("turn {idx}: tool_call_id {id} matches no pending call"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCallRequest>,
}

impl CompletionResult {
    pub fn text(content: impl Into<String>) -> Self {
        CompletionResult { content: content.into(), tool_calls: Vec::new() }
    }

    pub fn tool_call(
        id: impl Into<String>,
        name: impl Into<String>,
        arguments_text: impl Into<String>,
    ) -> Self {
        CompletionResult {
            content: String::new(),
            tool_calls: vec![ToolCallRequest {
                id: id.into(),
                name: name.into(),
                arguments_text: arguments_text.into(),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("no recorded completion for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("remote backend failed after {attempts} attempts: {last_error}")]
    RemoteExhausted { attempts: u32, last_error: String },
    #[error("remote request timed out")]
    Timeout,
    #[error("remote returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration: {0}")]
    Config(String),
}

/// A completion provider. Implementations are shared across agents and must
/// be callable concurrently.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(id: &str) -> ToolCallRequest {
        ToolCallRequest { id: id.into(), name: "news".into(), arguments_text: "{}".into() }
    }

    #[test]
    fn tool_turns_must_reference_prior_calls() {
        let assistant = ChatTurn {
            role: Role::Assistant,
            content: String::new(),
            tool_calls: Some(vec![call("c1")]),
            tool_call_id: None,
        };
        let ok = vec![ChatTurn::user("q"), assistant.clone(), ChatTurn::tool("c1", "r")];
        assert!(validate_turns(&ok).is_ok());

        let orphan = vec![ChatTurn::user("q"), ChatTurn::tool("c1", "r")];
        assert!(validate_turns(&orphan).is_err());

        let twice = vec![assistant, ChatTurn::tool("c1", "r"), ChatTurn::tool("c1", "r")];
        assert!(validate_turns(&twice).is_err());
    }

    #[test]
    fn empty_request_is_invalid() {
        let req = CompletionRequest::new(vec![], "m", 0.0);
        assert!(matches!(req.validate(), Err(BackendError::InvalidRequest(_))));
    }
}
