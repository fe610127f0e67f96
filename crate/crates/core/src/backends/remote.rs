use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::warn;

use super::{
    BackendError, ChatTurn, CompletionBackend, CompletionRequest, CompletionResult, ToolCallRequest,
};
use crate::rng::SeedStream;

/// Connection settings for a chat-completions-compatible endpoint.
///
/// Credentials are never part of the config: `api_key_env` names the
/// environment variable holding the bearer token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub jitter_seed: u64,
}

fn default_in_flight() -> usize {
    8
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_backoff_ms() -> u64 {
    100
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            api_key_env: None,
            max_in_flight: default_in_flight(),
            timeout_ms: default_timeout_ms(),
            backoff_base_ms: default_backoff_ms(),
            jitter_seed: 0,
        }
    }
}

/// Build the JSON request body for a completion request.
pub fn wire_request(request: &CompletionRequest) -> Value {
    let messages: Vec<Value> = request.turns.iter().map(wire_turn).collect();
    let mut body = json!({
        "model": request.model_id,
        "temperature": request.temperature,
        "messages": messages,
    });
    if let Some(tools) = &request.tools {
        body["tools"] = tools
            .iter()
            .map(|tool| {
                json!({
                    "type": "function",
                    "function": {
                        "name": tool.name,
                        "description": tool.description,
                        "parameters": tool.parameters.to_json_schema(),
                    }
                })
            })
            .collect();
    }
    if let Some(schema) = &request.response_schema {
        body["response_format"] = json!({
            "type": "json_schema",
            "json_schema": {"name": schema.name, "schema": schema.to_json_schema(), "strict": schema.strict},
        });
    }
    body
}

fn wire_turn(turn: &ChatTurn) -> Value {
    let mut msg = json!({"role": turn.role.as_str(), "content": turn.content});
    if let Some(calls) = &turn.tool_calls {
        msg["tool_calls"] = calls
            .iter()
            .map(|call| {
                json!({
                    "id": call.id,
                    "type": "function",
                    "function": {"name": call.name, "arguments": call.arguments_text},
                })
            })
            .collect();
    }
    if let Some(id) = &turn.tool_call_id {
        msg["tool_call_id"] = Value::String(id.clone());
    }
    msg
}

/// Read `choices[0].message.{content, tool_calls}` from a response body.
pub fn parse_wire_response(body: &Value) -> Result<CompletionResult, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Protocol("missing choices[0].message".into()))?;
    let content = message.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let id = call.get("id").and_then(Value::as_str);
            let name = call.pointer("/function/name").and_then(Value::as_str);
            let arguments = call.pointer("/function/arguments");
            let (Some(id), Some(name)) = (id, name) else {
                return Err(BackendError::Protocol("tool call without id or name".into()));
            };
            let arguments_text = match arguments {
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => "{}".to_string(),
            };
            tool_calls.push(ToolCallRequest { id: id.into(), name: name.into(), arguments_text });
        }
    }
    Ok(CompletionResult { content, tool_calls })
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    count: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut count = self.count.lock().expect("in-flight lock");
        while *count >= self.limit {
            count = self.released.wait(count).expect("in-flight lock");
        }
        *count += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("in-flight lock") -= 1;
        self.0.released.notify_one();
    }
}

enum AttemptError {
    Retryable(String),
    Timeout,
    Fatal(BackendError),
}

/// HTTP backend with bounded concurrency and retry with exponential backoff.
///
/// Transport failures, timeouts and 5xx responses are retried up to the
/// request's `max_retries`; attempt `n` first waits `2^n × backoff_base`,
/// scaled by a jitter factor in `[0.5, 1.0)` drawn from a seeded stream.
pub struct RemoteBackend {
    config: RemoteConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
    in_flight: InFlight,
    jitter: Mutex<ChaCha8Rng>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let token = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        if config.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let jitter = SeedStream::new(config.jitter_seed).child("remote/backoff").rng();
        Ok(RemoteBackend {
            in_flight: InFlight {
                limit: config.max_in_flight,
                count: Mutex::new(0),
                released: Condvar::new(),
            },
            config,
            token,
            client,
            jitter: Mutex::new(jitter),
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor: f64 = self.jitter.lock().expect("jitter lock").random_range(0.5..1.0);
        let base = self.config.backoff_base_ms as f64 * 2f64.powi(attempt as i32);
        Duration::from_secs_f64(base * factor / 1000.0)
    }

    fn attempt(&self, body: &Value) -> Result<CompletionResult, AttemptError> {
        let _permit = self.in_flight.acquire();
        let mut builder = self.client.post(&self.config.endpoint).json(body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Retryable(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Retryable(e.to_string())
            }
        })?;
        if status.is_server_error() {
            return Err(AttemptError::Retryable(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(BackendError::Http { status: status.as_u16(), body: text }));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(BackendError::Protocol(e.to_string())))?;
        parse_wire_response(&value).map_err(AttemptError::Fatal)
    }
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let body = wire_request(request);
        let attempts = request.max_retries + 1;
        let mut last_timeout = false;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt));
            }
            match self.attempt(&body) {
                Ok(result) => return Ok(result),
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Timeout) => {
                    last_timeout = true;
                    last_error = "timeout".into();
                }
                Err(AttemptError::Retryable(msg)) => {
                    last_timeout = false;
                    last_error = msg;
                }
            }
            warn!(attempt, error = %last_error, "remote completion attempt failed");
        }
        if last_timeout {
            Err(BackendError::Timeout)
        } else {
            Err(BackendError::RemoteExhausted { attempts, last_error })
        }
    }
}
