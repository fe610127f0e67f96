use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::schema::Schema;

/// Identifier of an agent, unique within a run and stable across worlds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Discrete environment clock.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeStep(pub u64);

impl TimeStep {
    pub fn next(self) -> TimeStep {
        TimeStep(self.0 + 1)
    }
}

impl fmt::Display for TimeStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Environment-defined message content: a kind tag plus free-form fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessagePayload {
    pub kind: String,
    #[serde(default)]
    pub fields: Map<String, Value>,
}

impl MessagePayload {
    pub fn text(kind: impl Into<String>, text: impl Into<String>) -> Self {
        let mut fields = Map::new();
        fields.insert("text".into(), Value::String(text.into()));
        MessagePayload { kind: kind.into(), fields }
    }
}

/// A unit of environment-mediated communication.
///
/// `src_agent_id == None` marks an environment-originated message and
/// `dst_agent_id == None` a broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub time: TimeStep,
    pub src_agent_id: Option<AgentId>,
    pub dst_agent_id: Option<AgentId>,
    pub payload: MessagePayload,
}

impl Message {
    pub fn new(
        time: TimeStep,
        src: Option<AgentId>,
        dst: Option<AgentId>,
        payload: MessagePayload,
    ) -> Self {
        Message { time, src_agent_id: src, dst_agent_id: dst, payload }
    }
}

pub type ToolHandler = Arc<dyn Fn(&Value) -> Result<String, String> + Send + Sync>;

/// A callable capability offered to an agent for intra-step queries.
///
/// Invoking a tool never advances the environment clock.
#[derive(Clone)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Schema,
    handler: ToolHandler,
}

impl ToolSpec {
    pub fn new<F>(
        name: impl Into<String>,
        description: impl Into<String>,
        parameters: Schema,
        handler: F,
    ) -> Self
    where
        F: Fn(&Value) -> Result<String, String> + Send + Sync + 'static,
    {
        ToolSpec {
            name: name.into(),
            description: description.into(),
            parameters,
            handler: Arc::new(handler),
        }
    }

    pub fn invoke(&self, arguments: &Value) -> Result<String, String> {
        (self.handler)(arguments)
    }
}

impl fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolSpec")
            .field("name", &self.name)
            .field("description", &self.description)
            .field("parameters", &self.parameters)
            .finish_non_exhaustive()
    }
}

/// What one agent sees at one step.
#[derive(Debug, Clone)]
pub struct Observation {
    pub agent_id: AgentId,
    pub time: TimeStep,
    pub context_text: String,
    pub inbox: Vec<Message>,
    pub tools: Vec<ToolSpec>,
    /// Present whenever the environment expects an action this step.
    pub response_schema: Option<Schema>,
    pub reward: Option<f64>,
}

impl Observation {
    pub fn new(agent_id: AgentId, time: TimeStep, context_text: impl Into<String>) -> Self {
        Observation {
            agent_id,
            time,
            context_text: context_text.into(),
            inbox: Vec::new(),
            tools: Vec::new(),
            response_schema: None,
            reward: None,
        }
    }

    pub fn with_schema(mut self, schema: Schema) -> Self {
        self.response_schema = Some(schema);
        self
    }

    pub fn with_tools(mut self, tools: Vec<ToolSpec>) -> Self {
        self.tools = tools;
        self
    }

    pub fn with_inbox(mut self, inbox: Vec<Message>) -> Self {
        self.inbox = inbox;
        self
    }

    pub fn with_reward(mut self, reward: f64) -> Self {
        self.reward = Some(reward);
        self
    }

    pub fn expects_action(&self) -> bool {
        self.response_schema.is_some()
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }
}

/// An agent's action for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEnvelope {
    pub agent_id: AgentId,
    pub time: TimeStep,
    pub body: Value,
    #[serde(default)]
    pub outgoing_messages: Vec<Message>,
}

impl ActionEnvelope {
    pub fn new(agent_id: AgentId, time: TimeStep, body: Value) -> Self {
        ActionEnvelope { agent_id, time, body, outgoing_messages: Vec::new() }
    }
}
