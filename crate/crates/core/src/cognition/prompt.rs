use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::memory::MemoryStore;
use crate::backends::ChatTurn;
use crate::protocol::{Message, Observation};

/// The static part of an agent: who it is and what it has been told.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaConfig {
    #[serde(default)]
    pub persona_text: String,
    #[serde(default)]
    pub role_tag: String,
    #[serde(default)]
    pub extra_directives: Vec<String>,
}

impl PersonaConfig {
    pub fn new(persona_text: impl Into<String>) -> Self {
        PersonaConfig { persona_text: persona_text.into(), ..Default::default() }
    }

    pub fn with_role(mut self, role_tag: impl Into<String>) -> Self {
        self.role_tag = role_tag.into();
        self
    }

    pub fn with_directive(mut self, directive: impl Into<String>) -> Self {
        self.extra_directives.push(directive.into());
        self
    }

    /// Persona text, the role line (if any), then directives in insertion order.
    pub fn render(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        if !self.persona_text.is_empty() {
            lines.push(self.persona_text.clone());
        }
        if !self.role_tag.is_empty() {
            lines.push(format!("Role: {}", self.role_tag));
        }
        lines.extend(self.extra_directives.iter().cloned());
        lines.join("\n")
    }
}

/// The assembled prompt, section by section.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub memory_text: String,
    pub observation_text: String,
    pub schema_hint: String,
}

impl PromptBundle {
    /// User-facing text: memory, observation and schema hint, in that order.
    pub fn user_text(&self) -> String {
        let mut sections = Vec::new();
        if !self.memory_text.is_empty() {
            sections.push(format!("Memory:\n{}", self.memory_text));
        }
        if !self.observation_text.is_empty() {
            sections.push(self.observation_text.clone());
        }
        if !self.schema_hint.is_empty() {
            sections.push(self.schema_hint.clone());
        }
        sections.join("\n\n")
    }

    /// Chat turns: a system turn when the persona renders to something, then
    /// one user turn.
    pub fn to_turns(&self) -> Vec<ChatTurn> {
        let mut turns = Vec::new();
        if !self.system_text.is_empty() {
            turns.push(ChatTurn::system(self.system_text.clone()));
        }
        turns.push(ChatTurn::user(self.user_text()));
        turns
    }

    /// Everything, in the fixed section order.
    pub fn full_text(&self) -> String {
        [&self.system_text, &self.memory_text, &self.observation_text, &self.schema_hint]
            .into_iter()
            .filter(|s| !s.is_empty())
            .cloned()
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn render_message(msg: &Message) -> String {
    let from = match msg.src_agent_id {
        Some(id) => format!("agent {id}"),
        None => "environment".to_string(),
    };
    let mut body = msg.payload.kind.clone();
    if let Some(Value::String(text)) = msg.payload.fields.get("text") {
        body = format!("{body}: {text}");
    } else if !msg.payload.fields.is_empty() {
        body = format!("{body}: {}", Value::Object(msg.payload.fields.clone()));
    }
    format!("- [t={}] from {from}: {body}", msg.time)
}

pub fn compose_prompt(obs: &Observation, cfg: &PersonaConfig, mem: &MemoryStore) -> PromptBundle {
    let mut observation_text = obs.context_text.clone();
    if !obs.inbox.is_empty() {
        let lines: Vec<String> = obs.inbox.iter().map(render_message).collect();
        if !observation_text.is_empty() {
            observation_text.push_str("\n\n");
        }
        observation_text.push_str("Messages:\n");
        observation_text.push_str(&lines.join("\n"));
    }
    PromptBundle {
        system_text: cfg.render(),
        memory_text: mem.render(),
        observation_text,
        schema_hint: obs.response_schema.as_ref().map(|s| s.describe()).unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognition::memory::{MemoryEntry, MemoryRole};
    use crate::protocol::{AgentId, MessagePayload, TimeStep};
    use crate::schema::{FieldType, Schema};

    #[test]
    fn empty_config_and_null_memory() {
        let obs = Observation::new(AgentId(0), TimeStep(0), "hello");
        let bundle = compose_prompt(&obs, &PersonaConfig::default(), &MemoryStore::null());
        assert_eq!(bundle.system_text, "");
        assert_eq!(bundle.memory_text, "");
        assert_eq!(bundle.observation_text, "hello");
        assert_eq!(bundle.schema_hint, "");
        assert_eq!(bundle.to_turns().len(), 1);
    }

    #[test]
    fn directives_in_order() {
        let cfg = PersonaConfig::new("A trader.").with_directive("first").with_directive("second");
        let text = cfg.render();
        assert_eq!(text, "A trader.\nfirst\nsecond");
    }

    #[test]
    fn inbox_order_and_attribution() {
        let inbox = vec![
            Message::new(TimeStep(1), Some(AgentId(3)), None, MessagePayload::text("chat", "hi")),
            Message::new(TimeStep(1), Some(AgentId(7)), None, MessagePayload::text("chat", "yo")),
        ];
        let obs = Observation::new(AgentId(0), TimeStep(2), "ctx").with_inbox(inbox);
        let text = compose_prompt(&obs, &PersonaConfig::default(), &MemoryStore::null()).observation_text;
        let p3 = text.find("from agent 3").unwrap();
        let p7 = text.find("from agent 7").unwrap();
        assert!(p3 < p7);
    }

    #[test]
    fn section_order_is_fixed() {
        let mut mem = MemoryStore::buffer(3);
        mem.record(MemoryEntry::new(TimeStep(0), "w", MemoryRole::Note, "remember"));
        let obs = Observation::new(AgentId(0), TimeStep(1), "now")
            .with_schema(Schema::new("a").required("x", FieldType::Integer));
        let bundle = compose_prompt(&obs, &PersonaConfig::new("me"), &mem);
        let full = bundle.full_text();
        let idx: Vec<usize> = ["me", "remember", "now", "Respond with"]
            .iter()
            .map(|s| full.find(s).unwrap())
            .collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }
}
