use std::fmt;
use std::sync::Arc;

use super::memory::{MemoryEntry, MemoryRole, MemoryStore};
use super::prompt::{compose_prompt, PersonaConfig};
use crate::backends::{
    parse_structured, run_tool_loop, CompletionBackend, LoopSettings, ParseSettings,
    ToolCallRequest, DEFAULT_MAX_TOOL_ROUNDS,
};
use crate::protocol::{ActionEnvelope, AgentError, AgentId, AgentPolicy, Observation};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSettings {
    pub model_id: String,
    pub parser_model_id: String,
    pub temperature: f64,
    pub max_tool_rounds: usize,
    pub max_parse_retries: u32,
    /// Transport retries passed through to the backend.
    pub max_retries: u32,
    /// When false the memory archive is read but never written.
    pub record_memory: bool,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            model_id: "scripted".into(),
            parser_model_id: "scripted".into(),
            temperature: 0.0,
            max_tool_rounds: DEFAULT_MAX_TOOL_ROUNDS,
            max_parse_retries: 2,
            max_retries: 3,
            record_memory: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub envelope: ActionEnvelope,
    pub raw_text: String,
    pub tool_trace: Vec<(ToolCallRequest, String)>,
    pub parse_attempts: usize,
}

/// One policy evaluation: prompt, tool loop, structured parse, memory update.
///
/// Memory gains the observation text, one entry per tool result, and the
/// final action, in that order. The prompt is composed from memory as it was
/// before this step.
pub fn agent_step(
    obs: &Observation,
    cfg: &PersonaConfig,
    mem: &mut MemoryStore,
    world_tag: &str,
    backend: &dyn CompletionBackend,
    parser: &dyn CompletionBackend,
    settings: &AgentSettings,
) -> Result<StepOutcome, AgentError> {
    let schema = obs.response_schema.as_ref().ok_or_else(|| {
        AgentError::ContractViolation(format!(
            "agent {} asked to act at t={} without a response schema",
            obs.agent_id, obs.time
        ))
    })?;
    let bundle = compose_prompt(obs, cfg, mem);
    let loop_settings = LoopSettings {
        model_id: settings.model_id.clone(),
        temperature: settings.temperature,
        max_retries: settings.max_retries,
        max_rounds: settings.max_tool_rounds,
    };
    let outcome = run_tool_loop(backend, &bundle, &obs.tools, &loop_settings)
        .map_err(|e| AgentError::Backend(e.to_string()))?;

    if settings.record_memory {
        mem.record(MemoryEntry::new(obs.time, world_tag, MemoryRole::Observation, obs.context_text.clone()));
        for (call, result) in &outcome.trace {
            mem.record(MemoryEntry::new(
                obs.time,
                world_tag,
                MemoryRole::ToolResult,
                format!("{}({}) -> {}", call.name, call.arguments_text, result),
            ));
        }
    }

    let parse_settings = ParseSettings {
        model_id: settings.parser_model_id.clone(),
        temperature: settings.temperature,
        max_retries: settings.max_parse_retries,
    };
    let parsed = parse_structured(&outcome.final_text, schema, parser, &parse_settings).map_err(
        |failure| AgentError::ParseFailure { attempts: failure.attempts, violations: failure.violations },
    )?;

    if settings.record_memory {
        mem.record(MemoryEntry::new(obs.time, world_tag, MemoryRole::OwnAction, parsed.payload.to_string()));
    }
    Ok(StepOutcome {
        envelope: ActionEnvelope::new(obs.agent_id, obs.time, parsed.payload),
        raw_text: outcome.final_text,
        tool_trace: outcome.trace,
        parse_attempts: parsed.attempts,
    })
}

/// An LLM-backed agent: persona config, memory store and backends.
pub struct CognitiveAgent {
    pub id: AgentId,
    pub persona: PersonaConfig,
    pub memory: MemoryStore,
    pub settings: AgentSettings,
    backend: Arc<dyn CompletionBackend>,
    parser: Arc<dyn CompletionBackend>,
    world_tag: String,
}

impl CognitiveAgent {
    /// The same backend serves both generation and stage-two parsing.
    pub fn new(
        id: AgentId,
        persona: PersonaConfig,
        memory: MemoryStore,
        backend: Arc<dyn CompletionBackend>,
    ) -> Self {
        CognitiveAgent {
            id,
            persona,
            memory,
            settings: AgentSettings::default(),
            parser: backend.clone(),
            backend,
            world_tag: String::new(),
        }
    }

    pub fn with_parser(mut self, parser: Arc<dyn CompletionBackend>) -> Self {
        self.parser = parser;
        self
    }

    pub fn with_settings(mut self, settings: AgentSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn world_tag(&self) -> &str {
        &self.world_tag
    }

    pub fn step(&mut self, obs: &Observation) -> Result<StepOutcome, AgentError> {
        agent_step(
            obs,
            &self.persona,
            &mut self.memory,
            &self.world_tag,
            self.backend.as_ref(),
            self.parser.as_ref(),
            &self.settings,
        )
    }
}

impl AgentPolicy for CognitiveAgent {
    fn enter_world(&mut self, world_tag: &str) {
        self.world_tag = world_tag.to_string();
    }

    fn act(&mut self, observation: &Observation) -> Result<ActionEnvelope, AgentError> {
        self.step(observation).map(|outcome| outcome.envelope)
    }
}

impl fmt::Debug for CognitiveAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CognitiveAgent")
            .field("id", &self.id)
            .field("persona", &self.persona)
            .field("memory_len", &self.memory.len())
            .field("world_tag", &self.world_tag)
            .finish_non_exhaustive()
    }
}
