//! Agent rosters shared across episodes, worlds and arms.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError};

use agentsim_core::backends::{
    BackendError, CompletionBackend, CompletionResult, FingerprintMode, RemoteBackend, RemoteConfig,
    ReplayBackend, ScriptedBackend,
};
use agentsim_core::cognition::{AgentSettings, CognitiveAgent, MemoryKind, MemoryStore, PersonaConfig};
use agentsim_core::{ActionEnvelope, AgentError, AgentId, AgentPolicy, Observation, SeedStream};
use serde::{Deserialize, Serialize};
use thiserror::Error;

fn default_memory() -> MemoryKind {
    MemoryKind::Buffer { capacity: 3 }
}
fn default_model() -> String {
    "scripted".into()
}
fn default_tool_rounds() -> usize {
    agentsim_core::backends::DEFAULT_MAX_TOOL_ROUNDS
}
fn default_parse_retries() -> u32 {
    2
}

/// Per-agent changes on top of the roster template.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverride {
    #[serde(default)]
    pub persona: Option<String>,
    #[serde(default)]
    pub role: Option<String>,
    /// Appended after the template directives.
    #[serde(default)]
    pub directives: Vec<String>,
    #[serde(default)]
    pub memory: Option<MemoryKind>,
}

/// Config, memory and model settings for every agent in a world.
///
/// `{id}` in persona text is replaced by the agent id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSpec {
    #[serde(default)]
    pub persona: String,
    #[serde(default)]
    pub role: String,
    #[serde(default)]
    pub directives: Vec<String>,
    #[serde(default = "default_memory")]
    pub memory: MemoryKind,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_tool_rounds")]
    pub max_tool_rounds: usize,
    #[serde(default = "default_parse_retries")]
    pub max_parse_retries: u32,
    /// Keyed by agent id.
    #[serde(default)]
    pub overrides: BTreeMap<u32, AgentOverride>,
}

impl Default for AgentsSpec {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults deserialize")
    }
}

impl AgentsSpec {
    pub fn persona_for(&self, id: AgentId) -> PersonaConfig {
        let over = self.overrides.get(&id.0);
        let text = over.and_then(|o| o.persona.as_deref()).unwrap_or(&self.persona);
        let role = over.and_then(|o| o.role.as_deref()).unwrap_or(&self.role);
        let mut persona = PersonaConfig::new(text.replace("{id}", &id.to_string())).with_role(role);
        for d in self.directives.iter().chain(over.map(|o| o.directives.iter()).into_iter().flatten()) {
            persona = persona.with_directive(d.clone());
        }
        persona
    }

    pub fn memory_for(&self, id: AgentId) -> MemoryStore {
        MemoryStore::new(self.overrides.get(&id.0).and_then(|o| o.memory).unwrap_or(self.memory))
    }

    pub fn settings(&self) -> AgentSettings {
        AgentSettings {
            model_id: self.model_id.clone(),
            parser_model_id: self.model_id.clone(),
            temperature: self.temperature,
            max_tool_rounds: self.max_tool_rounds,
            max_parse_retries: self.max_parse_retries,
            ..AgentSettings::default()
        }
    }
}

/// First matching rule wins; rules match on the rendered chat turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub contains: String,
    pub reply: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSpec {
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    /// Relative paths resolve against the config file's directory.
    pub transcript: PathBuf,
    #[serde(default)]
    pub fingerprint: FingerprintMode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Replay,
    Remote,
}

/// Which completion provider serves the roster. Sections for unused kinds
/// may be present; only `kind` is built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub scripted: ScriptedSpec,
    #[serde(default)]
    pub replay: Option<ReplaySpec>,
    /// The token comes from the variable named by `api_key_env`, never from here.
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug, Error)]
pub enum BackendBuildError {
    #[error("backend.{0} section is required for the {0} backend")]
    MissingSection(&'static str),
    #[error("backend.scripted.default is required for the scripted backend")]
    MissingDefault,
    #[error("reading transcript {path}: {source}")]
    Transcript { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl BackendSpec {
    pub fn scripted(default: impl Into<String>) -> Self {
        BackendSpec { scripted: ScriptedSpec { default: Some(default.into()), rules: Vec::new() }, ..Default::default() }
    }

    pub fn build(&self, base_dir: &Path) -> Result<Arc<dyn CompletionBackend>, BackendBuildError> {
        match self.kind {
            BackendKind::Scripted => {
                let default = self.scripted.default.clone().ok_or(BackendBuildError::MissingDefault)?;
                let mut backend = ScriptedBackend::text(default);
                for rule in &self.scripted.rules {
                    backend = backend.when_contains(rule.contains.clone(), CompletionResult::text(rule.reply.clone()));
                }
                Ok(Arc::new(backend))
            }
            BackendKind::Replay => {
                let spec = self.replay.as_ref().ok_or(BackendBuildError::MissingSection("replay"))?;
                let path = base_dir.join(&spec.transcript);
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| BackendBuildError::Transcript { path: path.clone(), source })?;
                Ok(Arc::new(ReplayBackend::from_jsonl(&text, spec.fingerprint)?))
            }
            BackendKind::Remote => {
                let config = self.remote.clone().ok_or(BackendBuildError::MissingSection("remote"))?;
                Ok(Arc::new(RemoteBackend::new(config)?))
            }
        }
    }
}

pub type SharedAgent = Arc<Mutex<CognitiveAgent>>;

fn lock(agent: &SharedAgent) -> MutexGuard<'_, CognitiveAgent> {
    agent.lock().unwrap_or_else(PoisonError::into_inner)
}

/// Policy handle onto a roster member; state stays in the roster.
struct Handle(SharedAgent);

impl AgentPolicy for Handle {
    fn begin_episode(&mut self, seeds: SeedStream) {
        lock(&self.0).begin_episode(seeds);
    }

    fn enter_world(&mut self, world_tag: &str) {
        lock(&self.0).enter_world(world_tag);
    }

    fn act(&mut self, observation: &Observation) -> Result<ActionEnvelope, AgentError> {
        lock(&self.0).act(observation)
    }
}

/// Cognitive agents with ids `0..n` whose config and memory outlive any
/// single episode.
#[derive(Debug, Clone, Default)]
pub struct Roster {
    agents: BTreeMap<AgentId, SharedAgent>,
}

impl Roster {
    pub fn build(spec: &AgentsSpec, n: u32, backend: Arc<dyn CompletionBackend>) -> Self {
        Self::from_agents((0..n).map(|i| {
            let id = AgentId(i);
            CognitiveAgent::new(id, spec.persona_for(id), spec.memory_for(id), backend.clone())
                .with_settings(spec.settings())
        }))
    }

    pub fn from_agents(agents: impl IntoIterator<Item = CognitiveAgent>) -> Self {
        Roster { agents: agents.into_iter().map(|a| (a.id, Arc::new(Mutex::new(a)))).collect() }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.keys().copied()
    }

    /// Fresh policy handles for one episode or schedule.
    pub fn policies(&self) -> BTreeMap<AgentId, Box<dyn AgentPolicy>> {
        self.agents.iter().map(|(&id, a)| (id, Box::new(Handle(a.clone())) as Box<dyn AgentPolicy>)).collect()
    }

    /// Run `f` on every agent in id order.
    pub fn for_each(&self, mut f: impl FnMut(&mut CognitiveAgent)) {
        for agent in self.agents.values() {
            f(&mut lock(agent));
        }
    }

    pub fn with<R>(&self, id: AgentId, f: impl FnOnce(&mut CognitiveAgent) -> R) -> Option<R> {
        self.agents.get(&id).map(|a| f(&mut lock(a)))
    }

    /// Snapshot of every memory store.
    pub fn memories(&self) -> BTreeMap<AgentId, MemoryStore> {
        self.agents.iter().map(|(&id, a)| (id, lock(a).memory.clone())).collect()
    }
}
