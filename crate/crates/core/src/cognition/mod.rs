//! The agent side of the contract.
//!
//! A policy is the composition of a [`PersonaConfig`] (static identity), a
//! [`MemoryStore`] (dynamic state) and a completion backend. Tools are not
//! owned by the agent; they arrive with each observation.

mod agent;
mod memory;
mod prompt;

pub use agent::{agent_step, AgentSettings, CognitiveAgent, StepOutcome};
pub use memory::{estimate_tokens, ArchiveError, MemoryEntry, MemoryKind, MemoryRole, MemoryStore};
pub use prompt::{compose_prompt, PersonaConfig, PromptBundle};
