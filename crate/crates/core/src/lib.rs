//! Core building blocks for LLM-driven agent-based simulations.
//!
//! The crate is split along the agent/environment boundary:
//!
//! - [`protocol`]: the environment contract, messages, observations, event
//!   logs and the episode runner that advances the simulation clock.
//! - [`cognition`]: the agent side of the contract. A policy is composed of a
//!   persona config, a memory store and a completion backend.
//! - [`backends`]: completion providers (scripted, replay, remote), the bounded
//!   tool-call loop and two-stage structured parsing.
//! - [`schema`]: the small structured-schema language used for action bodies
//!   and tool parameters.
//! - [`rng`]: seeded, splittable random streams.

pub mod backends;
pub mod cognition;
pub mod protocol;
pub mod rng;
pub mod schema;

pub use protocol::{
    route_messages, run_episode, ActionEnvelope, ActionMap, AgentError, AgentId, AgentPolicy,
    EnvError, EpisodeDriver, EpisodeLog, Environment, EventRecord, Message, MessagePayload,
    Observation, ObservationMap, ProtocolError, TimeStep, ToolSpec,
};
pub use rng::SeedStream;
pub use schema::{validate_action, FieldType, Schema, Violation};
