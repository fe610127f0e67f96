//! The agent/environment contract.
//!
//! Each step an environment emits a tailored [`Observation`] per agent, agents
//! answer with an [`ActionEnvelope`], and [`Environment::step`] applies the
//! whole action map to produce the next observations. Agents never talk to each
//! other directly: messages travel inside envelopes and the environment routes
//! them (see [`route_messages`]).

mod log;
mod routing;
mod runner;
mod types;

use std::collections::BTreeMap;

use thiserror::Error;

pub use log::{parse_event_lines, EpisodeLog, EpisodeSummary, EventRecord, LogParseError};
pub use routing::{route_messages, RoutingError};
pub use runner::{run_episode, step_agents, EpisodeDriver};
pub use types::{
    ActionEnvelope, AgentId, Message, MessagePayload, Observation, TimeStep, ToolHandler, ToolSpec,
};

use crate::rng::SeedStream;
use crate::schema::Violation;

pub type ObservationMap = BTreeMap<AgentId, Observation>;
pub type ActionMap = BTreeMap<AgentId, ActionEnvelope>;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment is done; reset before stepping")]
    AlreadyDone,
    #[error("routing failed: {0}")]
    Routing(#[from] RoutingError),
    #[error("{0}")]
    Invalid(String),
}

/// A simulated world. `step` is the only mutator of environment state.
pub trait Environment: Send {
    /// Short tag identifying this world in memories and multi-world logs.
    fn world_tag(&self) -> &str;

    fn time(&self) -> TimeStep;

    fn reset(&mut self, seeds: SeedStream) -> Result<ObservationMap, EnvError>;

    /// Apply all actions (in ascending agent id) and advance the clock by one.
    fn step(&mut self, actions: ActionMap) -> Result<ObservationMap, EnvError>;

    /// Once true, stays true until the next `reset`.
    fn done(&self) -> bool;

    /// Hand over the events produced since the last drain, in production order.
    fn drain_events(&mut self) -> Vec<EventRecord>;
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("could not parse a schema-valid action after {attempts} attempts: {}", join_violations(.violations))]
    ParseFailure { attempts: usize, violations: Vec<Violation> },
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("{0}")]
    Other(String),
}

fn join_violations(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// The agent side of the contract: a policy mapping observations to actions.
pub trait AgentPolicy: Send {
    /// Called once per episode with this agent's private random stream.
    fn begin_episode(&mut self, _seeds: SeedStream) {}

    /// Called when the agent is bound to a (possibly different) world.
    fn enter_world(&mut self, _world_tag: &str) {}

    fn act(&mut self, observation: &Observation) -> Result<ActionEnvelope, AgentError>;
}

impl<F> AgentPolicy for F
where
    F: FnMut(&Observation) -> Result<ActionEnvelope, AgentError> + Send,
{
    fn act(&mut self, observation: &Observation) -> Result<ActionEnvelope, AgentError> {
        self(observation)
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("observation addressed to unknown agent {0}")]
    AgentMissing(AgentId),
    #[error("agent {agent} produced an invalid action: {}", join_violations(.violations))]
    SchemaViolation { agent: AgentId, violations: Vec<Violation> },
    #[error("agent {agent} failed: {source}")]
    Agent { agent: AgentId, source: AgentError },
    #[error(transparent)]
    Env(#[from] EnvError),
}
