use std::collections::BTreeMap;

use rayon::prelude::*;
use tracing::debug;

use super::{
    ActionEnvelope, ActionMap, AgentError, AgentId, AgentPolicy, EpisodeLog, Environment,
    ObservationMap, ProtocolError,
};
use crate::rng::SeedStream;
use crate::schema::validate_action;

/// Ask every agent that owes an action this step for one.
///
/// Observe-only observations (no response schema) are skipped. Policies run
/// concurrently; results are keyed by agent id so their completion order never
/// matters. Bodies are validated against the step's schema, and outgoing
/// messages are stamped with the sender id and step time.
pub fn step_agents(
    agents: &mut BTreeMap<AgentId, Box<dyn AgentPolicy>>,
    observations: &ObservationMap,
) -> Result<ActionMap, ProtocolError> {
    if let Some(missing) = observations.keys().find(|id| !agents.contains_key(id)) {
        return Err(ProtocolError::AgentMissing(*missing));
    }
    let work: Vec<_> = agents
        .iter_mut()
        .filter_map(|(id, agent)| {
            observations.get(id).filter(|obs| obs.expects_action()).map(|obs| (*id, agent, obs))
        })
        .collect();

    let results: Vec<(AgentId, Result<ActionEnvelope, AgentError>)> = work
        .into_par_iter()
        .map(|(id, agent, obs)| (id, agent.act(obs)))
        .collect();

    let mut actions = ActionMap::new();
    for (id, result) in results {
        let obs = &observations[&id];
        let mut envelope = result.map_err(|source| match source {
            AgentError::ParseFailure { violations, .. } => {
                ProtocolError::SchemaViolation { agent: id, violations }
            }
            source => ProtocolError::Agent { agent: id, source },
        })?;
        if let Some(schema) = &obs.response_schema {
            validate_action(&envelope.body, schema)
                .map_err(|violations| ProtocolError::SchemaViolation { agent: id, violations })?;
        }
        envelope.agent_id = id;
        envelope.time = obs.time;
        for msg in &mut envelope.outgoing_messages {
            msg.src_agent_id = Some(id);
            msg.time = obs.time;
        }
        actions.insert(id, envelope);
    }
    Ok(actions)
}

/// Step-at-a-time episode execution over one environment.
///
/// [`run_episode`] drives this to completion; multi-world schedules interleave
/// several drivers over a shared agent roster.
#[derive(Debug)]
pub struct EpisodeDriver {
    pending: ObservationMap,
    log: EpisodeLog,
}

impl EpisodeDriver {
    /// Reset `env` and collect its initial observations.
    pub fn start(
        env: &mut dyn Environment,
        env_seeds: SeedStream,
        agent_ids: impl IntoIterator<Item = AgentId>,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        let pending = env.reset(env_seeds)?;
        let mut log = EpisodeLog { seed, ..Default::default() };
        log.total_rewards = agent_ids.into_iter().map(|id| (id, 0.0)).collect();
        log.records.extend(env.drain_events());
        Ok(EpisodeDriver { pending, log })
    }

    pub fn pending(&self) -> &ObservationMap {
        &self.pending
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    /// Run one observe → act → transition cycle. Returns false without doing
    /// anything when the environment is already done.
    pub fn step(
        &mut self,
        env: &mut dyn Environment,
        agents: &mut BTreeMap<AgentId, Box<dyn AgentPolicy>>,
    ) -> Result<bool, ProtocolError> {
        if env.done() {
            return Ok(false);
        }
        let actions = step_agents(agents, &self.pending)?;
        debug!(world = env.world_tag(), time = env.time().0, n_actions = actions.len(), "env step");
        let observations = env.step(actions)?;
        for (id, obs) in &observations {
            if let Some(reward) = obs.reward {
                *self.log.total_rewards.entry(*id).or_insert(0.0) += reward;
            }
        }
        self.log.records.extend(env.drain_events());
        self.log.steps_executed += 1;
        self.pending = observations;
        Ok(true)
    }

    pub fn finish(self) -> EpisodeLog {
        self.log
    }
}

/// Run one episode: reset, then step until `done()` or `max_steps`.
///
/// The environment receives `seed`'s `"env"` child stream and each agent its
/// own `"agent/<id>"` child, so identical inputs give identical logs.
pub fn run_episode(
    env: &mut dyn Environment,
    agents: &mut BTreeMap<AgentId, Box<dyn AgentPolicy>>,
    max_steps: u64,
    seed: u64,
) -> Result<EpisodeLog, ProtocolError> {
    let root = SeedStream::new(seed);
    for (id, agent) in agents.iter_mut() {
        agent.begin_episode(root.child(&format!("agent/{id}")));
        agent.enter_world(env.world_tag());
    }
    let mut driver = EpisodeDriver::start(env, root.child("env"), agents.keys().copied(), seed)?;
    while driver.log.steps_executed < max_steps && driver.step(env, agents)? {}
    Ok(driver.finish())
}
