use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use agentsim_core::backends::{CompletionResult, ScriptedBackend};
use agentsim_core::cognition::{CognitiveAgent, MemoryStore, PersonaConfig};
use agentsim_core::{
    route_messages, run_episode, ActionEnvelope, ActionMap, AgentError, AgentId, AgentPolicy, EnvError, Environment,
    EventRecord, FieldType, Message, MessagePayload, Observation, ObservationMap, ProtocolError, Schema, SeedStream,
    TimeStep,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Agents submit a value and may send messages; the env routes them into next step's inboxes.
struct RelayEnv {
    population: BTreeSet<AgentId>,
    steps: u64,
    time: TimeStep,
    inboxes: BTreeMap<AgentId, Vec<Message>>,
    totals: BTreeMap<AgentId, i64>,
    noise: Option<ChaCha8Rng>,
    events: Vec<EventRecord>,
}

impl RelayEnv {
    fn new(n: u32, steps: u64) -> Self {
        RelayEnv {
            population: (0..n).map(AgentId).collect(),
            steps,
            time: TimeStep(0),
            inboxes: BTreeMap::new(),
            totals: BTreeMap::new(),
            noise: None,
            events: Vec::new(),
        }
    }

    fn schema() -> Schema {
        Schema::new("relay").required("value", FieldType::Integer)
    }

    fn observations(&self, rewards: &BTreeMap<AgentId, f64>) -> ObservationMap {
        self.population
            .iter()
            .map(|&id| {
                let text = format!("t={} total={}", self.time, self.totals.get(&id).copied().unwrap_or(0));
                let mut obs = Observation::new(id, self.time, text)
                    .with_inbox(self.inboxes.get(&id).cloned().unwrap_or_default());
                if !self.done() {
                    obs = obs.with_schema(Self::schema());
                }
                if let Some(&r) = rewards.get(&id) {
                    obs = obs.with_reward(r);
                }
                (id, obs)
            })
            .collect()
    }
}

impl Environment for RelayEnv {
    fn world_tag(&self) -> &str {
        "relay"
    }

    fn time(&self) -> TimeStep {
        self.time
    }

    fn reset(&mut self, seeds: SeedStream) -> Result<ObservationMap, EnvError> {
        self.time = TimeStep(0);
        self.inboxes.clear();
        self.totals.clear();
        self.events.clear();
        self.noise = Some(seeds.child("noise").rng());
        Ok(self.observations(&BTreeMap::new()))
    }

    fn step(&mut self, actions: ActionMap) -> Result<ObservationMap, EnvError> {
        if self.done() {
            return Err(EnvError::AlreadyDone);
        }
        let mut outbox = Vec::new();
        let mut rewards = BTreeMap::new();
        for (id, action) in &actions {
            let value = action.body["value"].as_i64().unwrap_or(0);
            let bonus = self.noise.as_mut().unwrap().random_range(0..3);
            *self.totals.entry(*id).or_default() += value + bonus;
            rewards.insert(*id, value as f64 / 10.0);
            self.events.push(EventRecord::agent(*id, self.time, "submit").with("value", value).with("bonus", bonus));
            outbox.extend(action.outgoing_messages.iter().cloned());
        }
        for msg in &outbox {
            self.events.push(
                EventRecord::new(msg.src_agent_id, self.time, "message")
                    .with("dst", msg.dst_agent_id.map(|d| d.0))
                    .with("kind", msg.payload.kind.as_str()),
            );
        }
        self.inboxes = route_messages(&outbox, &self.population)?;
        self.time = self.time.next();
        Ok(self.observations(&rewards))
    }

    fn done(&self) -> bool {
        self.time.0 >= self.steps
    }

    fn drain_events(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.events)
    }
}

/// Seeded chatter: one unicast to the next agent, sometimes a broadcast.
struct Chatter {
    id: AgentId,
    n: u32,
    rng: Option<ChaCha8Rng>,
}

impl AgentPolicy for Chatter {
    fn begin_episode(&mut self, seeds: SeedStream) {
        self.rng = Some(seeds.rng());
    }

    fn act(&mut self, obs: &Observation) -> Result<ActionEnvelope, AgentError> {
        let rng = self.rng.as_mut().ok_or_else(|| AgentError::Other("episode not started".into()))?;
        let value = rng.random_range(0..10) + obs.inbox.len() as i64;
        let mut envelope = ActionEnvelope::new(self.id, obs.time, json!({ "value": value }));
        let next = AgentId((self.id.0 + 1) % self.n);
        if next != self.id {
            envelope.outgoing_messages.push(Message::new(obs.time, Some(self.id), Some(next), MessagePayload::text("note", format!("{value}"))));
        }
        if rng.random_bool(0.3) {
            envelope.outgoing_messages.push(Message::new(obs.time, Some(self.id), None, MessagePayload::text("shout", "hi")));
        }
        Ok(envelope)
    }
}

fn mixed_roster(n: u32) -> BTreeMap<AgentId, Box<dyn AgentPolicy>> {
    // the scripted model answers with the number of inbox lines it was shown
    let backend = Arc::new(ScriptedBackend::from_fn(|req| {
        let seen = req.rendered().matches("from agent").count();
        CompletionResult::text(format!("{{\"value\": {seen}}}"))
    }));
    (0..n)
        .map(|i| {
            let id = AgentId(i);
            let policy: Box<dyn AgentPolicy> = if i % 2 == 0 {
                Box::new(Chatter { id, n, rng: None })
            } else {
                Box::new(CognitiveAgent::new(id, PersonaConfig::new(format!("agent {i}")), MemoryStore::buffer(3), backend.clone()))
            };
            (id, policy)
        })
        .collect()
}

#[test]
fn ten_agents_twenty_steps_three_runs_are_byte_identical() {
    let started = Instant::now();
    let logs: Vec<String> = (0..3)
        .map(|_| {
            let mut env = RelayEnv::new(10, 20);
            let mut agents = mixed_roster(10);
            run_episode(&mut env, &mut agents, 100, 42).unwrap().to_jsonl()
        })
        .collect();
    assert!(started.elapsed().as_secs_f64() < 5.0);
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[1], logs[2]);
    assert!(logs[0].contains("\"action\":\"message\""));

    let mut env = RelayEnv::new(10, 20);
    let other = run_episode(&mut env, &mut mixed_roster(10), 100, 43).unwrap().to_jsonl();
    assert_ne!(other, logs[0]);
}

#[test]
fn clock_and_rewards() {
    let mut env = RelayEnv::new(3, 4);
    let mut agents = mixed_roster(3);
    let log = run_episode(&mut env, &mut agents, 100, 1).unwrap();
    assert_eq!(log.steps_executed, 4);
    assert!(log.records.windows(2).all(|w| w[0].current_time <= w[1].current_time));
    for (id, total) in &log.total_rewards {
        let expected: f64 = log
            .records
            .iter()
            .filter(|r| r.action == "submit" && r.user_id == Some(*id))
            .map(|r| r.info_f64("value").unwrap() / 10.0)
            .sum();
        assert!((total - expected).abs() < 1e-12);
    }

    let mut env = RelayEnv::new(3, 10);
    let log = run_episode(&mut env, &mut mixed_roster(3), 2, 1).unwrap();
    assert_eq!(log.steps_executed, 2);
}

#[test]
fn done_at_reset_gives_empty_log() {
    let mut env = RelayEnv::new(2, 0);
    let log = run_episode(&mut env, &mut mixed_roster(2), 10, 0).unwrap();
    assert!(log.records.is_empty());
    assert_eq!(log.steps_executed, 0);
    assert!(log.total_rewards.values().all(|&r| r == 0.0));
}

#[test]
fn missing_agent_and_schema_violation_are_reported() {
    let mut env = RelayEnv::new(3, 2);
    let mut agents = mixed_roster(2);
    assert!(matches!(run_episode(&mut env, &mut agents, 5, 0), Err(ProtocolError::AgentMissing(AgentId(2)))));

    let mut env = RelayEnv::new(1, 2);
    let mut bad: BTreeMap<AgentId, Box<dyn AgentPolicy>> = BTreeMap::new();
    bad.insert(
        AgentId(0),
        Box::new(|obs: &Observation| Ok(ActionEnvelope::new(obs.agent_id, obs.time, json!({"value": "many"})))),
    );
    assert!(matches!(run_episode(&mut env, &mut bad, 5, 0), Err(ProtocolError::SchemaViolation { .. })));
}

#[test]
fn observations_do_not_depend_on_other_agents_memory() {
    let mut env = RelayEnv::new(4, 3);
    let obs = env.reset(SeedStream::new(0)).unwrap();
    let mut agents = mixed_roster(4);
    let mut actions = ActionMap::new();
    for (id, agent) in agents.iter_mut() {
        agent.begin_episode(SeedStream::new(0).child(&format!("agent/{id}")));
        actions.insert(*id, agent.act(&obs[id]).unwrap());
    }
    let mut twin = RelayEnv::new(4, 3);
    twin.reset(SeedStream::new(0)).unwrap();
    // a different memory in agent 1 changes neither env state nor what agent 3 sees
    let mut other = CognitiveAgent::new(
        AgentId(1),
        PersonaConfig::new("agent 1"),
        MemoryStore::buffer(3),
        Arc::new(ScriptedBackend::text("{\"value\": 0}")),
    );
    other.memory.record(agentsim_core::cognition::MemoryEntry::new(TimeStep(0), "relay", agentsim_core::cognition::MemoryRole::Note, "secret"));
    let _ = other.act(&obs[&AgentId(1)]).unwrap();
    let a = env.step(actions.clone()).unwrap();
    let b = twin.step(actions).unwrap();
    assert_eq!(a[&AgentId(3)].context_text, b[&AgentId(3)].context_text);
    assert_eq!(a[&AgentId(3)].inbox, b[&AgentId(3)].inbox);
}
