//! One agent roster cycling through several worlds.

use std::collections::BTreeMap;

use agentsim_core::{AgentId, AgentPolicy, EnvError, Environment, EpisodeDriver, EventRecord, ProtocolError, SeedStream};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::EnvSpec;

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiWorldSchedule {
    /// Visited in this order every cycle.
    pub worlds: Vec<EnvSpec>,
    pub cycles: u32,
    /// Environment steps per visit.
    #[serde(default = "one")]
    pub steps_per_phase: u64,
}

/// One visit to one world.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub world_tag: String,
    pub world_index: usize,
    pub cycle: u32,
    pub steps: u64,
    pub records: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiWorldLog {
    pub seed: u64,
    pub phases: Vec<Phase>,
}

#[derive(Debug, Error)]
pub enum MultiWorldError {
    #[error("a multi-world schedule needs at least two worlds, got {0}")]
    TooFewWorlds(usize),
    #[error("world {index} ({tag}) has {population} agents but the roster has {roster}")]
    RosterMismatch { index: usize, tag: &'static str, population: u32, roster: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl MultiWorldLog {
    /// World tag of every logged phase, in order.
    pub fn world_tags(&self) -> Vec<&str> {
        self.phases.iter().map(|p| p.world_tag.as_str()).collect()
    }

    /// All records in phase order, each tagged with `world` and `cycle`.
    pub fn records(&self) -> Vec<EventRecord> {
        self.phases
            .iter()
            .flat_map(|p| p.records.iter().map(|r| r.clone().with("world", p.world_tag.as_str()).with("cycle", p.cycle)))
            .collect()
    }

    /// One JSON record per line.
    pub fn to_jsonl(&self) -> String {
        self.records().iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
    }

    /// Records of one world only, untagged, e.g. for that world's metrics.
    pub fn world_records(&self, world_index: usize) -> Vec<EventRecord> {
        self.phases.iter().filter(|p| p.world_index == world_index).flat_map(|p| p.records.clone()).collect()
    }
}

/// Cycle `agents` through `schedule.worlds`.
///
/// Each world is reset once, on its first visit, with the `env/<index>` child
/// of `seed`; after that its state and clock carry over between visits. Agents
/// get one `begin_episode` call and an `enter_world` before every visit. A
/// visit runs up to `steps_per_phase` steps; visits to finished worlds are
/// skipped and not logged.
pub fn run_multiworld(
    schedule: &MultiWorldSchedule,
    agents: &mut BTreeMap<AgentId, Box<dyn AgentPolicy>>,
    seed: u64,
) -> Result<MultiWorldLog, MultiWorldError> {
    if schedule.worlds.len() < 2 {
        return Err(MultiWorldError::TooFewWorlds(schedule.worlds.len()));
    }
    for (index, spec) in schedule.worlds.iter().enumerate() {
        if spec.population() as usize != agents.len() {
            return Err(MultiWorldError::RosterMismatch {
                index,
                tag: spec.world_tag(),
                population: spec.population(),
                roster: agents.len(),
            });
        }
    }
    let root = SeedStream::new(seed);
    let mut log = MultiWorldLog { seed, phases: Vec::new() };
    if schedule.cycles == 0 {
        return Ok(log);
    }
    for (id, agent) in agents.iter_mut() {
        agent.begin_episode(root.child(&format!("agent/{id}")));
    }
    // world, driver, records already logged
    type Slot = Option<(Box<dyn Environment>, EpisodeDriver, usize)>;
    let mut worlds: Vec<Slot> =
        schedule.worlds.iter().map(|_| None).collect();

    for cycle in 0..schedule.cycles {
        for (index, spec) in schedule.worlds.iter().enumerate() {
            let slot = &mut worlds[index];
            if slot.is_none() {
                let mut env = spec.build()?;
                let driver =
                    EpisodeDriver::start(env.as_mut(), root.child(&format!("env/{index}")), agents.keys().copied(), seed)?;
                *slot = Some((env, driver, 0));
            }
            let (env, driver, logged) = slot.as_mut().expect("initialized above");
            if env.done() {
                continue;
            }
            for agent in agents.values_mut() {
                agent.enter_world(env.world_tag());
            }
            let steps_before = driver.log().steps_executed;
            for _ in 0..schedule.steps_per_phase {
                if !driver.step(env.as_mut(), agents)? {
                    break;
                }
            }
            log.phases.push(Phase {
                world_tag: env.world_tag().to_string(),
                world_index: index,
                cycle,
                steps: driver.log().steps_executed - steps_before,
                records: driver.log().records[*logged..].to_vec(),
            });
            *logged = driver.log().records.len();
        }
    }
    Ok(log)
}
