//! Memory transfer: run one world, then give a questionnaire with and
//! without the memories it produced.

use std::collections::BTreeMap;

use agentsim_core::{run_episode, AgentId, EnvError, EpisodeLog, ProtocolError, SeedStream};
use agentsim_envs::questionnaire::{QuestionnaireConfig, QuestionnaireEnv, ScoreError, ScoreReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roster::Roster;
use crate::stats::{paired_t_test, TTest, TTestError};
use crate::world::EnvSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferPlan {
    pub source: EnvSpec,
    /// Respondent count is taken from the roster.
    pub instrument: QuestionnaireConfig,
    /// When false both arms use fresh memory.
    #[serde(default = "yes")]
    pub carry_memory: bool,
    #[serde(default)]
    pub source_max_steps: Option<u64>,
}

fn yes() -> bool {
    true
}

/// `carry - fresh` for one agent and one pair or subscale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Difference {
    pub agent: AgentId,
    pub id: String,
    pub carry: f64,
    pub fresh: f64,
    pub difference: f64,
}

#[derive(Debug)]
pub struct TransferReport {
    pub source_log: EpisodeLog,
    pub carry_log: EpisodeLog,
    pub fresh_log: EpisodeLog,
    /// Per (agent, pair id): bias with carried memory minus bias with fresh memory.
    pub bias_differences: Vec<Difference>,
    /// Per (agent, subscale): normalized mean, carried minus fresh.
    pub subscale_differences: Vec<Difference>,
    pub bias_test: Result<TTest, TTestError>,
    pub subscale_test: Result<TTest, TTestError>,
}

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("source world has {world} agents but the roster has {roster}")]
    RosterMismatch { world: u32, roster: usize },
    #[error("instrument: {0}")]
    Instrument(String),
    #[error("scoring agent {agent}: {source}")]
    Score { agent: AgentId, source: ScoreError },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl TransferReport {
    /// Header `kind,agent,id,carry,fresh,difference`; bias rows first.
    pub fn to_csv(&self) -> String {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["kind", "agent", "id", "carry", "fresh", "difference"]).expect("in-memory write");
        for (kind, rows) in [("bias", &self.bias_differences), ("subscale", &self.subscale_differences)] {
            for d in rows {
                out.write_record([
                    kind.to_string(),
                    d.agent.to_string(),
                    d.id.clone(),
                    d.carry.to_string(),
                    d.fresh.to_string(),
                    d.difference.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(out.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Paired differences between two arms' score reports, in (agent, id) order.
/// Entries present in only one arm are skipped.
pub fn differences(
    carry: &BTreeMap<AgentId, ScoreReport>,
    fresh: &BTreeMap<AgentId, ScoreReport>,
) -> (Vec<Difference>, Vec<Difference>) {
    let mut biases = Vec::new();
    let mut subscales = Vec::new();
    for (&agent, c) in carry {
        let Some(f) = fresh.get(&agent) else { continue };
        for (id, &cb) in &c.biases {
            if let Some(&fb) = f.biases.get(id) {
                biases.push(Difference { agent, id: id.clone(), carry: cb, fresh: fb, difference: cb - fb });
            }
        }
        for (id, cs) in &c.subscales {
            if let Some(fs) = f.subscales.get(id) {
                let (cm, fm) = (cs.normalized_mean, fs.normalized_mean);
                subscales.push(Difference { agent, id: id.clone(), carry: cm, fresh: fm, difference: cm - fm });
            }
        }
    }
    (biases, subscales)
}

fn administer(
    instrument: &QuestionnaireConfig,
    roster: &Roster,
    seed: u64,
) -> Result<(EpisodeLog, BTreeMap<AgentId, ScoreReport>), TransferError> {
    let config = QuestionnaireConfig { n_respondents: roster.len() as u32, ..instrument.clone() };
    let mut env = QuestionnaireEnv::new(config).map_err(|e| TransferError::Instrument(e.to_string()))?;
    let log = run_episode(&mut env, &mut roster.policies(), u64::MAX, seed)?;
    let mut reports = BTreeMap::new();
    for (agent, result) in env.scores() {
        reports.insert(agent, result.map_err(|source| TransferError::Score { agent, source })?);
    }
    Ok((log, reports))
}

/// Phase 1 runs `plan.source` with the roster, filling memories. Phase 2
/// gives the instrument twice with one seed, first with the carried
/// archives, then with empty stores. The instrument never writes memory, and
/// every agent's memory and settings are restored before returning.
pub fn run_memory_transfer(plan: &TransferPlan, roster: &Roster, seed: u64) -> Result<TransferReport, TransferError> {
    if plan.source.population() as usize != roster.len() {
        return Err(TransferError::RosterMismatch { world: plan.source.population(), roster: roster.len() });
    }
    let mut source = plan.source.build()?;
    let source_log =
        run_episode(source.as_mut(), &mut roster.policies(), plan.source_max_steps.unwrap_or(u64::MAX), seed)?;

    let phase_two = SeedStream::new(seed).child("instrument").seed();
    let saved: Vec<bool> = {
        let mut saved = Vec::new();
        roster.for_each(|a| {
            saved.push(a.settings.record_memory);
            a.settings.record_memory = false;
        });
        saved
    };

    let arms = (|| {
        let swap_out = |when: bool| {
            let mut stash = Vec::new();
            roster.for_each(|a| {
                let replacement = if when { a.memory.fresh() } else { a.memory.clone() };
                stash.push(std::mem::replace(&mut a.memory, replacement));
            });
            stash
        };
        let restore = |stash: Vec<_>| {
            let mut stash = stash.into_iter();
            roster.for_each(|a| a.memory = stash.next().expect("one stash entry per agent"));
        };

        let stash = swap_out(!plan.carry_memory);
        let carry = administer(&plan.instrument, roster, phase_two);
        restore(stash);
        let carry = carry?;

        let stash = swap_out(true);
        let fresh = administer(&plan.instrument, roster, phase_two);
        restore(stash);
        Ok::<_, TransferError>((carry, fresh?))
    })();

    let mut saved = saved.into_iter();
    roster.for_each(|a| a.settings.record_memory = saved.next().expect("one flag per agent"));

    let ((carry_log, carry), (fresh_log, fresh)) = arms?;
    let (bias_differences, subscale_differences) = differences(&carry, &fresh);
    let values = |d: &[Difference]| d.iter().map(|d| d.difference).collect::<Vec<_>>();
    Ok(TransferReport {
        bias_test: paired_t_test(&values(&bias_differences)),
        subscale_test: paired_t_test(&values(&subscale_differences)),
        source_log,
        carry_log,
        fresh_log,
        bias_differences,
        subscale_differences,
    })
}
