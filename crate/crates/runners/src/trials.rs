//! Repeated trials over consecutive seeds.

use std::collections::BTreeSet;
use std::sync::Arc;

use agentsim_core::backends::CompletionBackend;
use agentsim_core::{run_episode, EnvError, EpisodeLog, ProtocolError};
use rayon::prelude::*;
use thiserror::Error;

use crate::roster::{AgentsSpec, Roster};
use crate::stats::{mean, sample_stddev};
use crate::world::{EnvSpec, Metrics};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    /// Metrics, or the failure message of a trial that did not finish.
    pub outcome: Result<Metrics, String>,
}

/// Per-trial rows plus a mean/stddev summary over the successful ones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialTable {
    pub rows: Vec<TrialRow>,
}

#[derive(Debug, Error)]
pub enum TrialsError {
    #[error("trials must be at least 1")]
    NoTrials,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("world has {world} agents but the roster has {roster}")]
    RosterMismatch { world: u32, roster: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl TrialTable {
    pub fn successes(&self) -> impl Iterator<Item = &Metrics> {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Union of metric names over successful trials, sorted.
    pub fn columns(&self) -> Vec<String> {
        let names: BTreeSet<&String> = self.successes().flat_map(|m| m.keys()).collect();
        names.into_iter().cloned().collect()
    }

    /// Values of one metric, in trial order, skipping trials without it.
    pub fn values(&self, name: &str) -> Vec<f64> {
        self.successes().filter_map(|m| m.get(name).copied()).collect()
    }

    fn summarize(&self, f: fn(&[f64]) -> f64) -> Metrics {
        self.columns()
            .into_iter()
            .map(|c| {
                let value = f(&self.values(&c));
                (c, value)
            })
            .collect()
    }

    pub fn mean(&self) -> Metrics {
        self.summarize(mean)
    }

    /// Sample standard deviation per metric.
    pub fn stddev(&self) -> Metrics {
        self.summarize(sample_stddev)
    }

    /// Header `trial,seed,error,<metrics...>`, one row per trial, then `mean`
    /// and `stddev` rows. Missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let columns = self.columns();
        let mut out = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["trial".to_string(), "seed".into(), "error".into()];
        header.extend(columns.iter().cloned());
        out.write_record(&header).expect("in-memory write");
        let cells = |m: Option<&Metrics>| -> Vec<String> {
            columns.iter().map(|c| m.and_then(|m| m.get(c)).map(|v| v.to_string()).unwrap_or_default()).collect()
        };
        for row in &self.rows {
            let mut record = vec![row.trial.to_string(), row.seed.to_string()];
            record.push(row.outcome.as_ref().err().cloned().unwrap_or_default());
            record.extend(cells(row.outcome.as_ref().ok()));
            out.write_record(&record).expect("in-memory write");
        }
        for (label, summary) in [("mean", self.mean()), ("stddev", self.stddev())] {
            let mut record = vec![label.to_string(), String::new(), String::new()];
            record.extend(cells(Some(&summary)));
            out.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(out.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Run `trial(seed)` for seeds `base_seed + i`, `i < trials`, concurrently.
///
/// A failing trial is recorded with its message and the others still run.
/// Extra per-trial output `T` comes back in trial order.
pub fn run_trials<T, F>(trials: usize, base_seed: u64, trial: F) -> Result<(TrialTable, Vec<Option<T>>), TrialsError>
where
    T: Send,
    F: Fn(u64) -> Result<(Metrics, T), String> + Sync,
{
    if trials == 0 {
        return Err(TrialsError::NoTrials);
    }
    type Outcome<T> = (usize, u64, Result<(Metrics, T), String>);
    let results: Vec<Outcome<T>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            (i, seed, trial(seed))
        })
        .collect();
    let mut table = TrialTable::default();
    let mut extras = Vec::with_capacity(trials);
    for (i, seed, result) in results {
        let (outcome, extra) = match result {
            Ok((metrics, extra)) => (Ok(metrics), Some(extra)),
            Err(e) => (Err(e), None),
        };
        table.rows.push(TrialRow { trial: i, seed, outcome });
        extras.push(extra);
    }
    Ok((table, extras))
}

/// One episode of `env` with a fresh roster built from `agents`.
pub fn run_single(
    env: &EnvSpec,
    agents: &AgentsSpec,
    backend: Arc<dyn CompletionBackend>,
    max_steps: u64,
    seed: u64,
) -> Result<(EpisodeLog, Metrics), RunError> {
    let roster = Roster::build(agents, env.population(), backend);
    run_with_roster(env, &roster, max_steps, seed)
}

pub fn run_with_roster(env: &EnvSpec, roster: &Roster, max_steps: u64, seed: u64) -> Result<(EpisodeLog, Metrics), RunError> {
    if env.population() as usize != roster.len() {
        return Err(RunError::RosterMismatch { world: env.population(), roster: roster.len() });
    }
    let mut world = env.build()?;
    let log = run_episode(world.as_mut(), &mut roster.policies(), max_steps, seed)?;
    let metrics = env.metrics(&log.records);
    Ok((log, metrics))
}

/// [`run_trials`] over [`run_single`], keeping each trial's log.
pub fn run_env_trials(
    env: &EnvSpec,
    agents: &AgentsSpec,
    backend: Arc<dyn CompletionBackend>,
    max_steps: u64,
    trials: usize,
    base_seed: u64,
) -> Result<(TrialTable, Vec<Option<EpisodeLog>>), TrialsError> {
    run_trials(trials, base_seed, |seed| {
        run_single(env, agents, backend.clone(), max_steps, seed)
            .map(|(log, metrics)| (metrics, log))
            .map_err(|e| e.to_string())
    })
}
