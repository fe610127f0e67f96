use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::types::{AgentId, TimeStep};

/// One line of the append-only simulation log.
///
/// `user_id` is absent for environment-level events (e.g. a clearing summary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user_id: Option<AgentId>,
    pub current_time: TimeStep,
    pub action: String,
    pub info: Map<String, Value>,
}

impl EventRecord {
    pub fn new(user_id: Option<AgentId>, current_time: TimeStep, action: impl Into<String>) -> Self {
        EventRecord { user_id, current_time, action: action.into(), info: Map::new() }
    }

    pub fn agent(user_id: AgentId, current_time: TimeStep, action: impl Into<String>) -> Self {
        Self::new(Some(user_id), current_time, action)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.info.insert(key.to_string(), value.into());
        self
    }

    pub fn info_str(&self, key: &str) -> Option<&str> {
        self.info.get(key).and_then(Value::as_str)
    }

    pub fn info_u64(&self, key: &str) -> Option<u64> {
        self.info.get(key).and_then(Value::as_u64)
    }

    pub fn info_f64(&self, key: &str) -> Option<f64> {
        self.info.get(key).and_then(Value::as_f64)
    }
}

/// Trailing record of a serialized episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub steps_executed: u64,
    pub total_rewards: BTreeMap<AgentId, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryLine {
    summary: EpisodeSummary,
}

#[derive(Debug, Error)]
pub enum LogParseError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("missing trailing summary record")]
    MissingSummary,
    #[error("line {0}: record after summary")]
    TrailingRecord(usize),
}

/// Full record of one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub records: Vec<EventRecord>,
    pub total_rewards: BTreeMap<AgentId, f64>,
    pub seed: u64,
    pub steps_executed: u64,
}

impl EpisodeLog {
    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            seed: self.seed,
            steps_executed: self.steps_executed,
            total_rewards: self.total_rewards.clone(),
        }
    }

    /// Newline-delimited JSON: one line per record, then a `{"summary": ...}` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("event records serialize"));
            out.push('\n');
        }
        let summary = SummaryLine { summary: self.summary() };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogParseError> {
        let mut log = EpisodeLog::default();
        let mut summary = None;
        for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            if summary.is_some() {
                return Err(LogParseError::TrailingRecord(idx + 1));
            }
            let value: Value = serde_json::from_str(line)
                .map_err(|source| LogParseError::Json { line: idx + 1, source })?;
            if value.get("summary").is_some() {
                let parsed: SummaryLine = serde_json::from_value(value)
                    .map_err(|source| LogParseError::Json { line: idx + 1, source })?;
                summary = Some(parsed.summary);
            } else {
                let record = serde_json::from_value(value)
                    .map_err(|source| LogParseError::Json { line: idx + 1, source })?;
                log.records.push(record);
            }
        }
        let summary = summary.ok_or(LogParseError::MissingSummary)?;
        log.seed = summary.seed;
        log.steps_executed = summary.steps_executed;
        log.total_rewards = summary.total_rewards;
        Ok(log)
    }
}

/// Parse bare event records (no summary line required); summary lines are skipped.
pub fn parse_event_lines(text: &str) -> Result<Vec<EventRecord>, LogParseError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let value: Value = serde_json::from_str(line)
            .map_err(|source| LogParseError::Json { line: idx + 1, source })?;
        if value.get("summary").is_some() {
            continue;
        }
        records.push(
            serde_json::from_value(value)
                .map_err(|source| LogParseError::Json { line: idx + 1, source })?,
        );
    }
    Ok(records)
}
