//! Cumulative information ablation over the market world.
//!
//! Level 1 is the plain market. Level 2 adds a news headline to every
//! agent's config, level 3 also seeds memory with a research summary, and
//! level 4 also offers a daily news tool.

use std::sync::Arc;

use agentsim_core::backends::{CompletionBackend, CompletionRequest};
use agentsim_core::cognition::{compose_prompt, MemoryEntry, MemoryRole};
use agentsim_core::{AgentId, EnvError, Environment, EpisodeLog, SeedStream, TimeStep};
use agentsim_envs::market::{parse_news_feed, MarketConfig, MarketEnv, NewsItem, Symbol, WORLD_TAG};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roster::{AgentsSpec, Roster};
use crate::stats::mean;
use crate::trials::{run_trials, run_with_roster, TrialTable, TrialsError};
use crate::world::EnvSpec;

pub const TARIFF_HEADLINE: &str = include_str!("../data/tariff_headline.txt");
pub const TARIFF_SUMMARY: &str = include_str!("../data/tariff_summary.txt");
pub const TARIFF_NEWS: &str = include_str!("../data/tariff_news.jsonl");

/// Cumulative level: level k enables the first k - 1 flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AblationSetting(u8);

impl AblationSetting {
    pub const ALL: [AblationSetting; 4] = [AblationSetting(1), AblationSetting(2), AblationSetting(3), AblationSetting(4)];

    pub fn new(level: u8) -> Result<Self, AblationError> {
        if (1..=4).contains(&level) {
            Ok(AblationSetting(level))
        } else {
            Err(AblationError::Level(level))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn headline_config(self) -> bool {
        self.0 >= 2
    }

    pub fn paper_summary_memory(self) -> bool {
        self.0 >= 3
    }

    pub fn news_tool(self) -> bool {
        self.0 >= 4
    }

    pub fn label(self) -> String {
        format!("#{}", self.0)
    }
}

impl TryFrom<u8> for AblationSetting {
    type Error = AblationError;

    fn try_from(level: u8) -> Result<Self, Self::Error> {
        AblationSetting::new(level)
    }
}

impl From<AblationSetting> for u8 {
    fn from(s: AblationSetting) -> u8 {
        s.0
    }
}

/// Text injected by the enabled flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationInputs {
    pub headline: String,
    pub summary: String,
    pub news: Vec<NewsItem>,
}

impl AblationInputs {
    /// The bundled tariff headline, research summary and daily news.
    pub fn tariff() -> Self {
        AblationInputs {
            headline: TARIFF_HEADLINE.trim().to_string(),
            summary: TARIFF_SUMMARY.trim().to_string(),
            news: parse_news_feed(TARIFF_NEWS).expect("bundled news feed parses"),
        }
    }

    /// Strings each enabled flag adds to an agent's prompt, in flag order.
    pub fn artifacts(&self, setting: AblationSetting) -> Vec<String> {
        let mut out = Vec::new();
        if setting.headline_config() {
            out.push(self.headline.clone());
        }
        if setting.paper_summary_memory() {
            out.push(self.summary.clone());
        }
        if setting.news_tool() {
            out.push(tool_line("fetch_news", &news_tool_description()));
        }
        out
    }
}

fn news_tool_description() -> String {
    agentsim_envs::market::fetch_news_tool(Arc::new(Vec::new()), NaiveDate::MIN).description
}

fn tool_line(name: &str, description: &str) -> String {
    format!("Tool {name}: {description}")
}

/// Five trading days from 2025-04-01, otherwise market defaults.
pub fn tariff_market() -> MarketConfig {
    MarketConfig {
        days: 5,
        start_date: NaiveDate::from_ymd_opt(2025, 4, 1).expect("valid date"),
        ..MarketConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct AblationPlan {
    pub market: MarketConfig,
    pub agents: AgentsSpec,
    pub inputs: AblationInputs,
    pub settings: Vec<AblationSetting>,
    pub trials: usize,
    pub base_seed: u64,
    pub max_steps: u64,
}

impl AblationPlan {
    pub fn new(market: MarketConfig, agents: AgentsSpec, inputs: AblationInputs) -> Self {
        AblationPlan {
            market,
            agents,
            inputs,
            settings: AblationSetting::ALL.to_vec(),
            trials: 5,
            base_seed: 0,
            max_steps: u64::MAX,
        }
    }

    pub fn market_for(&self, setting: AblationSetting) -> MarketConfig {
        let mut config = self.market.clone();
        config.news_tool = setting.news_tool();
        config.news = if setting.news_tool() { self.inputs.news.clone() } else { Vec::new() };
        config
    }

    pub fn agents_for(&self, setting: AblationSetting) -> AgentsSpec {
        let mut agents = self.agents.clone();
        if setting.headline_config() {
            agents.directives.push(self.inputs.headline.clone());
        }
        agents
    }

    /// A roster for one trial; level 3 and up get the summary as a note
    /// before day 1.
    pub fn roster_for(&self, setting: AblationSetting, backend: Arc<dyn CompletionBackend>) -> Roster {
        let roster = Roster::build(&self.agents_for(setting), self.market.n_agents, backend);
        if setting.paper_summary_memory() {
            roster.for_each(|a| {
                a.memory.record(MemoryEntry::new(TimeStep(0), WORLD_TAG, MemoryRole::Note, self.inputs.summary.clone()))
            });
        }
        roster
    }

    /// Agent 0's first prompt under `setting` as the backend sees it, plus
    /// one `Tool <name>: <description>` line per offered tool.
    pub fn first_prompt(&self, setting: AblationSetting, backend: Arc<dyn CompletionBackend>, seed: u64) -> Result<String, AblationError> {
        let mut env = MarketEnv::new(self.market_for(setting))?;
        let observations = env.reset(SeedStream::new(seed).child("env"))?;
        let obs = observations.get(&AgentId(0)).ok_or(AblationError::NoAgents)?;
        let roster = self.roster_for(setting, backend);
        let text = roster
            .with(AgentId(0), |a| {
                let turns = compose_prompt(obs, &a.persona, &a.memory).to_turns();
                CompletionRequest::new(turns, a.settings.model_id.clone(), a.settings.temperature).rendered()
            })
            .ok_or(AblationError::NoAgents)?;
        let tools: Vec<String> = obs.tools.iter().map(|t| tool_line(&t.name, &t.description)).collect();
        Ok(std::iter::once(text).chain(tools).collect::<Vec<_>>().join("\n\n"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub stock_a: f64,
    pub stock_b: f64,
    /// Against the previous row; `None` on the first.
    pub delta_a: Option<f64>,
    pub delta_b: Option<f64>,
    pub trials: TrialTable,
    /// One per trial, in trial order.
    pub logs: Vec<EpisodeLog>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("ablation level {0} is outside 1..=4")]
    Level(u8),
    #[error("no settings to run")]
    NoSettings,
    #[error("setting {0} needs a non-empty {1}")]
    MissingInput(String, &'static str),
    #[error("the market has no agents")]
    NoAgents,
    #[error("setting {setting}, seed {seed}: {message}")]
    Trial { setting: String, seed: u64, message: String },
    #[error("setting {setting}, seed {seed}: buy/sell ratio undefined for stock {symbol}")]
    UndefinedRatio { setting: String, seed: u64, symbol: Symbol },
    #[error(transparent)]
    Trials(#[from] TrialsError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

pub const ABLATION_HEADER: [&str; 5] = ["setting", "stock_a", "stock_b", "delta_a", "delta_b"];

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(ABLATION_HEADER).expect("in-memory write");
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for row in &self.rows {
            out.write_record([
                row.setting.label(),
                row.stock_a.to_string(),
                row.stock_b.to_string(),
                cell(row.delta_a),
                cell(row.delta_b),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(out.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Fixed-width text table; deltas name the row they compare against.
    pub fn render(&self) -> String {
        let mut lines = vec![format!("{:<8} {:>8} {:>8} {:>20} {:>20}", "setting", "stock A", "stock B", "delta A", "delta B")];
        for (i, row) in self.rows.iter().enumerate() {
            let delta = |d: Option<f64>| match d {
                Some(d) => format!("{d:+.2} (vs {})", self.rows[i - 1].setting.label()),
                None => "-".to_string(),
            };
            lines.push(format!(
                "{:<8} {:>8.2} {:>8.2} {:>20} {:>20}",
                row.setting.label(),
                row.stock_a,
                row.stock_b,
                delta(row.delta_a),
                delta(row.delta_b)
            ));
        }
        lines.join("\n") + "\n"
    }
}

fn ratio_metric(symbol: Symbol) -> String {
    format!("buy_sell_ratio_{}", symbol.as_str())
}

/// Run every setting as `plan.trials` trials and tabulate the mean buy/sell
/// ratio per stock. Any failed trial or undefined ratio aborts the study.
pub fn run_tariff_ablation(plan: &AblationPlan, backend: Arc<dyn CompletionBackend>) -> Result<AblationTable, AblationError> {
    if plan.settings.is_empty() {
        return Err(AblationError::NoSettings);
    }
    for &s in &plan.settings {
        let missing = if s.headline_config() && plan.inputs.headline.trim().is_empty() {
            Some("headline")
        } else if s.paper_summary_memory() && plan.inputs.summary.trim().is_empty() {
            Some("summary")
        } else if s.news_tool() && plan.inputs.news.is_empty() {
            Some("news feed")
        } else {
            None
        };
        if let Some(what) = missing {
            return Err(AblationError::MissingInput(s.label(), what));
        }
    }

    let mut table = AblationTable::default();
    for &setting in &plan.settings {
        let env = EnvSpec::Market(plan.market_for(setting));
        let (trials, logs) = run_trials(plan.trials, plan.base_seed, |seed| {
            let roster = plan.roster_for(setting, backend.clone());
            run_with_roster(&env, &roster, plan.max_steps, seed).map(|(log, m)| (m, log)).map_err(|e| e.to_string())
        })?;
        let mut means = [0.0; 2];
        for (slot, symbol) in means.iter_mut().zip(Symbol::ALL) {
            let mut values = Vec::new();
            for row in &trials.rows {
                let metrics = row.outcome.as_ref().map_err(|message| AblationError::Trial {
                    setting: setting.label(),
                    seed: row.seed,
                    message: message.clone(),
                })?;
                let value = metrics.get(&ratio_metric(symbol)).ok_or(AblationError::UndefinedRatio {
                    setting: setting.label(),
                    seed: row.seed,
                    symbol,
                })?;
                values.push(*value);
            }
            *slot = mean(&values);
        }
        let previous = table.rows.last().map(|r: &AblationRow| (r.stock_a, r.stock_b));
        table.rows.push(AblationRow {
            setting,
            stock_a: means[0],
            stock_b: means[1],
            delta_a: previous.map(|p| means[0] - p.0),
            delta_b: previous.map(|p| means[1] - p.1),
            trials,
            logs: logs.into_iter().flatten().collect(),
        });
    }
    Ok(table)
}
