//! The experiment file: one JSON document fixing world, roster, backend and
//! runner parameters.

use std::path::PathBuf;

use agentsim_envs::market::{MarketConfig, NewsItem};
use serde::{Deserialize, Serialize};

use crate::ablation::{tariff_market, AblationInputs, AblationPlan, AblationSetting};
use crate::multiworld::MultiWorldSchedule;
use crate::roster::{AgentsSpec, BackendSpec};
use crate::transfer::TransferPlan;
use crate::world::EnvSpec;

fn one() -> usize {
    1
}

/// Everything a run depends on besides the code version.
///
/// Only the section for the chosen runner needs to be present: `env` for
/// `run` and `trials`, `transfer`, `multiworld` or `ablation` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub env: Option<EnvSpec>,
    #[serde(default)]
    pub agents: AgentsSpec,
    #[serde(default)]
    pub backend: BackendSpec,
    /// Default 1.
    #[serde(default = "one")]
    pub trials: usize,
    /// Base seed; trial i runs with `seed + i`. Default 0.
    #[serde(default)]
    pub seed: u64,
    /// Step cap per episode; unlimited when absent.
    #[serde(default)]
    pub max_steps: Option<u64>,
    /// Default output directory when `--out` is not given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub transfer: Option<TransferPlan>,
    #[serde(default)]
    pub multiworld: Option<MultiWorldSchedule>,
    #[serde(default)]
    pub ablation: Option<AblationSpec>,
}

impl ExperimentConfig {
    pub fn max_steps(&self) -> u64 {
        self.max_steps.unwrap_or(u64::MAX)
    }
}

fn all_levels() -> Vec<AblationSetting> {
    AblationSetting::ALL.to_vec()
}

/// Ablation section. Omitted inputs fall back to the bundled tariff texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    /// Five days from 2025-04-01 when absent.
    #[serde(default)]
    pub market: Option<MarketConfig>,
    #[serde(default = "all_levels")]
    pub settings: Vec<AblationSetting>,
    #[serde(default)]
    pub headline: Option<String>,
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub news: Option<Vec<NewsItem>>,
}

impl AblationSpec {
    pub fn plan(&self, config: &ExperimentConfig) -> AblationPlan {
        let defaults = AblationInputs::tariff();
        let inputs = AblationInputs {
            headline: self.headline.clone().unwrap_or(defaults.headline),
            summary: self.summary.clone().unwrap_or(defaults.summary),
            news: self.news.clone().unwrap_or(defaults.news),
        };
        let mut plan = AblationPlan::new(self.market.clone().unwrap_or_else(tariff_market), config.agents.clone(), inputs);
        plan.settings = self.settings.clone();
        plan.trials = config.trials;
        plan.base_seed = config.seed;
        plan.max_steps = config.max_steps();
        plan
    }
}
