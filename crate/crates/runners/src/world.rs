//! Environment specs and per-world metrics.

use std::collections::BTreeMap;

use agentsim_core::{EnvError, Environment, EventRecord};
use agentsim_envs::auction::{AuctionConfig, AuctionEnv};
use agentsim_envs::economy::{okun_fit, phillips_fit, EconomyConfig, EconomyEnv, MacroIndicators};
use agentsim_envs::market::{buy_sell_ratio, order_counts, MarketConfig, MarketEnv};
use agentsim_envs::questionnaire::{score, QuestionnaireConfig, QuestionnaireEnv, ResponseSheet};
use agentsim_envs::social::{replay, SocialConfig, SocialEnv};
use serde::{Deserialize, Serialize};

/// Metric name to value. Ordered so CSV columns are stable.
pub type Metrics = BTreeMap<String, f64>;

/// Which world to build and with what parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "world", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Market(MarketConfig),
    Auction(AuctionConfig),
    Economy(EconomyConfig),
    Social(SocialConfig),
    Questionnaire(QuestionnaireConfig),
}

impl EnvSpec {
    pub fn world_tag(&self) -> &'static str {
        match self {
            EnvSpec::Market(_) => agentsim_envs::market::WORLD_TAG,
            EnvSpec::Auction(_) => agentsim_envs::auction::WORLD_TAG,
            EnvSpec::Economy(_) => agentsim_envs::economy::WORLD_TAG,
            EnvSpec::Social(_) => agentsim_envs::social::WORLD_TAG,
            EnvSpec::Questionnaire(_) => agentsim_envs::questionnaire::WORLD_TAG,
        }
    }

    /// Number of agents the world expects, with ids `0..n`.
    pub fn population(&self) -> u32 {
        match self {
            EnvSpec::Market(c) => c.n_agents,
            EnvSpec::Auction(c) => c.n_bidders,
            EnvSpec::Economy(c) => c.n_households,
            EnvSpec::Social(c) if !c.profiles.is_empty() => c.profiles.len() as u32,
            EnvSpec::Social(c) => c.n_agents,
            EnvSpec::Questionnaire(c) => c.n_respondents,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>, EnvError> {
        Ok(match self {
            EnvSpec::Market(c) => Box::new(MarketEnv::new(c.clone())?),
            EnvSpec::Auction(c) => Box::new(AuctionEnv::new(c.clone())?),
            EnvSpec::Economy(c) => Box::new(EconomyEnv::new(c.clone())?),
            EnvSpec::Social(c) => Box::new(SocialEnv::new(c.clone())?),
            EnvSpec::Questionnaire(c) => {
                Box::new(QuestionnaireEnv::new(c.clone()).map_err(|e| EnvError::Invalid(e.to_string()))?)
            }
        })
    }

    /// Summary metrics computed from an event log alone, so logs can be
    /// re-scored offline.
    pub fn metrics(&self, events: &[EventRecord]) -> Metrics {
        let mut m = Metrics::new();
        m.insert("events".into(), events.len() as f64);
        match self {
            EnvSpec::Market(c) => market_metrics(c, events, &mut m),
            EnvSpec::Auction(_) => auction_metrics(events, &mut m),
            EnvSpec::Economy(_) => economy_metrics(events, &mut m),
            EnvSpec::Social(_) => social_metrics(events, &mut m),
            EnvSpec::Questionnaire(c) => questionnaire_metrics(c, events, &mut m),
        }
        m
    }
}

fn count(events: &[EventRecord], action: &str) -> f64 {
    events.iter().filter(|e| e.action == action).count() as f64
}

fn market_metrics(config: &MarketConfig, events: &[EventRecord], m: &mut Metrics) {
    for (symbol, (buys, sells)) in order_counts(events).into_iter().fold(
        BTreeMap::<&str, (u64, u64)>::new(),
        |mut acc, ((_, symbol), (b, s))| {
            let entry = acc.entry(symbol.as_str()).or_default();
            entry.0 += b;
            entry.1 += s;
            acc
        },
    ) {
        m.insert(format!("buys_{symbol}"), buys as f64);
        m.insert(format!("sells_{symbol}"), sells as f64);
    }
    for close in events.iter().filter(|e| e.action == "session_close") {
        let (Some(symbol), Some(price), Some(volume)) =
            (close.info_str("symbol"), close.info_f64("price"), close.info_f64("volume"))
        else {
            continue;
        };
        m.insert(format!("price_{symbol}"), price);
        *m.entry(format!("volume_{symbol}")).or_insert(0.0) += volume;
    }
    m.insert("rejected_orders".into(), count(events, "reject_order"));
    // undefined ratios (a day without sells) are left out
    if config.days > 0 {
        if let Ok(ratios) = buy_sell_ratio(events, 1..=config.days) {
            for (symbol, ratio) in ratios {
                m.insert(format!("buy_sell_ratio_{symbol}"), ratio);
            }
        }
    }
}

fn auction_metrics(events: &[EventRecord], m: &mut Metrics) {
    let sales: Vec<&EventRecord> = events.iter().filter(|e| e.action == "sale").collect();
    m.insert("sales".into(), sales.len() as f64);
    m.insert("revenue".into(), sales.iter().filter_map(|e| e.info_f64("price")).sum());
    m.insert("winner_profit".into(), sales.iter().filter_map(|e| e.info_f64("profit")).sum());
    m.insert("bids".into(), count(events, "bid"));
    m.insert("rejected_bids".into(), count(events, "reject_bid"));
}

fn economy_metrics(events: &[EventRecord], m: &mut Metrics) {
    let series: Vec<MacroIndicators> = events
        .iter()
        .filter(|e| e.action == "month")
        .filter_map(|e| {
            Some(MacroIndicators {
                month: e.info_u64("month")? as u32,
                unemployment: e.info_f64("unemployment")?,
                price_level: e.info_f64("price_level")?,
                inflation: e.info_f64("inflation")?,
                gdp: e.info_f64("gdp")?,
                gdp_growth: e.info_f64("gdp_growth")?,
                interest_rate: e.info_f64("interest_rate")?,
                tax_rate: e.info_f64("tax_rate")?,
            })
        })
        .collect();
    m.insert("months".into(), series.len() as f64);
    if let Some(last) = series.last() {
        m.insert("final_unemployment".into(), last.unemployment);
        m.insert("final_price_level".into(), last.price_level);
        m.insert("final_gdp".into(), last.gdp);
        m.insert("final_interest_rate".into(), last.interest_rate);
    }
    if let Ok(fit) = phillips_fit(&series) {
        m.insert("phillips_slope".into(), fit.slope);
    }
    if let Ok(fit) = okun_fit(&series) {
        m.insert("okun_slope".into(), fit.slope);
    }
}

fn social_metrics(events: &[EventRecord], m: &mut Metrics) {
    m.insert("rejected_actions".into(), count(events, "reject_action"));
    if let Ok(tables) = replay(events) {
        m.insert("posts".into(), tables.posts.len() as f64);
        m.insert("comments".into(), tables.comments.len() as f64);
        m.insert("likes".into(), tables.posts.iter().map(|p| p.likes.len()).sum::<usize>() as f64);
    }
}

/// Rebuild response sheets from `answer` events.
pub fn sheets_from_events(events: &[EventRecord]) -> BTreeMap<agentsim_core::AgentId, ResponseSheet> {
    let mut sheets: BTreeMap<_, ResponseSheet> = BTreeMap::new();
    for e in events.iter().filter(|e| e.action == "answer") {
        let (Some(agent), Some(item), Some(value)) =
            (e.user_id, e.info_str("item_id"), e.info.get("value").and_then(serde_json::Value::as_i64))
        else {
            continue;
        };
        let sheet = sheets.entry(agent).or_default();
        sheet.responses.insert(item.to_string(), value);
        sheet.order.push(item.to_string());
    }
    sheets
}

/// Per respondent `<agent>/<subscale>` normalized means and `<agent>/bias/<pair>`.
fn questionnaire_metrics(config: &QuestionnaireConfig, events: &[EventRecord], m: &mut Metrics) {
    m.insert("answers".into(), count(events, "answer"));
    for (agent, sheet) in sheets_from_events(events) {
        let Ok(report) = score(&sheet, &config.items) else {
            continue;
        };
        for (name, s) in report.subscales {
            m.insert(format!("{agent}/{name}"), s.normalized_mean);
        }
        for (pair, bias) in report.biases {
            m.insert(format!("{agent}/bias/{pair}"), bias);
        }
    }
}
