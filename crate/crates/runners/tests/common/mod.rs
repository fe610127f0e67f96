#![allow(dead_code)]

use std::sync::Arc;

use agentsim_core::backends::{CompletionBackend, CompletionRequest, CompletionResult, ScriptedBackend};
use agentsim_envs::market::MarketConfig;
use agentsim_envs::social::SocialConfig;

pub const HOLD: &str = r#"{"orders": []}"#;
/// One non-crossing buy and sell per stock.
pub const BOTH_SIDES: &str = r#"{"orders": [
    {"symbol": "A", "side": "buy", "price": 29, "quantity": 1},
    {"symbol": "A", "side": "sell", "price": 31, "quantity": 1},
    {"symbol": "B", "side": "buy", "price": 44, "quantity": 1},
    {"symbol": "B", "side": "sell", "price": 46, "quantity": 1}]}"#;
pub const SELL_ONLY: &str = r#"{"orders": [
    {"symbol": "A", "side": "sell", "price": 31, "quantity": 1},
    {"symbol": "B", "side": "sell", "price": 46, "quantity": 1}]}"#;

pub fn small_market(n: u32, days: u32) -> MarketConfig {
    MarketConfig { n_agents: n, days, ..MarketConfig::default() }
}

pub fn small_social(n: u32, steps: u64) -> SocialConfig {
    SocialConfig { n_agents: n, steps, ..SocialConfig::default() }
}

/// Answers by schema name: a market action, a social no-op, or a
/// questionnaire answer at the scale midpoint plus one point when the
/// prompt carries memory.
pub fn world_aware_backend(market_reply: &'static str) -> Arc<dyn CompletionBackend> {
    Arc::new(ScriptedBackend::from_fn(move |req: &CompletionRequest| {
        let text = req.rendered();
        if text.contains("\"questionnaire_answer\"") {
            let remembers = text.contains("Memory:\n");
            let answer = if text.contains("a percentage from 0 to 100") {
                50 + if remembers { 10 } else { 0 }
            } else {
                4 + i64::from(remembers)
            };
            CompletionResult::text(format!("{{\"answer\": {answer}}}"))
        } else if text.contains("\"social_action\"") {
            CompletionResult::text(r#"{"kind": "do_nothing"}"#)
        } else {
            CompletionResult::text(market_reply)
        }
    }))
}
