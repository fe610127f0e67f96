use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use agentsim_core::EventRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::book::Symbol;
use crate::csvout::to_csv;

/// One row of the per-session metrics export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub day: u32,
    pub session: u32,
    pub symbol: Symbol,
    pub price: f64,
    /// Matched shares.
    pub volume: u64,
    pub n_buys: u64,
    pub n_sells: u64,
}

pub const SESSION_STATS_HEADER: [&str; 7] = ["day", "session", "symbol", "price", "volume", "n_buys", "n_sells"];

pub fn session_stats_csv(rows: &[SessionStats]) -> String {
    to_csv(&SESSION_STATS_HEADER, rows)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketMetricError {
    #[error("buy/sell ratio undefined: no sell orders for {symbol} on day {day}")]
    UndefinedRatio { day: u32, symbol: Symbol },
    #[error("empty day range")]
    EmptyRange,
    #[error("price history needs at least two points")]
    ShortHistory,
}

/// Submitted (accepted) order counts per (day, symbol): (buys, sells).
pub fn order_counts(events: &[EventRecord]) -> BTreeMap<(u32, Symbol), (u64, u64)> {
    let mut counts = BTreeMap::new();
    for event in events.iter().filter(|e| e.action == "submit_order") {
        let (Some(day), Some(symbol), Some(side)) =
            (event.info_u64("day"), event.info_str("symbol"), event.info_str("side"))
        else {
            continue;
        };
        let symbol = match symbol {
            "A" => Symbol::A,
            "B" => Symbol::B,
            _ => continue,
        };
        let entry: &mut (u64, u64) = counts.entry((day as u32, symbol)).or_default();
        match side {
            "buy" => entry.0 += 1,
            "sell" => entry.1 += 1,
            _ => {}
        }
    }
    counts
}

/// Mean over days in `days` of (#submitted buys / #submitted sells), per symbol.
pub fn buy_sell_ratio(
    events: &[EventRecord],
    days: RangeInclusive<u32>,
) -> Result<BTreeMap<Symbol, f64>, MarketMetricError> {
    if days.is_empty() {
        return Err(MarketMetricError::EmptyRange);
    }
    let counts = order_counts(events);
    let n_days = (days.end() - days.start() + 1) as f64;
    let mut out = BTreeMap::new();
    for symbol in Symbol::ALL {
        let mut total = 0.0;
        for day in days.clone() {
            let (buys, sells) = counts.get(&(day, symbol)).copied().unwrap_or((0, 0));
            if sells == 0 {
                return Err(MarketMetricError::UndefinedRatio { day, symbol });
            }
            total += buys as f64 / sells as f64;
        }
        out.insert(symbol, total / n_days);
    }
    Ok(out)
}

/// `(last - first) / first`.
pub fn price_change_rate(history: &[f64]) -> Result<f64, MarketMetricError> {
    match history {
        [first, .., last] => Ok((last - first) / first),
        _ => Err(MarketMetricError::ShortHistory),
    }
}
