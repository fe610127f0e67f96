use std::fmt;

use agentsim_core::AgentId;
use serde::{Deserialize, Serialize};

/// Money in integer cents. Settlement moves whole cents, so cash totals are exact.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub fn from_units(units: f64) -> Cents {
        Cents((units * 100.0).round() as i64)
    }

    pub fn units(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn times(self, quantity: u64) -> Cents {
        Cents(self.0 * quantity as i64)
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{:02}", self.0.abs() / 100, self.0.abs() % 100)
    }
}

impl std::ops::Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Cents {
    type Output = Cents;
    fn sub(self, rhs: Cents) -> Cents {
        Cents(self.0 - rhs.0)
    }
}

impl std::ops::AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl std::ops::SubAssign for Cents {
    fn sub_assign(&mut self, rhs: Cents) {
        self.0 -= rhs.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    A,
    B,
}

impl Symbol {
    pub const ALL: [Symbol; 2] = [Symbol::A, Symbol::B];

    pub fn as_str(self) -> &'static str {
        match self {
            Symbol::A => "A",
            Symbol::B => "B",
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }
}

/// Trading day and session; sessions run 1..=3 within a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MarketClock {
    pub day: u32,
    pub session: u32,
}

impl MarketClock {
    pub const SESSIONS_PER_DAY: u32 = 3;

    pub fn start() -> Self {
        MarketClock { day: 1, session: 1 }
    }

    pub fn next(self) -> Self {
        if self.session == Self::SESSIONS_PER_DAY {
            MarketClock { day: self.day + 1, session: 1 }
        } else {
            MarketClock { day: self.day, session: self.session + 1 }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub agent: AgentId,
    pub symbol: Symbol,
    pub side: Side,
    pub limit_price: Cents,
    pub quantity: u64,
    pub submitted_at: MarketClock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub buy_order: u64,
    pub sell_order: u64,
    pub buyer: AgentId,
    pub seller: AgentId,
    pub quantity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clearing {
    pub price: Cents,
    pub trades: Vec<Trade>,
    /// Orders (or their unfilled remainders) that expire at session end.
    pub unmatched: Vec<Order>,
}

impl Clearing {
    pub fn volume(&self) -> u64 {
        self.trades.iter().map(|t| t.quantity).sum()
    }
}

/// Shares that could change hands at `price`: min(demand, supply).
pub fn matchable_volume(book: &[Order], price: Cents) -> u64 {
    let demand: u64 = book
        .iter()
        .filter(|o| o.side == Side::Buy && o.limit_price >= price)
        .map(|o| o.quantity)
        .sum();
    let supply: u64 = book
        .iter()
        .filter(|o| o.side == Side::Sell && o.limit_price <= price)
        .map(|o| o.quantity)
        .sum();
    demand.min(supply)
}

/// Clear one session's book for a single symbol with a call auction.
///
/// Candidate prices are the distinct limit prices. The clearing price maximizes
/// matched volume; ties go to the price closest to `prev_price`, then to the
/// lower price. Eligible buys are filled from the highest limit down and
/// eligible sells from the lowest limit up, oldest order first within a price.
/// An order never fills against an order from the same agent. Without a cross
/// the price stays at `prev_price` and nothing trades.
pub fn clear_session(book: &[Order], prev_price: Cents) -> Clearing {
    let mut candidates: Vec<Cents> = book.iter().map(|o| o.limit_price).collect();
    candidates.sort();
    candidates.dedup();

    let mut best: Option<(u64, Cents)> = None;
    for &price in &candidates {
        let volume = matchable_volume(book, price);
        if volume == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((best_volume, best_price)) => {
                let dist = (price.0 - prev_price.0).abs();
                let best_dist = (best_price.0 - prev_price.0).abs();
                volume > best_volume
                    || (volume == best_volume
                        && (dist < best_dist || (dist == best_dist && price < best_price)))
            }
        };
        if better {
            best = Some((volume, price));
        }
    }

    let Some((_, price)) = best else {
        return Clearing { price: prev_price, trades: Vec::new(), unmatched: book.to_vec() };
    };

    let mut buys: Vec<Order> =
        book.iter().filter(|o| o.side == Side::Buy && o.limit_price >= price).cloned().collect();
    let mut sells: Vec<Order> =
        book.iter().filter(|o| o.side == Side::Sell && o.limit_price <= price).cloned().collect();
    buys.sort_by(|a, b| b.limit_price.cmp(&a.limit_price).then(a.id.cmp(&b.id)));
    sells.sort_by(|a, b| a.limit_price.cmp(&b.limit_price).then(a.id.cmp(&b.id)));

    let mut trades = Vec::new();
    for buy in buys.iter_mut() {
        for sell in sells.iter_mut() {
            if buy.quantity == 0 {
                break;
            }
            if sell.quantity == 0 || sell.agent == buy.agent {
                continue;
            }
            let quantity = buy.quantity.min(sell.quantity);
            buy.quantity -= quantity;
            sell.quantity -= quantity;
            trades.push(Trade {
                buy_order: buy.id,
                sell_order: sell.id,
                buyer: buy.agent,
                seller: sell.agent,
                quantity,
            });
        }
    }

    let mut remaining: std::collections::HashMap<u64, u64> =
        buys.iter().chain(sells.iter()).map(|o| (o.id, o.quantity)).collect();
    let unmatched = book
        .iter()
        .filter_map(|o| {
            let left = remaining.remove(&o.id).unwrap_or(o.quantity);
            (left > 0).then(|| Order { quantity: left, ..o.clone() })
        })
        .collect();
    Clearing { price, trades, unmatched }
}
