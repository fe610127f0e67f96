use std::collections::BTreeMap;

use agentsim_core::{ActionEnvelope, ActionMap, AgentId, Environment, SeedStream, TimeStep};
use agentsim_envs::market::{
    clear_session, settle, Cents, InvestmentStyle, MarketClock, MarketConfig, MarketEnv, Order, Side, Symbol,
    TraderAccount,
};
use proptest::prelude::*;
use rand::Rng;
use serde_json::json;

/// Volume at `price` counted order by order.
fn oracle_volume(book: &[Order], price: i64) -> u64 {
    let mut demand = 0;
    let mut supply = 0;
    for o in book {
        if o.side == Side::Buy && o.limit_price.0 >= price {
            demand += o.quantity;
        }
        if o.side == Side::Sell && o.limit_price.0 <= price {
            supply += o.quantity;
        }
    }
    demand.min(supply)
}

/// Every cent between the lowest and highest limit is tried.
fn oracle_price(book: &[Order], prev: i64) -> (i64, u64) {
    let lo = book.iter().map(|o| o.limit_price.0).min().unwrap_or(prev);
    let hi = book.iter().map(|o| o.limit_price.0).max().unwrap_or(prev);
    let best_volume = (lo..=hi).map(|p| oracle_volume(book, p)).max().unwrap_or(0);
    if best_volume == 0 {
        return (prev, 0);
    }
    let limits: Vec<i64> = book.iter().map(|o| o.limit_price.0).collect();
    let price = limits
        .iter()
        .copied()
        .filter(|&p| oracle_volume(book, p) == best_volume)
        .min_by_key(|&p| ((p - prev).abs(), p))
        .unwrap();
    (price, best_volume)
}

fn random_book(rng: &mut impl Rng) -> Vec<Order> {
    let n = rng.random_range(0..=8);
    (0..n)
        .map(|i| Order {
            id: i as u64 + 1,
            agent: AgentId(i as u32),
            symbol: Symbol::A,
            side: if rng.random_bool(0.5) { Side::Buy } else { Side::Sell },
            limit_price: Cents(rng.random_range(95..=105)),
            quantity: rng.random_range(1..=5),
            submitted_at: MarketClock::start(),
        })
        .collect()
}

#[test]
fn clearing_matches_exhaustive_oracle_on_1000_books() {
    let mut rng = SeedStream::new(2024).rng();
    for _ in 0..1000 {
        let book = random_book(&mut rng);
        let prev = rng.random_range(95..=105);
        let clearing = clear_session(&book, Cents(prev));
        let (price, volume) = oracle_price(&book, prev);
        assert_eq!((clearing.price.0, clearing.volume()), (price, volume), "book {book:?}");
        for trade in &clearing.trades {
            let buy = book.iter().find(|o| o.id == trade.buy_order).unwrap();
            let sell = book.iter().find(|o| o.id == trade.sell_order).unwrap();
            assert!(buy.limit_price >= clearing.price && sell.limit_price <= clearing.price);
            assert_ne!(buy.agent, sell.agent);
        }
        let left: u64 = clearing.unmatched.iter().map(|o| o.quantity).sum();
        let total: u64 = book.iter().map(|o| o.quantity).sum();
        assert_eq!(left + 2 * clearing.volume(), total);
    }
}

#[test]
fn settlement_conserves_cash_and_shares_on_1000_books() {
    let mut rng = SeedStream::new(7).rng();
    for _ in 0..1000 {
        let book = random_book(&mut rng);
        let mut accounts: BTreeMap<AgentId, TraderAccount> = (0..8)
            .map(|i| {
                let holdings = BTreeMap::from([(Symbol::A, 10), (Symbol::B, 0)]);
                (AgentId(i), TraderAccount::new(Cents(10_000), holdings, InvestmentStyle::Balanced))
            })
            .collect();
        let clearing = clear_session(&book, Cents(100));
        let cash_before: i64 = accounts.values().map(|a| a.cash.0).sum();
        settle(&clearing.trades, Symbol::A, clearing.price, &mut accounts);
        assert_eq!(accounts.values().map(|a| a.cash.0).sum::<i64>(), cash_before);
        assert_eq!(accounts.values().map(|a| a.shares(Symbol::A)).sum::<u64>(), 80);
    }
}

proptest! {
    #[test]
    fn clearing_price_is_a_limit_or_previous(
        orders in prop::collection::vec((any::<bool>(), 1i64..50, 1u64..4), 0..8),
        prev in 1i64..50,
    ) {
        let book: Vec<Order> = orders.iter().enumerate().map(|(i, (buy, p, q))| Order {
            id: i as u64,
            agent: AgentId(i as u32),
            symbol: Symbol::B,
            side: if *buy { Side::Buy } else { Side::Sell },
            limit_price: Cents(*p),
            quantity: *q,
            submitted_at: MarketClock::start(),
        }).collect();
        let clearing = clear_session(&book, Cents(prev));
        if clearing.trades.is_empty() {
            prop_assert_eq!(clearing.price, Cents(prev));
        } else {
            prop_assert!(book.iter().any(|o| o.limit_price == clearing.price));
        }
    }
}

/// Random limit orders around the current price, drawn from each agent's own stream.
fn random_actions(env: &MarketEnv, rng: &mut impl Rng) -> ActionMap {
    let prices = env.prices();
    env.accounts()
        .keys()
        .map(|&agent| {
            let mut orders = Vec::new();
            for symbol in Symbol::ALL {
                if rng.random_bool(0.6) {
                    let p = prices[&symbol].units() * rng.random_range(0.95..1.05);
                    let side = if rng.random_bool(0.5) { "buy" } else { "sell" };
                    orders.push(json!({"symbol": symbol.as_str(), "side": side, "price": (p * 100.0).round() / 100.0, "quantity": rng.random_range(1..20)}));
                }
            }
            let mut body = json!({"orders": orders});
            if rng.random_bool(0.1) {
                body["loan"] = json!(rng.random_range(100.0..5000.0));
            }
            (agent, ActionEnvelope::new(agent, env.time(), body))
        })
        .collect()
}

#[test]
fn full_scale_run_conserves_shares_and_cash() {
    let mut env = MarketEnv::new(MarketConfig::default()).unwrap();
    env.reset(SeedStream::new(11)).unwrap();
    let mut rng = SeedStream::new(11).child("orders").rng();
    let start_cash = env.total_cash();
    let mut steps = 0;
    let mut traded = 0;
    while !env.done() {
        let actions = random_actions(&env, &mut rng);
        env.step(actions).unwrap();
        traded += env.drain_events().iter().filter(|e| e.action == "trade").count();
        for symbol in Symbol::ALL {
            assert_eq!(env.total_shares(symbol), 50 * 100);
        }
        let expected = start_cash.units() + env.loans_granted();
        assert!((env.total_cash().units() - expected).abs() < 1e-9);
        assert!(env.accounts().values().all(|a| a.cash.0 >= 0));
        steps += 1;
    }
    assert_eq!(steps, 30);
    assert!(traded > 0);
    assert_eq!(env.time(), TimeStep(30));
}
