use std::collections::BTreeMap;
use std::time::Instant;

use agentsim_core::{ActionEnvelope, AgentError, AgentId, AgentPolicy, Observation, SeedStream};
use agentsim_envs::auction::{run_auction, AuctionConfig, AuctionItem, AuctionRun};
use rand::Rng;
use serde_json::json;

fn minimum_bid(obs: &Observation) -> f64 {
    let line = obs.context_text.lines().find(|l| l.starts_with("Minimum bid: ")).expect("minimum bid line");
    line["Minimum bid: ".len()..].trim_end_matches('.').parse().expect("numeric minimum")
}

fn budget(obs: &Observation) -> f64 {
    let line = obs.context_text.lines().find(|l| l.starts_with("Your budget: ")).expect("budget line");
    line["Your budget: ".len()..].split('.').take(2).collect::<Vec<_>>().join(".").parse().expect("numeric budget")
}

fn holds_standing(obs: &Observation) -> bool {
    obs.context_text.contains("(yours)")
}

fn policy<F>(mut f: F) -> Box<dyn AgentPolicy>
where
    F: FnMut(&Observation) -> Option<f64> + Send + 'static,
{
    Box::new(move |obs: &Observation| -> Result<ActionEnvelope, AgentError> {
        let bid = f(obs);
        Ok(ActionEnvelope::new(obs.agent_id, obs.time, json!({"bid": bid})))
    })
}

/// Raises by `step` above the standing bid while it can afford to.
fn ladder_bidder(step: f64) -> Box<dyn AgentPolicy> {
    policy(move |obs| {
        if holds_standing(obs) {
            return None;
        }
        let min = minimum_bid(obs);
        let has_standing = !obs.context_text.contains("Standing bid: none");
        let bid = if has_standing { min - 1.0 + step } else { min };
        (bid <= budget(obs)).then_some(bid)
    })
}

fn items(n: usize, start: f64) -> Vec<AuctionItem> {
    (0..n)
        .map(|i| AuctionItem {
            name: format!("item{i}"),
            starting_price: start,
            true_value: start * 2.0,
            estimated_value: start * 2.5,
        })
        .collect()
}

fn check_invariants(run: &AuctionRun, ladders: &BTreeMap<String, Vec<f64>>) {
    for state in run.bidders.values() {
        assert!(state.spent() <= state.initial_budget + 1e-9);
        assert!(state.budget >= -1e-9);
    }
    for ladder in ladders.values() {
        assert!(ladder.windows(2).all(|w| w[1] > w[0]), "ladder {ladder:?}");
    }
    for sale in &run.sales {
        let name = format!("item{}", sale.item_index);
        assert_eq!(ladders[&name].last().copied(), Some(sale.price));
    }
}

fn ladders_from_log(run: &AuctionRun) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in run.log.records.iter().filter(|r| r.action == "bid") {
        out.entry(rec.info_str("item").unwrap().to_string()).or_default().push(rec.info_f64("amount").unwrap());
    }
    out
}

#[test]
fn lone_minimal_bidder_wins_everything_at_start() {
    let mut agents: BTreeMap<AgentId, Box<dyn AgentPolicy>> = BTreeMap::new();
    agents.insert(AgentId(0), policy(|obs| (!holds_standing(obs)).then(|| minimum_bid(obs))));
    agents.insert(AgentId(1), policy(|_| None));
    agents.insert(AgentId(2), policy(|_| None));
    let run = run_auction(AuctionConfig::new(items(10, 100.0)), &mut agents, 0).unwrap();
    assert_eq!(run.sales.len(), 10);
    assert!(run.sales.iter().all(|s| s.winner == AgentId(0) && s.price == 100.0));
    assert_eq!(run.bidders[&AgentId(0)].budget, 20_000.0 - 1000.0);
}

/// Replays the two-bidder ladder: alternate raises of `step` until one side cannot afford the next.
fn ladder_oracle(start: f64, step: f64, budgets: [f64; 2]) -> Option<(usize, f64)> {
    let mut standing: Option<(usize, f64)> = None;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (who, &budget) in budgets.iter().enumerate() {
            if standing.is_some_and(|(s, _)| s == who) {
                continue;
            }
            let bid = standing.map_or(start, |(_, a)| a + step);
            if bid <= budget && best.is_none_or(|(_, b)| bid > b) {
                best = Some((who, bid));
            }
        }
        match best {
            Some(next) => standing = Some(next),
            None => return standing,
        }
    }
}

#[test]
fn two_ladder_bidders_match_hand_and_replay_oracle() {
    // budgets 1000 and 1200, start 400, step 100:
    // 400(0) 500(1) 600(0) 700(1) 800(0) 900(1) 1000(0) 1100(1), then 0 cannot pay 1200.
    assert_eq!(ladder_oracle(400.0, 100.0, [1000.0, 1200.0]), Some((1, 1100.0)));
    let mut rng = SeedStream::new(5).rng();
    for _ in 0..20 {
        let b0 = rng.random_range(5..40) as f64 * 100.0;
        let b1 = rng.random_range(5..40) as f64 * 100.0;
        let item = AuctionItem { name: "item0".into(), starting_price: 400.0, true_value: 600.0, estimated_value: 700.0 };
        let config = AuctionConfig { items: vec![item], n_bidders: 2, budget: 0.0, min_increment: 1.0, objectives: vec![] };
        // per-bidder budgets are driven by the policy, the env budget only caps
        let mut agents: BTreeMap<AgentId, Box<dyn AgentPolicy>> = BTreeMap::new();
        for (id, cap) in [(0u32, b0), (1u32, b1)] {
            let mut inner = ladder_bidder(100.0);
            agents.insert(
                AgentId(id),
                Box::new(move |obs: &Observation| {
                    let env = inner.act(obs)?;
                    let bid = env.body["bid"].as_f64().filter(|b| *b <= cap);
                    Ok(ActionEnvelope::new(obs.agent_id, obs.time, json!({"bid": bid})))
                }),
            );
        }
        let config = AuctionConfig { budget: b0.max(b1), ..config };
        let run = run_auction(config, &mut agents, 1).unwrap();
        let expected = ladder_oracle(400.0, 100.0, [b0, b1]);
        let got = run.sales.first().map(|s| (s.winner.0 as usize, s.price));
        assert_eq!(got, expected, "budgets {b0} {b1}");
        let (winner, price) = got.unwrap();
        let loser_budget = if winner == 0 { b1 } else { b0 };
        assert!(price <= loser_budget + 100.0 || price == 400.0);
    }
}

#[test]
fn two_hundred_seeded_auctions_keep_invariants() {
    for seed in 0..200u64 {
        let mut agents: BTreeMap<AgentId, Box<dyn AgentPolicy>> = BTreeMap::new();
        for id in 0..3u32 {
            let mut rng = SeedStream::new(seed).child(&format!("bidder/{id}")).rng();
            agents.insert(
                AgentId(id),
                policy(move |obs| {
                    if holds_standing(obs) || rng.random_bool(0.3) {
                        return None;
                    }
                    // occasionally overbid to exercise the budget guard
                    let bid = minimum_bid(obs) + rng.random_range(0.0..800.0);
                    Some(if rng.random_bool(0.05) { bid * 50.0 } else { bid })
                }),
            );
        }
        let run = run_auction(AuctionConfig::new(items(10, 500.0)), &mut agents, seed).unwrap();
        check_invariants(&run, &ladders_from_log(&run));
    }
}

#[test]
fn paper_scale_completes_quickly() {
    let start = Instant::now();
    let mut agents: BTreeMap<AgentId, Box<dyn AgentPolicy>> = (0..3u32).map(|i| (AgentId(i), ladder_bidder(100.0 * (i + 1) as f64))).collect();
    let run = run_auction(AuctionConfig::new(items(10, 1000.0)), &mut agents, 3).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!(run.bidders.values().all(|b| b.spent() <= 20_000.0));
    check_invariants(&run, &ladders_from_log(&run));
}
