//! Sequential open ascending-price auctions.
//!
//! Items are sold one after another. Each environment step is one bidding
//! round on the current item: every bidder may raise the standing bid or pass,
//! and reports a priority score for each remaining item. A round in which
//! nobody raises closes the item.

use std::collections::{BTreeMap, BTreeSet};

use agentsim_core::{
    run_episode, ActionMap, AgentId, AgentPolicy, EnvError, Environment, EpisodeLog, EventRecord, FieldType,
    Observation, ObservationMap, ProtocolError, Schema, SeedStream, TimeStep,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::csvout::to_csv;

pub const WORLD_TAG: &str = "auction";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionItem {
    pub name: String,
    pub starting_price: f64,
    pub true_value: f64,
    /// Shown to bidders; never below `true_value`.
    pub estimated_value: f64,
}

#[derive(Debug, Error)]
pub enum ItemsError {
    #[error("items line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("item {name:?}: {reason}")]
    Invalid { name: String, reason: &'static str },
}

impl AuctionItem {
    pub fn check(&self) -> Result<(), ItemsError> {
        let invalid = |reason| Err(ItemsError::Invalid { name: self.name.clone(), reason });
        if self.starting_price <= 0.0 || self.true_value <= 0.0 || self.estimated_value <= 0.0 {
            return invalid("prices and values must be positive");
        }
        if self.estimated_value < self.true_value {
            return invalid("estimated value below true value");
        }
        Ok(())
    }
}

/// Reads newline-delimited `{name, starting_price, true_value, estimated_value}`.
pub fn parse_items(text: &str) -> Result<Vec<AuctionItem>, ItemsError> {
    let mut items = Vec::new();
    for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let item: AuctionItem =
            serde_json::from_str(line).map_err(|source| ItemsError::Json { line: idx + 1, source })?;
        item.check()?;
        items.push(item);
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    ProfitFirst,
    ItemFirst,
}

impl Objective {
    pub fn directive(self) -> &'static str {
        match self {
            Objective::ProfitFirst => "Your goal: maximize your final profit.",
            Objective::ItemFirst => "Your goal: win as many items as possible.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderState {
    pub agent: AgentId,
    pub initial_budget: f64,
    pub budget: f64,
    pub items_won: Vec<String>,
    /// Sum of true value minus price paid over won items.
    pub profit: f64,
    pub objective: Objective,
}

impl BidderState {
    pub fn new(agent: AgentId, budget: f64, objective: Objective) -> Self {
        BidderState { agent, initial_budget: budget, budget, items_won: Vec::new(), profit: 0.0, objective }
    }

    pub fn spent(&self) -> f64 {
        self.initial_budget - self.budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub item_index: usize,
    pub standing_bid: Option<(AgentId, f64)>,
    /// 1-based round number within the current item.
    pub round: u32,
    pub active: BTreeSet<AgentId>,
}

impl RoundState {
    pub fn fresh(item_index: usize, bidders: impl IntoIterator<Item = AgentId>) -> Self {
        RoundState { item_index, standing_bid: None, round: 1, active: bidders.into_iter().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sale {
    pub item_index: usize,
    pub winner: AgentId,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundOutcome {
    Continue(RoundState),
    Sold(Sale),
    Unsold { item_index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BidRejection {
    BelowMinimum,
    OverBudget,
    AlreadyStanding,
    NotActive,
    NotFinite,
}

impl BidRejection {
    pub fn code(&self) -> &'static str {
        match self {
            BidRejection::BelowMinimum => "below_minimum",
            BidRejection::OverBudget => "over_budget",
            BidRejection::AlreadyStanding => "already_standing",
            BidRejection::NotActive => "not_active",
            BidRejection::NotFinite => "not_finite",
        }
    }
}

/// Lowest acceptable bid this round.
pub fn minimum_bid(round: &RoundState, item: &AuctionItem, min_increment: f64) -> f64 {
    match round.standing_bid {
        Some((_, amount)) => amount + min_increment,
        None => item.starting_price,
    }
}

/// Resolve one round. Invalid bids are rejected (reason returned) and count as passes.
///
/// The highest valid bid becomes the standing bid, lowest agent id first on
/// ties. With no valid bid the item sells to the standing bidder at the
/// standing amount, or goes unsold when nobody ever bid.
pub fn resolve_round(
    bids: &BTreeMap<AgentId, Option<f64>>,
    round: &RoundState,
    item: &AuctionItem,
    budgets: &BTreeMap<AgentId, f64>,
    min_increment: f64,
) -> (RoundOutcome, Vec<(AgentId, f64, BidRejection)>) {
    let floor = minimum_bid(round, item, min_increment);
    let mut rejected = Vec::new();
    let mut best: Option<(AgentId, f64)> = None;
    for (&agent, bid) in bids {
        let Some(amount) = *bid else { continue };
        let reason = if !amount.is_finite() {
            Some(BidRejection::NotFinite)
        } else if !round.active.contains(&agent) {
            Some(BidRejection::NotActive)
        } else if round.standing_bid.is_some_and(|(holder, _)| holder == agent) {
            Some(BidRejection::AlreadyStanding)
        } else if amount < floor {
            Some(BidRejection::BelowMinimum)
        } else if amount > budgets.get(&agent).copied().unwrap_or(0.0) {
            Some(BidRejection::OverBudget)
        } else {
            None
        };
        match reason {
            Some(reason) => rejected.push((agent, amount, reason)),
            // ascending agent order keeps the lowest id on ties
            None if best.is_none_or(|(_, top)| amount > top) => best = Some((agent, amount)),
            None => {}
        }
    }
    let outcome = match (best, round.standing_bid) {
        (Some(standing), _) => RoundOutcome::Continue(RoundState {
            item_index: round.item_index,
            standing_bid: Some(standing),
            round: round.round + 1,
            active: round.active.clone(),
        }),
        (None, Some((winner, price))) => RoundOutcome::Sold(Sale { item_index: round.item_index, winner, price }),
        (None, None) => RoundOutcome::Unsold { item_index: round.item_index },
    };
    (outcome, rejected)
}

pub fn settle_sale(sale: &Sale, bidders: &mut BTreeMap<AgentId, BidderState>, item: &AuctionItem) {
    let state = bidders.get_mut(&sale.winner).expect("winner is a bidder");
    state.budget -= sale.price;
    state.items_won.push(item.name.clone());
    state.profit += item.true_value - sale.price;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityRow {
    /// Global bidding round, counted from 1 across all items.
    pub round: u64,
    pub agent: AgentId,
    pub item: String,
    pub score: f64,
}

pub fn priority_csv(rows: &[PriorityRow]) -> String {
    to_csv(&["round", "agent", "item", "score"], rows)
}

fn default_budget() -> f64 {
    20_000.0
}
fn default_increment() -> f64 {
    1.0
}
fn default_bidders() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionConfig {
    pub items: Vec<AuctionItem>,
    #[serde(default = "default_bidders")]
    pub n_bidders: u32,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_increment")]
    pub min_increment: f64,
    /// By bidder index, cycled; profit-first for everyone when empty.
    #[serde(default)]
    pub objectives: Vec<Objective>,
}

impl AuctionConfig {
    pub fn new(items: Vec<AuctionItem>) -> Self {
        AuctionConfig {
            items,
            n_bidders: default_bidders(),
            budget: default_budget(),
            min_increment: default_increment(),
            objectives: Vec::new(),
        }
    }
}

pub fn action_schema() -> Schema {
    Schema::new("auction_action")
        .optional("bid", FieldType::Number)
        .describe_last("your bid for the current item; omit or null to pass")
        .optional("priorities", FieldType::map(FieldType::Number))
        .describe_last("priority score 0-100 for each remaining item, keyed by item name")
}

#[derive(Debug, Deserialize)]
struct AuctionAction {
    #[serde(default)]
    bid: Option<f64>,
    #[serde(default)]
    priorities: BTreeMap<String, f64>,
}

pub struct AuctionEnv {
    config: AuctionConfig,
    bidders: BTreeMap<AgentId, BidderState>,
    round: RoundState,
    global_round: u64,
    time: TimeStep,
    done: bool,
    priorities: Vec<PriorityRow>,
    sales: Vec<Sale>,
    /// Standing bid after every round, per item index.
    ladders: BTreeMap<usize, Vec<f64>>,
    events: Vec<EventRecord>,
}

impl AuctionEnv {
    pub fn new(config: AuctionConfig) -> Result<Self, EnvError> {
        if config.n_bidders < 2 {
            return Err(EnvError::Invalid("an auction needs at least two bidders".into()));
        }
        if config.budget < 0.0 || config.min_increment <= 0.0 {
            return Err(EnvError::Invalid("budget must be non-negative and increment positive".into()));
        }
        for item in &config.items {
            item.check().map_err(|e| EnvError::Invalid(e.to_string()))?;
        }
        Ok(AuctionEnv {
            config,
            bidders: BTreeMap::new(),
            round: RoundState::fresh(0, []),
            global_round: 0,
            time: TimeStep(0),
            done: true,
            priorities: Vec::new(),
            sales: Vec::new(),
            ladders: BTreeMap::new(),
            events: Vec::new(),
        })
    }

    pub fn bidders(&self) -> &BTreeMap<AgentId, BidderState> {
        &self.bidders
    }

    pub fn round(&self) -> &RoundState {
        &self.round
    }

    pub fn priority_report(&self) -> &[PriorityRow] {
        &self.priorities
    }

    pub fn sales(&self) -> &[Sale] {
        &self.sales
    }

    pub fn ladders(&self) -> &BTreeMap<usize, Vec<f64>> {
        &self.ladders
    }

    fn current_item(&self) -> &AuctionItem {
        &self.config.items[self.round.item_index]
    }

    fn event(&self, agent: Option<AgentId>, action: &str) -> EventRecord {
        EventRecord::new(agent, self.time, action)
            .with("item", self.current_item().name.clone())
            .with("round", self.round.round)
    }

    fn context_for(&self, agent: AgentId) -> String {
        let item = self.current_item();
        let state = &self.bidders[&agent];
        let standing = match self.round.standing_bid {
            Some((holder, amount)) if holder == agent => format!("{amount:.2} (yours)"),
            Some((holder, amount)) => format!("{amount:.2} by bidder {holder}"),
            None => "none".to_string(),
        };
        let remaining: Vec<&str> =
            self.config.items[self.round.item_index..].iter().map(|i| i.name.as_str()).collect();
        [
            format!(
                "Item {} of {}: {} (starting price {:.2}, estimated value {:.2}).",
                self.round.item_index + 1,
                self.config.items.len(),
                item.name,
                item.starting_price,
                item.estimated_value
            ),
            format!("Round {}. Standing bid: {standing}.", self.round.round),
            format!("Minimum bid: {:.2}.", minimum_bid(&self.round, item, self.config.min_increment)),
            format!(
                "Your budget: {:.2}. Items won: {}. Profit so far: {:.2}.",
                state.budget,
                if state.items_won.is_empty() { "none".to_string() } else { state.items_won.join(", ") },
                state.profit
            ),
            state.objective.directive().to_string(),
            format!("Remaining items: {}.", remaining.join(", ")),
        ]
        .join("\n")
    }

    fn observations(&self) -> ObservationMap {
        self.bidders
            .keys()
            .map(|&agent| {
                let mut obs = Observation::new(agent, self.time, if self.done {
                    "The auction is over.".to_string()
                } else {
                    self.context_for(agent)
                });
                if !self.done {
                    obs = obs.with_schema(action_schema());
                }
                (agent, obs)
            })
            .collect()
    }

    fn close_item(&mut self, outcome: RoundOutcome) {
        match outcome {
            RoundOutcome::Sold(sale) => {
                let item = self.config.items[sale.item_index].clone();
                settle_sale(&sale, &mut self.bidders, &item);
                let profit = item.true_value - sale.price;
                let record = self.event(Some(sale.winner), "sale").with("price", sale.price).with("profit", profit);
                self.events.push(record);
                self.sales.push(sale);
            }
            RoundOutcome::Unsold { .. } => {
                let record = self.event(None, "unsold");
                self.events.push(record);
            }
            RoundOutcome::Continue(_) => unreachable!("only closing outcomes end an item"),
        }
        let next = self.round.item_index + 1;
        if next >= self.config.items.len() {
            self.done = true;
        } else {
            self.round = RoundState::fresh(next, self.bidders.keys().copied());
        }
    }
}

impl Environment for AuctionEnv {
    fn world_tag(&self) -> &str {
        WORLD_TAG
    }

    fn time(&self) -> TimeStep {
        self.time
    }

    fn reset(&mut self, _seeds: SeedStream) -> Result<ObservationMap, EnvError> {
        self.bidders = (0..self.config.n_bidders)
            .map(|i| {
                let objective = match self.config.objectives.as_slice() {
                    [] => Objective::ProfitFirst,
                    list => list[i as usize % list.len()],
                };
                (AgentId(i), BidderState::new(AgentId(i), self.config.budget, objective))
            })
            .collect();
        self.round = RoundState::fresh(0, self.bidders.keys().copied());
        self.global_round = 0;
        self.time = TimeStep(0);
        self.done = self.config.items.is_empty();
        self.priorities.clear();
        self.sales.clear();
        self.ladders.clear();
        self.events.clear();
        Ok(self.observations())
    }

    fn step(&mut self, actions: ActionMap) -> Result<ObservationMap, EnvError> {
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        self.global_round += 1;
        let remaining: BTreeSet<String> =
            self.config.items[self.round.item_index..].iter().map(|i| i.name.clone()).collect();
        let mut bids = BTreeMap::new();
        for (&agent, envelope) in &actions {
            if !self.bidders.contains_key(&agent) {
                continue;
            }
            let action: AuctionAction = match serde_json::from_value(envelope.body.clone()) {
                Ok(action) => action,
                Err(err) => {
                    let record = self.event(Some(agent), "reject_bid").with("reason", err.to_string());
                    self.events.push(record);
                    continue;
                }
            };
            for (item, score) in action.priorities {
                if remaining.contains(&item) && score.is_finite() {
                    self.priorities.push(PriorityRow {
                        round: self.global_round,
                        agent,
                        item,
                        score: score.clamp(0.0, 100.0),
                    });
                }
            }
            bids.insert(agent, action.bid);
        }

        let budgets: BTreeMap<AgentId, f64> = self.bidders.iter().map(|(id, s)| (*id, s.budget)).collect();
        let item = self.current_item().clone();
        let (outcome, rejected) = resolve_round(&bids, &self.round, &item, &budgets, self.config.min_increment);
        for (agent, amount, reason) in rejected {
            let record = self.event(Some(agent), "reject_bid").with("amount", amount).with("reason", reason.code());
            self.events.push(record);
        }
        match outcome {
            RoundOutcome::Continue(next) => {
                let (leader, amount) = next.standing_bid.expect("continuing rounds have a standing bid");
                let record = self.event(Some(leader), "bid").with("amount", amount);
                self.events.push(record);
                self.ladders.entry(next.item_index).or_default().push(amount);
                self.round = next;
            }
            closing => self.close_item(closing),
        }
        self.time = self.time.next();
        Ok(self.observations())
    }

    fn done(&self) -> bool {
        self.done
    }

    fn drain_events(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.events)
    }
}

#[derive(Debug)]
pub struct AuctionRun {
    pub bidders: BTreeMap<AgentId, BidderState>,
    pub sales: Vec<Sale>,
    pub priorities: Vec<PriorityRow>,
    pub log: EpisodeLog,
}

/// Auction every item in order with the given bidders (ids 0..n).
pub fn run_auction(
    config: AuctionConfig,
    agents: &mut BTreeMap<AgentId, Box<dyn AgentPolicy>>,
    seed: u64,
) -> Result<AuctionRun, ProtocolError> {
    let config = AuctionConfig { n_bidders: agents.len() as u32, ..config };
    let mut env = AuctionEnv::new(config)?;
    let log = run_episode(&mut env, agents, u64::MAX, seed)?;
    Ok(AuctionRun {
        bidders: env.bidders.clone(),
        sales: env.sales.clone(),
        priorities: env.priorities.clone(),
        log,
    })
}

/// Body of a bidder that passes this round.
pub fn pass_action() -> Value {
    serde_json::json!({"bid": null})
}
