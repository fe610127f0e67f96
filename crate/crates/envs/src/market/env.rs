use std::collections::BTreeMap;
use std::sync::Arc;

use agentsim_core::{
    ActionMap, AgentId, EnvError, Environment, EventRecord, FieldType, Observation, ObservationMap, Schema,
    SeedStream, TimeStep, ToolSpec,
};
use chrono::{Days, NaiveDate};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::accounts::{accrue_interest, grant_loan, max_new_loan, settle, InvestmentStyle, TraderAccount};
use super::book::{clear_session, Cents, MarketClock, Order, Side, Symbol};
use super::metrics::SessionStats;
use super::news::{check_unique_dates, fetch_news_tool, NewsItem};

pub const WORLD_TAG: &str = "market";

pub const PROFILE_A: &str = "Established chemical company with 10-year listing history, experiencing revenue decline but stable operations under new proactive CEO leadership.";
pub const PROFILE_B: &str = "Recently listed 3-year tech company with high growth potential but questionable data reliability and past IPO disclosure issues.";

fn default_agents() -> u32 {
    50
}
fn default_days() -> u32 {
    10
}
fn default_cash() -> f64 {
    100_000.0
}
fn default_price_a() -> f64 {
    30.0
}
fn default_price_b() -> f64 {
    45.0
}
fn default_holdings() -> u64 {
    100
}
fn default_interest() -> f64 {
    0.01
}
fn default_ltv() -> f64 {
    0.5
}
fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 4, 1).expect("valid date")
}
fn default_true() -> bool {
    true
}
fn default_profile_a() -> String {
    PROFILE_A.into()
}
fn default_profile_b() -> String {
    PROFILE_B.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    #[serde(default = "default_agents")]
    pub n_agents: u32,
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default = "default_cash")]
    pub initial_cash: f64,
    #[serde(default = "default_price_a")]
    pub initial_price_a: f64,
    #[serde(default = "default_price_b")]
    pub initial_price_b: f64,
    /// Shares of each stock per trader.
    #[serde(default = "default_holdings")]
    pub initial_holdings: u64,
    /// Per day, applied to loan principal.
    #[serde(default = "default_interest")]
    pub interest_rate: f64,
    #[serde(default = "default_ltv")]
    pub loan_to_value: f64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(default = "default_true")]
    pub forum_tool: bool,
    #[serde(default)]
    pub news_tool: bool,
    #[serde(default)]
    pub news: Vec<NewsItem>,
    #[serde(default = "default_profile_a")]
    pub profile_a: String,
    #[serde(default = "default_profile_b")]
    pub profile_b: String,
    /// Explicit styles by agent index (cycled); seeded random when absent.
    #[serde(default)]
    pub styles: Option<Vec<InvestmentStyle>>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockState {
    pub symbol: Symbol,
    pub price: Cents,
    /// Closing price of every cleared session, oldest first.
    pub price_history: Vec<(MarketClock, Cents)>,
    pub profile_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForumPost {
    pub agent: AgentId,
    pub day: u32,
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
struct OrderRequest {
    symbol: Symbol,
    side: Side,
    price: f64,
    quantity: i64,
}

#[derive(Debug, Clone, Deserialize)]
struct MarketAction {
    #[serde(default)]
    orders: Vec<OrderRequest>,
    #[serde(default)]
    loan: Option<f64>,
    #[serde(default)]
    post: Option<String>,
}

pub fn action_schema() -> Schema {
    let order = Schema::new("order")
        .required("symbol", FieldType::enumeration(["A", "B"]))
        .required("side", FieldType::enumeration(["buy", "sell"]))
        .required("price", FieldType::Number)
        .describe_last("limit price per share")
        .required("quantity", FieldType::Integer);
    Schema::new("market_action")
        .required("orders", FieldType::array(FieldType::Object { schema: order }))
        .describe_last("limit orders for this session; empty to hold")
        .optional("loan", FieldType::Number)
        .describe_last("loan amount to request (session 1 only)")
        .optional("post", FieldType::String)
        .describe_last("text to post on the forum")
}

/// Forum text visible on `day`: posts from the previous day only.
pub fn forum_view(posts: &[ForumPost], day: u32) -> String {
    let lines: Vec<String> = posts
        .iter()
        .filter(|p| p.day + 1 == day)
        .map(|p| format!("agent {}: {}", p.agent, p.text))
        .collect();
    if lines.is_empty() {
        "no posts from the previous day".to_string()
    } else {
        lines.join("\n")
    }
}

/// Two-stock market with three call-auction sessions per trading day.
pub struct MarketEnv {
    config: MarketConfig,
    news: Arc<Vec<NewsItem>>,
    clock: MarketClock,
    time: TimeStep,
    done: bool,
    accounts: BTreeMap<AgentId, TraderAccount>,
    stocks: BTreeMap<Symbol, StockState>,
    forum: Vec<ForumPost>,
    stats: Vec<SessionStats>,
    events: Vec<EventRecord>,
    next_order_id: u64,
    last_worth: BTreeMap<AgentId, f64>,
    notes: BTreeMap<AgentId, Vec<String>>,
    loans_granted: f64,
}

impl MarketEnv {
    pub fn new(config: MarketConfig) -> Result<Self, EnvError> {
        if config.days == 0 || config.n_agents == 0 {
            return Err(EnvError::Invalid("market needs at least one agent and one day".into()));
        }
        if config.initial_price_a <= 0.0 || config.initial_price_b <= 0.0 || config.initial_cash < 0.0 {
            return Err(EnvError::Invalid("initial prices must be positive and cash non-negative".into()));
        }
        if config.interest_rate < 0.0 || config.loan_to_value < 0.0 {
            return Err(EnvError::Invalid("interest rate and loan-to-value must be non-negative".into()));
        }
        check_unique_dates(&config.news).map_err(|e| EnvError::Invalid(e.to_string()))?;
        Ok(MarketEnv {
            news: Arc::new(config.news.clone()),
            config,
            clock: MarketClock::start(),
            time: TimeStep(0),
            done: true,
            accounts: BTreeMap::new(),
            stocks: BTreeMap::new(),
            forum: Vec::new(),
            stats: Vec::new(),
            events: Vec::new(),
            next_order_id: 1,
            last_worth: BTreeMap::new(),
            notes: BTreeMap::new(),
            loans_granted: 0.0,
        })
    }

    pub fn config(&self) -> &MarketConfig {
        &self.config
    }

    pub fn clock(&self) -> MarketClock {
        self.clock
    }

    pub fn date(&self) -> NaiveDate {
        self.config.start_date + Days::new(u64::from(self.clock.day - 1))
    }

    pub fn accounts(&self) -> &BTreeMap<AgentId, TraderAccount> {
        &self.accounts
    }

    pub fn stock(&self, symbol: Symbol) -> &StockState {
        &self.stocks[&symbol]
    }

    pub fn prices(&self) -> BTreeMap<Symbol, Cents> {
        self.stocks.iter().map(|(s, st)| (*s, st.price)).collect()
    }

    pub fn forum(&self) -> &[ForumPost] {
        &self.forum
    }

    pub fn session_stats(&self) -> &[SessionStats] {
        &self.stats
    }

    /// Total loan cash handed out since reset, in currency units.
    pub fn loans_granted(&self) -> f64 {
        self.loans_granted
    }

    pub fn total_cash(&self) -> Cents {
        self.accounts.values().fold(Cents(0), |acc, a| acc + a.cash)
    }

    pub fn total_shares(&self, symbol: Symbol) -> u64 {
        self.accounts.values().map(|a| a.shares(symbol)).sum()
    }

    fn total_steps(&self) -> u64 {
        u64::from(self.config.days) * u64::from(MarketClock::SESSIONS_PER_DAY)
    }

    fn event(&self, agent: Option<AgentId>, action: &str) -> EventRecord {
        EventRecord::new(agent, self.time, action)
            .with("day", self.clock.day)
            .with("session", self.clock.session)
    }

    fn tools(&self) -> Vec<ToolSpec> {
        let mut tools = Vec::new();
        if self.config.forum_tool {
            let text = forum_view(&self.forum, self.clock.day);
            tools.push(ToolSpec::new(
                "read_forum",
                "Read the forum comments posted on the previous trading day.",
                Schema::new("read_forum_args"),
                move |_| Ok(text.clone()),
            ));
        }
        if self.config.news_tool {
            tools.push(fetch_news_tool(self.news.clone(), self.date()));
        }
        tools
    }

    fn context_for(&self, agent: AgentId) -> String {
        let account = &self.accounts[&agent];
        let prices = self.prices();
        let mut lines = vec![format!(
            "Date {}, day {} of {}, session {} of {}.",
            self.date(),
            self.clock.day,
            self.config.days,
            self.clock.session,
            MarketClock::SESSIONS_PER_DAY
        )];
        for stock in self.stocks.values() {
            lines.push(format!("Stock {} (price {}): {}", stock.symbol, stock.price, stock.profile_text));
        }
        lines.push(format!("Your investment style: {}.", account.style));
        lines.push(format!(
            "Your account: cash {}, A {} shares, B {} shares, loan principal {:.2}.",
            account.cash,
            account.shares(Symbol::A),
            account.shares(Symbol::B),
            account.loan_principal
        ));
        if self.clock.session == 1 {
            let limit = max_new_loan(account, &prices, self.config.loan_to_value);
            lines.push(format!("Loans: up to {limit:.2} available this session."));
        } else {
            lines.push("Loans are offered in session 1 only.".to_string());
        }
        if let Some(notes) = self.notes.get(&agent).filter(|n| !n.is_empty()) {
            lines.push("Since your last decision:".to_string());
            lines.extend(notes.iter().map(|n| format!("- {n}")));
        }
        lines.join("\n")
    }

    fn observations(&self, with_rewards: bool) -> ObservationMap {
        let prices = self.prices();
        self.accounts
            .keys()
            .map(|&agent| {
                let mut obs = Observation::new(agent, self.time, self.context_for(agent));
                if !self.done {
                    obs = obs.with_schema(action_schema()).with_tools(self.tools());
                }
                if with_rewards {
                    let worth = self.accounts[&agent].net_worth(&prices);
                    obs = obs.with_reward(worth - self.last_worth.get(&agent).copied().unwrap_or(worth));
                }
                (agent, obs)
            })
            .collect()
    }

    fn note(&mut self, agent: AgentId, text: String) {
        self.notes.entry(agent).or_default().push(text);
    }

    fn apply_agent(&mut self, agent: AgentId, body: &Value, book: &mut Vec<Order>) {
        let action: MarketAction = match serde_json::from_value(body.clone()) {
            Ok(action) => action,
            Err(err) => {
                let record = self.event(Some(agent), "reject_action").with("reason", err.to_string());
                self.events.push(record);
                self.note(agent, "your action could not be read and was ignored".into());
                return;
            }
        };
        let prices = self.prices();

        if let Some(amount) = action.loan.filter(|a| *a != 0.0) {
            let account = self.accounts.get_mut(&agent).expect("agent has an account");
            let outcome = if self.clock.session != 1 {
                Err(super::accounts::LoanRefused::WrongSession)
            } else {
                grant_loan(account, amount, &prices, self.config.loan_to_value)
            };
            let principal = account.loan_principal;
            let record = match outcome {
                Ok(cents) => {
                    self.loans_granted += cents.units();
                    self.note(agent, format!("loan of {cents} granted"));
                    self.event(Some(agent), "loan")
                        .with("status", "granted")
                        .with("amount", cents.units())
                        .with("principal", principal)
                }
                Err(reason) => {
                    self.note(agent, format!("loan refused: {reason}"));
                    self.event(Some(agent), "loan")
                        .with("status", "refused")
                        .with("amount", amount)
                        .with("reason", reason.to_string())
                }
            };
            self.events.push(record);
        }

        for request in action.orders {
            let limit = Cents::from_units(request.price);
            let record = self
                .event(Some(agent), "submit_order")
                .with("symbol", request.symbol.as_str())
                .with("side", request.side.as_str())
                .with("price", limit.units())
                .with("quantity", request.quantity);
            let quantity = u64::try_from(request.quantity).unwrap_or(0);
            let crosses_own = book.iter().any(|o| {
                o.agent == agent
                    && o.symbol == request.symbol
                    && o.side != request.side
                    && match request.side {
                        Side::Buy => limit >= o.limit_price,
                        Side::Sell => limit <= o.limit_price,
                    }
            });
            let account = self.accounts.get_mut(&agent).expect("agent has an account");
            let outcome = if crosses_own && limit.0 > 0 && quantity > 0 {
                Err(super::accounts::OrderRefusal::SelfCross)
            } else {
                account.reserve(request.symbol, request.side, limit, quantity)
            };
            match outcome {
                Ok(()) => {
                    let id = self.next_order_id;
                    self.next_order_id += 1;
                    book.push(Order {
                        id,
                        agent,
                        symbol: request.symbol,
                        side: request.side,
                        limit_price: limit,
                        quantity,
                        submitted_at: self.clock,
                    });
                    self.events.push(record.with("order_id", id));
                }
                Err(refusal) => {
                    let mut record = record;
                    record.action = "reject_order".into();
                    self.note(
                        agent,
                        format!("{} order for {} {} rejected: {refusal}", request.side.as_str(), request.quantity, request.symbol),
                    );
                    self.events.push(record.with("reason", refusal.code()));
                }
            }
        }

        if let Some(text) = action.post.filter(|t| !t.trim().is_empty()) {
            self.forum.push(ForumPost { agent, day: self.clock.day, text: text.clone() });
            let record = self.event(Some(agent), "forum_post").with("content", text);
            self.events.push(record);
        }
    }

    fn clear(&mut self, book: &[Order]) {
        for symbol in Symbol::ALL {
            let orders: Vec<Order> = book.iter().filter(|o| o.symbol == symbol).cloned().collect();
            let prev = self.stocks[&symbol].price;
            let clearing = clear_session(&orders, prev);
            settle(&clearing.trades, symbol, clearing.price, &mut self.accounts);
            for trade in &clearing.trades {
                let record = self
                    .event(Some(trade.buyer), "trade")
                    .with("symbol", symbol.as_str())
                    .with("price", clearing.price.units())
                    .with("quantity", trade.quantity)
                    .with("buy_order", trade.buy_order)
                    .with("sell_order", trade.sell_order)
                    .with("seller", trade.seller.0);
                self.events.push(record);
                let price = clearing.price;
                self.note(trade.buyer, format!("bought {} {symbol} at {price}", trade.quantity));
                self.note(trade.seller, format!("sold {} {symbol} at {price}", trade.quantity));
            }
            let n_buys = orders.iter().filter(|o| o.side == Side::Buy).count() as u64;
            let n_sells = orders.len() as u64 - n_buys;
            let stats = SessionStats {
                day: self.clock.day,
                session: self.clock.session,
                symbol,
                price: clearing.price.units(),
                volume: clearing.volume(),
                n_buys,
                n_sells,
            };
            let record = self
                .event(None, "session_close")
                .with("symbol", symbol.as_str())
                .with("price", stats.price)
                .with("volume", stats.volume)
                .with("n_buys", n_buys)
                .with("n_sells", n_sells);
            self.events.push(record);
            self.stats.push(stats);
            let clock = self.clock;
            let stock = self.stocks.get_mut(&symbol).expect("both symbols exist");
            stock.price = clearing.price;
            stock.price_history.push((clock, clearing.price));
        }
        for account in self.accounts.values_mut() {
            account.release_reservations();
        }
    }
}

impl Environment for MarketEnv {
    fn world_tag(&self) -> &str {
        WORLD_TAG
    }

    fn time(&self) -> TimeStep {
        self.time
    }

    fn reset(&mut self, seeds: SeedStream) -> Result<ObservationMap, EnvError> {
        let mut rng = seeds.child("styles").rng();
        let holdings = BTreeMap::from([
            (Symbol::A, self.config.initial_holdings),
            (Symbol::B, self.config.initial_holdings),
        ]);
        self.accounts = (0..self.config.n_agents)
            .map(|i| {
                let style = match &self.config.styles {
                    Some(styles) if !styles.is_empty() => styles[i as usize % styles.len()],
                    _ => InvestmentStyle::ALL[rng.random_range(0..InvestmentStyle::ALL.len())],
                };
                let cash = Cents::from_units(self.config.initial_cash);
                (AgentId(i), TraderAccount::new(cash, holdings.clone(), style))
            })
            .collect();
        self.stocks = [
            (Symbol::A, self.config.initial_price_a, self.config.profile_a.clone()),
            (Symbol::B, self.config.initial_price_b, self.config.profile_b.clone()),
        ]
        .into_iter()
        .map(|(symbol, price, profile_text)| {
            let price = Cents::from_units(price);
            (symbol, StockState { symbol, price, price_history: Vec::new(), profile_text })
        })
        .collect();
        self.clock = MarketClock::start();
        self.time = TimeStep(0);
        self.done = false;
        self.forum.clear();
        self.stats.clear();
        self.events.clear();
        self.notes.clear();
        self.next_order_id = 1;
        self.loans_granted = 0.0;
        let prices = self.prices();
        self.last_worth = self.accounts.iter().map(|(id, a)| (*id, a.net_worth(&prices))).collect();
        Ok(self.observations(false))
    }

    fn step(&mut self, actions: ActionMap) -> Result<ObservationMap, EnvError> {
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        self.notes.clear();
        let mut book = Vec::new();
        for (agent, envelope) in &actions {
            if self.accounts.contains_key(agent) {
                self.apply_agent(*agent, &envelope.body, &mut book);
            }
        }
        self.clear(&book);

        self.time = self.time.next();
        if self.time.0 >= self.total_steps() {
            self.done = true;
        } else {
            self.clock = self.clock.next();
            if self.clock.session == 1 {
                let accrued = accrue_interest(&mut self.accounts, self.config.interest_rate);
                let record = self.event(None, "interest").with("accrued", accrued);
                self.events.push(record);
            }
        }
        let observations = self.observations(true);
        let prices = self.prices();
        self.last_worth = self.accounts.iter().map(|(id, a)| (*id, a.net_worth(&prices))).collect();
        Ok(observations)
    }

    fn done(&self) -> bool {
        self.done
    }

    fn drain_events(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.events)
    }
}
