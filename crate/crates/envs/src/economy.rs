//! Monthly work/consumption macro loop.
//!
//! Households choose a work and a consumption propensity each month. A
//! government taxes labour income and a central bank moves the savings rate
//! toward an inflation target. The price level responds to excess demand.
//!
//! Wealth changes only through the ledger
//! `wealth' = wealth + (income - tax) - spending + interest`.

use std::collections::BTreeMap;
use std::fmt;

use agentsim_core::{
    ActionMap, AgentId, EnvError, Environment, EventRecord, FieldType, Observation, ObservationMap, Schema,
    SeedStream, TimeStep,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvout::to_csv;

pub const WORLD_TAG: &str = "economy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdState {
    pub agent: AgentId,
    /// Output units per month worked.
    pub skill: f64,
    pub wealth: f64,
    pub monthly_wage: f64,
    pub employed_this_month: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub tax_rate: f64,
    pub interest_rate: f64,
    /// Cumulative taxes collected.
    pub government_revenue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroIndicators {
    pub month: u32,
    pub unemployment: f64,
    pub price_level: f64,
    pub inflation: f64,
    pub gdp: f64,
    pub gdp_growth: f64,
    pub interest_rate: f64,
    pub tax_rate: f64,
}

pub const INDICATOR_HEADER: [&str; 8] =
    ["month", "unemployment", "price_level", "inflation", "gdp", "gdp_growth", "interest_rate", "tax_rate"];

pub fn indicators_csv(rows: &[MacroIndicators]) -> String {
    to_csv(&INDICATOR_HEADER, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HouseholdAction {
    pub work_propensity: f64,
    pub consumption_propensity: f64,
}

impl HouseholdAction {
    /// Clamped copy plus whether clamping changed anything. NaN maps to 0.
    pub fn clamped(self) -> (HouseholdAction, bool) {
        let fix = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        let out = HouseholdAction {
            work_propensity: fix(self.work_propensity),
            consumption_propensity: fix(self.consumption_propensity),
        };
        (out, out != self)
    }
}

/// Aggregate flows of one month, for the money-ledger identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MonthLedger {
    pub income: f64,
    pub tax: f64,
    pub spending: f64,
    pub interest: f64,
}

impl MonthLedger {
    /// Change in total household wealth plus government revenue implied by the flows.
    pub fn expected_money_change(&self) -> f64 {
        self.income - self.spending + self.interest
    }
}

fn d_households() -> u32 {
    100
}
fn d_months() -> u32 {
    240
}
fn d_kappa() -> f64 {
    0.2
}
fn d_epsilon() -> f64 {
    1.0
}
fn d_threshold() -> f64 {
    0.5
}
fn d_target() -> f64 {
    0.02
}
fn d_gain() -> f64 {
    0.5
}
fn d_rate_max() -> f64 {
    0.2
}
fn d_price() -> f64 {
    1.0
}
fn d_interest() -> f64 {
    0.01
}
fn d_tax() -> f64 {
    0.1
}
fn d_wage() -> f64 {
    1.0
}
fn d_wealth() -> f64 {
    10.0
}
fn d_skill_min() -> f64 {
    0.5
}
fn d_skill_max() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyConfig {
    #[serde(default = "d_households")]
    pub n_households: u32,
    #[serde(default = "d_months")]
    pub months: u32,
    /// Price adjustment gain.
    #[serde(default = "d_kappa")]
    pub kappa: f64,
    /// Floor on supply in the price rule.
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_threshold")]
    pub work_threshold: f64,
    #[serde(default = "d_target")]
    pub inflation_target: f64,
    #[serde(default = "d_gain")]
    pub rate_gain: f64,
    #[serde(default = "d_rate_max")]
    pub rate_max: f64,
    #[serde(default = "d_price")]
    pub initial_price: f64,
    #[serde(default = "d_interest")]
    pub initial_interest_rate: f64,
    #[serde(default = "d_tax")]
    pub initial_tax_rate: f64,
    /// Tax rate for year k+1 (months 12k+13 onward); later years keep the last rate.
    #[serde(default)]
    pub annual_tax_rates: Vec<f64>,
    #[serde(default = "d_wage")]
    pub monthly_wage: f64,
    #[serde(default = "d_wealth")]
    pub initial_wealth: f64,
    #[serde(default = "d_skill_min")]
    pub skill_min: f64,
    #[serde(default = "d_skill_max")]
    pub skill_max: f64,
}

impl Default for EconomyConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyState {
    pub month: u32,
    pub households: BTreeMap<AgentId, HouseholdState>,
    pub policy: PolicyState,
    pub price_level: f64,
    pub last_gdp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthOutcome {
    pub indicators: MacroIndicators,
    pub ledger: MonthLedger,
    /// Households whose action needed clamping.
    pub clamped: Vec<AgentId>,
}

/// Unemployment and gdp from the current employment flags and price level.
pub fn compute_indicators(state: &EconomyState, prev_price: f64, prev_gdp: Option<f64>) -> MacroIndicators {
    let total = state.households.len();
    let employed: Vec<&HouseholdState> = state.households.values().filter(|h| h.employed_this_month).collect();
    let unemployment = if total == 0 { 0.0 } else { 1.0 - employed.len() as f64 / total as f64 };
    let gdp = employed.iter().map(|h| h.skill).sum::<f64>() * state.price_level;
    let gdp_growth = match prev_gdp {
        Some(prev) if prev > 0.0 => gdp / prev - 1.0,
        _ => 0.0,
    };
    MacroIndicators {
        month: state.month,
        unemployment,
        price_level: state.price_level,
        inflation: state.price_level / prev_price - 1.0,
        gdp,
        gdp_growth,
        interest_rate: state.policy.interest_rate,
        tax_rate: state.policy.tax_rate,
    }
}

/// Advance one month. Missing households neither work nor consume.
pub fn monthly_step(
    actions: &BTreeMap<AgentId, HouseholdAction>,
    state: &mut EconomyState,
    config: &EconomyConfig,
) -> MonthOutcome {
    let mut ledger = MonthLedger::default();
    let mut clamped = Vec::new();
    let rate = state.policy.interest_rate;
    let tax_rate = state.policy.tax_rate;
    let mut supply = 0.0;
    for (id, household) in state.households.iter_mut() {
        let raw = actions.get(id).copied().unwrap_or(HouseholdAction { work_propensity: 0.0, consumption_propensity: 0.0 });
        let (action, was_clamped) = raw.clamped();
        if was_clamped {
            clamped.push(*id);
        }
        household.employed_this_month = action.work_propensity >= config.work_threshold;
        let income = if household.employed_this_month { household.monthly_wage * household.skill } else { 0.0 };
        if household.employed_this_month {
            supply += household.skill;
        }
        let tax = tax_rate * income;
        let net = income - tax;
        let spending = (action.consumption_propensity * (household.wealth + net)).max(0.0);
        let savings = household.wealth + net - spending;
        let interest = savings.max(0.0) * rate / 12.0;
        household.wealth = savings + interest;
        ledger.income += income;
        ledger.tax += tax;
        ledger.spending += spending;
        ledger.interest += interest;
    }
    state.policy.government_revenue += ledger.tax;

    let prev_price = state.price_level;
    let demand = ledger.spending / prev_price;
    state.price_level = prev_price * (1.0 + config.kappa * (demand - supply) / supply.max(config.epsilon));

    let inflation = state.price_level / prev_price - 1.0;
    let annualized = (1.0 + inflation).powi(12) - 1.0;
    state.policy.interest_rate =
        (rate + config.rate_gain * (annualized - config.inflation_target)).clamp(0.0, config.rate_max);

    state.month += 1;
    let mut indicators = compute_indicators(state, prev_price, state.last_gdp);
    // report the rate that was in force during the month
    indicators.interest_rate = rate;
    state.last_gdp = Some(indicators.gdp);

    if state.month.is_multiple_of(12) {
        let year = (state.month / 12) as usize;
        if let Some(&next) = config.annual_tax_rates.get(year - 1).or(config.annual_tax_rates.last()) {
            state.policy.tax_rate = next.clamp(0.0, 1.0);
        }
    }
    MonthOutcome { indicators, ledger, clamped }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("all x values are equal")]
    DegenerateX,
    #[error("need at least two points of equal-length series")]
    TooFewPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation; NaN when the ys are constant.
    pub r: f64,
}

impl fmt::Display for LineFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slope={:.6} intercept={:.6} r={:.6}", self.slope, self.intercept, self.r)
    }
}

/// Ordinary least squares on centered data.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit, RegressionError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(RegressionError::TooFewPoints);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(RegressionError::DegenerateX);
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 { f64::NAN } else { sxy / (sxx * syy).sqrt() };
    Ok(LineFit { slope, intercept: my - slope * mx, r })
}

/// Inflation against unemployment.
pub fn phillips_fit(series: &[MacroIndicators]) -> Result<LineFit, RegressionError> {
    let xs: Vec<f64> = series.iter().map(|m| m.unemployment).collect();
    let ys: Vec<f64> = series.iter().map(|m| m.inflation).collect();
    fit_line(&xs, &ys)
}

/// Gdp growth against the month-over-month change in unemployment.
pub fn okun_fit(series: &[MacroIndicators]) -> Result<LineFit, RegressionError> {
    let xs: Vec<f64> = series.windows(2).map(|w| w[1].unemployment - w[0].unemployment).collect();
    let ys: Vec<f64> = series.windows(2).map(|w| w[1].gdp_growth).collect();
    fit_line(&xs, &ys)
}

pub fn regression_report(series: &[MacroIndicators]) -> String {
    let show = |fit: Result<LineFit, RegressionError>| match fit {
        Ok(fit) => fit.to_string(),
        Err(err) => format!("unavailable ({err})"),
    };
    format!("phillips: {}\nokun: {}\n", show(phillips_fit(series)), show(okun_fit(series)))
}

pub fn action_schema() -> Schema {
    Schema::new("household_action")
        .required("work_propensity", FieldType::Number)
        .describe_last("0 to 1; you work this month at 0.5 or above")
        .required("consumption_propensity", FieldType::Number)
        .describe_last("0 to 1; share of wealth plus net income to spend")
}

#[derive(Debug, Deserialize)]
struct RawAction {
    work_propensity: f64,
    consumption_propensity: f64,
}

pub struct EconomyEnv {
    config: EconomyConfig,
    state: EconomyState,
    series: Vec<MacroIndicators>,
    ledgers: Vec<MonthLedger>,
    time: TimeStep,
    done: bool,
    events: Vec<EventRecord>,
}

impl EconomyEnv {
    pub fn new(config: EconomyConfig) -> Result<Self, EnvError> {
        if config.n_households == 0 {
            return Err(EnvError::Invalid("economy needs at least one household".into()));
        }
        if config.initial_price <= 0.0 || config.epsilon <= 0.0 || config.monthly_wage <= 0.0 {
            return Err(EnvError::Invalid("price, epsilon and wage must be positive".into()));
        }
        if !(config.skill_min > 0.0 && config.skill_min <= config.skill_max) {
            return Err(EnvError::Invalid("skills must satisfy 0 < skill_min <= skill_max".into()));
        }
        let state = EconomyState {
            month: 0,
            households: BTreeMap::new(),
            policy: PolicyState { tax_rate: config.initial_tax_rate, interest_rate: config.initial_interest_rate, government_revenue: 0.0 },
            price_level: config.initial_price,
            last_gdp: None,
        };
        Ok(EconomyEnv { config, state, series: Vec::new(), ledgers: Vec::new(), time: TimeStep(0), done: true, events: Vec::new() })
    }

    pub fn state(&self) -> &EconomyState {
        &self.state
    }

    pub fn indicators(&self) -> &[MacroIndicators] {
        &self.series
    }

    pub fn ledgers(&self) -> &[MonthLedger] {
        &self.ledgers
    }

    pub fn total_money(&self) -> f64 {
        self.state.households.values().map(|h| h.wealth).sum::<f64>() + self.state.policy.government_revenue
    }

    fn context_for(&self, agent: AgentId) -> String {
        let h = &self.state.households[&agent];
        let mut lines = vec![
            format!("Month {} of {}.", self.state.month + 1, self.config.months),
            format!("Your skill: {:.3}; monthly wage per unit of skill: {:.2}.", h.skill, h.monthly_wage),
            format!("Your wealth: {:.2}.", h.wealth),
            format!(
                "Price level {:.4}; tax rate {:.2}; savings interest rate {:.4} per year.",
                self.state.price_level, self.state.policy.tax_rate, self.state.policy.interest_rate
            ),
        ];
        if let Some(last) = self.series.last() {
            lines.push(format!(
                "Last month: unemployment {:.3}, inflation {:.4}, gdp growth {:.4}.",
                last.unemployment, last.inflation, last.gdp_growth
            ));
        }
        lines.join("\n")
    }

    fn observations(&self) -> ObservationMap {
        self.state
            .households
            .keys()
            .map(|&agent| {
                let mut obs = Observation::new(agent, self.time, self.context_for(agent));
                if !self.done {
                    obs = obs.with_schema(action_schema());
                }
                (agent, obs)
            })
            .collect()
    }
}

impl Environment for EconomyEnv {
    fn world_tag(&self) -> &str {
        WORLD_TAG
    }

    fn time(&self) -> TimeStep {
        self.time
    }

    fn reset(&mut self, seeds: SeedStream) -> Result<ObservationMap, EnvError> {
        let mut rng = seeds.child("skills").rng();
        let cfg = &self.config;
        self.state = EconomyState {
            month: 0,
            households: (0..cfg.n_households)
                .map(|i| {
                    let skill = if cfg.skill_min == cfg.skill_max {
                        cfg.skill_min
                    } else {
                        rng.random_range(cfg.skill_min..cfg.skill_max)
                    };
                    let h = HouseholdState {
                        agent: AgentId(i),
                        skill,
                        wealth: cfg.initial_wealth,
                        monthly_wage: cfg.monthly_wage,
                        employed_this_month: false,
                    };
                    (AgentId(i), h)
                })
                .collect(),
            policy: PolicyState { tax_rate: cfg.initial_tax_rate, interest_rate: cfg.initial_interest_rate, government_revenue: 0.0 },
            price_level: cfg.initial_price,
            last_gdp: None,
        };
        self.series.clear();
        self.ledgers.clear();
        self.events.clear();
        self.time = TimeStep(0);
        self.done = self.config.months == 0;
        Ok(self.observations())
    }

    fn step(&mut self, actions: ActionMap) -> Result<ObservationMap, EnvError> {
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        let mut parsed = BTreeMap::new();
        for (agent, envelope) in &actions {
            match serde_json::from_value::<RawAction>(envelope.body.clone()) {
                Ok(raw) => {
                    parsed.insert(*agent, HouseholdAction {
                        work_propensity: raw.work_propensity,
                        consumption_propensity: raw.consumption_propensity,
                    });
                }
                Err(err) => {
                    let record = EventRecord::agent(*agent, self.time, "reject_action").with("reason", err.to_string());
                    self.events.push(record);
                }
            }
        }
        let outcome = monthly_step(&parsed, &mut self.state, &self.config);
        for agent in &outcome.clamped {
            let action = parsed[agent];
            let record = EventRecord::agent(*agent, self.time, "clamp")
                .with("work_propensity", action.work_propensity)
                .with("consumption_propensity", action.consumption_propensity);
            self.events.push(record);
        }
        let m = &outcome.indicators;
        let record = EventRecord::new(None, self.time, "month")
            .with("month", m.month)
            .with("unemployment", m.unemployment)
            .with("price_level", m.price_level)
            .with("inflation", m.inflation)
            .with("gdp", m.gdp)
            .with("gdp_growth", m.gdp_growth)
            .with("interest_rate", m.interest_rate)
            .with("tax_rate", m.tax_rate)
            .with("government_revenue", self.state.policy.government_revenue);
        self.events.push(record);
        self.series.push(outcome.indicators);
        self.ledgers.push(outcome.ledger);
        self.time = self.time.next();
        self.done = self.state.month >= self.config.months;
        Ok(self.observations())
    }

    fn done(&self) -> bool {
        self.done
    }

    fn drain_events(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(n: u32, wage: f64, skill: f64, tax: f64) -> EconomyState {
        EconomyState {
            month: 0,
            households: (0..n)
                .map(|i| {
                    let h = HouseholdState { agent: AgentId(i), skill, wealth: 0.0, monthly_wage: wage, employed_this_month: false };
                    (AgentId(i), h)
                })
                .collect(),
            policy: PolicyState { tax_rate: tax, interest_rate: 0.0, government_revenue: 0.0 },
            price_level: 1.0,
            last_gdp: None,
        }
    }

    fn all(n: u32, work: f64, consume: f64) -> BTreeMap<AgentId, HouseholdAction> {
        (0..n).map(|i| (AgentId(i), HouseholdAction { work_propensity: work, consumption_propensity: consume })).collect()
    }

    #[test]
    fn two_workers_pay_two_tenths_in_tax() {
        let mut s = state(2, 1.0, 1.0, 0.1);
        monthly_step(&all(2, 1.0, 0.0), &mut s, &EconomyConfig::default());
        assert!((s.policy.government_revenue - 0.2).abs() < 1e-12);
    }

    #[test]
    fn nobody_works() {
        let mut s = state(4, 1.0, 1.0, 0.1);
        let out = monthly_step(&all(4, 0.0, 0.5), &mut s, &EconomyConfig::default());
        assert_eq!(out.indicators.unemployment, 1.0);
        assert_eq!(out.indicators.gdp, 0.0);
    }

    #[test]
    fn no_demand_no_supply_keeps_price() {
        let mut s = state(3, 1.0, 1.0, 0.0);
        monthly_step(&all(3, 0.0, 0.0), &mut s, &EconomyConfig::default());
        assert_eq!(s.price_level, 1.0);
    }

    #[test]
    fn indicator_definitions() {
        let mut s = state(4, 1.0, 1.0, 0.0);
        s.households.get_mut(&AgentId(2)).unwrap().employed_this_month = true;
        s.price_level = 102.0;
        let m = compute_indicators(&s, 100.0, Some(100.0));
        assert_eq!(m.unemployment, 0.75);
        assert!((m.inflation - 0.02).abs() < 1e-12);
        assert_eq!(m.gdp, 102.0);
        assert!((m.gdp_growth - 0.02).abs() < 1e-12);
        let m = compute_indicators(&s, 100.0, Some(0.0));
        assert_eq!(m.gdp_growth, 0.0);
    }

    #[test]
    fn gdp_growth_from_series() {
        let mut s = state(1, 1.0, 110.0, 0.0);
        s.households.get_mut(&AgentId(0)).unwrap().employed_this_month = true;
        assert!((compute_indicators(&s, 1.0, Some(100.0)).gdp_growth - 0.10).abs() < 1e-12);
    }

    #[test]
    fn fits() {
        let xs = [0.0, 1.0, 2.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.5 * x + 3.0).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12 && (fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r + 1.0).abs() < 1e-12);
        let fit = fit_line(&[0.0, 1.0, 2.0], &[0.0, 0.0, 3.0]).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12 && (fit.intercept + 0.5).abs() < 1e-12);
        assert_eq!(fit_line(&[1.0, 1.0], &[0.0, 1.0]), Err(RegressionError::DegenerateX));
        assert!(fit_line(&[0.0, 1.0], &[2.0, 2.0]).unwrap().r.is_nan());
    }

    #[test]
    fn rate_rule_clamps() {
        let mut s = state(2, 1.0, 1.0, 0.0);
        // all spend, nobody works: demand with zero supply pushes prices and the rate up
        for h in s.households.values_mut() {
            h.wealth = 100.0;
        }
        monthly_step(&all(2, 0.0, 1.0), &mut s, &EconomyConfig::default());
        assert_eq!(s.policy.interest_rate, 0.2);
        let mut s = state(2, 1.0, 1.0, 0.0);
        monthly_step(&all(2, 1.0, 0.0), &mut s, &EconomyConfig::default());
        assert_eq!(s.policy.interest_rate, 0.0);
    }

    #[test]
    fn clamping_is_reported() {
        let (a, changed) = HouseholdAction { work_propensity: 1.5, consumption_propensity: -0.1 }.clamped();
        assert!(changed);
        assert_eq!((a.work_propensity, a.consumption_propensity), (1.0, 0.0));
    }

    #[test]
    fn annual_tax_hook() {
        let config = EconomyConfig { annual_tax_rates: vec![0.3], ..EconomyConfig::default() };
        let mut s = state(1, 1.0, 1.0, 0.1);
        for _ in 0..11 {
            monthly_step(&all(1, 1.0, 0.5), &mut s, &config);
        }
        assert_eq!(s.policy.tax_rate, 0.1);
        monthly_step(&all(1, 1.0, 0.5), &mut s, &config);
        assert_eq!(s.policy.tax_rate, 0.3);
    }

    #[test]
    fn csv_columns() {
        let head = indicators_csv(&[]);
        assert_eq!(head, "month,unemployment,price_level,inflation,gdp,gdp_growth,interest_rate,tax_rate\n");
    }
}
