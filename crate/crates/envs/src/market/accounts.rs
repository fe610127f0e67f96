use std::collections::BTreeMap;
use std::fmt;

use agentsim_core::AgentId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::book::{Cents, Side, Symbol, Trade};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InvestmentStyle {
    Conservative,
    Aggressive,
    Balanced,
    #[serde(rename = "Growth-Oriented")]
    GrowthOriented,
}

impl InvestmentStyle {
    pub const ALL: [InvestmentStyle; 4] = [
        InvestmentStyle::Conservative,
        InvestmentStyle::Aggressive,
        InvestmentStyle::Balanced,
        InvestmentStyle::GrowthOriented,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InvestmentStyle::Conservative => "Conservative",
            InvestmentStyle::Aggressive => "Aggressive",
            InvestmentStyle::Balanced => "Balanced",
            InvestmentStyle::GrowthOriented => "Growth-Oriented",
        }
    }
}

impl fmt::Display for InvestmentStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cash and shares are totals; the `reserved_*` parts back open orders and
/// are released when the session closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderAccount {
    pub cash: Cents,
    pub reserved_cash: Cents,
    pub holdings: BTreeMap<Symbol, u64>,
    pub reserved_shares: BTreeMap<Symbol, u64>,
    /// Currency units; grows with interest.
    pub loan_principal: f64,
    pub style: InvestmentStyle,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrderRefusal {
    #[error("price must be positive")]
    NonPositivePrice,
    #[error("quantity must be positive")]
    ZeroQuantity,
    #[error("insufficient cash: need {needed}, available {available}")]
    InsufficientCash { needed: Cents, available: Cents },
    #[error("insufficient shares: need {needed}, available {available}")]
    InsufficientShares { needed: u64, available: u64 },
    #[error("order would cross the agent's own opposite order")]
    SelfCross,
}

impl OrderRefusal {
    pub fn code(&self) -> &'static str {
        match self {
            OrderRefusal::NonPositivePrice => "non_positive_price",
            OrderRefusal::ZeroQuantity => "zero_quantity",
            OrderRefusal::InsufficientCash { .. } => "insufficient_cash",
            OrderRefusal::InsufficientShares { .. } => "insufficient_shares",
            OrderRefusal::SelfCross => "self_cross",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoanRefused {
    #[error("loan of {requested:.2} exceeds the limit of {limit:.2}")]
    ExceedsLimit { requested: f64, limit: f64 },
    #[error("loans are granted only in session 1")]
    WrongSession,
    #[error("loan amount must be positive")]
    NonPositive,
}

impl TraderAccount {
    pub fn new(cash: Cents, holdings: BTreeMap<Symbol, u64>, style: InvestmentStyle) -> Self {
        TraderAccount {
            cash,
            reserved_cash: Cents(0),
            holdings,
            reserved_shares: BTreeMap::new(),
            loan_principal: 0.0,
            style,
        }
    }

    pub fn shares(&self, symbol: Symbol) -> u64 {
        self.holdings.get(&symbol).copied().unwrap_or(0)
    }

    pub fn available_cash(&self) -> Cents {
        self.cash - self.reserved_cash
    }

    pub fn available_shares(&self, symbol: Symbol) -> u64 {
        self.shares(symbol) - self.reserved_shares.get(&symbol).copied().unwrap_or(0)
    }

    /// Mark-to-market value of cash plus holdings, in currency units.
    pub fn portfolio_value(&self, prices: &BTreeMap<Symbol, Cents>) -> f64 {
        let stock: i64 = self
            .holdings
            .iter()
            .map(|(symbol, &qty)| prices.get(symbol).copied().unwrap_or_default().times(qty).0)
            .sum();
        (self.cash + Cents(stock)).units()
    }

    pub fn net_worth(&self, prices: &BTreeMap<Symbol, Cents>) -> f64 {
        self.portfolio_value(prices) - self.loan_principal
    }

    /// Checks an order against free cash or shares and reserves them.
    pub fn reserve(&mut self, symbol: Symbol, side: Side, limit: Cents, quantity: u64) -> Result<(), OrderRefusal> {
        if limit.0 <= 0 {
            return Err(OrderRefusal::NonPositivePrice);
        }
        if quantity == 0 {
            return Err(OrderRefusal::ZeroQuantity);
        }
        match side {
            Side::Buy => {
                let needed = limit.times(quantity);
                let available = self.available_cash();
                if needed > available {
                    return Err(OrderRefusal::InsufficientCash { needed, available });
                }
                self.reserved_cash += needed;
            }
            Side::Sell => {
                let available = self.available_shares(symbol);
                if quantity > available {
                    return Err(OrderRefusal::InsufficientShares { needed: quantity, available });
                }
                *self.reserved_shares.entry(symbol).or_insert(0) += quantity;
            }
        }
        Ok(())
    }

    pub fn release_reservations(&mut self) {
        self.reserved_cash = Cents(0);
        self.reserved_shares.clear();
    }
}

/// Largest new loan allowed: `ltv * portfolio_value - principal`, floored at zero.
pub fn max_new_loan(account: &TraderAccount, prices: &BTreeMap<Symbol, Cents>, loan_to_value: f64) -> f64 {
    (loan_to_value * account.portfolio_value(prices) - account.loan_principal).max(0.0)
}

/// Grants the whole amount or nothing. Cash and principal rise by the same whole-cent amount.
pub fn grant_loan(
    account: &mut TraderAccount,
    amount: f64,
    prices: &BTreeMap<Symbol, Cents>,
    loan_to_value: f64,
) -> Result<Cents, LoanRefused> {
    let cents = Cents::from_units(amount);
    if cents.0 <= 0 {
        return Err(LoanRefused::NonPositive);
    }
    let limit = max_new_loan(account, prices, loan_to_value);
    if cents.units() > limit + 1e-9 {
        return Err(LoanRefused::ExceedsLimit { requested: cents.units(), limit });
    }
    account.cash += cents;
    account.loan_principal += cents.units();
    Ok(cents)
}

/// One day of interest on every outstanding principal. Returns the total accrued.
pub fn accrue_interest(accounts: &mut BTreeMap<AgentId, TraderAccount>, interest_rate: f64) -> f64 {
    let mut accrued = 0.0;
    for account in accounts.values_mut() {
        let interest = account.loan_principal * interest_rate;
        account.loan_principal += interest;
        accrued += interest;
    }
    accrued
}

/// Double-entry settlement of one symbol's trades at the clearing price.
pub fn settle(trades: &[Trade], symbol: Symbol, price: Cents, accounts: &mut BTreeMap<AgentId, TraderAccount>) {
    for trade in trades {
        let amount = price.times(trade.quantity);
        let buyer = accounts.get_mut(&trade.buyer).expect("trade buyer has an account");
        buyer.cash -= amount;
        *buyer.holdings.entry(symbol).or_insert(0) += trade.quantity;
        let seller = accounts.get_mut(&trade.seller).expect("trade seller has an account");
        seller.cash += amount;
        let held = seller.holdings.entry(symbol).or_insert(0);
        *held = held.checked_sub(trade.quantity).expect("sell orders are backed by reserved shares");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn account(cash: i64, a: u64) -> TraderAccount {
        TraderAccount::new(Cents(cash), BTreeMap::from([(Symbol::A, a), (Symbol::B, 0)]), InvestmentStyle::Balanced)
    }

    fn prices(a: i64) -> BTreeMap<Symbol, Cents> {
        BTreeMap::from([(Symbol::A, Cents(a)), (Symbol::B, Cents(100))])
    }

    #[test]
    fn settle_moves_cash_and_shares() {
        let mut accounts = BTreeMap::from([(AgentId(1), account(100_000, 0)), (AgentId(2), account(0, 5))]);
        let trade = Trade { buy_order: 1, sell_order: 2, buyer: AgentId(1), seller: AgentId(2), quantity: 2 };
        settle(&[trade], Symbol::A, Cents(10_000), &mut accounts);
        assert_eq!(accounts[&AgentId(1)].cash, Cents(80_000));
        assert_eq!(accounts[&AgentId(1)].shares(Symbol::A), 2);
        assert_eq!(accounts[&AgentId(2)].cash, Cents(20_000));
        assert_eq!(accounts[&AgentId(2)].shares(Symbol::A), 3);
    }

    #[test]
    fn settle_without_trades_is_identity() {
        let mut accounts = BTreeMap::from([(AgentId(1), account(500, 1))]);
        let before = accounts.clone();
        settle(&[], Symbol::A, Cents(100), &mut accounts);
        assert_eq!(accounts, before);
    }

    #[test]
    fn interest_compounds_daily() {
        let mut accounts = BTreeMap::from([(AgentId(0), account(0, 0))]);
        accounts.get_mut(&AgentId(0)).unwrap().loan_principal = 100.0;
        let accrued = accrue_interest(&mut accounts, 0.01);
        assert!((accounts[&AgentId(0)].loan_principal - 101.0).abs() < 1e-12);
        assert!((accrued - 1.0).abs() < 1e-12);
        for _ in 0..50 {
            accrue_interest(&mut accounts, 0.0);
        }
        assert!((accounts[&AgentId(0)].loan_principal - 101.0).abs() < 1e-12);
    }

    #[test]
    fn loan_limit_closed_form() {
        // portfolio 1000 (cash 500 + 5 shares at 100), principal 400, ltv 0.5 -> 100
        let mut acct = account(50_000, 5);
        acct.loan_principal = 400.0;
        let p = prices(10_000);
        assert!((max_new_loan(&acct, &p, 0.5) - 100.0).abs() < 1e-9);
        assert!(matches!(grant_loan(&mut acct, 100.01, &p, 0.5), Err(LoanRefused::ExceedsLimit { .. })));
        assert_eq!(grant_loan(&mut acct, 100.0, &p, 0.5), Ok(Cents(10_000)));
        assert_eq!(acct.cash, Cents(60_000));
        assert!((acct.loan_principal - 500.0).abs() < 1e-9);
    }

    #[test]
    fn reservations_guard_cash_and_shares() {
        let mut acct = account(1_000, 2);
        assert_eq!(acct.reserve(Symbol::A, Side::Buy, Cents(400), 2), Ok(()));
        assert!(matches!(acct.reserve(Symbol::A, Side::Buy, Cents(300), 1), Err(OrderRefusal::InsufficientCash { .. })));
        assert_eq!(acct.reserve(Symbol::A, Side::Sell, Cents(400), 2), Ok(()));
        assert!(matches!(acct.reserve(Symbol::A, Side::Sell, Cents(400), 1), Err(OrderRefusal::InsufficientShares { .. })));
        assert!(matches!(acct.reserve(Symbol::B, Side::Sell, Cents(400), 1), Err(OrderRefusal::InsufficientShares { .. })));
        assert_eq!(acct.reserve(Symbol::A, Side::Buy, Cents(0), 1), Err(OrderRefusal::NonPositivePrice));
        acct.release_reservations();
        assert_eq!(acct.available_cash(), Cents(1_000));
    }
}
