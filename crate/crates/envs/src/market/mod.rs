//! Two-stock trading world.
//!
//! Each trading day has three sessions. Within a session every trader submits
//! limit orders, optionally takes a loan (session 1 only) and posts to the
//! forum; the book for each stock then clears as a single call auction.

mod accounts;
mod book;
mod env;
mod metrics;
mod news;

pub use accounts::{
    accrue_interest, grant_loan, max_new_loan, settle, InvestmentStyle, LoanRefused, OrderRefusal,
    TraderAccount,
};
pub use book::{clear_session, matchable_volume, Cents, Clearing, MarketClock, Order, Side, Symbol, Trade};
pub use env::{
    action_schema, forum_view, ForumPost, MarketConfig, MarketEnv, StockState, PROFILE_A, PROFILE_B,
    WORLD_TAG,
};
pub use metrics::{
    buy_sell_ratio, order_counts, price_change_rate, session_stats_csv, MarketMetricError, SessionStats,
    SESSION_STATS_HEADER,
};
pub use news::{check_unique_dates, fetch_news_text, fetch_news_tool, parse_news_feed, NewsFeedError, NewsItem, NO_NEWS};
