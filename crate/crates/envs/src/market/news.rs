use std::collections::BTreeSet;
use std::sync::Arc;

use agentsim_core::{Schema, ToolSpec};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NO_NEWS: &str = "no news available";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsItem {
    pub date: NaiveDate,
    pub headline: String,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Error)]
pub enum NewsFeedError {
    #[error("news line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("two news items share the date {0}")]
    DuplicateDate(NaiveDate),
}

/// Reads newline-delimited `{date, headline, body}` records; dates must be unique.
pub fn parse_news_feed(text: &str) -> Result<Vec<NewsItem>, NewsFeedError> {
    let mut items = Vec::new();
    for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let item: NewsItem =
            serde_json::from_str(line).map_err(|source| NewsFeedError::Json { line: idx + 1, source })?;
        items.push(item);
    }
    check_unique_dates(&items)?;
    Ok(items)
}

pub fn check_unique_dates(items: &[NewsItem]) -> Result<(), NewsFeedError> {
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item.date) {
            return Err(NewsFeedError::DuplicateDate(item.date));
        }
    }
    Ok(())
}

/// Tool result text for `date`: the headline, then the body when present.
pub fn fetch_news_text(feed: &[NewsItem], date: NaiveDate) -> String {
    match feed.iter().find(|item| item.date == date) {
        Some(item) if item.body.is_empty() => item.headline.clone(),
        Some(item) => format!("{}\n{}", item.headline, item.body),
        None => NO_NEWS.to_string(),
    }
}

pub fn fetch_news_tool(feed: Arc<Vec<NewsItem>>, date: NaiveDate) -> ToolSpec {
    ToolSpec::new(
        "fetch_news",
        "Fetch today's market news headline.",
        Schema::new("fetch_news_args"),
        move |_| Ok(fetch_news_text(&feed, date)),
    )
}
