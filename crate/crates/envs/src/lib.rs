//! Reference environments built on the `agentsim-core` protocol.
//!
//! | module | world tag | what it simulates |
//! |---|---|---|
//! | [`market`] | `market` | two-stock trading with per-session call auctions |
//! | [`auction`] | `auction` | sequential open ascending-price auctions |
//! | [`economy`] | `economy` | monthly work/consumption macro loop |
//! | [`social`] | `social` | follower-graph feed with posts, comments, likes |
//! | [`questionnaire`] | `questionnaire` | scaled instruments and bias scoring |

pub mod auction;
pub mod economy;
pub mod market;
pub mod questionnaire;
pub mod social;

mod csvout;
