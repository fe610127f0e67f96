//! Follower-graph social feed with posts, comments and likes.
//!
//! Agents address one another only through the shared tables: a comment
//! targets a post, and the post's author sees it in their feed.

use std::collections::{BTreeMap, BTreeSet};

use agentsim_core::{
    ActionMap, AgentId, EnvError, Environment, EventRecord, FieldType, Observation, ObservationMap, Schema,
    SeedStream, TimeStep,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WORLD_TAG: &str = "social";

pub const AMAZON_SEED_POST: &str = "report: amazon plans to open its first physical store in new york URL";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    #[serde(rename = "agent_id")]
    pub agent: AgentId,
    #[serde(default)]
    pub bio: String,
    #[serde(default)]
    pub follows: BTreeSet<AgentId>,
}

#[derive(Debug, Error)]
pub enum ProfilesError {
    #[error("profiles line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("agent {0} follows itself")]
    SelfFollow(AgentId),
    #[error("agent {0} listed twice")]
    Duplicate(AgentId),
}

/// Reads newline-delimited `{agent_id, bio, follows}` records.
pub fn parse_profiles(text: &str) -> Result<Vec<UserProfile>, ProfilesError> {
    let mut out: Vec<UserProfile> = Vec::new();
    for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let profile: UserProfile =
            serde_json::from_str(line).map_err(|source| ProfilesError::Json { line: idx + 1, source })?;
        if profile.follows.contains(&profile.agent) {
            return Err(ProfilesError::SelfFollow(profile.agent));
        }
        if out.iter().any(|p| p.agent == profile.agent) {
            return Err(ProfilesError::Duplicate(profile.agent));
        }
        out.push(profile);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: u64,
    pub author: AgentId,
    pub time: TimeStep,
    pub content: String,
    pub likes: BTreeSet<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: u64,
    pub post_id: u64,
    pub author: AgentId,
    pub time: TimeStep,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocialActionKind {
    CreatePost,
    CreateComment,
    LikePost,
    DoNothing,
}

impl SocialActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SocialActionKind::CreatePost => "create_post",
            SocialActionKind::CreateComment => "create_comment",
            SocialActionKind::LikePost => "like_post",
            SocialActionKind::DoNothing => "do_nothing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialAction {
    pub kind: SocialActionKind,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub target_post: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SocialError {
    #[error("post {0} does not exist")]
    UnknownPost(u64),
    #[error("{0} requires {1}")]
    MissingField(&'static str, &'static str),
}

impl SocialError {
    pub fn code(&self) -> &'static str {
        match self {
            SocialError::UnknownPost(_) => "unknown_post",
            SocialError::MissingField(..) => "missing_field",
        }
    }
}

/// Post, comment and like tables. Ids are dense and start at 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialTables {
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
}

impl SocialTables {
    pub fn post(&self, post_id: u64) -> Option<&Post> {
        post_id.checked_sub(1).and_then(|i| self.posts.get(i as usize))
    }

    fn post_mut(&mut self, post_id: u64) -> Option<&mut Post> {
        post_id.checked_sub(1).and_then(|i| self.posts.get_mut(i as usize))
    }

    pub fn comments_on(&self, post_id: u64) -> Vec<Comment> {
        self.comments.iter().filter(|c| c.post_id == post_id).cloned().collect()
    }

    fn add_post(&mut self, author: AgentId, time: TimeStep, content: String) -> u64 {
        let post_id = self.posts.len() as u64 + 1;
        self.posts.push(Post { post_id, author, time, content, likes: BTreeSet::new() });
        post_id
    }

    fn add_comment(&mut self, author: AgentId, time: TimeStep, post_id: u64, content: String) -> Result<u64, SocialError> {
        if self.post(post_id).is_none() {
            return Err(SocialError::UnknownPost(post_id));
        }
        let comment_id = self.comments.len() as u64 + 1;
        self.comments.push(Comment { comment_id, post_id, author, time, content });
        Ok(comment_id)
    }

    fn like(&mut self, agent: AgentId, post_id: u64) -> Result<(), SocialError> {
        let post = self.post_mut(post_id).ok_or(SocialError::UnknownPost(post_id))?;
        post.likes.insert(agent);
        Ok(())
    }
}

/// Posts by followed users, plus the user's own posts that others commented on,
/// newest first (ties by higher post id), excluding anything after `now`.
pub fn build_feed(
    user: AgentId,
    follows: &BTreeSet<AgentId>,
    tables: &SocialTables,
    cap: usize,
    now: TimeStep,
) -> Vec<(Post, Vec<Comment>)> {
    let replied: BTreeSet<u64> =
        tables.comments.iter().filter(|c| c.author != user && c.time <= now).map(|c| c.post_id).collect();
    let mut posts: Vec<&Post> = tables
        .posts
        .iter()
        .filter(|p| p.time <= now)
        .filter(|p| follows.contains(&p.author) || (p.author == user && replied.contains(&p.post_id)))
        .collect();
    posts.sort_by(|a, b| b.time.cmp(&a.time).then(b.post_id.cmp(&a.post_id)));
    posts.truncate(cap);
    let mut threads: BTreeMap<u64, Vec<Comment>> = posts.iter().map(|p| (p.post_id, Vec::new())).collect();
    for comment in tables.comments.iter().filter(|c| c.time <= now) {
        if let Some(thread) = threads.get_mut(&comment.post_id) {
            thread.push(comment.clone());
        }
    }
    posts
        .into_iter()
        .map(|p| (p.clone(), threads.remove(&p.post_id).unwrap_or_default()))
        .collect()
}

/// Apply one action. On error the tables are untouched.
pub fn apply_social_action(
    agent: AgentId,
    action: &SocialAction,
    tables: &mut SocialTables,
    time: TimeStep,
) -> Result<EventRecord, SocialError> {
    let record = EventRecord::agent(agent, time, action.kind.as_str());
    match action.kind {
        SocialActionKind::CreatePost => {
            let content = action.content.clone().ok_or(SocialError::MissingField("create_post", "content"))?;
            let post_id = tables.add_post(agent, time, content.clone());
            Ok(record.with("content", content).with("post_id", post_id))
        }
        SocialActionKind::CreateComment => {
            let post_id = action.target_post.ok_or(SocialError::MissingField("create_comment", "target_post"))?;
            let content = action.content.clone().ok_or(SocialError::MissingField("create_comment", "content"))?;
            let comment_id = tables.add_comment(agent, time, post_id, content.clone())?;
            Ok(record.with("content", content).with("comment_id", comment_id).with("post_id", post_id))
        }
        SocialActionKind::LikePost => {
            let post_id = action.target_post.ok_or(SocialError::MissingField("like_post", "target_post"))?;
            tables.like(agent, post_id)?;
            Ok(record.with("post_id", post_id))
        }
        SocialActionKind::DoNothing => Ok(record),
    }
}

/// Inject a post by `influencer` at t=0. Returns its id.
pub fn seed_influencer(tables: &mut SocialTables, influencer: AgentId, content: &str) -> (u64, EventRecord) {
    let action = SocialAction { kind: SocialActionKind::CreatePost, content: Some(content.to_string()), target_post: None };
    let record = apply_social_action(influencer, &action, tables, TimeStep(0)).expect("posts need no target");
    (tables.posts.len() as u64, record)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("event {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("event {index}: {source}")]
    Rejected { index: usize, source: SocialError },
}

/// Rebuild the tables from a social event stream. Other actions are skipped.
pub fn replay(events: &[EventRecord]) -> Result<SocialTables, ReplayError> {
    let mut tables = SocialTables::default();
    for (index, event) in events.iter().enumerate() {
        let kind = match event.action.as_str() {
            "create_post" => SocialActionKind::CreatePost,
            "create_comment" => SocialActionKind::CreateComment,
            "like_post" => SocialActionKind::LikePost,
            _ => continue,
        };
        let malformed = |reason: &str| ReplayError::Malformed { index, reason: reason.to_string() };
        let agent = event.user_id.ok_or_else(|| malformed("missing user_id"))?;
        let action = SocialAction {
            kind,
            content: event.info_str("content").map(str::to_string),
            target_post: if kind == SocialActionKind::CreatePost { None } else { event.info_u64("post_id") },
        };
        let replayed = apply_social_action(agent, &action, &mut tables, event.current_time)
            .map_err(|source| ReplayError::Rejected { index, source })?;
        if replayed.info != event.info {
            return Err(malformed("replayed ids differ from the log"));
        }
    }
    Ok(tables)
}

fn d_agents() -> u32 {
    111
}
fn d_steps() -> u64 {
    10
}
fn d_cap() -> usize {
    10
}
fn d_seeds() -> Vec<String> {
    vec![AMAZON_SEED_POST.to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocialConfig {
    #[serde(default = "d_agents")]
    pub n_agents: u32,
    #[serde(default = "d_steps")]
    pub steps: u64,
    #[serde(default = "d_cap")]
    pub feed_cap: usize,
    #[serde(default)]
    pub influencer: AgentId,
    #[serde(default = "d_seeds")]
    pub seed_posts: Vec<String>,
    /// Chance that a follower also follows another follower.
    #[serde(default)]
    pub follower_link_prob: f64,
    /// Replaces the generated star graph when non-empty.
    #[serde(default)]
    pub profiles: Vec<UserProfile>,
}

impl Default for SocialConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults deserialize")
    }
}

pub fn action_schema() -> Schema {
    Schema::new("social_action")
        .required("kind", FieldType::enumeration(["create_post", "create_comment", "like_post", "do_nothing"]))
        .optional("content", FieldType::String)
        .describe_last("text of a post or comment")
        .optional("target_post", FieldType::Integer)
        .describe_last("post id to comment on or like")
}

pub struct SocialEnv {
    config: SocialConfig,
    profiles: BTreeMap<AgentId, UserProfile>,
    tables: SocialTables,
    time: TimeStep,
    done: bool,
    events: Vec<EventRecord>,
}

impl SocialEnv {
    pub fn new(config: SocialConfig) -> Result<Self, EnvError> {
        if config.n_agents == 0 && config.profiles.is_empty() {
            return Err(EnvError::Invalid("social world needs at least one agent".into()));
        }
        if config.profiles.iter().any(|p| p.follows.contains(&p.agent)) {
            return Err(EnvError::Invalid("a profile follows itself".into()));
        }
        Ok(SocialEnv {
            config,
            profiles: BTreeMap::new(),
            tables: SocialTables::default(),
            time: TimeStep(0),
            done: true,
            events: Vec::new(),
        })
    }

    pub fn tables(&self) -> &SocialTables {
        &self.tables
    }

    pub fn profiles(&self) -> &BTreeMap<AgentId, UserProfile> {
        &self.profiles
    }

    pub fn feed(&self, user: AgentId) -> Vec<(Post, Vec<Comment>)> {
        let follows = self.profiles.get(&user).map(|p| p.follows.clone()).unwrap_or_default();
        build_feed(user, &follows, &self.tables, self.config.feed_cap, self.time)
    }

    pub fn follower_count(&self, agent: AgentId) -> usize {
        self.profiles.values().filter(|p| p.follows.contains(&agent)).count()
    }

    fn context_for(&self, agent: AgentId) -> String {
        let mut lines = Vec::new();
        if let Some(bio) = self.profiles.get(&agent).map(|p| p.bio.as_str()).filter(|b| !b.is_empty()) {
            lines.push(format!("Your profile: {bio}"));
        }
        let feed = self.feed(agent);
        if feed.is_empty() {
            lines.push("Your feed is empty.".to_string());
        } else {
            lines.push("Your feed:".to_string());
            for (post, comments) in feed {
                lines.push(format!(
                    "[post {}] agent {} (t={}, {} likes): {}",
                    post.post_id,
                    post.author,
                    post.time,
                    post.likes.len(),
                    post.content
                ));
                for c in comments {
                    lines.push(format!("    [comment {}] agent {}: {}", c.comment_id, c.author, c.content));
                }
            }
        }
        lines.join("\n")
    }

    fn observations(&self) -> ObservationMap {
        self.profiles
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

    fn build_profiles(&self, seeds: SeedStream) -> BTreeMap<AgentId, UserProfile> {
        if !self.config.profiles.is_empty() {
            return self.config.profiles.iter().map(|p| (p.agent, p.clone())).collect();
        }
        let mut rng = seeds.child("graph").rng();
        let influencer = self.config.influencer;
        let ids: Vec<AgentId> = (0..self.config.n_agents).map(AgentId).collect();
        ids.iter()
            .map(|&agent| {
                let mut follows = BTreeSet::new();
                if agent != influencer {
                    follows.insert(influencer);
                    for &other in &ids {
                        if other != agent && other != influencer && rng.random_bool(self.config.follower_link_prob.clamp(0.0, 1.0)) {
                            follows.insert(other);
                        }
                    }
                }
                (agent, UserProfile { agent, bio: String::new(), follows })
            })
            .collect()
    }
}

impl Environment for SocialEnv {
    fn world_tag(&self) -> &str {
        WORLD_TAG
    }

    fn time(&self) -> TimeStep {
        self.time
    }

    fn reset(&mut self, seeds: SeedStream) -> Result<ObservationMap, EnvError> {
        self.profiles = self.build_profiles(seeds);
        self.tables = SocialTables::default();
        self.events.clear();
        self.time = TimeStep(0);
        self.done = self.config.steps == 0;
        if !self.config.seed_posts.is_empty() && !self.profiles.contains_key(&self.config.influencer) {
            return Err(EnvError::Invalid(format!("influencer {} has no profile", self.config.influencer)));
        }
        for content in &self.config.seed_posts {
            let (_, record) = seed_influencer(&mut self.tables, self.config.influencer, content);
            self.events.push(record);
        }
        Ok(self.observations())
    }

    fn step(&mut self, actions: ActionMap) -> Result<ObservationMap, EnvError> {
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        for (agent, envelope) in &actions {
            if !self.profiles.contains_key(agent) {
                continue;
            }
            let record = match serde_json::from_value::<SocialAction>(envelope.body.clone()) {
                Ok(action) => match apply_social_action(*agent, &action, &mut self.tables, self.time) {
                    Ok(record) => record,
                    Err(err) => {
                        let mut record = EventRecord::agent(*agent, self.time, "reject_action")
                            .with("kind", action.kind.as_str())
                            .with("reason", err.code());
                        if let Some(target) = action.target_post {
                            record = record.with("post_id", target);
                        }
                        record
                    }
                },
                Err(err) => EventRecord::agent(*agent, self.time, "reject_action").with("reason", err.to_string()),
            };
            self.events.push(record);
        }
        self.time = self.time.next();
        self.done = self.time.0 >= self.config.steps;
        Ok(self.observations())
    }

    fn done(&self) -> bool {
        self.done
    }

    fn drain_events(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.events)
    }
}
