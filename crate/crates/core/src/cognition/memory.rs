use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::TimeStep;

/// Token estimate used for memory budgets: `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryRole {
    Observation,
    OwnAction,
    ToolResult,
    Note,
}

impl fmt::Display for MemoryRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemoryRole::Observation => "observation",
            MemoryRole::OwnAction => "own_action",
            MemoryRole::ToolResult => "tool_result",
            MemoryRole::Note => "note",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub time: TimeStep,
    pub world_tag: String,
    pub role: MemoryRole,
    pub content: String,
}

impl MemoryEntry {
    pub fn new(
        time: TimeStep,
        world_tag: impl Into<String>,
        role: MemoryRole,
        content: impl Into<String>,
    ) -> Self {
        MemoryEntry { time, world_tag: world_tag.into(), role, content: content.into() }
    }

    fn render(&self) -> String {
        format!("[{} t={} {}] {}", self.world_tag, self.time, self.role, self.content)
    }
}

/// How much of the archive is shown to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MemoryKind {
    /// The `capacity` most recent entries.
    Buffer { capacity: usize },
    /// At most `window` recent entries and at most `token_limit` estimated
    /// tokens. The newest entry is always shown.
    ChatHistory { window: usize, token_limit: usize },
    /// Nothing.
    Null,
}

/// An agent's dynamic state: a full archive plus a rendering policy.
///
/// Eviction only shapes what [`render`](MemoryStore::render) returns; the
/// archive itself only grows, and it is what moves between worlds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryStore {
    kind: MemoryKind,
    archive: Vec<MemoryEntry>,
}

const ARCHIVE_FORMAT: &str = "agentsim-memory";
const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveHeader {
    format: String,
    version: u32,
    #[serde(flatten)]
    kind: MemoryKind,
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("empty archive")]
    Empty,
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("unsupported archive header: {0}")]
    Header(String),
}

impl MemoryStore {
    pub fn new(kind: MemoryKind) -> Self {
        MemoryStore { kind, archive: Vec::new() }
    }

    pub fn buffer(capacity: usize) -> Self {
        Self::new(MemoryKind::Buffer { capacity })
    }

    pub fn chat_history(window: usize, token_limit: usize) -> Self {
        Self::new(MemoryKind::ChatHistory { window, token_limit })
    }

    pub fn null() -> Self {
        Self::new(MemoryKind::Null)
    }

    pub fn kind(&self) -> MemoryKind {
        self.kind
    }

    /// An empty store with the same rendering policy.
    pub fn fresh(&self) -> Self {
        Self::new(self.kind)
    }

    pub fn record(&mut self, entry: MemoryEntry) {
        self.archive.push(entry);
    }

    pub fn archive(&self) -> &[MemoryEntry] {
        &self.archive
    }

    pub fn len(&self) -> usize {
        self.archive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.archive.is_empty()
    }

    /// Entries that survive the rendering policy, oldest first.
    pub fn visible(&self) -> &[MemoryEntry] {
        let n = self.archive.len();
        let keep = match self.kind {
            MemoryKind::Null => 0,
            MemoryKind::Buffer { capacity } => capacity.min(n),
            MemoryKind::ChatHistory { window, token_limit } => {
                let mut kept = 0;
                let mut tokens = 0;
                for entry in self.archive.iter().rev().take(window) {
                    let cost = estimate_tokens(&entry.content);
                    if kept > 0 && tokens + cost > token_limit {
                        break;
                    }
                    tokens += cost;
                    kept += 1;
                }
                kept
            }
        };
        &self.archive[n - keep..]
    }

    /// One line per visible entry: `[world_tag t=TIME role] content`.
    pub fn render(&self) -> String {
        self.visible().iter().map(MemoryEntry::render).collect::<Vec<_>>().join("\n")
    }

    /// Versioned newline-delimited JSON: a header line, then one entry per line.
    pub fn to_jsonl(&self) -> String {
        let header = ArchiveHeader {
            format: ARCHIVE_FORMAT.into(),
            version: ARCHIVE_VERSION,
            kind: self.kind,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for entry in &self.archive {
            out.push_str(&serde_json::to_string(entry).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ArchiveError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(ArchiveError::Empty)?;
        let header: ArchiveHeader =
            serde_json::from_str(first).map_err(|source| ArchiveError::Json { line: 1, source })?;
        if header.format != ARCHIVE_FORMAT || header.version != ARCHIVE_VERSION {
            return Err(ArchiveError::Header(format!("{} v{}", header.format, header.version)));
        }
        let mut store = MemoryStore::new(header.kind);
        for (idx, line) in lines {
            let entry = serde_json::from_str(line)
                .map_err(|source| ArchiveError::Json { line: idx + 1, source })?;
            store.archive.push(entry);
        }
        Ok(store)
    }
}
