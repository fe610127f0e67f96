//! Output bundles and their manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Files every runner writes, manifest excluded.
pub const BUNDLE_FILES: [&str; 3] = [EVENTS_FILE, METRICS_FILE, SUMMARY_FILE];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the bundle directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub runner: String,
    pub config_path: PathBuf,
    /// Hash of the config file bytes as read, before any flag overrides.
    pub config_sha256: String,
    /// Effective config after flag overrides.
    pub config: serde_json::Value,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Contents of the three data files of a bundle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BundleContents {
    pub events: String,
    pub metrics: String,
    pub summary: String,
}

/// Write the data files, then the manifest over everything in `dir`.
pub fn write_bundle(dir: &Path, contents: &BundleContents, mut manifest: RunManifest) -> io::Result<RunManifest> {
    fs::create_dir_all(dir)?;
    for (name, text) in BUNDLE_FILES.iter().zip([&contents.events, &contents.metrics, &contents.summary]) {
        fs::write(dir.join(name), text)?;
    }
    manifest.finished_at = timestamp();
    manifest.files = inventory(dir)?;
    let mut json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

/// Every regular file under `dir` except the top-level manifest, sorted by path.
pub fn inventory(dir: &Path) -> io::Result<Vec<FileEntry>> {
    let mut entries = Vec::new();
    walk(dir, dir, &mut entries)?;
    entries.retain(|e| e.path != MANIFEST_FILE);
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else {
            let bytes = fs::read(&path)?;
            let relative = path.strip_prefix(root).expect("walk stays under root");
            let name: Vec<String> = relative.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(FileEntry { path: name.join("/"), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
    }
    Ok(())
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
