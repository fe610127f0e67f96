use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    BackendError, ChatTurn, CompletionBackend, CompletionRequest, CompletionResult, ToolDef,
};
use crate::schema::Schema;

/// Which request fields enter the fingerprint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintMode {
    /// Turns, tools and response schema only.
    #[default]
    Content,
    /// Also model id and temperature.
    ContentAndModel,
}

#[derive(Serialize)]
struct FingerprintView<'a> {
    turns: &'a [ChatTurn],
    tools: &'a Option<Vec<ToolDef>>,
    response_schema: &'a Option<Schema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

/// Stable hex SHA-256 of the canonical JSON form of a request.
pub fn fingerprint(request: &CompletionRequest, mode: FingerprintMode) -> String {
    let with_model = mode == FingerprintMode::ContentAndModel;
    let view = FingerprintView {
        turns: &request.turns,
        tools: &request.tools,
        response_schema: &request.response_schema,
        model_id: with_model.then_some(request.model_id.as_str()),
        temperature: with_model.then_some(request.temperature),
    };
    let canonical = serde_json::to_vec(&view).expect("requests serialize");
    hex::encode(Sha256::digest(&canonical))
}

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub result: CompletionResult,
}

/// Serves completions from a recorded transcript.
///
/// In strict mode an unknown fingerprint is a [`BackendError::ReplayMiss`];
/// otherwise the request goes to the fallback backend, if any.
pub struct ReplayBackend {
    transcript: BTreeMap<String, CompletionResult>,
    mode: FingerprintMode,
    strict: bool,
    fallback: Option<Arc<dyn CompletionBackend>>,
}

impl ReplayBackend {
    pub fn new(transcript: BTreeMap<String, CompletionResult>, mode: FingerprintMode) -> Self {
        ReplayBackend { transcript, mode, strict: true, fallback: None }
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn CompletionBackend>) -> Self {
        self.strict = false;
        self.fallback = Some(fallback);
        self
    }

    pub fn from_jsonl(text: &str, mode: FingerprintMode) -> Result<Self, BackendError> {
        let mut transcript = BTreeMap::new();
        for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: TranscriptEntry = serde_json::from_str(line)
                .map_err(|e| BackendError::Config(format!("transcript line {}: {e}", idx + 1)))?;
            transcript.insert(entry.fingerprint, entry.result);
        }
        Ok(Self::new(transcript, mode))
    }

    pub fn len(&self) -> usize {
        self.transcript.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transcript.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let key = fingerprint(request, self.mode);
        if let Some(result) = self.transcript.get(&key) {
            return Ok(result.clone());
        }
        match (&self.fallback, self.strict) {
            (Some(fallback), false) => fallback.complete(request),
            _ => Err(BackendError::ReplayMiss { fingerprint: key }),
        }
    }
}

/// Wraps a backend and records every served completion for later replay.
pub struct RecordingBackend<B> {
    inner: B,
    mode: FingerprintMode,
    recorded: Mutex<BTreeMap<String, CompletionResult>>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B, mode: FingerprintMode) -> Self {
        RecordingBackend { inner, mode, recorded: Mutex::new(BTreeMap::new()) }
    }

    /// Transcript as newline-delimited JSON, sorted by fingerprint.
    pub fn to_jsonl(&self) -> String {
        let recorded = self.recorded.lock().expect("recording lock");
        let mut out = String::new();
        for (fingerprint, result) in recorded.iter() {
            let entry = TranscriptEntry { fingerprint: fingerprint.clone(), result: result.clone() };
            out.push_str(&serde_json::to_string(&entry).expect("entries serialize"));
            out.push('\n');
        }
        out
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let result = self.inner.complete(request)?;
        self.recorded
            .lock()
            .expect("recording lock")
            .insert(fingerprint(request, self.mode), result.clone());
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedBackend;

    fn req(text: &str) -> CompletionRequest {
        CompletionRequest::new(vec![ChatTurn::user(text)], "model-a", 0.0)
    }

    #[test]
    fn replay_hits_and_misses() {
        let request = req("F");
        let mut transcript = BTreeMap::new();
        transcript.insert(fingerprint(&request, FingerprintMode::Content), CompletionResult::text("42"));
        let backend = ReplayBackend::new(transcript, FingerprintMode::Content);
        assert_eq!(backend.complete(&request).unwrap().content, "42");
        assert_eq!(backend.complete(&request).unwrap().content, "42");
        assert!(matches!(backend.complete(&req("G")), Err(BackendError::ReplayMiss { .. })));
    }

    #[test]
    fn content_mode_ignores_model_and_temperature() {
        let a = req("x");
        let mut b = req("x");
        b.model_id = "model-b".into();
        b.temperature = 0.7;
        assert_eq!(fingerprint(&a, FingerprintMode::Content), fingerprint(&b, FingerprintMode::Content));
        assert_ne!(
            fingerprint(&a, FingerprintMode::ContentAndModel),
            fingerprint(&b, FingerprintMode::ContentAndModel)
        );
    }

    #[test]
    fn fingerprint_is_frozen_across_processes() {
        // SHA-256 of {"turns":[{"role":"user","content":"hello"}],"tools":null,"response_schema":null}
        assert_eq!(
            fingerprint(&req("hello"), FingerprintMode::Content),
            "bcf2efb3e6e0e8856a5505d1d311315c91320d8df3441318565ef2d5fb82c69b"
        );
    }

    #[test]
    fn record_then_replay() {
        let recorder = RecordingBackend::new(ScriptedBackend::text("hi"), FingerprintMode::Content);
        recorder.complete(&req("one")).unwrap();
        recorder.complete(&req("two")).unwrap();
        let text = recorder.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        let replay = ReplayBackend::from_jsonl(&text, FingerprintMode::Content).unwrap();
        assert_eq!(replay.complete(&req("two")).unwrap().content, "hi");
    }

    #[test]
    fn fallback_serves_misses() {
        let replay = ReplayBackend::new(BTreeMap::new(), FingerprintMode::Content)
            .with_fallback(Arc::new(ScriptedBackend::text("live")));
        assert_eq!(replay.complete(&req("q")).unwrap().content, "live");
    }
}
