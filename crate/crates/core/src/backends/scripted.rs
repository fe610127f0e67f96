use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResult};

type Predicate = Box<dyn Fn(&CompletionRequest) -> bool + Send + Sync>;
type Responder = Box<dyn Fn(&CompletionRequest) -> CompletionResult + Send + Sync>;

/// Deterministic rule-table backend.
///
/// Rules are tried in insertion order; the first whose predicate matches the
/// request produces the result, otherwise the default responder does. Results
/// depend on nothing but the request.
pub struct ScriptedBackend {
    rules: Vec<(Predicate, Responder)>,
    default: Responder,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(default: CompletionResult) -> Self {
        Self::from_fn(move |_| default.clone())
    }

    /// Always answer with `text` unless a rule matches.
    pub fn text(text: impl Into<String>) -> Self {
        Self::new(CompletionResult::text(text))
    }

    pub fn from_fn<F>(default: F) -> Self
    where
        F: Fn(&CompletionRequest) -> CompletionResult + Send + Sync + 'static,
    {
        ScriptedBackend { rules: Vec::new(), default: Box::new(default), calls: AtomicUsize::new(0) }
    }

    pub fn rule<P, R>(mut self, predicate: P, responder: R) -> Self
    where
        P: Fn(&CompletionRequest) -> bool + Send + Sync + 'static,
        R: Fn(&CompletionRequest) -> CompletionResult + Send + Sync + 'static,
    {
        self.rules.push((Box::new(predicate), Box::new(responder)));
        self
    }

    /// Answer with `result` whenever the rendered turns contain `needle`.
    pub fn when_contains(self, needle: impl Into<String>, result: CompletionResult) -> Self {
        let needle = needle.into();
        self.rule(move |req| req.rendered().contains(&needle), move |_| result.clone())
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let responder = self
            .rules
            .iter()
            .find(|(predicate, _)| predicate(request))
            .map(|(_, responder)| responder)
            .unwrap_or(&self.default);
        Ok(responder(request))
    }
}

impl fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("rules", &self.rules.len())
            .field("calls", &self.calls())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ChatTurn;

    fn req(text: &str) -> CompletionRequest {
        CompletionRequest::new(vec![ChatTurn::user(text)], "m", 0.0)
    }

    #[test]
    fn default_only() {
        let backend = ScriptedBackend::text("ok");
        assert_eq!(backend.complete(&req("anything")).unwrap().content, "ok");
        assert_eq!(backend.complete(&req("else")).unwrap().content, "ok");
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn first_matching_rule_wins() {
        let backend = ScriptedBackend::text("default")
            .when_contains("apple", CompletionResult::text("first"))
            .when_contains("app", CompletionResult::text("second"));
        assert_eq!(backend.complete(&req("apple pie")).unwrap().content, "first");
        assert_eq!(backend.complete(&req("app")).unwrap().content, "second");
        assert_eq!(backend.complete(&req("pear")).unwrap().content, "default");
    }
}
