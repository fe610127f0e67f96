use serde_json::Value;
use thiserror::Error;

use super::{ChatTurn, CompletionBackend, CompletionRequest};
use crate::schema::{validate_action, Schema, Violation, ViolationCause};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_retries: u32,
}

impl Default for ParseSettings {
    fn default() -> Self {
        ParseSettings { model_id: "scripted".into(), temperature: 0.0, max_retries: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub payload: Value,
    /// Stage-two parser calls made (0 when the raw text was already valid).
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("structured parsing failed after {attempts} attempts")]
pub struct ParseFailure {
    pub attempts: usize,
    pub violations: Vec<Violation>,
}

/// The stage-two prompt: re-express free text as JSON following `schema`.
pub fn stage_two_prompt(raw_text: &str, schema: &Schema) -> String {
    let schema_json =
        serde_json::to_string(&schema.to_json_schema()).expect("JSON schema serializes");
    format!(
        "Based on the text provided below, output JSON. If the input is plain text,\n\
extract the necessary information while preserving the original wording \n\
as much as possible. If the input is JSON, output it unchanged, except \n\
fix any formatting errors you find.\n\
```\n{raw_text}\n```\n\n\
The JSON should follow the schema below:\n\
```\n{schema_json}\n```"
    )
}

fn strip_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn check(text: &str, schema: &Schema) -> Result<Value, Vec<Violation>> {
    let value: Value = serde_json::from_str(strip_fences(text)).map_err(|e| {
        vec![Violation { field: String::new(), cause: ViolationCause::InvalidJson { detail: e.to_string() } }]
    })?;
    validate_action(&value, schema)?;
    Ok(value)
}

/// Turn free text into a payload that validates against `schema`.
///
/// Text that already parses and validates is returned as is. Otherwise the
/// text goes to `parser` with the stage-two prompt and the schema attached as
/// the response format. Invalid answers are retried up to `max_retries` times,
/// each retry listing the previous violations.
pub fn parse_structured(
    raw_text: &str,
    schema: &Schema,
    parser: &dyn CompletionBackend,
    settings: &ParseSettings,
) -> Result<ParseOutcome, ParseFailure> {
    if let Ok(payload) = check(raw_text, schema) {
        return Ok(ParseOutcome { payload, attempts: 0 });
    }
    let base_prompt = stage_two_prompt(raw_text, schema);
    let mut violations: Vec<Violation> = Vec::new();
    let attempts = settings.max_retries as usize + 1;
    for attempt in 0..attempts {
        let mut prompt = base_prompt.clone();
        if attempt > 0 {
            prompt.push_str("\n\nYour previous output was invalid:");
            for v in &violations {
                prompt.push_str(&format!("\n- {v}"));
            }
        }
        let request = CompletionRequest {
            turns: vec![ChatTurn::user(prompt)],
            model_id: settings.model_id.clone(),
            temperature: settings.temperature,
            tools: None,
            response_schema: Some(schema.clone()),
            max_retries: settings.max_retries,
        };
        match parser.complete(&request) {
            Ok(result) => match check(&result.content, schema) {
                Ok(payload) => return Ok(ParseOutcome { payload, attempts: attempt + 1 }),
                Err(v) => violations = v,
            },
            Err(e) => {
                violations = vec![Violation {
                    field: String::new(),
                    cause: ViolationCause::InvalidJson { detail: format!("parser backend: {e}") },
                }]
            }
        }
    }
    Err(ParseFailure { attempts, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedBackend;
    use crate::schema::FieldType;
    use serde_json::json;

    fn bid() -> Schema {
        Schema::new("bid").required("bid", FieldType::Integer)
    }

    #[test]
    fn valid_text_short_circuits() {
        let parser = ScriptedBackend::text("{}");
        let out = parse_structured("{\"bid\": 600}", &bid(), &parser, &ParseSettings::default()).unwrap();
        assert_eq!(out.payload, json!({"bid": 600}));
        assert_eq!(out.attempts, 0);
        assert_eq!(parser.calls(), 0);
    }

    #[test]
    fn stage_two_extracts() {
        let parser = ScriptedBackend::text("{\"bid\":600}");
        let out =
            parse_structured("I will bid 600 dollars", &bid(), &parser, &ParseSettings::default()).unwrap();
        assert_eq!(out.payload, json!({"bid": 600}));
        assert_eq!(parser.calls(), 1);
    }

    #[test]
    fn persistent_garbage_fails_after_retries() {
        let parser = ScriptedBackend::text("{\"bid\":\"high\"}");
        let settings = ParseSettings { max_retries: 2, ..ParseSettings::default() };
        let err = parse_structured("bid high", &bid(), &parser, &settings).unwrap_err();
        assert_eq!(err.attempts, 3);
        assert_eq!(parser.calls(), 3);
        assert_eq!(err.violations[0].field, "bid");
    }

    #[test]
    fn retry_prompt_lists_violations() {
        let parser = ScriptedBackend::text("{\"bid\":\"high\"}")
            .when_contains("previous output was invalid", CompletionResult::text("{\"bid\": 7}"));
        let out = parse_structured("meh", &bid(), &parser, &ParseSettings::default()).unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!(out.payload, json!({"bid": 7}));
    }

    #[test]
    fn prompt_embeds_text_and_schema() {
        let prompt = stage_two_prompt("I bid 5", &bid());
        assert!(prompt.starts_with("Based on the text provided below, output JSON."));
        assert!(prompt.contains("```\nI bid 5\n```"));
        assert!(prompt.contains("\"bid\":{\"type\":\"integer\"}"));
    }

    #[test]
    fn fenced_json_is_accepted() {
        let parser = ScriptedBackend::text("```json\n{\"bid\": 1}\n```");
        let out = parse_structured("one", &bid(), &parser, &ParseSettings::default()).unwrap();
        assert_eq!(out.payload, json!({"bid": 1}));
    }

    use crate::backends::CompletionResult;
}
