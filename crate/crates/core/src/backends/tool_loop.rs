use serde_json::Value;
use tracing::debug;

use super::{
    BackendError, ChatTurn, CompletionBackend, CompletionRequest, ToolCallRequest, ToolDef,
};
use crate::cognition::PromptBundle;
use crate::protocol::ToolSpec;
use crate::schema::validate_action;

pub const DEFAULT_MAX_TOOL_ROUNDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub max_rounds: usize,
}

impl Default for LoopSettings {
    fn default() -> Self {
        LoopSettings {
            model_id: "scripted".into(),
            temperature: 0.0,
            max_retries: 0,
            max_rounds: DEFAULT_MAX_TOOL_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolLoopOutcome {
    pub final_text: String,
    /// Every tool call issued, with the text returned to the model.
    pub trace: Vec<(ToolCallRequest, String)>,
    pub completions: usize,
    pub transcript: Vec<ChatTurn>,
}

fn execute(call: &ToolCallRequest, tools: &[ToolSpec]) -> String {
    let Some(tool) = tools.iter().find(|t| t.name == call.name) else {
        return format!("error: unknown tool {}", call.name);
    };
    let arguments: Value = if call.arguments_text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        match serde_json::from_str(&call.arguments_text) {
            Ok(v) => v,
            Err(e) => return format!("error: invalid arguments for {}: {e}", call.name),
        }
    };
    if let Err(violations) = validate_action(&arguments, &tool.parameters) {
        let detail: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return format!("error: invalid arguments for {}: {}", call.name, detail.join("; "));
    }
    match tool.invoke(&arguments) {
        Ok(text) => text,
        Err(e) => format!("error: {e}"),
    }
}

/// Let the model call tools for up to `max_rounds` rounds, then answer.
///
/// Each round asks for a completion with the tools attached. An answer without
/// tool calls ends the loop. Otherwise every requested tool runs, its output is
/// appended as a `tool` turn, and the next round starts. Tool failures become
/// error text for the model and never abort the loop. When the rounds run out,
/// one last completion without tools produces the answer. Tool calls are
/// intra-step: nothing here touches the environment clock.
pub fn run_tool_loop(
    backend: &dyn CompletionBackend,
    bundle: &PromptBundle,
    tools: &[ToolSpec],
    settings: &LoopSettings,
) -> Result<ToolLoopOutcome, BackendError> {
    let mut turns = bundle.to_turns();
    let tool_defs: Option<Vec<ToolDef>> =
        (!tools.is_empty()).then(|| tools.iter().map(ToolDef::from).collect());
    let mut trace = Vec::new();
    let mut completions = 0;

    let request = |turns: &[ChatTurn], tools: Option<Vec<ToolDef>>| CompletionRequest {
        turns: turns.to_vec(),
        model_id: settings.model_id.clone(),
        temperature: settings.temperature,
        tools,
        response_schema: None,
        max_retries: settings.max_retries,
    };

    for round in 0..settings.max_rounds {
        let result = backend.complete(&request(&turns, tool_defs.clone()))?;
        completions += 1;
        turns.push(ChatTurn::assistant(&result));
        if result.tool_calls.is_empty() {
            return Ok(ToolLoopOutcome { final_text: result.content, trace, completions, transcript: turns });
        }
        for call in &result.tool_calls {
            let output = execute(call, tools);
            debug!(round, tool = %call.name, "tool call");
            turns.push(ChatTurn::tool(call.id.clone(), output.clone()));
            trace.push((call.clone(), output));
        }
    }

    let result = backend.complete(&request(&turns, None))?;
    completions += 1;
    turns.push(ChatTurn::assistant(&result));
    Ok(ToolLoopOutcome { final_text: result.content, trace, completions, transcript: turns })
}
