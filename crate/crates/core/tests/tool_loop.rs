use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use agentsim_core::backends::{run_tool_loop, CompletionResult, LoopSettings, ScriptedBackend};
use agentsim_core::cognition::{agent_step, AgentSettings, MemoryRole, MemoryStore, PersonaConfig, PromptBundle};
use agentsim_core::{AgentError, AgentId, FieldType, Observation, Schema, TimeStep, ToolSpec};
use serde_json::json;

fn news_tool(counter: Arc<AtomicUsize>) -> ToolSpec {
    ToolSpec::new("fetch_news", "headline of the day", Schema::new("args"), move |_| {
        counter.fetch_add(1, Ordering::SeqCst);
        Ok("markets calm".into())
    })
}

fn always_tools() -> ScriptedBackend {
    let n = AtomicUsize::new(0);
    ScriptedBackend::from_fn(move |req| {
        let i = n.fetch_add(1, Ordering::SeqCst);
        if req.tools.is_some() {
            CompletionResult::tool_call(format!("call{i}"), "fetch_news", "{}")
        } else {
            CompletionResult::text("{\"bid\": 3}")
        }
    })
}

fn bundle() -> PromptBundle {
    PromptBundle { observation_text: "bid?".into(), ..PromptBundle::default() }
}

#[test]
fn always_requesting_backend_gets_five_rounds_then_one_completion() {
    let counter = Arc::new(AtomicUsize::new(0));
    let backend = always_tools();
    let out = run_tool_loop(&backend, &bundle(), &[news_tool(counter.clone())], &LoopSettings::default()).unwrap();
    assert_eq!(out.trace.len(), 5);
    assert_eq!(counter.load(Ordering::SeqCst), 5);
    assert_eq!(backend.calls(), 6);
    assert_eq!(out.final_text, "{\"bid\": 3}");
}

#[test]
fn direct_answer_backend_is_one_completion() {
    let counter = Arc::new(AtomicUsize::new(0));
    let backend = ScriptedBackend::text("{\"bid\": 1}");
    let out = run_tool_loop(&backend, &bundle(), &[news_tool(counter.clone())], &LoopSettings::default()).unwrap();
    assert_eq!(backend.calls(), 1);
    assert!(out.trace.is_empty());
    assert_eq!(counter.load(Ordering::SeqCst), 0);
}

fn obs_with_tool(counter: Arc<AtomicUsize>) -> Observation {
    Observation::new(AgentId(0), TimeStep(7), "auction round")
        .with_schema(Schema::new("bid").required("bid", FieldType::Integer))
        .with_tools(vec![news_tool(counter)])
}

#[test]
fn agent_step_records_observation_tool_result_and_action() {
    let counter = Arc::new(AtomicUsize::new(0));
    let obs = obs_with_tool(counter);
    let backend = ScriptedBackend::text("{\"bid\": 5}").rule(
        |req| !req.turns.iter().any(|t| t.role == agentsim_core::backends::Role::Tool),
        |_| CompletionResult::tool_call("c1", "fetch_news", "{}"),
    );
    let parser = ScriptedBackend::text("{}");
    let mut mem = MemoryStore::buffer(10);
    let out = agent_step(&obs, &PersonaConfig::default(), &mut mem, "auction", &backend, &parser, &AgentSettings::default()).unwrap();
    assert_eq!(out.envelope.body, json!({"bid": 5}));
    assert_eq!(out.envelope.time, TimeStep(7));
    let roles: Vec<MemoryRole> = mem.archive().iter().map(|e| e.role).collect();
    assert_eq!(roles, [MemoryRole::Observation, MemoryRole::ToolResult, MemoryRole::OwnAction]);
    assert!(mem.archive().iter().all(|e| e.time == TimeStep(7) && e.world_tag == "auction"));
    assert_eq!(parser.calls(), 0);
}

#[test]
fn tool_calls_never_move_the_clock() {
    for rounds in 0..=5 {
        let counter = Arc::new(AtomicUsize::new(0));
        let obs = obs_with_tool(counter.clone());
        let settings = AgentSettings { max_tool_rounds: rounds, ..AgentSettings::default() };
        let mut mem = MemoryStore::null();
        let out = agent_step(&obs, &PersonaConfig::default(), &mut mem, "w", &always_tools(), &ScriptedBackend::text("{}"), &settings).unwrap();
        assert_eq!(out.envelope.time, obs.time);
        assert_eq!(counter.load(Ordering::SeqCst), rounds);
    }
}

#[test]
fn acting_without_schema_is_a_contract_violation() {
    let obs = Observation::new(AgentId(0), TimeStep(0), "watch only").with_reward(1.0);
    let backend = ScriptedBackend::text("{}");
    let err = agent_step(&obs, &PersonaConfig::default(), &mut MemoryStore::null(), "w", &backend, &backend, &AgentSettings::default());
    assert!(matches!(err, Err(AgentError::ContractViolation(_))));
    assert_eq!(backend.calls(), 0);
}
