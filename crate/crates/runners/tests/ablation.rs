mod common;

use std::sync::Arc;

use agentsim_core::backends::{CompletionResult, ScriptedBackend};
use agentsim_runners::ablation::{tariff_market, AblationError, ABLATION_HEADER};
use agentsim_runners::{run_tariff_ablation, AblationInputs, AblationPlan, AblationSetting, AgentsSpec};
use common::{BOTH_SIDES, SELL_ONLY};

fn plan(n_agents: u32, trials: usize) -> AblationPlan {
    let market = agentsim_envs::market::MarketConfig { n_agents, ..tariff_market() };
    let mut plan = AblationPlan::new(market, AgentsSpec::default(), AblationInputs::tariff());
    plan.trials = trials;
    plan
}

#[test]
fn levels_are_cumulative() {
    let s = AblationSetting::ALL;
    let flags: Vec<[bool; 3]> = s.iter().map(|s| [s.headline_config(), s.paper_summary_memory(), s.news_tool()]).collect();
    assert_eq!(flags, [[false, false, false], [true, false, false], [true, true, false], [true, true, true]]);
    assert!(AblationSetting::new(0).is_err());
    assert!(AblationSetting::new(5).is_err());
    assert!(serde_json::from_str::<AblationSetting>("5").is_err());
    assert_eq!(serde_json::from_str::<AblationSetting>("3").unwrap(), s[2]);
}

#[test]
fn each_prompt_contains_every_artifact_of_the_previous_setting() {
    let plan = plan(4, 1);
    let inputs = &plan.inputs;
    let backend = Arc::new(ScriptedBackend::text(BOTH_SIDES));
    let prompts: Vec<String> =
        AblationSetting::ALL.iter().map(|&s| plan.first_prompt(s, backend.clone(), 0).unwrap()).collect();
    for (k, setting) in AblationSetting::ALL.iter().enumerate() {
        let artifacts = inputs.artifacts(*setting);
        assert_eq!(artifacts.len(), k);
        for a in &artifacts {
            assert!(prompts[k].contains(a.as_str()), "setting {} lacks {a:?}", k + 1);
            if k + 1 < prompts.len() {
                assert!(prompts[k + 1].contains(a.as_str()), "setting {} dropped {a:?}", k + 2);
            }
        }
    }
    for a in inputs.artifacts(AblationSetting::ALL[3]) {
        assert!(!prompts[0].contains(a.as_str()));
    }
    assert!(prompts[1].contains(inputs.headline.as_str()) && !prompts[1].contains(inputs.summary.as_str()));
    assert!(prompts[2].contains("Memory:\n"));
    assert!(prompts[3].contains("Tool fetch_news:") && !prompts[2].contains("Tool fetch_news:"));
}

#[test]
fn constant_backend_gives_identical_rows_and_zero_deltas() {
    let table = run_tariff_ablation(&plan(4, 5), Arc::new(ScriptedBackend::text(BOTH_SIDES))).unwrap();
    assert_eq!(table.rows.len(), 4);
    for row in &table.rows {
        assert_eq!((row.stock_a, row.stock_b), (1.0, 1.0));
        assert_eq!(row.trials.rows.len(), 5);
    }
    assert_eq!((table.rows[0].delta_a, table.rows[0].delta_b), (None, None));
    assert!(table.rows[1..].iter().all(|r| r.delta_a == Some(0.0) && r.delta_b == Some(0.0)));
}

#[test]
fn headline_driven_selling_lowers_the_ratio_after_setting_one() {
    let inputs = AblationInputs::tariff();
    // one buy per sell without the headline, sells only with it
    let backend =
        Arc::new(ScriptedBackend::text(BOTH_SIDES).when_contains(inputs.headline.clone(), CompletionResult::text(SELL_ONLY)));
    let table = run_tariff_ablation(&plan(4, 5), backend).unwrap();
    let ratios: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.stock_a, r.stock_b)).collect();
    assert_eq!(ratios, [(1.0, 1.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
    assert!(table.rows[0].stock_a > table.rows[1].stock_a && table.rows[0].stock_b > table.rows[1].stock_b);

    let text = table.to_csv();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), ABLATION_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().map(|r| r[0].to_string()).collect::<Vec<_>>(), ["#1", "#2", "#3", "#4"]);
    for i in 1..4 {
        for (value, delta) in [(1, 3), (2, 4)] {
            let expected = rows[i][value].parse::<f64>().unwrap() - rows[i - 1][value].parse::<f64>().unwrap();
            assert_eq!(rows[i][delta].parse::<f64>().unwrap(), expected);
        }
    }
    assert_eq!((&rows[0][3], &rows[0][4]), ("", ""));
    assert!(table.render().contains("-1.00 (vs #1)"));
}

#[test]
fn enabled_flags_need_their_inputs() {
    let mut plan = plan(2, 1);
    plan.inputs.news.clear();
    let err = run_tariff_ablation(&plan, Arc::new(ScriptedBackend::text(BOTH_SIDES))).unwrap_err();
    assert!(matches!(err, AblationError::MissingInput(ref s, "news feed") if s == "#4"), "{err}");
    plan.settings.pop();
    assert!(run_tariff_ablation(&plan, Arc::new(ScriptedBackend::text(BOTH_SIDES))).is_ok());
}

#[test]
fn undefined_ratios_are_errors() {
    let hold = Arc::new(ScriptedBackend::text(common::HOLD));
    let err = run_tariff_ablation(&plan(2, 1), hold).unwrap_err();
    assert!(matches!(err, AblationError::UndefinedRatio { .. }), "{err}");
}
