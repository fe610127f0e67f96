use std::collections::BTreeMap;

use agentsim_core::{ActionEnvelope, ActionMap, AgentId, Environment, SeedStream};
use agentsim_envs::economy::{fit_line, EconomyConfig, EconomyEnv, MacroIndicators};
use proptest::prelude::*;
use rand::Rng;
use serde_json::json;

/// Each household works and spends on a fixed per-agent propensity with seeded wobble.
fn scripted_actions(env: &EconomyEnv, rng: &mut impl Rng) -> ActionMap {
    env.state()
        .households
        .keys()
        .map(|&id| {
            let base = (id.0 % 10) as f64 / 10.0;
            let body = json!({
                "work_propensity": (base + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0),
                "consumption_propensity": (1.0 - base) * rng.random_range(0.1..0.6),
            });
            (id, ActionEnvelope::new(id, env.time(), body))
        })
        .collect()
}

fn run(seed: u64) -> (Vec<MacroIndicators>, Vec<f64>) {
    let mut env = EconomyEnv::new(EconomyConfig::default()).unwrap();
    env.reset(SeedStream::new(seed)).unwrap();
    let mut rng = SeedStream::new(seed).child("script").rng();
    let mut residuals = Vec::new();
    while !env.done() {
        let before = env.total_money();
        let actions = scripted_actions(&env, &mut rng);
        env.step(actions).unwrap();
        let ledger = env.ledgers().last().unwrap();
        residuals.push(env.total_money() - before - ledger.expected_money_change());
    }
    (env.indicators().to_vec(), residuals)
}

#[test]
fn ledger_identity_holds_every_month_at_full_scale() {
    let (series, residuals) = run(3);
    assert_eq!(series.len(), 240);
    assert!(residuals.iter().all(|r| r.abs() <= 1e-9), "max residual {:?}", residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())));
    for m in &series {
        assert!((0.0..=1.0).contains(&m.unemployment));
        assert!((0.0..=0.2).contains(&m.interest_rate));
        assert!(m.price_level > 0.0);
    }
}

#[test]
fn runs_are_deterministic() {
    assert_eq!(run(9).0, run(9).0);
}

/// Solves the 2x2 normal equations [n Σx; Σx Σx²][b; m] = [Σy; Σxy] by Cramer's rule.
fn normal_equations(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let intercept = (sy * sxx - sx * sxy) / det;
    let slope = (n * sxy - sx * sy) / det;
    (slope, intercept)
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn fit_line_matches_normal_equations_on_100_instances() {
    let mut rng = SeedStream::new(100).rng();
    for _ in 0..100 {
        let n = rng.random_range(2..40);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        let (slope, intercept) = normal_equations(&xs, &ys);
        assert!(rel_close(fit.slope, slope) && rel_close(fit.intercept, intercept), "{fit:?} vs {slope} {intercept}");
    }
}

#[test]
fn synthetic_line_recovered_exactly() {
    let xs: Vec<f64> = (0..9).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + 3.0).collect();
    let fit = fit_line(&xs, &ys).unwrap();
    assert_eq!((fit.slope, fit.intercept, fit.r), (0.5, 3.0, 1.0));
}

proptest! {
    #[test]
    fn bounded_indicators_for_any_constant_policy(work in 0.0f64..1.0, consume in 0.0f64..1.0) {
        let config = EconomyConfig { n_households: 5, months: 24, ..EconomyConfig::default() };
        let mut env = EconomyEnv::new(config).unwrap();
        env.reset(SeedStream::new(1)).unwrap();
        while !env.done() {
            let actions: BTreeMap<_, _> = (0..5).map(|i| {
                let id = AgentId(i);
                (id, ActionEnvelope::new(id, env.time(), json!({"work_propensity": work, "consumption_propensity": consume})))
            }).collect();
            env.step(actions).unwrap();
        }
        for m in env.indicators() {
            prop_assert!((0.0..=1.0).contains(&m.unemployment));
            prop_assert!(m.price_level > 0.0);
        }
        prop_assert!(env.state().policy.government_revenue >= 0.0);
    }
}
