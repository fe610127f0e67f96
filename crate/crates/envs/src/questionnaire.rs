//! Scaled questionnaires: administration, scoring and comparison metrics.
//!
//! One item is administered per step to every respondent, in a seeded order
//! that is shared by all respondents of an episode. Responses are keyed by
//! item id, so scores do not depend on the administered order.
//!
//! Bias scores compare paired control/treatment items: the mean normalized
//! treatment response minus the mean normalized control response.

use std::collections::{BTreeMap, BTreeSet};

use agentsim_core::{
    ActionMap, AgentId, EnvError, Environment, EventRecord, FieldType, Observation, ObservationMap, Schema,
    SeedStream, TimeStep,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvout::to_csv;

pub const WORLD_TAG: &str = "questionnaire";

/// Five neutral 7-point items over two subscales.
pub const SYNTHETIC_LIKERT_BANK: &str = include_str!("../data/synthetic_likert.jsonl");
/// Three control/treatment pairs on percentage and Likert scales.
pub const SYNTHETIC_PAIRED_BANK: &str = include_str!("../data/synthetic_anchoring.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    /// Values `1..=points`.
    Likert,
    /// Values `0, step, .., 100` with `step = 100 / (points - 1)`.
    Percentage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub kind: ScaleKind,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScaleError {
    #[error("a scale needs at least 2 points, got {0}")]
    TooFewPoints(u32),
    #[error("percentage scale with {0} points has a non-integer step")]
    FractionalStep(u32),
}

impl ScaleSpec {
    pub const LIKERT_7: ScaleSpec = ScaleSpec { kind: ScaleKind::Likert, points: 7 };
    pub const PERCENT_11: ScaleSpec = ScaleSpec { kind: ScaleKind::Percentage, points: 11 };

    /// Answers are integers, so a percentage step must divide 100.
    pub fn validate(&self) -> Result<(), ScaleError> {
        if self.points < 2 {
            return Err(ScaleError::TooFewPoints(self.points));
        }
        if self.kind == ScaleKind::Percentage && 100 % (self.points - 1) != 0 {
            return Err(ScaleError::FractionalStep(self.points));
        }
        Ok(())
    }

    pub fn min(&self) -> i64 {
        match self.kind {
            ScaleKind::Likert => 1,
            ScaleKind::Percentage => 0,
        }
    }

    pub fn max(&self) -> i64 {
        match self.kind {
            ScaleKind::Likert => i64::from(self.points),
            ScaleKind::Percentage => 100,
        }
    }

    pub fn step(&self) -> i64 {
        match self.kind {
            ScaleKind::Likert => 1,
            ScaleKind::Percentage => 100 / i64::from(self.points - 1),
        }
    }

    pub fn values(&self) -> Vec<i64> {
        (0..i64::from(self.points)).map(|k| self.min() + k * self.step()).collect()
    }

    pub fn contains(&self, value: i64) -> bool {
        (self.min()..=self.max()).contains(&value) && (value - self.min()) % self.step() == 0
    }

    /// Nearest on-scale value; halfway cases go up. Non-finite input maps to the minimum.
    pub fn snap(&self, value: f64) -> i64 {
        if !value.is_finite() {
            return self.min();
        }
        let steps = ((value - self.min() as f64) / self.step() as f64 + 0.5).floor();
        let steps = steps.clamp(0.0, f64::from(self.points - 1)) as i64;
        self.min() + steps * self.step()
    }

    pub fn normalize(&self, value: i64) -> f64 {
        (value - self.min()) as f64 / (self.max() - self.min()) as f64
    }

    pub fn describe(&self) -> String {
        match self.kind {
            ScaleKind::Likert => format!("an integer from {} to {}", self.min(), self.max()),
            ScaleKind::Percentage => format!("a percentage from 0 to 100 in steps of {}", self.step()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Neutral,
    Control,
    Treatment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    pub item_id: String,
    pub subscale: String,
    pub text: String,
    pub scale: ScaleSpec,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
}

#[derive(Debug, Error)]
pub enum ItemBankError {
    #[error("item bank line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("item {item}: {source}")]
    Scale { item: String, source: ScaleError },
    #[error("item id {0} appears twice")]
    DuplicateId(String),
    #[error("{0} item {1} has no pair_id")]
    Unpaired(&'static str, String),
    #[error("neutral item {0} has a pair_id")]
    NeutralPaired(String),
    #[error("pair {0} mixes scales")]
    MixedScales(String),
    #[error("pair {0} lacks a control or a treatment item")]
    IncompletePair(String),
}

/// Checks ids, scales and pair structure.
pub fn validate_items(items: &[Item]) -> Result<(), ItemBankError> {
    let mut ids = BTreeSet::new();
    let mut pairs: BTreeMap<&str, (ScaleSpec, bool, bool)> = BTreeMap::new();
    for item in items {
        item.scale.validate().map_err(|source| ItemBankError::Scale { item: item.item_id.clone(), source })?;
        if !ids.insert(item.item_id.as_str()) {
            return Err(ItemBankError::DuplicateId(item.item_id.clone()));
        }
        let pair = match (item.variant, item.pair_id.as_deref()) {
            (Variant::Neutral, None) => continue,
            (Variant::Neutral, Some(_)) => return Err(ItemBankError::NeutralPaired(item.item_id.clone())),
            (Variant::Control, None) => return Err(ItemBankError::Unpaired("control", item.item_id.clone())),
            (Variant::Treatment, None) => return Err(ItemBankError::Unpaired("treatment", item.item_id.clone())),
            (_, Some(pair)) => pair,
        };
        let entry = pairs.entry(pair).or_insert((item.scale, false, false));
        if entry.0 != item.scale {
            return Err(ItemBankError::MixedScales(pair.to_string()));
        }
        match item.variant {
            Variant::Control => entry.1 = true,
            _ => entry.2 = true,
        }
    }
    match pairs.iter().find(|(_, (_, control, treatment))| !(control & treatment)) {
        Some((pair, _)) => Err(ItemBankError::IncompletePair(pair.to_string())),
        None => Ok(()),
    }
}

/// Reads a newline-delimited item bank; blank lines are skipped.
pub fn parse_item_bank(text: &str) -> Result<Vec<Item>, ItemBankError> {
    let items = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| serde_json::from_str(line).map_err(|source| ItemBankError::Json { line: idx + 1, source }))
        .collect::<Result<Vec<Item>, _>>()?;
    validate_items(&items)?;
    Ok(items)
}

/// Seeded Fisher-Yates permutation of item indices.
pub fn shuffle_items(items: &[Item], seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut SeedStream::new(seed).child("item-order").rng());
    order
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResponseSheet {
    pub responses: BTreeMap<String, i64>,
    /// Item ids in administered order.
    pub order: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubscaleScore {
    pub n_items: usize,
    pub raw_mean: f64,
    pub normalized_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub subscales: BTreeMap<String, SubscaleScore>,
    /// Per pair id, in `[-1, 1]`.
    pub biases: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("no response for items {0:?}")]
    IncompleteSheet(Vec<String>),
    #[error("response {value} to item {item} is off its scale")]
    OffScale { item: String, value: i64 },
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn score(sheet: &ResponseSheet, items: &[Item]) -> Result<ScoreReport, ScoreError> {
    let missing: Vec<String> =
        items.iter().filter(|i| !sheet.responses.contains_key(&i.item_id)).map(|i| i.item_id.clone()).collect();
    if !missing.is_empty() {
        return Err(ScoreError::IncompleteSheet(missing));
    }
    // accumulate in id order so float sums do not depend on item order
    let mut sorted: Vec<&Item> = items.iter().collect();
    sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let mut by_subscale: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut by_pair: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for item in sorted {
        let value = sheet.responses[&item.item_id];
        if !item.scale.contains(value) {
            return Err(ScoreError::OffScale { item: item.item_id.clone(), value });
        }
        let normalized = item.scale.normalize(value);
        let entry = by_subscale.entry(&item.subscale).or_default();
        entry.0.push(value as f64);
        entry.1.push(normalized);
        if let Some(pair) = &item.pair_id {
            let entry = by_pair.entry(pair).or_default();
            match item.variant {
                Variant::Control => entry.0.push(normalized),
                Variant::Treatment => entry.1.push(normalized),
                Variant::Neutral => {}
            }
        }
    }
    let subscales = by_subscale
        .into_iter()
        .map(|(name, (raw, norm))| {
            (name.to_string(), SubscaleScore { n_items: raw.len(), raw_mean: mean(&raw), normalized_mean: mean(&norm) })
        })
        .collect();
    let biases = by_pair
        .into_iter()
        .filter(|(_, (control, treatment))| !control.is_empty() && !treatment.is_empty())
        .map(|(pair, (control, treatment))| (pair.to_string(), mean(&treatment) - mean(&control)))
        .collect();
    Ok(ScoreReport { subscales, biases })
}

pub const SCORE_HEADER: [&str; 6] = ["kind", "id", "n_items", "raw_mean", "normalized_mean", "bias"];

#[derive(Serialize)]
struct ScoreRow<'a> {
    kind: &'static str,
    id: &'a str,
    n_items: Option<usize>,
    raw_mean: Option<f64>,
    normalized_mean: Option<f64>,
    bias: Option<f64>,
}

/// One row per subscale, then one per pair; unused columns are empty.
pub fn score_report_csv(report: &ScoreReport) -> String {
    let subscales = report.subscales.iter().map(|(id, s)| ScoreRow {
        kind: "subscale",
        id,
        n_items: Some(s.n_items),
        raw_mean: Some(s.raw_mean),
        normalized_mean: Some(s.normalized_mean),
        bias: None,
    });
    let pairs = report.biases.iter().map(|(id, &b)| ScoreRow {
        kind: "pair",
        id,
        n_items: None,
        raw_mean: None,
        normalized_mean: None,
        bias: Some(b),
    });
    to_csv(&SCORE_HEADER, &subscales.chain(pairs).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("lists are empty")]
    Empty,
}

/// Mean absolute error between positionally paired values.
pub fn mae(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// One-dimensional optimal transport cost under absolute difference:
/// sort both samples and pair them positionally.
pub fn sorted_ot_mae(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    mae(&a, &b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionnaireConfig {
    pub items: Vec<Item>,
    #[serde(default = "one")]
    pub n_respondents: u32,
    /// When false, items go out in file order.
    #[serde(default = "yes")]
    pub shuffle: bool,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl QuestionnaireConfig {
    pub fn new(items: Vec<Item>) -> Self {
        QuestionnaireConfig { items, n_respondents: 1, shuffle: true }
    }
}

pub fn action_schema() -> Schema {
    Schema::new("questionnaire_answer").required("answer", FieldType::Integer).describe_last("your answer on the stated scale")
}

pub struct QuestionnaireEnv {
    config: QuestionnaireConfig,
    order: Vec<usize>,
    sheets: BTreeMap<AgentId, ResponseSheet>,
    time: TimeStep,
    done: bool,
    events: Vec<EventRecord>,
}

impl QuestionnaireEnv {
    pub fn new(config: QuestionnaireConfig) -> Result<Self, ItemBankError> {
        validate_items(&config.items)?;
        Ok(QuestionnaireEnv {
            config,
            order: Vec::new(),
            sheets: BTreeMap::new(),
            time: TimeStep(0),
            done: true,
            events: Vec::new(),
        })
    }

    pub fn items(&self) -> &[Item] {
        &self.config.items
    }

    /// Administered order as indices into [`Self::items`].
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn sheets(&self) -> &BTreeMap<AgentId, ResponseSheet> {
        &self.sheets
    }

    pub fn scores(&self) -> BTreeMap<AgentId, Result<ScoreReport, ScoreError>> {
        self.sheets.iter().map(|(&agent, sheet)| (agent, score(sheet, &self.config.items))).collect()
    }

    fn current(&self) -> Option<&Item> {
        self.order.get(self.time.0 as usize).map(|&i| &self.config.items[i])
    }

    fn observations(&self) -> ObservationMap {
        let total = self.order.len();
        self.sheets
            .keys()
            .map(|&agent| {
                let obs = match self.current().filter(|_| !self.done) {
                    Some(item) => Observation::new(
                        agent,
                        self.time,
                        format!(
                            "Question {} of {total}.\n{}\nAnswer with {}.",
                            self.time.0 + 1,
                            item.text,
                            item.scale.describe()
                        ),
                    )
                    .with_schema(action_schema()),
                    None => Observation::new(agent, self.time, "The questionnaire is complete."),
                };
                (agent, obs)
            })
            .collect()
    }
}

impl Environment for QuestionnaireEnv {
    fn world_tag(&self) -> &str {
        WORLD_TAG
    }

    fn time(&self) -> TimeStep {
        self.time
    }

    fn reset(&mut self, seeds: SeedStream) -> Result<ObservationMap, EnvError> {
        self.order = if self.config.shuffle {
            shuffle_items(&self.config.items, seeds.seed())
        } else {
            (0..self.config.items.len()).collect()
        };
        let ids: Vec<String> = self.order.iter().map(|&i| self.config.items[i].item_id.clone()).collect();
        self.sheets = (0..self.config.n_respondents)
            .map(|a| (AgentId(a), ResponseSheet { responses: BTreeMap::new(), order: ids.clone(), seed: seeds.seed() }))
            .collect();
        self.time = TimeStep(0);
        self.done = self.order.is_empty();
        self.events.clear();
        Ok(self.observations())
    }

    fn step(&mut self, actions: ActionMap) -> Result<ObservationMap, EnvError> {
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        let item = self.current().cloned().expect("not done implies an item is pending");
        for (agent, envelope) in &actions {
            let Some(sheet) = self.sheets.get_mut(agent) else {
                continue;
            };
            let Some(given) = envelope.body.get("answer").and_then(serde_json::Value::as_f64) else {
                self.events.push(
                    EventRecord::agent(*agent, self.time, "reject_action")
                        .with("item_id", item.item_id.as_str())
                        .with("reason", "missing_answer"),
                );
                continue;
            };
            let value = item.scale.snap(given);
            if value as f64 != given {
                self.events.push(
                    EventRecord::agent(*agent, self.time, "clamp_answer")
                        .with("item_id", item.item_id.as_str())
                        .with("given", given)
                        .with("recorded", value),
                );
            }
            sheet.responses.insert(item.item_id.clone(), value);
            self.events.push(
                EventRecord::agent(*agent, self.time, "answer")
                    .with("item_id", item.item_id.as_str())
                    .with("value", value),
            );
        }
        self.time = self.time.next();
        self.done = self.time.0 as usize >= self.order.len();
        Ok(self.observations())
    }

    fn done(&self) -> bool {
        self.done
    }

    fn drain_events(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use agentsim_core::ActionEnvelope;
    use serde_json::json;

    #[test]
    fn scale_values() {
        assert_eq!(ScaleSpec::LIKERT_7.values(), [1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(ScaleSpec::PERCENT_11.values(), (0..=10).map(|k| k * 10).collect::<Vec<_>>());
        assert_eq!(ScaleSpec { kind: ScaleKind::Percentage, points: 4 }.validate(), Err(ScaleError::FractionalStep(4)));
        assert_eq!(ScaleSpec { kind: ScaleKind::Likert, points: 1 }.validate(), Err(ScaleError::TooFewPoints(1)));
        assert_eq!(ScaleSpec::PERCENT_11.snap(44.0), 40);
        assert_eq!(ScaleSpec::PERCENT_11.snap(45.0), 50);
        assert_eq!(ScaleSpec::PERCENT_11.snap(140.0), 100);
        assert_eq!(ScaleSpec::LIKERT_7.snap(-3.0), 1);
        assert_eq!(ScaleSpec::LIKERT_7.snap(f64::NAN), 1);
    }

    #[test]
    fn bundled_banks_parse() {
        let likert = parse_item_bank(SYNTHETIC_LIKERT_BANK).unwrap();
        assert_eq!(likert.len(), 5);
        let paired = parse_item_bank(SYNTHETIC_PAIRED_BANK).unwrap();
        assert_eq!(paired.iter().filter(|i| i.variant == Variant::Control).count(), 3);
    }

    #[test]
    fn bank_structure_errors() {
        let line = |id: &str, variant: &str, pair: Option<&str>, points: u32| {
            let mut v = json!({"item_id": id, "subscale": "s", "text": "t", "scale": {"kind": "likert", "points": points}, "variant": variant});
            if let Some(p) = pair {
                v["pair_id"] = json!(p);
            }
            v.to_string()
        };
        let dup = [line("x", "neutral", None, 7), line("x", "neutral", None, 7)].join("\n");
        assert!(matches!(parse_item_bank(&dup), Err(ItemBankError::DuplicateId(_))));
        let lonely = line("c", "control", Some("p"), 7);
        assert!(matches!(parse_item_bank(&lonely), Err(ItemBankError::IncompletePair(_))));
        let mixed = [line("c", "control", Some("p"), 7), line("t", "treatment", Some("p"), 5)].join("\n");
        assert!(matches!(parse_item_bank(&mixed), Err(ItemBankError::MixedScales(_))));
        assert!(matches!(parse_item_bank(&line("c", "control", None, 7)), Err(ItemBankError::Unpaired(..))));
        assert!(matches!(parse_item_bank("{\"item_id\":1}"), Err(ItemBankError::Json { line: 1, .. })));
    }

    #[test]
    fn shuffle_is_seeded_bijection() {
        let items = parse_item_bank(SYNTHETIC_PAIRED_BANK).unwrap();
        let a = shuffle_items(&items, 11);
        assert_eq!(a, shuffle_items(&items, 11));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..items.len()).collect::<Vec<_>>());
        assert_eq!(shuffle_items(&items[..1], 3), [0]);
    }

    #[test]
    fn mae_fixtures() {
        assert_eq!(mae(&[0.0, 0.0], &[1.0, 3.0]), Ok(2.0));
        assert_eq!(mae(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch(1, 2)));
        assert_eq!(mae(&[], &[]), Err(MetricError::Empty));
        assert_eq!(sorted_ot_mae(&[1.0, 3.0], &[2.0, 2.0]), Ok(1.0));
        assert_eq!(sorted_ot_mae(&[3.0, 1.0, 2.0], &[1.0, 2.0, 3.0]), Ok(0.0));
    }

    #[test]
    fn off_scale_answers_are_snapped_and_logged() {
        let items = parse_item_bank(SYNTHETIC_LIKERT_BANK).unwrap();
        let mut env = QuestionnaireEnv::new(QuestionnaireConfig::new(items)).unwrap();
        env.reset(SeedStream::new(0)).unwrap();
        let act = |v: serde_json::Value| ActionMap::from([(AgentId(0), ActionEnvelope::new(AgentId(0), TimeStep(0), v))]);
        env.step(act(json!({"answer": 9}))).unwrap();
        let events = env.drain_events();
        assert_eq!(events[0].action, "clamp_answer");
        assert_eq!(events[1].info.get("value"), Some(&json!(7)));
        env.step(act(json!({}))).unwrap();
        assert_eq!(env.drain_events()[0].info_str("reason"), Some("missing_answer"));
        while !env.done() {
            env.step(act(json!({"answer": 4}))).unwrap();
        }
        let scores = env.scores();
        assert!(matches!(&scores[&AgentId(0)], Err(ScoreError::IncompleteSheet(missing)) if missing.len() == 1));
        assert!(env.step(ActionMap::new()).is_err());
    }

    #[test]
    fn csv_has_subscale_and_pair_rows() {
        let items = parse_item_bank(SYNTHETIC_PAIRED_BANK).unwrap();
        let sheet = ResponseSheet {
            responses: items.iter().map(|i| (i.item_id.clone(), i.scale.max())).collect(),
            ..ResponseSheet::default()
        };
        let csv = score_report_csv(&score(&sheet, &items).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "kind,id,n_items,raw_mean,normalized_mean,bias");
        assert_eq!(lines.len(), 1 + 2 + 3);
        assert!(lines.contains(&"pair,a1,,,,0.0"));
    }
}
