//! Prediction-precision evaluation.
//!
//! Evaluation episodes run with a prediction hook. At every important-state
//! change the hook predicts `horizon` steps ahead; the most probable step-1
//! world state is later compared with the world state the episode actually
//! entered next. Learning stays on throughout, as in normal operation.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{build_matrix, predict, PredictError};
use crate::scenario::{Scenario, ScenarioConfig, ScenarioError};
use crate::seeded_rng;
use crate::worldstore::{TransitionStore, WorldState, WorldStateId};

pub const REPORT_CSV_HEADER: &str = "criterion,failures_enabled,total,correct,precision_percent";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate against an empty store")]
    EmptyStore,
    #[error("n_eval_episodes must be at least 1")]
    NoEpisodes,
    #[error("no scorable predictions were made")]
    NoScoredPredictions,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// How strictly a prediction has to match to count as correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchCriterion {
    /// Statechart state only.
    SMatch,
    /// Statechart state plus state and environment parameters.
    WMatch,
}

impl MatchCriterion {
    pub const BOTH: [MatchCriterion; 2] = [MatchCriterion::SMatch, MatchCriterion::WMatch];

    pub fn token(self) -> &'static str {
        match self {
            MatchCriterion::SMatch => "s_match",
            MatchCriterion::WMatch => "w_match",
        }
    }
}

pub fn score(predicted: &WorldState, actual: &WorldState, c: MatchCriterion) -> bool {
    match c {
        MatchCriterion::SMatch => predicted.state == actual.state,
        MatchCriterion::WMatch => predicted == actual,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub criterion: MatchCriterion,
    pub failures_enabled: bool,
    pub predictions_total: u64,
    pub predictions_correct: u64,
    pub precision_percent: f64,
}

impl EvalRow {
    fn new(criterion: MatchCriterion, failures_enabled: bool, total: u64, correct: u64) -> Self {
        EvalRow {
            criterion,
            failures_enabled,
            predictions_total: total,
            predictions_correct: correct,
            precision_percent: 100.0 * correct as f64 / total as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub config_digest: String,
    pub seed: u64,
}

impl EvalReport {
    pub fn row(&self, c: MatchCriterion, failures: bool) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.criterion == c && r.failures_enabled == failures)
    }

    pub fn precision(&self, c: MatchCriterion, failures: bool) -> Option<f64> {
        self.row(c, failures).map(|r| r.precision_percent)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.6}",
                r.criterion.token(),
                r.failures_enabled,
                r.predictions_total,
                r.predictions_correct,
                r.precision_percent
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Per-trigger record of what was predicted and what happened next.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrediction {
    pub current: WorldState,
    pub predicted: WorldState,
    pub actual: WorldState,
}

/// Runs evaluation episodes and returns every scorable prediction.
pub fn collect_predictions<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    store: &mut TransitionStore,
    n_eval_episodes: usize,
    failures: bool,
    rng: &mut R,
) -> Result<Vec<ScoredPrediction>, EvalError> {
    if store.is_empty() {
        return Err(EvalError::EmptyStore);
    }
    if n_eval_episodes < 1 {
        return Err(EvalError::NoEpisodes);
    }
    let mut cfg = cfg.clone();
    cfg.failures_enabled = failures;
    let horizon = cfg.horizon;
    let scenario = Scenario::new(cfg)?;

    let mut scored = Vec::new();
    for episode in 0..n_eval_episodes {
        let mut predicted: Vec<Result<WorldState, PredictError>> = Vec::new();
        let mut hook = |s: &TransitionStore, id: WorldStateId, _: &WorldState| {
            let top = build_matrix(s)
                .and_then(|m| predict(id, horizon, &m))
                .map(|steps| s.world_states()[steps[0].top.index()].clone());
            predicted.push(top);
        };
        let trace = scenario.run_episode(episode as u64, store, rng, Some(&mut hook))?;
        // world_states[0] is the start; trigger j fired on world_states[j + 1]
        for (j, p) in predicted.into_iter().enumerate() {
            let p = p?;
            if let Some(actual) = trace.world_states.get(j + 2) {
                scored.push(ScoredPrediction {
                    current: trace.world_states[j + 1].clone(),
                    predicted: p,
                    actual: actual.clone(),
                });
            }
        }
    }
    Ok(scored)
}

/// Scores `n_eval_episodes` episodes under each criterion for one failure
/// setting. `store` keeps learning while the episodes run.
pub fn evaluate<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    store: &mut TransitionStore,
    n_eval_episodes: usize,
    criteria: &[MatchCriterion],
    failures: bool,
    rng: &mut R,
) -> Result<EvalReport, EvalError> {
    let scored = collect_predictions(cfg, store, n_eval_episodes, failures, rng)?;
    if scored.is_empty() {
        return Err(EvalError::NoScoredPredictions);
    }
    let total = scored.len() as u64;
    let rows = criteria
        .iter()
        .map(|&c| {
            let correct = scored
                .iter()
                .filter(|s| score(&s.predicted, &s.actual, c))
                .count() as u64;
            EvalRow::new(c, failures, total, correct)
        })
        .collect();
    Ok(EvalReport {
        rows,
        config_digest: cfg.digest(),
        seed: cfg.seed,
    })
}

/// The four-cell table: each criterion without and with injected failures.
/// Each failure setting runs on its own copy of `store` with its own random
/// stream derived from `seed`.
pub fn evaluate_table(
    cfg: &ScenarioConfig,
    store: &TransitionStore,
    n_eval_episodes: usize,
    criteria: &[MatchCriterion],
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::new();
    for failures in [false, true] {
        let mut copy = store.clone();
        let mut rng = seeded_rng(seed, 1 + failures as u64);
        rows.extend(
            evaluate(
                cfg,
                &mut copy,
                n_eval_episodes,
                criteria,
                failures,
                &mut rng,
            )?
            .rows,
        );
    }
    Ok(EvalReport {
        rows,
        config_digest: cfg.digest(),
        seed,
    })
}

pub fn report_table(r: &EvalReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    write_file(path.as_ref(), &r.to_csv())
}

pub fn report_json(r: &EvalReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    write_file(path.as_ref(), &r.to_json())
}

fn write_file(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(|source| EvalError::IoFailure {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParameterSet, Value};
    use crate::scenario::train;

    fn ws(state: &str, human: &str) -> WorldState {
        WorldState::new(
            state.parse().unwrap(),
            ParameterSet::new(),
            ParameterSet::from_pairs([("human_id", Value::token(human))]).unwrap(),
        )
    }

    #[test]
    fn scoring_rules() {
        let a = ws("root/PickTask/GraspObject", "alice");
        let b = ws("root/PickTask/GraspObject", "bob");
        let c = ws("root/PickTask/LiftObject", "alice");
        for crit in MatchCriterion::BOTH {
            assert!(score(&a, &a, crit));
            assert!(!score(&a, &c, crit));
        }
        assert!(score(&a, &b, MatchCriterion::SMatch));
        assert!(!score(&a, &b, MatchCriterion::WMatch));
    }

    #[test]
    fn deterministic_scenario_is_perfectly_predicted() {
        let cfg = ScenarioConfig::deterministic();
        let mut store = TransitionStore::new();
        let mut rng = seeded_rng(1, 0);
        train(&cfg, &mut store, &mut rng, 1).unwrap();
        let r = evaluate(&cfg, &mut store, 3, &MatchCriterion::BOTH, false, &mut rng).unwrap();
        for row in &r.rows {
            assert_eq!(row.predictions_correct, row.predictions_total);
            assert_eq!(row.precision_percent, 100.0);
        }
        // 12 world states per run, 11 triggers, 10 with a successor
        assert_eq!(r.rows[0].predictions_total, 30);
    }

    #[test]
    fn empty_store_is_rejected() {
        let mut store = TransitionStore::new();
        let mut rng = seeded_rng(1, 0);
        assert!(matches!(
            evaluate(
                &ScenarioConfig::default(),
                &mut store,
                1,
                &MatchCriterion::BOTH,
                false,
                &mut rng
            ),
            Err(EvalError::EmptyStore)
        ));
    }

    #[test]
    fn csv_rows_are_consistent() {
        let report = EvalReport {
            rows: vec![
                EvalRow::new(MatchCriterion::SMatch, false, 200, 183),
                EvalRow::new(MatchCriterion::WMatch, false, 200, 150),
                EvalRow::new(MatchCriterion::SMatch, true, 80, 41),
                EvalRow::new(MatchCriterion::WMatch, true, 80, 33),
            ],
            config_digest: "x".into(),
            seed: 1,
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "s_match,false,200,183,91.500000");
        for line in &lines[1..] {
            let f: Vec<&str> = line.split(',').collect();
            let (total, correct): (f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
            let precision: f64 = f[4].parse().unwrap();
            assert!((precision - 100.0 * correct / total).abs() < 1e-6);
        }
        assert_eq!(report.to_csv(), csv);
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
