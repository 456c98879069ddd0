//! Transition matrices and multi-step world-state prediction.
//!
//! Row `i` of the matrix holds the empirical probabilities of moving from
//! world state `i` to each other world state:
//!
//! ```text
//! M[i][j] = count(i -> j) / sum_x count(i -> x)
//! ```
//!
//! Rows with no observations are uniform over all `n` world states. The chain
//! is homogeneous, so the distribution `k` steps ahead is the one-hot vector
//! of the current state multiplied by `M` `k` times.
//!
//! Rows are stored sparsely: an observed row keeps only its non-zero entries,
//! an unobserved row is a marker for the uniform distribution. A propagation
//! step therefore costs `O(nnz + n)` instead of `O(n^2)`.

use std::cmp::Ordering;

use serde_json::json;
use thiserror::Error;

use crate::statechart::StateId;
use crate::worldstore::{TransitionStore, WorldState, WorldStateId};

/// Tolerance for the "sums to one" check on probability vectors.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("store has no world states")]
    EmptyStore,
    #[error("world state index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: vector has {vector} entries, matrix is {matrix}x{matrix}")]
    DimensionMismatch { vector: usize, matrix: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("not a probability vector: {0}")]
    NotStochastic(String),
}

/// Dense probability distribution over interned world states.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Checks non-negativity and unit sum within [`STOCHASTIC_TOLERANCE`].
    pub fn new(entries: Vec<f64>) -> Result<Self, PredictError> {
        if entries.is_empty() {
            return Err(PredictError::NotStochastic("empty vector".into()));
        }
        if let Some(bad) = entries.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(PredictError::NotStochastic(format!("entry {bad}")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(PredictError::NotStochastic(format!("sum {sum}")));
        }
        Ok(ProbabilityVector(entries))
    }

    pub fn uniform(n: usize) -> Self {
        ProbabilityVector(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> WorldStateId {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        WorldStateId(best)
    }

    /// Entries sorted by probability descending, then id ascending.
    pub fn ranked(&self) -> Vec<(WorldStateId, f64)> {
        let mut v: Vec<(WorldStateId, f64)> = self
            .0
            .iter()
            .enumerate()
            .map(|(i, &p)| (WorldStateId(i), p))
            .collect();
        v.sort_by(
            |a, b| match b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal) {
                Ordering::Equal => a.0.cmp(&b.0),
                o => o,
            },
        );
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Row {
    /// Sorted `(column, probability)` pairs with positive probability.
    Observed(Vec<(usize, f64)>),
    Uniform,
}

/// Row-stochastic transition matrix over the world states of one store
/// snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    rows: Vec<Row>,
    snapshot_id: u64,
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Revision of the store this matrix was built from.
    pub fn snapshot_id(&self) -> u64 {
        self.snapshot_id
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.rows[i] {
            Row::Uniform => 1.0 / self.n as f64,
            Row::Observed(entries) => entries
                .binary_search_by_key(&j, |&(c, _)| c)
                .map(|k| entries[k].1)
                .unwrap_or(0.0),
        }
    }

    /// True if row `i` falls back to the uniform distribution.
    pub fn is_uniform_row(&self, i: usize) -> bool {
        matches!(self.rows[i], Row::Uniform)
    }

    pub fn row(&self, i: usize) -> ProbabilityVector {
        ProbabilityVector((0..self.n).map(|j| self.get(i, j)).collect())
    }

    /// Dense copy of the matrix, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).0).collect()
    }
}

/// Builds the matrix from the store's current counts.
pub fn build_matrix(store: &TransitionStore) -> Result<TransitionMatrix, PredictError> {
    let n = store.len();
    if n == 0 {
        return Err(PredictError::EmptyStore);
    }
    let rows = (0..n)
        .map(|i| {
            let out = store
                .outgoing(WorldStateId(i))
                .expect("every index below len is interned");
            if out.is_empty() {
                return Row::Uniform;
            }
            let total: u64 = out.iter().map(|(_, c)| c).sum();
            Row::Observed(
                out.into_iter()
                    .map(|(to, c)| (to.0, c as f64 / total as f64))
                    .collect(),
            )
        })
        .collect();
    Ok(TransitionMatrix {
        n,
        rows,
        snapshot_id: store.revision(),
    })
}

pub fn one_hot(id: WorldStateId, n: usize) -> Result<ProbabilityVector, PredictError> {
    if id.0 >= n {
        return Err(PredictError::IndexOutOfRange { index: id.0, n });
    }
    let mut v = vec![0.0; n];
    v[id.0] = 1.0;
    Ok(ProbabilityVector(v))
}

/// One step of `x^T * M`, renormalized to unit sum.
pub fn propagate(
    x: &ProbabilityVector,
    m: &TransitionMatrix,
) -> Result<ProbabilityVector, PredictError> {
    if x.len() != m.n {
        return Err(PredictError::DimensionMismatch {
            vector: x.len(),
            matrix: m.n,
        });
    }
    let mut out = vec![0.0; m.n];
    let mut uniform_mass = 0.0;
    for (i, &xi) in x.0.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        match &m.rows[i] {
            Row::Uniform => uniform_mass += xi,
            Row::Observed(entries) => {
                for &(j, p) in entries {
                    out[j] += xi * p;
                }
            }
        }
    }
    if uniform_mass > 0.0 && out.iter().all(|&v| v == 0.0) {
        // all mass sits on unobserved rows; skip renormalization rounding
        return Ok(ProbabilityVector::uniform(m.n));
    }
    if uniform_mass > 0.0 {
        let share = uniform_mass / m.n as f64;
        out.iter_mut().for_each(|v| *v += share);
    }
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(ProbabilityVector(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionStep {
    pub step: usize,
    pub distribution: ProbabilityVector,
    pub top: WorldStateId,
}

impl PredictionStep {
    fn new(step: usize, distribution: ProbabilityVector) -> Self {
        let top = distribution.argmax();
        PredictionStep {
            step,
            distribution,
            top,
        }
    }
}

/// Distributions for steps `1..=h` starting from world state `id`.
pub fn predict(
    id: WorldStateId,
    h: usize,
    m: &TransitionMatrix,
) -> Result<Vec<PredictionStep>, PredictError> {
    let start = one_hot(id, m.n)?;
    predict_from(start, h, m)
}

/// Like [`predict`], for an arbitrary starting distribution.
pub fn predict_from(
    start: ProbabilityVector,
    h: usize,
    m: &TransitionMatrix,
) -> Result<Vec<PredictionStep>, PredictError> {
    if h == 0 {
        return Err(PredictError::ZeroHorizon);
    }
    let mut steps = Vec::with_capacity(h);
    let mut x = start;
    for k in 1..=h {
        x = propagate(&x, m)?;
        steps.push(PredictionStep::new(k, x.clone()));
    }
    Ok(steps)
}

/// Prediction for a world state that may not be interned yet.
///
/// A world state seen for the first time has no outgoing observations, so its
/// successor distribution is uniform over everything interned so far. Later
/// steps propagate that uniform vector through `M`. The flag reports whether
/// the fallback was used.
pub fn predict_world_state(
    store: &TransitionStore,
    ws: &WorldState,
    h: usize,
) -> Result<(Vec<PredictionStep>, bool), PredictError> {
    let m = build_matrix(store)?;
    match store.lookup(ws) {
        Some(id) => Ok((predict(id, h, &m)?, false)),
        None => {
            if h == 0 {
                return Err(PredictError::ZeroHorizon);
            }
            let first = ProbabilityVector::uniform(m.n);
            let mut steps = vec![PredictionStep::new(1, first.clone())];
            if h > 1 {
                steps.extend(predict_from(first, h - 1, &m)?.into_iter().map(|mut s| {
                    s.step += 1;
                    s
                }));
            }
            Ok((steps, true))
        }
    }
}

/// Statechart state of the step's most probable world state.
pub fn top_state(ps: &PredictionStep, store: &TransitionStore) -> StateId {
    store
        .world_state(ps.top)
        .map(|ws| ws.state.clone())
        .expect("prediction steps only reference interned world states")
}

/// JSON export: per step, `(world_state_id, probability)` pairs sorted by
/// probability descending then id ascending. Zero entries are omitted.
pub fn prediction_json(steps: &[PredictionStep], store: &TransitionStore) -> serde_json::Value {
    let steps: Vec<serde_json::Value> = steps
        .iter()
        .map(|s| {
            let entries: Vec<serde_json::Value> = s
                .distribution
                .ranked()
                .into_iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(id, p)| {
                    let state = store
                        .world_state(id)
                        .map(|ws| ws.state.to_string())
                        .unwrap_or_default();
                    json!({"world_state_id": id.0, "probability": p, "state": state})
                })
                .collect();
            json!({
                "step": s.step,
                "top": s.top.0,
                "top_state": top_state(s, store).to_string(),
                "entries": entries,
            })
        })
        .collect();
    json!({ "steps": steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParameterSet, Value};

    fn store_with(n: usize, counts: &[(usize, usize, u64)]) -> TransitionStore {
        let mut s = TransitionStore::new();
        for i in 0..n {
            s.intern(WorldState::bare(format!("root/S{i}").parse().unwrap()));
        }
        for &(f, t, c) in counts {
            for _ in 0..c {
                s.record_transition(WorldStateId(f), WorldStateId(t))
                    .unwrap();
            }
        }
        s
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn count_ratio_rows_and_uniform_fallback() {
        let m = build_matrix(&store_with(3, &[(0, 1, 3), (0, 2, 1)])).unwrap();
        assert!(close(m.row(0).as_slice(), &[0.0, 0.75, 0.25]));
        let third = 1.0 / 3.0;
        assert!(close(m.row(1).as_slice(), &[third; 3]));
        assert!(close(m.row(2).as_slice(), &[third; 3]));
    }

    #[test]
    fn degenerate_matrices() {
        let m = build_matrix(&store_with(1, &[])).unwrap();
        assert_eq!(m.to_dense(), vec![vec![1.0]]);
        let m = build_matrix(&store_with(3, &[(0, 0, 5)])).unwrap();
        assert_eq!(m.row(0).as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(
            build_matrix(&TransitionStore::new()),
            Err(PredictError::EmptyStore)
        );
    }

    #[test]
    fn one_hot_definition() {
        assert_eq!(
            one_hot(WorldStateId(0), 3).unwrap().as_slice(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(
            one_hot(WorldStateId(2), 3).unwrap().as_slice(),
            &[0.0, 0.0, 1.0]
        );
        assert_eq!(
            one_hot(WorldStateId(3), 3),
            Err(PredictError::IndexOutOfRange { index: 3, n: 3 })
        );
    }

    #[test]
    fn propagate_extracts_row_and_checks_dimension() {
        let m = build_matrix(&store_with(3, &[(0, 1, 3), (0, 2, 1)])).unwrap();
        let x = propagate(&one_hot(WorldStateId(0), 3).unwrap(), &m).unwrap();
        assert!(close(x.as_slice(), &[0.0, 0.75, 0.25]));
        let u = propagate(&ProbabilityVector::uniform(3), &m).unwrap();
        assert!((u.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            propagate(&ProbabilityVector::uniform(2), &m),
            Err(PredictError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn two_step_against_path_enumeration() {
        // rows {0:[0,.75,.25], 1:[1,0,0], 2:[0,0,1]}
        let s = store_with(3, &[(0, 1, 3), (0, 2, 1), (1, 0, 1), (2, 2, 1)]);
        let m = build_matrix(&s).unwrap();
        let steps = predict(WorldStateId(0), 2, &m).unwrap();
        // paths 0->1->0 (0.75) and 0->2->2 (0.25)
        assert!(close(steps[1].distribution.as_slice(), &[0.75, 0.0, 0.25]));
        assert_eq!(steps[1].top, WorldStateId(0));
    }

    #[test]
    fn deterministic_chain() {
        let s = store_with(3, &[(0, 1, 1), (1, 2, 1), (2, 2, 1)]);
        let m = build_matrix(&s).unwrap();
        let steps = predict(WorldStateId(0), 2, &m).unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(
            (steps[0].top, steps[0].distribution.get(1)),
            (WorldStateId(1), 1.0)
        );
        assert_eq!(
            (steps[1].top, steps[1].distribution.get(2)),
            (WorldStateId(2), 1.0)
        );
        assert_eq!(
            predict(WorldStateId(0), 0, &m),
            Err(PredictError::ZeroHorizon)
        );
    }

    #[test]
    fn unobserved_state_predicts_uniform() {
        let s = store_with(4, &[(0, 1, 2)]);
        let m = build_matrix(&s).unwrap();
        let steps = predict(WorldStateId(3), 1, &m).unwrap();
        assert_eq!(steps[0].distribution.as_slice(), &[0.25; 4]);
        assert_eq!(steps[0].top, WorldStateId(0));
    }

    #[test]
    fn first_encounter_fallback() {
        let s = store_with(4, &[(0, 1, 2)]);
        let novel = WorldState::bare("root/Novel".parse().unwrap());
        let (steps, fallback) = predict_world_state(&s, &novel, 2).unwrap();
        assert!(fallback);
        assert_eq!(steps[0].distribution.as_slice(), &[0.25; 4]);
        assert_eq!(steps[1].step, 2);
        let (_, fallback) = predict_world_state(&s, &s.world_states()[0].clone(), 2).unwrap();
        assert!(!fallback);
    }

    #[test]
    fn tie_break_is_lowest_index() {
        let v = ProbabilityVector::new(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(v.argmax(), WorldStateId(1));
        let ranked: Vec<usize> = v.ranked().iter().map(|(id, _)| id.0).collect();
        assert_eq!(ranked, vec![1, 2, 0]);
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn top_state_projects_many_to_one() {
        let mut s = TransitionStore::new();
        let grasp: StateId = "root/PickTask/GraspObject".parse().unwrap();
        for human in ["alice", "bob"] {
            s.intern(WorldState::new(
                grasp.clone(),
                ParameterSet::new(),
                ParameterSet::from_pairs([("human_id", Value::token(human))]).unwrap(),
            ));
        }
        s.record_transition(WorldStateId(0), WorldStateId(1))
            .unwrap();
        let m = build_matrix(&s).unwrap();
        for start in [0, 1] {
            let steps = predict(WorldStateId(start), 1, &m).unwrap();
            assert_eq!(top_state(&steps[0], &s), grasp);
        }
    }

    #[test]
    fn json_export_is_sorted() {
        let s = store_with(3, &[(0, 1, 1), (0, 2, 3)]);
        let m = build_matrix(&s).unwrap();
        let steps = predict(WorldStateId(0), 1, &m).unwrap();
        let v = prediction_json(&steps, &s);
        let ids: Vec<u64> = v["steps"][0]["entries"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["world_state_id"].as_u64().unwrap())
            .collect();
        assert_eq!(ids, vec![2, 1]);
    }
}
