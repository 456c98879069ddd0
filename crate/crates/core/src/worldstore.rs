//! Interned world states and online transition counts.
//!
//! A world state is the triple of the active statechart state, the state's
//! parameters and an environment snapshot. Each distinct world state gets a
//! dense id in insertion order; those ids are the row and column indices of
//! the transition matrix built by the predictor.
//!
//! # File format
//!
//! Stores persist as line-delimited JSON (`.wsdb.jsonl`):
//!
//! ```text
//! {"format":"wsdb","version":1}
//! {"id":0,"kind":"ws","phi":{},"psi":{"human_present":false},"state":"root/Idle"}
//! {"count":3,"from":0,"kind":"tr","to":1}
//! ```
//!
//! World-state lines come first in id order, then transition lines sorted by
//! `(from, to)`. Keys are sorted and there is no insignificant whitespace, so
//! saving a loaded file reproduces it byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use serde_json::json;
use thiserror::Error;

use crate::params::ParameterSet;
use crate::statechart::StateId;

pub const FORMAT_NAME: &str = "wsdb";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown world state id {0}")]
    UnknownWorldStateId(usize),
    #[error("corrupt database at line {line}: {reason}")]
    CorruptDatabase { line: usize, reason: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl StoreError {
    fn corrupt(line: usize, reason: impl Into<String>) -> Self {
        StoreError::CorruptDatabase {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldState {
    pub state: StateId,
    pub state_params: ParameterSet,
    pub env_params: ParameterSet,
}

impl WorldState {
    pub fn new(state: StateId, state_params: ParameterSet, env_params: ParameterSet) -> Self {
        WorldState {
            state,
            state_params,
            env_params,
        }
    }

    /// A world state with empty parameter sets.
    pub fn bare(state: StateId) -> Self {
        WorldState::new(state, ParameterSet::new(), ParameterSet::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldStateId(pub usize);

impl WorldStateId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionRecord {
    pub from: WorldStateId,
    pub to: WorldStateId,
    pub count: u64,
}

/// Learned model ground truth: interned world states plus transition counts.
///
/// Cloning yields an independent snapshot; the predictor only ever reads a
/// borrowed store, so a matrix never observes a half-applied update.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionStore {
    states: Vec<WorldState>,
    index: HashMap<WorldState, WorldStateId>,
    outgoing: Vec<BTreeMap<usize, u64>>,
    total: u64,
    revision: u64,
}

impl TransitionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Bumped on every mutation; identifies the snapshot a matrix came from.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Sum of all transition counts.
    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn intern(&mut self, ws: WorldState) -> WorldStateId {
        if let Some(&id) = self.index.get(&ws) {
            return id;
        }
        let id = WorldStateId(self.states.len());
        self.index.insert(ws.clone(), id);
        self.states.push(ws);
        self.outgoing.push(BTreeMap::new());
        self.revision += 1;
        id
    }

    pub fn lookup(&self, ws: &WorldState) -> Option<WorldStateId> {
        self.index.get(ws).copied()
    }

    pub fn world_state(&self, id: WorldStateId) -> Result<&WorldState, StoreError> {
        self.states
            .get(id.0)
            .ok_or(StoreError::UnknownWorldStateId(id.0))
    }

    pub fn world_states(&self) -> &[WorldState] {
        &self.states
    }

    pub fn record_transition(
        &mut self,
        from: WorldStateId,
        to: WorldStateId,
    ) -> Result<TransitionRecord, StoreError> {
        self.check(from)?;
        self.check(to)?;
        let count = self.outgoing[from.0].entry(to.0).or_insert(0);
        *count += 1;
        let count = *count;
        self.total += 1;
        self.revision += 1;
        Ok(TransitionRecord { from, to, count })
    }

    /// Observed successors of `from` with their counts, ascending by id.
    pub fn outgoing(&self, from: WorldStateId) -> Result<Vec<(WorldStateId, u64)>, StoreError> {
        self.check(from)?;
        Ok(self.outgoing[from.0]
            .iter()
            .map(|(&to, &c)| (WorldStateId(to), c))
            .collect())
    }

    pub fn count(&self, from: WorldStateId, to: WorldStateId) -> u64 {
        self.outgoing
            .get(from.0)
            .and_then(|row| row.get(&to.0))
            .copied()
            .unwrap_or(0)
    }

    /// All records in `(from, to)` order.
    pub fn records(&self) -> impl Iterator<Item = TransitionRecord> + '_ {
        self.outgoing.iter().enumerate().flat_map(|(from, row)| {
            row.iter().map(move |(&to, &count)| TransitionRecord {
                from: WorldStateId(from),
                to: WorldStateId(to),
                count,
            })
        })
    }

    /// Adds every count of `other` into `self`, interning its world states as
    /// needed. Used to combine stores trained independently.
    pub fn merge(&mut self, other: &TransitionStore) {
        let map: Vec<WorldStateId> = other
            .states
            .iter()
            .map(|ws| self.intern(ws.clone()))
            .collect();
        for r in other.records() {
            let (from, to) = (map[r.from.0], map[r.to.0]);
            *self.outgoing[from.0].entry(to.0).or_insert(0) += r.count;
            self.total += r.count;
        }
        self.revision += 1;
    }

    fn check(&self, id: WorldStateId) -> Result<(), StoreError> {
        if id.0 < self.states.len() {
            Ok(())
        } else {
            Err(StoreError::UnknownWorldStateId(id.0))
        }
    }

    /// Canonical serialized form; every line ends with `\n`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = json!({"format": FORMAT_NAME, "version": FORMAT_VERSION});
        out.push_str(&header.to_string());
        out.push('\n');
        for (id, ws) in self.states.iter().enumerate() {
            let line = json!({
                "kind": "ws",
                "id": id,
                "state": ws.state.to_string(),
                "phi": ws.state_params.to_json(),
                "psi": ws.env_params.to_json(),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        for r in self.records() {
            let line = json!({"kind": "tr", "from": r.from.0, "to": r.to.0, "count": r.count});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<TransitionStore, StoreError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| StoreError::corrupt(1, "missing header"))?;
        let header: serde_json::Value = serde_json::from_str(header)
            .map_err(|e| StoreError::corrupt(1, format!("header is not JSON: {e}")))?;
        if header.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
            return Err(StoreError::corrupt(1, "not a wsdb file"));
        }
        match header.get("version").and_then(|v| v.as_u64()) {
            Some(FORMAT_VERSION) => {}
            other => {
                return Err(StoreError::corrupt(
                    1,
                    format!("unsupported version {other:?}"),
                ))
            }
        }

        let mut store = TransitionStore::new();
        let mut seen_records = false;
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| StoreError::corrupt(line_no, e.to_string()))?;
            match v.get("kind").and_then(|k| k.as_str()) {
                Some("ws") => {
                    if seen_records {
                        return Err(StoreError::corrupt(line_no, "world state after records"));
                    }
                    let ws =
                        parse_ws(&v, store.len()).map_err(|r| StoreError::corrupt(line_no, r))?;
                    if store.lookup(&ws).is_some() {
                        return Err(StoreError::corrupt(line_no, "duplicate world state"));
                    }
                    store.intern(ws);
                }
                Some("tr") => {
                    seen_records = true;
                    let field = |name: &str| {
                        v.get(name)
                            .and_then(|x| x.as_u64())
                            .ok_or_else(|| StoreError::corrupt(line_no, format!("bad `{name}`")))
                    };
                    let (from, to, count) = (field("from")?, field("to")?, field("count")?);
                    if count < 1 {
                        return Err(StoreError::corrupt(line_no, "count must be >= 1"));
                    }
                    let (from, to) = (from as usize, to as usize);
                    if from >= store.len() || to >= store.len() {
                        return Err(StoreError::corrupt(line_no, "record references unknown id"));
                    }
                    if store.outgoing[from].insert(to, count).is_some() {
                        return Err(StoreError::corrupt(line_no, "duplicate record"));
                    }
                    store.total += count;
                }
                _ => return Err(StoreError::corrupt(line_no, "unknown line kind")),
            }
        }
        store.revision = 0;
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|source| StoreError::IoFailure {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TransitionStore, StoreError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| StoreError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        TransitionStore::from_jsonl(&text)
    }
}

fn parse_ws(v: &serde_json::Value, expected_id: usize) -> Result<WorldState, String> {
    let id = v.get("id").and_then(|x| x.as_u64()).ok_or("bad `id`")?;
    if id as usize != expected_id {
        return Err(format!("expected id {expected_id}, found {id}"));
    }
    let state: StateId = v
        .get("state")
        .and_then(|x| x.as_str())
        .ok_or("bad `state`")?
        .parse()
        .map_err(|e| format!("{e}"))?;
    let phi =
        ParameterSet::from_json(v.get("phi").ok_or("missing `phi`")?).map_err(|e| e.to_string())?;
    let psi =
        ParameterSet::from_json(v.get("psi").ok_or("missing `psi`")?).map_err(|e| e.to_string())?;
    Ok(WorldState::new(state, phi, psi))
}
