//! Execution monitoring: importance filtering, an in-process publish/subscribe
//! bus for fired transitions, and the `stateChanged` condition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Mutex;

use thiserror::Error;

use crate::params::{ParameterSet, Value};
use crate::statechart::{StateId, Statechart, TransitionDef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("environment has no value for configured key `{0}`")]
    MissingEnvironmentKey(String),
    #[error("important state `{0}` is not part of the statechart")]
    UnknownImportantState(StateId),
}

/// One fired transition together with the context captured when it fired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionEvent {
    pub fired: TransitionDef,
    pub from_leaf: StateId,
    pub to_leaf: StateId,
    pub state_params: ParameterSet,
    pub env_snapshot: ParameterSet,
    pub sequence_no: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoggerConfig {
    pub enabled: bool,
    pub important_states: BTreeSet<StateId>,
}

impl LoggerConfig {
    pub fn new(
        statechart: &Statechart,
        important_states: impl IntoIterator<Item = StateId>,
    ) -> Result<Self, MonitorError> {
        let important_states: BTreeSet<StateId> = important_states.into_iter().collect();
        if let Some(bad) = important_states.iter().find(|s| !statechart.contains(s)) {
            return Err(MonitorError::UnknownImportantState(bad.clone()));
        }
        Ok(LoggerConfig {
            enabled: true,
            important_states,
        })
    }

    /// Uses the states the statechart itself marks as important.
    pub fn from_statechart(statechart: &Statechart) -> Self {
        LoggerConfig {
            enabled: true,
            important_states: statechart.important_states(),
        }
    }

    /// Nearest important ancestor-or-self of `state`.
    pub fn important_scope(&self, state: &StateId) -> Option<StateId> {
        state
            .ancestors_or_self()
            .find(|s| self.important_states.contains(s))
    }
}

/// Passes `te` on, relabeled to important scope, if the entered state lies in
/// an important state. The source is relabeled the same way when it has an
/// important ancestor.
pub fn log_transition(cfg: &LoggerConfig, te: &TransitionEvent) -> Option<TransitionEvent> {
    if !cfg.enabled {
        return None;
    }
    let to = cfg.important_scope(&te.to_leaf)?;
    let from = cfg
        .important_scope(&te.from_leaf)
        .unwrap_or_else(|| te.from_leaf.clone());
    Some(TransitionEvent {
        from_leaf: from,
        to_leaf: to,
        ..te.clone()
    })
}

/// In-process topic bus. Each subscriber owns a channel, so delivery is
/// lossless and ordered per subscriber and subscribers may sit on other
/// threads.
#[derive(Debug, Default)]
pub struct EventBus {
    topics: Mutex<HashMap<String, Vec<Sender<TransitionEvent>>>>,
}

#[derive(Debug)]
pub struct Subscription {
    topic: String,
    rx: Receiver<TransitionEvent>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Events published so far and not yet taken, without blocking.
    pub fn drain(&self) -> Vec<TransitionEvent> {
        self.rx.try_iter().collect()
    }

    /// Blocks for the next event; `None` once the bus is gone.
    pub fn recv(&self) -> Option<TransitionEvent> {
        self.rx.recv().ok()
    }
}

impl IntoIterator for Subscription {
    type Item = TransitionEvent;
    type IntoIter = mpsc::IntoIter<TransitionEvent>;

    /// Blocking iterator that ends when the bus is dropped.
    fn into_iter(self) -> Self::IntoIter {
        self.rx.into_iter()
    }
}

impl EventBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, topic: &str) -> Subscription {
        let (tx, rx) = mpsc::channel();
        self.topics
            .lock()
            .expect("bus lock")
            .entry(topic.to_string())
            .or_default()
            .push(tx);
        Subscription {
            topic: topic.to_string(),
            rx,
        }
    }

    /// Delivers a copy to every live subscriber; returns how many got it.
    /// Dropped subscriptions are pruned.
    pub fn publish(&self, topic: &str, event: &TransitionEvent) -> usize {
        let mut topics = self.topics.lock().expect("bus lock");
        let Some(subs) = topics.get_mut(topic) else {
            return 0;
        };
        subs.retain(|tx| tx.send(event.clone()).is_ok());
        subs.len()
    }
}

/// Yields `(state, event)` whenever the entered important state differs from
/// the previous one.
pub struct StateChanges<I> {
    events: I,
    current: Option<StateId>,
}

impl<I: Iterator<Item = TransitionEvent>> Iterator for StateChanges<I> {
    type Item = (StateId, TransitionEvent);

    fn next(&mut self) -> Option<Self::Item> {
        for ev in self.events.by_ref() {
            if self.current.as_ref() != Some(&ev.to_leaf) {
                self.current = Some(ev.to_leaf.clone());
                return Some((ev.to_leaf.clone(), ev));
            }
        }
        None
    }
}

impl<I> StateChanges<I> {
    pub fn current(&self) -> Option<&StateId> {
        self.current.as_ref()
    }
}

/// The `stateChanged` condition over a stream of filtered events, starting
/// from the machine's `initial` important state.
pub fn state_changed<I>(events: I, initial: Option<StateId>) -> StateChanges<I::IntoIter>
where
    I: IntoIterator<Item = TransitionEvent>,
{
    StateChanges {
        events: events.into_iter(),
        current: initial,
    }
}

/// Change detector for callers that feed events one at a time.
#[derive(Debug, Clone, Default)]
pub struct ChangeDetector {
    current: Option<StateId>,
}

impl ChangeDetector {
    pub fn new(initial: Option<StateId>) -> Self {
        ChangeDetector { current: initial }
    }

    pub fn observe(&mut self, ev: &TransitionEvent) -> bool {
        if self.current.as_ref() == Some(&ev.to_leaf) {
            return false;
        }
        self.current = Some(ev.to_leaf.clone());
        true
    }
}

/// Symbolic environment the robot can query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnvironmentModel {
    values: BTreeMap<String, Value>,
}

impl EnvironmentModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.values.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }
}

/// Reads the configured keys into a canonical parameter set.
pub fn snapshot_environment<S: AsRef<str>>(
    env: &EnvironmentModel,
    keys: &[S],
) -> Result<ParameterSet, MonitorError> {
    let mut out = ParameterSet::new();
    for key in keys {
        let key = key.as_ref();
        let value = env
            .get(key)
            .ok_or_else(|| MonitorError::MissingEnvironmentKey(key.to_string()))?;
        out.set(key, value.clone());
    }
    Ok(out)
}
