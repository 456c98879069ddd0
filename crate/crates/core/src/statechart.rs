//! Hierarchical statecharts and a deterministic event-driven engine.
//!
//! A statechart is a tree of states. Leaves are executable; a parent state
//! owns an initial child that is entered whenever the parent is the target of
//! a transition. Events are dispatched innermost-first: the active leaf gets
//! the first chance to handle an event, then its parent, and so on up to the
//! root. Events that nobody handles are absorbed without effect.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ParameterSet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatechartError {
    #[error("invalid state path `{0}`")]
    InvalidStateId(String),
    #[error("statechart must have exactly one root state, found {0}")]
    RootCount(usize),
    #[error("duplicate state `{0}`")]
    DuplicateStateId(StateId),
    #[error("state `{child}` is not a direct child path of `{parent}`")]
    MisplacedChild { parent: StateId, child: StateId },
    #[error("transition references unknown state `{0}`")]
    UnknownStateInTransition(StateId),
    #[error("more than one transition from `{from}` on event `{event}`")]
    AmbiguousTransition { from: StateId, event: String },
    #[error("composite state `{0}` has no valid initial child")]
    MissingInitialChild(StateId),
    #[error("initial child `{initial}` declared on leaf state `{state}`")]
    InitialOnLeaf { state: StateId, initial: StateId },
    #[error("success/failure kind is only allowed on leaves, not `{0}`")]
    TerminalKindOnComposite(StateId),
    #[error("event name must be non-empty")]
    EmptyEventName,
    #[error("malformed statechart document: {0}")]
    Document(String),
}

/// Path of a state from the root, e.g. `root/PickTask/GraspObject`.
///
/// Ordering is lexicographic over path segments and is what every
/// deterministic tie-break downstream relies on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(Vec<String>);

impl StateId {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(
        segments: I,
    ) -> Result<Self, StatechartError> {
        let segs: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segs.is_empty() || segs.iter().any(|s| s.is_empty() || s.contains('/')) {
            return Err(StatechartError::InvalidStateId(segs.join("/")));
        }
        Ok(StateId(segs))
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn name(&self) -> &str {
        self.0.last().expect("state paths are non-empty")
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn parent(&self) -> Option<StateId> {
        (self.0.len() > 1).then(|| StateId(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn child(&self, name: &str) -> Result<StateId, StatechartError> {
        let mut segs = self.0.clone();
        segs.push(name.to_string());
        StateId::new(segs)
    }

    /// True when `self` equals `other` or lies above it in the tree.
    pub fn is_ancestor_or_self_of(&self, other: &StateId) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    /// This state followed by each of its ancestors, innermost first.
    pub fn ancestors_or_self(&self) -> impl Iterator<Item = StateId> + '_ {
        (1..=self.0.len())
            .rev()
            .map(|n| StateId(self.0[..n].to_vec()))
    }
}

impl FromStr for StateId {
    type Err = StatechartError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(StatechartError::InvalidStateId(String::new()));
        }
        StateId::new(s.split('/'))
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl Serialize for StateId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    #[default]
    Normal,
    Success,
    Failure,
}

/// Declaration of one state and its subtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateNode {
    pub id: StateId,
    pub kind: StateKind,
    pub important: bool,
    pub initial_child: Option<StateId>,
    pub children: Vec<StateNode>,
}

impl StateNode {
    pub fn new(id: StateId) -> Self {
        StateNode {
            id,
            kind: StateKind::Normal,
            important: false,
            initial_child: None,
            children: Vec::new(),
        }
    }

    pub fn with_kind(mut self, kind: StateKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn important(mut self, important: bool) -> Self {
        self.important = important;
        self
    }

    /// Adds children; the first one becomes the initial child unless one is
    /// already set.
    pub fn with_children(mut self, children: Vec<StateNode>) -> Self {
        if self.initial_child.is_none() {
            self.initial_child = children.first().map(|c| c.id.clone());
        }
        self.children = children;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventDef {
    pub name: String,
    pub payload: ParameterSet,
}

impl EventDef {
    pub fn new(name: impl Into<String>) -> Self {
        EventDef {
            name: name.into(),
            payload: ParameterSet::new(),
        }
    }

    pub fn with_payload(name: impl Into<String>, payload: ParameterSet) -> Self {
        EventDef {
            name: name.into(),
            payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionDef {
    pub from: StateId,
    #[serde(rename = "event")]
    pub event_name: String,
    pub to: StateId,
}

impl TransitionDef {
    pub fn new(from: StateId, event_name: impl Into<String>, to: StateId) -> Self {
        TransitionDef {
            from,
            event_name: event_name.into(),
            to,
        }
    }
}

#[derive(Debug, Clone)]
struct NodeInfo {
    kind: StateKind,
    important: bool,
    children: Vec<StateId>,
    initial: Option<StateId>,
}

/// A validated statechart definition.
#[derive(Debug, Clone)]
pub struct Statechart {
    root: StateId,
    nodes: BTreeMap<StateId, NodeInfo>,
    transitions: BTreeMap<(StateId, String), TransitionDef>,
}

/// Runtime position of one machine instance: the deepest active leaf.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineState {
    active: StateId,
}

impl MachineState {
    pub fn active(&self) -> &StateId {
        &self.active
    }
}

/// Pure query for the deepest active leaf.
pub fn active_state(ms: &MachineState) -> StateId {
    ms.active.clone()
}

/// Validates a state tree and its transitions.
///
/// `nodes` must contain exactly one element, the root, with the rest of the
/// tree nested in `children`.
pub fn build_statechart(
    nodes: Vec<StateNode>,
    transitions: Vec<TransitionDef>,
) -> Result<Statechart, StatechartError> {
    if nodes.len() != 1 {
        return Err(StatechartError::RootCount(nodes.len()));
    }
    let root_node = nodes.into_iter().next().expect("one root");
    let root = root_node.id.clone();
    if root.depth() != 1 {
        return Err(StatechartError::InvalidStateId(root.to_string()));
    }

    let mut table = BTreeMap::new();
    let mut pending = vec![root_node];
    while let Some(node) = pending.pop() {
        if table.contains_key(&node.id) {
            return Err(StatechartError::DuplicateStateId(node.id));
        }
        let mut child_ids = Vec::with_capacity(node.children.len());
        for child in &node.children {
            if child.id.parent().as_ref() != Some(&node.id) {
                return Err(StatechartError::MisplacedChild {
                    parent: node.id.clone(),
                    child: child.id.clone(),
                });
            }
            child_ids.push(child.id.clone());
        }
        if child_ids.is_empty() {
            if let Some(initial) = node.initial_child {
                return Err(StatechartError::InitialOnLeaf {
                    state: node.id,
                    initial,
                });
            }
        } else {
            if node.kind != StateKind::Normal {
                return Err(StatechartError::TerminalKindOnComposite(node.id));
            }
            match &node.initial_child {
                Some(init) if child_ids.contains(init) => {}
                _ => return Err(StatechartError::MissingInitialChild(node.id)),
            }
        }
        table.insert(
            node.id.clone(),
            NodeInfo {
                kind: node.kind,
                important: node.important,
                children: child_ids,
                initial: node.initial_child,
            },
        );
        pending.extend(node.children);
    }

    let mut by_key = BTreeMap::new();
    for t in transitions {
        for end in [&t.from, &t.to] {
            if !table.contains_key(end) {
                return Err(StatechartError::UnknownStateInTransition(end.clone()));
            }
        }
        if t.event_name.is_empty() {
            return Err(StatechartError::EmptyEventName);
        }
        let key = (t.from.clone(), t.event_name.clone());
        if by_key.contains_key(&key) {
            return Err(StatechartError::AmbiguousTransition {
                from: t.from,
                event: t.event_name,
            });
        }
        by_key.insert(key, t);
    }

    Ok(Statechart {
        root,
        nodes: table,
        transitions: by_key,
    })
}

impl Statechart {
    pub fn root(&self) -> &StateId {
        &self.root
    }

    pub fn contains(&self, id: &StateId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn is_leaf(&self, id: &StateId) -> bool {
        self.nodes.get(id).is_some_and(|n| n.children.is_empty())
    }

    pub fn kind(&self, id: &StateId) -> Option<StateKind> {
        self.nodes.get(id).map(|n| n.kind)
    }

    pub fn is_marked_important(&self, id: &StateId) -> bool {
        self.nodes.get(id).is_some_and(|n| n.important)
    }

    /// All states, in path order.
    pub fn states(&self) -> impl Iterator<Item = &StateId> {
        self.nodes.keys()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &StateId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.children.is_empty())
            .map(|(id, _)| id)
    }

    pub fn important_states(&self) -> BTreeSet<StateId> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.important)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Transitions in `(from, event)` order.
    pub fn transitions(&self) -> impl Iterator<Item = &TransitionDef> {
        self.transitions.values()
    }

    /// The transition a state itself declares for `event`, ignoring ancestors.
    pub fn transition_from(&self, from: &StateId, event: &str) -> Option<&TransitionDef> {
        self.transitions.get(&(from.clone(), event.to_string()))
    }

    /// Follows initial-child links down to a leaf.
    pub fn descend(&self, id: &StateId) -> StateId {
        let mut cur = id.clone();
        while let Some(next) = self.nodes.get(&cur).and_then(|n| n.initial.clone()) {
            cur = next;
        }
        cur
    }

    pub fn initial_state(&self) -> MachineState {
        MachineState {
            active: self.descend(&self.root),
        }
    }

    /// Places a machine in `leaf`. Returns `None` if `leaf` is not a leaf of
    /// this statechart.
    pub fn machine_at(&self, leaf: &StateId) -> Option<MachineState> {
        self.is_leaf(leaf).then(|| MachineState {
            active: leaf.clone(),
        })
    }

    /// Dispatches `ev` innermost-first. An unhandled event leaves the machine
    /// unchanged and reports no fired transition.
    pub fn step(&self, ms: &MachineState, ev: &EventDef) -> (MachineState, Option<TransitionDef>) {
        for scope in ms.active.ancestors_or_self() {
            if let Some(t) = self.transitions.get(&(scope, ev.name.clone())) {
                let next = MachineState {
                    active: self.descend(&t.to),
                };
                return (next, Some(t.clone()));
            }
        }
        (ms.clone(), None)
    }

    /// The handler `step` would pick for `event` from `leaf`, if any.
    pub fn handler_for(&self, leaf: &StateId, event: &str) -> Option<&TransitionDef> {
        leaf.ancestors_or_self()
            .find_map(|scope| self.transitions.get(&(scope, event.to_string())))
    }

    /// Serializes to the JSON document format, keys sorted, pretty-printed,
    /// with a trailing newline.
    pub fn to_json(&self) -> String {
        let doc = StatechartDoc {
            states: self.doc_node(&self.root),
            transitions: self.transitions.values().cloned().collect(),
        };
        let value = serde_json::to_value(&doc).expect("statechart documents serialize");
        let mut out = serde_json::to_string_pretty(&value).expect("values serialize");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Statechart, StatechartError> {
        let doc: StatechartDoc =
            serde_json::from_str(text).map_err(|e| StatechartError::Document(e.to_string()))?;
        let root = doc.states.into_node(None)?;
        build_statechart(vec![root], doc.transitions)
    }

    fn doc_node(&self, id: &StateId) -> DocState {
        let info = &self.nodes[id];
        DocState {
            name: id.name().to_string(),
            kind: info.kind,
            important: info.important,
            initial: info.initial.as_ref().map(|i| i.name().to_string()),
            children: info.children.iter().map(|c| self.doc_node(c)).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatechartDoc {
    states: DocState,
    transitions: Vec<TransitionDef>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocState {
    name: String,
    #[serde(default)]
    kind: StateKind,
    #[serde(default)]
    important: bool,
    #[serde(default)]
    initial: Option<String>,
    #[serde(default)]
    children: Vec<DocState>,
}

impl DocState {
    fn into_node(self, parent: Option<&StateId>) -> Result<StateNode, StatechartError> {
        let id = match parent {
            Some(p) => p.child(&self.name)?,
            None => StateId::new([self.name.as_str()])?,
        };
        let initial_child = self.initial.as_deref().map(|n| id.child(n)).transpose()?;
        let children = self
            .children
            .into_iter()
            .map(|c| c.into_node(Some(&id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StateNode {
            id,
            kind: self.kind,
            important: self.important,
            initial_child,
            children,
        })
    }
}
