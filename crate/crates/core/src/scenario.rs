//! The pick-and-place evaluation world.
//!
//! A robot fetches an object from a table and places it elsewhere while a
//! human may walk in, hang around the entrance, reach for objects on the
//! table, or leave. Failures can be injected into individual substates. Each
//! episode is monitored exactly as a real execution would be: fired
//! transitions go through the importance filter onto the event bus, and every
//! change of the important state is learned into the transition store and
//! optionally handed to a prediction hook.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::monitor::{
    log_transition, snapshot_environment, ChangeDetector, EnvironmentModel, EventBus, LoggerConfig,
    MonitorError, TransitionEvent,
};
use crate::params::{ParameterSet, Value};
use crate::statechart::{
    build_statechart, EventDef, StateId, StateKind, StateNode, Statechart, TransitionDef,
};
use crate::worldstore::{StoreError, TransitionStore, WorldState, WorldStateId};

/// Bus topic the episode runner publishes logged transitions on.
pub const TRANSITION_TOPIC: &str = "statechart.transitions";

/// Share of injected grasp failures that the explicit error handler catches;
/// the rest go to `Failure` like any other substate failure.
pub const GRASP_ERROR_HANDLED_SHARE: f64 = 0.5;

/// Hard stop for runaway episodes.
pub const MAX_TICKS: usize = 10_000;

const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("episode did not terminate within {0} ticks")]
    TickLimit(usize),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn sid(path: &str) -> StateId {
    path.parse().expect("static state path")
}

/// The pick-and-place statechart, including explicit transitions to each
/// task's `Failure` state from every non-terminal substate.
pub fn pick_and_place_statechart() -> Statechart {
    let leaf = |p: &str| StateNode::new(sid(p)).important(true);
    let visual_servo = StateNode::new(sid("root/PickTask/VisualServo"))
        .important(true)
        .with_children(vec![
            StateNode::new(sid("root/PickTask/VisualServo/Localize")),
            StateNode::new(sid("root/PickTask/VisualServo/Approach")),
        ]);
    let pick = StateNode::new(sid("root/PickTask")).with_children(vec![
        leaf("root/PickTask/MoveToLocation"),
        leaf("root/PickTask/FindObject"),
        visual_servo,
        leaf("root/PickTask/GraspObject"),
        leaf("root/PickTask/GraspErrorHandling"),
        leaf("root/PickTask/LiftObject"),
        leaf("root/PickTask/Success").with_kind(StateKind::Success),
        leaf("root/PickTask/Failure").with_kind(StateKind::Failure),
    ]);
    let place = StateNode::new(sid("root/PlaceTask")).with_children(vec![
        leaf("root/PlaceTask/MoveToLocation"),
        leaf("root/PlaceTask/PlaceObject"),
        leaf("root/PlaceTask/ReleaseGrasp"),
        leaf("root/PlaceTask/LiftHand"),
        leaf("root/PlaceTask/Success").with_kind(StateKind::Success),
        leaf("root/PlaceTask/Failure").with_kind(StateKind::Failure),
    ]);
    let root = StateNode::new(sid("root")).with_children(vec![
        leaf("root/Idle"),
        pick,
        place,
        leaf("root/Dialog"),
    ]);

    let mut transitions: Vec<TransitionDef> = [
        ("root/Idle", "start", "root/PickTask"),
        (
            "root/PickTask/MoveToLocation",
            "arrived",
            "root/PickTask/FindObject",
        ),
        (
            "root/PickTask/FindObject",
            "object_found",
            "root/PickTask/VisualServo",
        ),
        (
            "root/PickTask/VisualServo/Localize",
            "hand_localized",
            "root/PickTask/VisualServo/Approach",
        ),
        (
            "root/PickTask/VisualServo/Approach",
            "object_reached",
            "root/PickTask/GraspObject",
        ),
        (
            "root/PickTask/GraspObject",
            "grasped",
            "root/PickTask/LiftObject",
        ),
        (
            "root/PickTask/GraspObject",
            "grasp_error",
            "root/PickTask/GraspErrorHandling",
        ),
        (
            "root/PickTask/GraspErrorHandling",
            "retry",
            "root/PickTask/VisualServo",
        ),
        (
            "root/PickTask/LiftObject",
            "lifted",
            "root/PickTask/Success",
        ),
        ("root/PickTask", "done", "root/PlaceTask"),
        ("root/PickTask", "object_taken", "root/Dialog"),
        (
            "root/PlaceTask/MoveToLocation",
            "arrived",
            "root/PlaceTask/PlaceObject",
        ),
        (
            "root/PlaceTask/PlaceObject",
            "placed",
            "root/PlaceTask/ReleaseGrasp",
        ),
        (
            "root/PlaceTask/PlaceObject",
            "human_nearby",
            "root/PlaceTask/MoveToLocation",
        ),
        (
            "root/PlaceTask/ReleaseGrasp",
            "released",
            "root/PlaceTask/LiftHand",
        ),
        (
            "root/PlaceTask/LiftHand",
            "hand_lifted",
            "root/PlaceTask/Success",
        ),
    ]
    .into_iter()
    .map(|(f, e, t)| TransitionDef::new(sid(f), e, sid(t)))
    .collect();

    let failing_leaves = [
        ("root/PickTask", "MoveToLocation"),
        ("root/PickTask", "FindObject"),
        ("root/PickTask", "VisualServo/Localize"),
        ("root/PickTask", "VisualServo/Approach"),
        ("root/PickTask", "GraspObject"),
        ("root/PickTask", "GraspErrorHandling"),
        ("root/PickTask", "LiftObject"),
        ("root/PlaceTask", "MoveToLocation"),
        ("root/PlaceTask", "PlaceObject"),
        ("root/PlaceTask", "ReleaseGrasp"),
        ("root/PlaceTask", "LiftHand"),
    ];
    for (task, rel) in failing_leaves {
        transitions.push(TransitionDef::new(
            sid(&format!("{task}/{rel}")),
            "failure",
            sid(&format!("{task}/Failure")),
        ));
    }

    build_statechart(vec![root], transitions).expect("pick-and-place statechart is valid")
}

/// Event that completes the work of `leaf` when nothing interferes. `None`
/// marks the end of an episode.
pub fn nominal_event(leaf: &StateId) -> Option<&'static str> {
    let path = leaf.to_string();
    let ev = match path.as_str() {
        "root/Idle" => "start",
        "root/PickTask/MoveToLocation" | "root/PlaceTask/MoveToLocation" => "arrived",
        "root/PickTask/FindObject" => "object_found",
        "root/PickTask/VisualServo/Localize" => "hand_localized",
        "root/PickTask/VisualServo/Approach" => "object_reached",
        "root/PickTask/GraspObject" => "grasped",
        "root/PickTask/GraspErrorHandling" => "retry",
        "root/PickTask/LiftObject" => "lifted",
        "root/PickTask/Success" => "done",
        "root/PlaceTask/PlaceObject" => "placed",
        "root/PlaceTask/ReleaseGrasp" => "released",
        "root/PlaceTask/LiftHand" => "hand_lifted",
        _ => return None,
    };
    Some(ev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanAction {
    EnterAndStay,
    WalkAndGrasp,
    Leave,
}

impl HumanAction {
    pub const ALL: [HumanAction; 3] = [
        HumanAction::EnterAndStay,
        HumanAction::WalkAndGrasp,
        HumanAction::Leave,
    ];

    pub fn token(self) -> &'static str {
        match self {
            HumanAction::EnterAndStay => "enter_and_stay",
            HumanAction::WalkAndGrasp => "walk_and_grasp",
            HumanAction::Leave => "leave",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        HumanAction::ALL.into_iter().find(|a| a.token() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanIdentity {
    pub id: String,
    pub weight: f64,
}

/// Parameters of the human operator automaton.
///
/// An absent human walks in with probability `p_arrive` per tick. A present
/// human decides each tick between staying near the entrance, walking to the
/// table to grasp something, and leaving. When grasping, the robot's object
/// is picked with probability `p_grasp_robot_object`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanModelConfig {
    pub p_arrive: f64,
    pub p_enter_stay: f64,
    pub p_walk_and_grasp: f64,
    pub p_leave: f64,
    pub p_grasp_robot_object: f64,
    pub human_ids: Vec<HumanIdentity>,
}

impl Default for HumanModelConfig {
    fn default() -> Self {
        HumanModelConfig {
            p_arrive: 0.2,
            p_enter_stay: 0.6,
            p_walk_and_grasp: 0.25,
            p_leave: 0.15,
            p_grasp_robot_object: 0.5,
            human_ids: vec![
                HumanIdentity {
                    id: "alice".into(),
                    weight: 0.7,
                },
                HumanIdentity {
                    id: "bob".into(),
                    weight: 0.3,
                },
            ],
        }
    }
}

impl HumanModelConfig {
    /// A model where nobody ever shows up.
    pub fn absent() -> Self {
        HumanModelConfig {
            p_arrive: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        for (name, p) in [
            ("p_arrive", self.p_arrive),
            ("p_enter_stay", self.p_enter_stay),
            ("p_walk_and_grasp", self.p_walk_and_grasp),
            ("p_leave", self.p_leave),
            ("p_grasp_robot_object", self.p_grasp_robot_object),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        let sum = self.p_enter_stay + self.p_walk_and_grasp + self.p_leave;
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return bad(format!("human action probabilities sum to {sum}, not 1"));
        }
        if self.human_ids.is_empty() {
            return bad("human_ids must not be empty".into());
        }
        let mut seen = BTreeSet::new();
        for h in &self.human_ids {
            if h.id.is_empty() || !seen.insert(h.id.as_str()) {
                return bad(format!("human id `{}` is empty or duplicated", h.id));
            }
            if !(h.weight.is_finite() && h.weight > 0.0) {
                return bad(format!("human `{}` has non-positive weight", h.id));
            }
        }
        Ok(())
    }
}

/// What the human automaton is currently doing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum HumanState {
    #[default]
    Absent,
    Present {
        id: String,
    },
}

/// Sampling tables compiled from a validated [`HumanModelConfig`].
#[derive(Debug, Clone)]
pub struct HumanModel {
    cfg: HumanModelConfig,
    actions: WeightedIndex<f64>,
    ids: WeightedIndex<f64>,
}

impl HumanModel {
    pub fn new(cfg: &HumanModelConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let invalid = |e: rand::distr::weighted::Error| ScenarioError::InvalidConfig(e.to_string());
        let actions = WeightedIndex::new([cfg.p_enter_stay, cfg.p_walk_and_grasp, cfg.p_leave])
            .map_err(invalid)?;
        let ids = WeightedIndex::new(cfg.human_ids.iter().map(|h| h.weight)).map_err(invalid)?;
        Ok(HumanModel {
            cfg: cfg.clone(),
            actions,
            ids,
        })
    }

    /// One tick of the human automaton. Returns a `human_action` event whose
    /// payload carries `human_action`, `human_id` and, for grasps,
    /// `grasp_target` (`robot_object` or `other_object`).
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, state: &mut HumanState) -> Option<EventDef> {
        let id = match state {
            HumanState::Present { id } => id.clone(),
            HumanState::Absent => {
                if !rng.random_bool(self.cfg.p_arrive) {
                    return None;
                }
                self.cfg.human_ids[self.ids.sample(rng)].id.clone()
            }
        };
        let action = HumanAction::ALL[self.actions.sample(rng)];
        let mut payload = ParameterSet::new();
        payload.set("human_action", action.token());
        payload.set("human_id", id.as_str());
        if action == HumanAction::WalkAndGrasp {
            let target = if rng.random_bool(self.cfg.p_grasp_robot_object) {
                "robot_object"
            } else {
                "other_object"
            };
            payload.set("grasp_target", target);
        }
        *state = match action {
            HumanAction::Leave => HumanState::Absent,
            _ => HumanState::Present { id },
        };
        Some(EventDef::with_payload("human_action", payload))
    }
}

/// Convenience wrapper compiling the model on every call.
pub fn human_step<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &HumanModelConfig,
    state: &mut HumanState,
) -> Result<Option<EventDef>, ScenarioError> {
    Ok(HumanModel::new(cfg)?.step(rng, state))
}

/// Everything that defines a simulated run, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub human: HumanModelConfig,
    pub p_failure_per_substate: f64,
    #[serde(default)]
    pub failures_enabled: bool,
    pub seed: u64,
    pub horizon: usize,
    pub important_states: Vec<StateId>,
    pub env_keys: Vec<String>,
    /// Parameters of the state being executed, keyed by the state (or an
    /// ancestor) they apply to.
    #[serde(default)]
    pub state_params: BTreeMap<StateId, ParameterSet>,
    /// Path of a profile table; relative paths resolve against the CWD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut state_params = BTreeMap::new();
        state_params.insert(
            sid("root/PickTask"),
            ParameterSet::from_pairs([("object", "cup")]).expect("static params"),
        );
        state_params.insert(
            sid("root/PlaceTask"),
            ParameterSet::from_pairs([("target", "sidebar")]).expect("static params"),
        );
        ScenarioConfig {
            human: HumanModelConfig::default(),
            p_failure_per_substate: 0.3,
            failures_enabled: false,
            seed: 7,
            horizon: 3,
            important_states: pick_and_place_statechart()
                .important_states()
                .into_iter()
                .collect(),
            env_keys: [
                "human_present",
                "human_action",
                "human_id",
                "object_location",
            ]
            .map(String::from)
            .to_vec(),
            state_params,
            profiles: None,
        }
    }
}

impl ScenarioConfig {
    /// No human, no failures: the task runs straight through.
    pub fn deterministic() -> Self {
        ScenarioConfig {
            human: HumanModelConfig::absent(),
            failures_enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.human.validate()?;
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.p_failure_per_substate) {
            return bad(format!(
                "p_failure_per_substate = {} is not a probability",
                self.p_failure_per_substate
            ));
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        let mut keys = BTreeSet::new();
        for k in &self.env_keys {
            if k.is_empty() || !keys.insert(k) {
                return bad(format!("env key `{k}` is empty or duplicated"));
            }
        }
        Ok(())
    }

    /// Canonical JSON: sorted keys, pretty-printed, trailing newline.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("configs serialize");
        let mut out = serde_json::to_string_pretty(&v).expect("values serialize");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        ScenarioConfig::from_json(&text)
    }

    /// SHA-256 of the compact canonical JSON, hex encoded.
    pub fn digest(&self) -> String {
        let v = serde_json::to_value(self).expect("configs serialize");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    /// `φ` for a state: the parameters registered on its nearest
    /// ancestor-or-self.
    pub fn params_for(&self, state: &StateId) -> ParameterSet {
        state
            .ancestors_or_self()
            .find_map(|s| self.state_params.get(&s).cloned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    AbortedByHuman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub episode_id: u64,
    /// Logged (importance-filtered) transitions in publication order.
    pub events: Vec<TransitionEvent>,
    /// The initial world state followed by one entry per important-state
    /// change.
    pub world_states: Vec<WorldState>,
    pub outcome: Outcome,
}

impl EpisodeTrace {
    /// Important states visited, starting with the initial one.
    pub fn important_states(&self) -> Vec<StateId> {
        self.world_states
            .iter()
            .map(|ws| ws.state.clone())
            .collect()
    }

    /// One JSON line per logged event, for trace dumps.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            let line = serde_json::json!({
                "episode": self.episode_id,
                "seq": ev.sequence_no,
                "event": ev.fired.event_name,
                "from": ev.from_leaf.to_string(),
                "to": ev.to_leaf.to_string(),
                "phi": ev.state_params.to_json(),
                "psi": ev.env_snapshot.to_json(),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        let end = serde_json::json!({
            "episode": self.episode_id,
            "outcome": self.outcome,
            "world_states": self.world_states.len(),
        });
        out.push_str(&end.to_string());
        out.push('\n');
        out
    }
}

/// Called on every important-state change after the change is learned.
pub trait PredictHook {
    fn on_state_change(&mut self, store: &TransitionStore, current: WorldStateId, ws: &WorldState);
}

impl<F: FnMut(&TransitionStore, WorldStateId, &WorldState)> PredictHook for F {
    fn on_state_change(&mut self, store: &TransitionStore, current: WorldStateId, ws: &WorldState) {
        self(store, current, ws)
    }
}

/// A validated configuration bound to the statechart it drives.
#[derive(Debug, Clone)]
pub struct Scenario {
    cfg: ScenarioConfig,
    statechart: Statechart,
    logger: LoggerConfig,
    human: HumanModel,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let statechart = pick_and_place_statechart();
        let logger = LoggerConfig::new(&statechart, cfg.important_states.iter().cloned())?;
        let human = HumanModel::new(&cfg.human)?;
        Ok(Scenario {
            cfg,
            statechart,
            logger,
            human,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn statechart(&self) -> &Statechart {
        &self.statechart
    }

    pub fn logger(&self) -> &LoggerConfig {
        &self.logger
    }

    /// Runs one task execution, learning every important-state change into
    /// `store`.
    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        episode_id: u64,
        store: &mut TransitionStore,
        rng: &mut R,
        mut hook: Option<&mut dyn PredictHook>,
    ) -> Result<EpisodeTrace, ScenarioError> {
        let sc = &self.statechart;
        let bus = EventBus::new();
        let sub = bus.subscribe(TRANSITION_TOPIC);

        let mut env = EnvironmentModel::new();
        env.set("human_present", false);
        env.set("human_action", "none");
        env.set("human_id", "none");
        env.set("object_location", "table");
        let mut human = HumanState::Absent;

        let mut ms = sc.initial_state();
        let start_scope = self
            .logger
            .important_scope(ms.active())
            .unwrap_or_else(|| ms.active().clone());
        let initial = WorldState::new(
            start_scope.clone(),
            self.cfg.params_for(&start_scope),
            snapshot_environment(&env, &self.cfg.env_keys)?,
        );
        let mut prev = store.intern(initial.clone());
        let mut detector = ChangeDetector::new(Some(start_scope));
        let mut world_states = vec![initial];
        let mut events = Vec::new();
        let mut seq = 0u64;

        for _ in 0..MAX_TICKS {
            let leaf = ms.active().clone();
            let Some(nominal) = nominal_event(&leaf) else {
                let outcome = match sc.kind(&leaf) {
                    Some(StateKind::Failure) => Outcome::Failure,
                    Some(StateKind::Success) => Outcome::Success,
                    _ => Outcome::AbortedByHuman,
                };
                return Ok(EpisodeTrace {
                    episode_id,
                    events,
                    world_states,
                    outcome,
                });
            };

            let robot_event = match self.human.step(rng, &mut human) {
                Some(ev) => self.apply_human(&ev, &leaf, &mut env),
                None => None,
            };
            let robot_event = robot_event
                .or_else(|| self.inject_failure(&leaf, rng))
                .unwrap_or(nominal);

            let (next, fired) = sc.step(&ms, &EventDef::new(robot_event));
            if let Some(fired) = fired {
                apply_entry_effects(next.active(), robot_event, &mut env);
                let te = TransitionEvent {
                    fired,
                    from_leaf: leaf,
                    to_leaf: next.active().clone(),
                    state_params: self.cfg.params_for(next.active()),
                    env_snapshot: snapshot_environment(&env, &self.cfg.env_keys)?,
                    sequence_no: seq,
                };
                seq += 1;
                if let Some(logged) = log_transition(&self.logger, &te) {
                    bus.publish(TRANSITION_TOPIC, &logged);
                }
            }
            ms = next;

            for ev in sub.drain() {
                if detector.observe(&ev) {
                    let ws = WorldState::new(
                        ev.to_leaf.clone(),
                        ev.state_params.clone(),
                        ev.env_snapshot.clone(),
                    );
                    let id = store.intern(ws.clone());
                    store.record_transition(prev, id)?;
                    prev = id;
                    if let Some(h) = hook.as_deref_mut() {
                        h.on_state_change(store, id, &ws);
                    }
                    world_states.push(ws);
                }
                events.push(ev);
            }
        }
        Err(ScenarioError::TickLimit(MAX_TICKS))
    }

    /// Updates the environment for a human action and returns the robot
    /// event it provokes, if any.
    fn apply_human(
        &self,
        ev: &EventDef,
        leaf: &StateId,
        env: &mut EnvironmentModel,
    ) -> Option<&'static str> {
        let action = ev
            .payload
            .get("human_action")
            .and_then(Value::as_token)
            .and_then(HumanAction::from_token)?;
        let id = ev
            .payload
            .get("human_id")
            .cloned()
            .unwrap_or(Value::token("none"));
        if action == HumanAction::Leave {
            env.set("human_present", false);
            env.set("human_action", "none");
            env.set("human_id", "none");
            return None;
        }
        env.set("human_present", true);
        env.set("human_action", action.token());
        env.set("human_id", id);
        if action != HumanAction::WalkAndGrasp {
            return None;
        }
        let takes_robot_object = ev.payload.get("grasp_target").and_then(Value::as_token)
            == Some("robot_object")
            && env.get("object_location").and_then(Value::as_token) == Some("table");
        if takes_robot_object && self.statechart.handler_for(leaf, "object_taken").is_some() {
            Some("object_taken")
        } else if self.statechart.handler_for(leaf, "human_nearby").is_some() {
            Some("human_nearby")
        } else {
            None
        }
    }

    fn inject_failure<R: Rng + ?Sized>(&self, leaf: &StateId, rng: &mut R) -> Option<&'static str> {
        if !self.cfg.failures_enabled
            || self.statechart.kind(leaf) != Some(StateKind::Normal)
            || self.statechart.transition_from(leaf, "failure").is_none()
        {
            return None;
        }
        if !rng.random_bool(self.cfg.p_failure_per_substate) {
            return None;
        }
        if self
            .statechart
            .transition_from(leaf, "grasp_error")
            .is_some()
            && rng.random_bool(GRASP_ERROR_HANDLED_SHARE)
        {
            return Some("grasp_error");
        }
        Some("failure")
    }

    /// Runs `n_episodes` learning episodes without prediction.
    pub fn train<R: Rng + ?Sized>(
        &self,
        store: &mut TransitionStore,
        rng: &mut R,
        n_episodes: usize,
    ) -> Result<Vec<Outcome>, ScenarioError> {
        if n_episodes < 1 {
            return Err(ScenarioError::InvalidConfig(
                "n_episodes must be at least 1".into(),
            ));
        }
        (0..n_episodes)
            .map(|i| {
                let outcome = self.run_episode(i as u64, store, rng, None)?.outcome;
                log::debug!(
                    "training episode {i}: {outcome:?}, {} world states",
                    store.len()
                );
                Ok(outcome)
            })
            .collect()
    }
}

fn apply_entry_effects(entered: &StateId, event: &str, env: &mut EnvironmentModel) {
    if event == "object_taken" {
        env.set("object_location", "human");
        return;
    }
    match entered.to_string().as_str() {
        "root/PickTask/LiftObject" => env.set("object_location", "hand"),
        "root/PlaceTask/LiftHand" => env.set("object_location", "placed"),
        _ => {}
    }
}

pub fn run_episode<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    store: &mut TransitionStore,
    rng: &mut R,
    predict_hook: Option<&mut dyn PredictHook>,
) -> Result<EpisodeTrace, ScenarioError> {
    Scenario::new(cfg.clone())?.run_episode(0, store, rng, predict_hook)
}

pub fn train<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    store: &mut TransitionStore,
    rng: &mut R,
    n_episodes: usize,
) -> Result<(), ScenarioError> {
    Scenario::new(cfg.clone())?
        .train(store, rng, n_episodes)
        .map(|_| ())
}

/// Important-state sequence of an uninterrupted run: go to the table, locate
/// the object, reach it, grasp and lift it, go elsewhere, place it, release
/// the grasp and lift the hand.
pub fn canonical_sequence() -> Vec<StateId> {
    [
        "root/Idle",
        "root/PickTask/MoveToLocation",
        "root/PickTask/FindObject",
        "root/PickTask/VisualServo",
        "root/PickTask/GraspObject",
        "root/PickTask/LiftObject",
        "root/PickTask/Success",
        "root/PlaceTask/MoveToLocation",
        "root/PlaceTask/PlaceObject",
        "root/PlaceTask/ReleaseGrasp",
        "root/PlaceTask/LiftHand",
        "root/PlaceTask/Success",
    ]
    .into_iter()
    .map(sid)
    .collect()
}
