//! Resource profiles and probability-weighted resource envelopes.
//!
//! Each statechart state carries a CPU/memory profile. For every predicted
//! step, world states are ranked by probability and the shortest prefix whose
//! cumulative probability reaches the threshold is kept. The envelope reports
//! the minimum and maximum profile values over that prefix together with the
//! profile of the single most probable world state.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::PredictionStep;
use crate::statechart::StateId;
use crate::worldstore::{TransitionStore, WorldStateId};

pub const DEFAULT_THRESHOLD: f64 = 0.75;
pub const CPU_RANGE: (f64, f64) = (0.0, 100.0);
pub const MEMORY_RANGE_MB: (f64, f64) = (0.0, 1000.0);

pub const ENVELOPE_CSV_HEADER: &str =
    "step,cpu_min,cpu_most,cpu_max,mem_min,mem_most,mem_max,covered_probability";

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("profile for `{state}` out of range: cpu {cpu_percent}%, memory {memory_mb} MB")]
    InvalidProfile {
        state: String,
        cpu_percent: f64,
        memory_mb: f64,
    },
    #[error("no prediction steps given")]
    EmptyPrediction,
    #[error("malformed profile table: {0}")]
    Malformed(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceProfile {
    pub cpu_percent: f64,
    pub memory_mb: f64,
}

impl ResourceProfile {
    pub fn new(cpu_percent: f64, memory_mb: f64) -> Result<Self, ResourceError> {
        let p = ResourceProfile {
            cpu_percent,
            memory_mb,
        };
        p.validate("<profile>")?;
        Ok(p)
    }

    fn validate(&self, state: &str) -> Result<(), ResourceError> {
        let within = |v: f64, (lo, hi): (f64, f64)| v.is_finite() && v >= lo && v <= hi;
        if within(self.cpu_percent, CPU_RANGE) && within(self.memory_mb, MEMORY_RANGE_MB) {
            Ok(())
        } else {
            Err(ResourceError::InvalidProfile {
                state: state.to_string(),
                cpu_percent: self.cpu_percent,
                memory_mb: self.memory_mb,
            })
        }
    }
}

/// State → profile mapping with a fallback for unmapped states.
///
/// Lookup walks from the state up through its ancestors, so a profile on a
/// composite state covers its substates unless they have their own.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub default: ResourceProfile,
    pub profiles: BTreeMap<StateId, ResourceProfile>,
}

impl ProfileTable {
    pub fn new(default: ResourceProfile) -> Self {
        ProfileTable {
            default,
            profiles: BTreeMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        state: StateId,
        profile: ResourceProfile,
    ) -> Result<(), ResourceError> {
        profile.validate(&state.to_string())?;
        self.profiles.insert(state, profile);
        Ok(())
    }

    pub fn lookup(&self, state: &StateId) -> ResourceProfile {
        state
            .ancestors_or_self()
            .find_map(|s| self.profiles.get(&s).copied())
            .unwrap_or(self.default)
    }

    /// Illustrative profiles for the pick-and-place statechart. The numbers
    /// are plausible guesses, not measurements.
    pub fn pick_and_place_example() -> Self {
        let entries: [(&str, f64, f64); 17] = [
            ("root/Idle", 5.0, 120.0),
            ("root/Dialog", 15.0, 220.0),
            ("root/PickTask/MoveToLocation", 30.0, 250.0),
            ("root/PickTask/FindObject", 60.0, 520.0),
            ("root/PickTask/VisualServo", 85.0, 600.0),
            ("root/PickTask/GraspObject", 75.0, 480.0),
            ("root/PickTask/GraspErrorHandling", 45.0, 320.0),
            ("root/PickTask/LiftObject", 55.0, 380.0),
            ("root/PickTask/Success", 0.0, 0.0),
            ("root/PickTask/Failure", 10.0, 150.0),
            ("root/PlaceTask/MoveToLocation", 30.0, 250.0),
            ("root/PlaceTask/PlaceObject", 50.0, 360.0),
            ("root/PlaceTask/ReleaseGrasp", 25.0, 200.0),
            ("root/PlaceTask/LiftHand", 20.0, 180.0),
            ("root/PlaceTask/Success", 0.0, 0.0),
            ("root/PlaceTask/Failure", 10.0, 150.0),
            ("root/PickTask", 40.0, 300.0),
        ];
        let mut t = ProfileTable::new(ResourceProfile {
            cpu_percent: 10.0,
            memory_mb: 100.0,
        });
        for (path, cpu, mem) in entries {
            t.insert(
                path.parse().expect("static path"),
                ResourceProfile::new(cpu, mem).expect("static profile"),
            )
            .expect("static profile");
        }
        t
    }

    /// JSON object mapping state paths to profiles, plus a `default` entry.
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert(
            "default".into(),
            serde_json::to_value(self.default).expect("profiles serialize"),
        );
        for (state, p) in &self.profiles {
            map.insert(
                state.to_string(),
                serde_json::to_value(p).expect("profiles serialize"),
            );
        }
        let mut out = serde_json::to_string_pretty(&serde_json::Value::Object(map))
            .expect("values serialize");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ResourceError> {
        let raw: BTreeMap<String, ResourceProfile> =
            serde_json::from_str(text).map_err(|e| ResourceError::Malformed(e.to_string()))?;
        let mut raw = raw;
        let default = raw
            .remove("default")
            .ok_or_else(|| ResourceError::Malformed("missing `default` profile".into()))?;
        default.validate("default")?;
        let mut table = ProfileTable::new(default);
        for (path, p) in raw {
            let state: StateId = path
                .parse()
                .map_err(|e| ResourceError::Malformed(format!("{e}")))?;
            table.insert(state, p)?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ResourceError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        ProfileTable::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub min: f64,
    pub most: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeStep {
    pub step: usize,
    pub cpu: Band,
    pub mem: Band,
    pub covered_probability: f64,
    /// World states of the selected prefix, most probable first.
    pub selected: Vec<(WorldStateId, f64)>,
}

/// Length of the shortest prefix of `probs` (already sorted descending) whose
/// sum reaches `threshold`, with that sum. Falls back to every positive entry
/// when rounding keeps the total just under the threshold.
pub fn minimal_prefix(probs: &[f64], threshold: f64) -> (usize, f64) {
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if cum >= threshold {
            return (i + 1, cum);
        }
    }
    let positive = probs.iter().take_while(|&&p| p > 0.0).count().max(1);
    (positive, probs[..positive].iter().sum())
}

pub fn envelope(
    steps: &[PredictionStep],
    store: &TransitionStore,
    table: &ProfileTable,
    threshold: f64,
) -> Result<Vec<EnvelopeStep>, ResourceError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ResourceError::InvalidThreshold(threshold));
    }
    if steps.is_empty() {
        return Err(ResourceError::EmptyPrediction);
    }
    let profile_of = |id: WorldStateId| {
        let ws = store
            .world_state(id)
            .expect("prediction steps only reference interned world states");
        table.lookup(&ws.state)
    };
    Ok(steps
        .iter()
        .map(|s| {
            let ranked = s.distribution.ranked();
            let probs: Vec<f64> = ranked.iter().map(|(_, p)| *p).collect();
            let (len, covered) = minimal_prefix(&probs, threshold);
            let selected = ranked[..len].to_vec();
            let most = profile_of(s.top);
            let mut cpu = Band {
                min: most.cpu_percent,
                most: most.cpu_percent,
                max: most.cpu_percent,
            };
            let mut mem = Band {
                min: most.memory_mb,
                most: most.memory_mb,
                max: most.memory_mb,
            };
            for &(id, _) in &selected {
                let p = profile_of(id);
                cpu.min = cpu.min.min(p.cpu_percent);
                cpu.max = cpu.max.max(p.cpu_percent);
                mem.min = mem.min.min(p.memory_mb);
                mem.max = mem.max.max(p.memory_mb);
            }
            EnvelopeStep {
                step: s.step,
                cpu,
                mem,
                covered_probability: covered,
                selected,
            }
        })
        .collect())
}

pub fn envelope_csv(env: &[EnvelopeStep]) -> String {
    let mut out = String::from(ENVELOPE_CSV_HEADER);
    out.push('\n');
    for e in env {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            e.step,
            e.cpu.min,
            e.cpu.most,
            e.cpu.max,
            e.mem.min,
            e.mem.most,
            e.mem.max,
            e.covered_probability
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn export_envelope(env: &[EnvelopeStep], path: impl AsRef<Path>) -> Result<(), ResourceError> {
    let path = path.as_ref();
    fs::write(path, envelope_csv(env)).map_err(|source| ResourceError::IoFailure {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{build_matrix, predict, ProbabilityVector};
    use crate::worldstore::WorldState;

    fn sid(s: &str) -> StateId {
        s.parse().unwrap()
    }

    fn step_over(dist: Vec<f64>) -> PredictionStep {
        let distribution = ProbabilityVector::new(dist).unwrap();
        PredictionStep {
            step: 1,
            top: distribution.argmax(),
            distribution,
        }
    }

    fn store_of(states: &[&str]) -> TransitionStore {
        let mut s = TransitionStore::new();
        for st in states {
            s.intern(WorldState::bare(sid(st)));
        }
        s
    }

    #[test]
    fn degenerate_distribution() {
        let store = store_of(&["root/A"]);
        let mut table = ProfileTable::new(ResourceProfile::new(0.0, 0.0).unwrap());
        table
            .insert(sid("root/A"), ResourceProfile::new(80.0, 400.0).unwrap())
            .unwrap();
        let m = build_matrix(&store).unwrap();
        let steps = predict(WorldStateId(0), 1, &m).unwrap();
        let env = envelope(&steps, &store, &table, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(
            env[0].cpu,
            Band {
                min: 80.0,
                most: 80.0,
                max: 80.0
            }
        );
        assert_eq!(
            env[0].mem,
            Band {
                min: 400.0,
                most: 400.0,
                max: 400.0
            }
        );
        assert_eq!(env[0].covered_probability, 1.0);
    }

    #[test]
    fn prefix_rule_with_tie_break() {
        // ids ascending: GraspObject, Failure, LiftObject
        let store = store_of(&[
            "root/PickTask/GraspObject",
            "root/PickTask/Failure",
            "root/PickTask/LiftObject",
        ]);
        let table = ProfileTable::pick_and_place_example();
        let env = envelope(&[step_over(vec![0.6, 0.2, 0.2])], &store, &table, 0.75).unwrap();
        let e = &env[0];
        let ids: Vec<usize> = e.selected.iter().map(|(id, _)| id.0).collect();
        assert_eq!(ids, vec![0, 1]);
        assert!((e.covered_probability - 0.8).abs() < 1e-12);
        let grasp = table.lookup(&sid("root/PickTask/GraspObject"));
        let failure = table.lookup(&sid("root/PickTask/Failure"));
        assert_eq!(e.cpu.most, grasp.cpu_percent);
        assert_eq!(e.cpu.min, grasp.cpu_percent.min(failure.cpu_percent));
        assert_eq!(e.cpu.max, grasp.cpu_percent.max(failure.cpu_percent));
    }

    #[test]
    fn invalid_thresholds() {
        let store = store_of(&["root/A"]);
        let table = ProfileTable::new(ResourceProfile::new(1.0, 1.0).unwrap());
        let steps = [step_over(vec![1.0])];
        for t in [0.0, -0.5, 1.01, f64::NAN] {
            assert!(matches!(
                envelope(&steps, &store, &table, t),
                Err(ResourceError::InvalidThreshold(_))
            ));
        }
        assert!(envelope(&steps, &store, &table, 1.0).is_ok());
        assert!(matches!(
            envelope(&[], &store, &table, 0.75),
            Err(ResourceError::EmptyPrediction)
        ));
    }

    #[test]
    fn profile_ranges_enforced() {
        assert!(ResourceProfile::new(100.0, 1000.0).is_ok());
        assert!(ResourceProfile::new(100.1, 10.0).is_err());
        assert!(ResourceProfile::new(10.0, 1000.5).is_err());
        assert!(ResourceProfile::new(-1.0, 10.0).is_err());
    }

    #[test]
    fn lookup_walks_ancestors() {
        let table = ProfileTable::pick_and_place_example();
        let vs = table.lookup(&sid("root/PickTask/VisualServo"));
        assert_eq!(table.lookup(&sid("root/PickTask/VisualServo/Approach")), vs);
        assert_eq!(table.lookup(&sid("root/Unknown")), table.default);
    }

    #[test]
    fn example_profiles_keep_qualitative_ordering() {
        let t = ProfileTable::pick_and_place_example();
        let cpu = |s: &str| t.lookup(&sid(s)).cpu_percent;
        // failure < explicit error handling < lifting
        assert!(cpu("root/PickTask/Failure") < cpu("root/PickTask/GraspErrorHandling"));
        assert!(cpu("root/PickTask/GraspErrorHandling") < cpu("root/PickTask/LiftObject"));
        assert_eq!(cpu("root/PlaceTask/Success"), 0.0);
        assert!(cpu("root/PlaceTask/PlaceObject") > cpu("root/PlaceTask/Success"));
        let max_cpu = t
            .profiles
            .values()
            .map(|p| p.cpu_percent)
            .fold(0.0, f64::max);
        assert_eq!(cpu("root/PickTask/VisualServo"), max_cpu);
    }

    #[test]
    fn profile_table_json_round_trip() {
        let t = ProfileTable::pick_and_place_example();
        let text = t.to_json();
        assert_eq!(ProfileTable::from_json(&text).unwrap(), t);
        assert!(ProfileTable::from_json("{}").is_err());
        assert!(ProfileTable::from_json(
            r#"{"default":{"cpu_percent":1,"memory_mb":1},"root/A":{"cpu_percent":150,"memory_mb":1}}"#
        )
        .is_err());
    }

    #[test]
    fn csv_shape() {
        assert_eq!(envelope_csv(&[]), format!("{ENVELOPE_CSV_HEADER}\n"));
        let store = store_of(&["root/A", "root/B"]);
        let table = ProfileTable::new(ResourceProfile::new(12.5, 100.0).unwrap());
        let mut s = store.clone();
        s.record_transition(WorldStateId(0), WorldStateId(1))
            .unwrap();
        let steps = predict(WorldStateId(0), 3, &build_matrix(&s).unwrap()).unwrap();
        let csv = envelope_csv(&envelope(&steps, &store, &table, 0.75).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[1],
            "1,12.500000,12.500000,12.500000,100.000000,100.000000,100.000000,1.000000"
        );
        assert!(!csv.contains('\r'));
    }
}
