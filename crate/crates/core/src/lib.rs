//! Context-aware prediction of statechart execution and resource demand.
//!
//! A robot program runs as a hierarchical statechart. Every time the active
//! *important* state changes, a world state (the state, its parameters and
//! a snapshot of the environment) is recorded and the transition from the
//! previous world state is counted. Normalized counts form a first-order
//! Markov chain that forecasts the next few world states; attaching CPU and
//! memory profiles to the predicted states turns that forecast into a
//! resource envelope.
//!
//! ```
//! use statepredict::predictor::{build_matrix, predict};
//! use statepredict::worldstore::{TransitionStore, WorldState};
//!
//! let mut store = TransitionStore::new();
//! let a = store.intern(WorldState::bare("root/A".parse()?));
//! let b = store.intern(WorldState::bare("root/B".parse()?));
//! store.record_transition(a, b)?;
//! store.record_transition(b, a)?;
//!
//! let m = build_matrix(&store)?;
//! let steps = predict(a, 2, &m)?;
//! assert_eq!(steps[0].top, b);
//! assert_eq!(steps[1].top, a);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! The `book/` directory next to the workspace explains the model in more
//! depth; its code listings are compiled and run as doctests of this crate.

pub mod evaluate;
pub mod monitor;
pub mod params;
pub mod predictor;
pub mod resources;
pub mod scenario;
pub mod statechart;
pub mod worldstore;

pub use evaluate::{EvalReport, MatchCriterion};
pub use params::{ParameterSet, Value};
pub use predictor::{PredictionStep, ProbabilityVector, TransitionMatrix};
pub use resources::{EnvelopeStep, ProfileTable, ResourceProfile};
pub use scenario::{EpisodeTrace, ScenarioConfig};
pub use statechart::{StateId, Statechart};
pub use worldstore::{TransitionStore, WorldState, WorldStateId};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for `seed`; independent `stream`s give
/// non-overlapping sequences from one seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Compiles every Rust listing in the book as a doctest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/world-states.md")]
    mod world_states {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/online-learning.md")]
    mod online_learning {}
    #[doc = include_str!("../../../book/src/monitoring.md")]
    mod monitoring {}
    #[doc = include_str!("../../../book/src/resources.md")]
    mod resources {}
    #[doc = include_str!("../../../book/src/scenario.md")]
    mod scenario {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
