use proptest::prelude::*;
use statepredict::evaluate::{collect_predictions, evaluate, evaluate_table, MatchCriterion};
use statepredict::predictor::{build_matrix, predict};
use statepredict::scenario::{train, ScenarioConfig};
use statepredict::{seeded_rng, TransitionStore};

fn trained(seed: u64, episodes: usize) -> (ScenarioConfig, TransitionStore) {
    let cfg = ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    };
    let mut store = TransitionStore::new();
    train(&cfg, &mut store, &mut seeded_rng(seed, 0), episodes).unwrap();
    (cfg, store)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn w_match_never_beats_s_match(seed in 0u64..1000, failures: bool) {
        let (cfg, mut store) = trained(seed, 30);
        let r = evaluate(&cfg, &mut store, 5, &MatchCriterion::BOTH, failures, &mut seeded_rng(seed, 9)).unwrap();
        let s = r.row(MatchCriterion::SMatch, failures).unwrap();
        let w = r.row(MatchCriterion::WMatch, failures).unwrap();
        prop_assert!(w.predictions_correct <= s.predictions_correct);
        for row in &r.rows {
            prop_assert!((0.0..=100.0).contains(&row.precision_percent));
            prop_assert!(row.predictions_total > 0);
        }
    }
}

#[test]
fn reports_are_reproducible() {
    let (cfg, store) = trained(4, 50);
    let a = evaluate_table(&cfg, &store, 8, &MatchCriterion::BOTH, 4).unwrap();
    let b = evaluate_table(&cfg, &store, 8, &MatchCriterion::BOTH, 4).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.rows.len(), 4);
    assert_eq!(a.config_digest, cfg.digest());
}

/// An untrained model spreads its guess evenly, so on average it gives the
/// successor that actually follows a probability of exactly 1/n. A trained
/// model should do far better.
#[test]
fn untrained_model_sits_at_the_uniform_baseline() {
    let (cfg, trained_store) = trained(2, 200);
    let mut untrained = TransitionStore::new();
    for ws in trained_store.world_states() {
        untrained.intern(ws.clone());
    }
    let n = untrained.len() as f64;

    let mut replay = trained_store.clone();
    let scored = collect_predictions(&cfg, &mut replay, 40, false, &mut seeded_rng(2, 5)).unwrap();
    let mean_probability = |store: &TransitionStore| {
        let m = build_matrix(store).unwrap();
        let mut sum = 0.0;
        let mut k = 0.0;
        for s in &scored {
            let (Some(cur), Some(next)) = (store.lookup(&s.current), store.lookup(&s.actual))
            else {
                continue;
            };
            sum += predict(cur, 1, &m).unwrap()[0]
                .distribution
                .get(next.index());
            k += 1.0;
        }
        assert!(k > 200.0);
        sum / k
    };
    let baseline = mean_probability(&untrained);
    assert!((baseline - 1.0 / n).abs() < 1e-12);
    assert!(mean_probability(&trained_store) > 10.0 * baseline);
}

#[test]
fn evaluation_keeps_learning() {
    let (cfg, mut store) = trained(8, 20);
    let before = store.total_count();
    evaluate(
        &cfg,
        &mut store,
        3,
        &MatchCriterion::BOTH,
        false,
        &mut seeded_rng(8, 1),
    )
    .unwrap();
    assert!(store.total_count() > before);
}
