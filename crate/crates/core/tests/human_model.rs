use statepredict::scenario::{HumanModel, HumanModelConfig, HumanState};
use statepredict::seeded_rng;

const DECISIONS: usize = 10_000;

#[test]
fn arrivals_and_identities_follow_their_weights() {
    let cfg = HumanModelConfig::default();
    let model = HumanModel::new(&cfg).unwrap();
    let mut rng = seeded_rng(12, 0);
    let (mut arrivals, mut alice) = (0usize, 0usize);
    for _ in 0..DECISIONS {
        let mut state = HumanState::Absent;
        if let Some(ev) = model.step(&mut rng, &mut state) {
            arrivals += 1;
            if ev.payload.get("human_id").unwrap().as_token() == Some("alice") {
                alice += 1;
            }
        }
    }
    let arrive_rate = arrivals as f64 / DECISIONS as f64;
    assert!((arrive_rate - cfg.p_arrive).abs() <= 0.02, "{arrive_rate}");
    let alice_share = alice as f64 / arrivals as f64;
    assert!((alice_share - 0.7).abs() <= 0.03, "{alice_share}");
}

#[test]
fn grasp_targets_follow_the_configured_share() {
    let cfg = HumanModelConfig {
        p_enter_stay: 0.0,
        p_walk_and_grasp: 1.0,
        p_leave: 0.0,
        ..HumanModelConfig::default()
    };
    let model = HumanModel::new(&cfg).unwrap();
    let mut rng = seeded_rng(13, 0);
    let mut robot = 0usize;
    for _ in 0..DECISIONS {
        let mut state = HumanState::Present { id: "bob".into() };
        let ev = model.step(&mut rng, &mut state).unwrap();
        if ev.payload.get("grasp_target").unwrap().as_token() == Some("robot_object") {
            robot += 1;
        }
    }
    let share = robot as f64 / DECISIONS as f64;
    assert!((share - cfg.p_grasp_robot_object).abs() <= 0.02, "{share}");
}

#[test]
fn leaving_makes_the_human_absent() {
    let cfg = HumanModelConfig {
        p_enter_stay: 0.0,
        p_walk_and_grasp: 0.0,
        p_leave: 1.0,
        ..HumanModelConfig::default()
    };
    let model = HumanModel::new(&cfg).unwrap();
    let mut state = HumanState::Present { id: "alice".into() };
    model.step(&mut seeded_rng(1, 0), &mut state).unwrap();
    assert_eq!(state, HumanState::Absent);
}
