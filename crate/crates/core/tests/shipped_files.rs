//! The JSON files at the workspace root must match the built-in defaults.

use std::path::PathBuf;

use statepredict::scenario::pick_and_place_statechart;
use statepredict::{ProfileTable, ScenarioConfig, Statechart};

fn root_file(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn scenario_defaults() {
    let text = root_file("scenario.default.json");
    assert_eq!(
        ScenarioConfig::from_json(&text).unwrap(),
        ScenarioConfig::default()
    );
    assert_eq!(text, ScenarioConfig::default().to_json());
}

#[test]
fn profile_table() {
    let text = root_file("profiles.json");
    assert_eq!(
        ProfileTable::from_json(&text).unwrap(),
        ProfileTable::pick_and_place_example()
    );
    assert_eq!(text, ProfileTable::pick_and_place_example().to_json());
}

#[test]
fn statechart_document() {
    let text = root_file("pickplace.statechart.json");
    let sc = Statechart::from_json(&text).unwrap();
    assert_eq!(sc.to_json(), pick_and_place_statechart().to_json());
    assert_eq!(text, sc.to_json());
}
