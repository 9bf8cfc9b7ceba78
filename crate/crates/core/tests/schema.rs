use std::path::Path;

use gfm_core::harness::Scenario;

fn generated() -> String {
    let schema = schemars::schema_for!(Scenario);
    serde_json::to_string_pretty(&schema).unwrap() + "\n"
}

/// Set `UPDATE_SCHEMA=1` to rewrite the shipped file after changing a scenario type.
#[test]
fn shipped_schema_matches_types() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/scenario.schema.json");
    let fresh = generated();
    if std::env::var_os("UPDATE_SCHEMA").is_some() {
        std::fs::write(&path, &fresh).unwrap();
    }
    let shipped = std::fs::read_to_string(&path).unwrap();
    assert!(
        shipped == fresh,
        "{} is stale; rerun with UPDATE_SCHEMA=1",
        path.display()
    );
}
