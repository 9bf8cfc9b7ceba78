//! Scenario documents shipped with the crate.

use super::scenario::{load_scenario, LoadedScenario};
use crate::error::{Result, SimError};

pub const BUILTIN: &[(&str, &str)] = &[
    (
        "case1_island",
        include_str!("../../scenarios/case1_island.json"),
    ),
    (
        "case2_resync",
        include_str!("../../scenarios/case2_resync.json"),
    ),
    (
        "case3_load_step",
        include_str!("../../scenarios/case3_load_step.json"),
    ),
    (
        "steady_state",
        include_str!("../../scenarios/steady_state.json"),
    ),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// Loads a built-in scenario by name.
pub fn builtin(name: &str) -> Result<LoadedScenario> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| SimError::config("<scenario>", format!("no built-in scenario `{name}`")))?;
    load_scenario(text)
}
