//! Scenario loading, the stepping loop, telemetry and run summaries.

mod fixtures;
mod report;
mod scenario;
mod sim;
mod telemetry;

pub use fixtures::{builtin, builtin_names, BUILTIN};
pub use report::{
    max_rocof, summarize, LogEntry, Overshoot, RunReport, Settling, ROCOF_HALF_WINDOW,
};
pub use scenario::{
    load_scenario, BatteryDroop, BatterySpec, ControlSpec, Event, LoadSpec, LoadedScenario,
    NoiseSpec, PvSpec, Scenario, SynchronizerSpec, SCHEMA_VERSION, STEP,
};
pub use sim::{run_scenario, Abort, CloseRecord, RunOutput, TransitionRecord, INRUSH_WINDOW};
pub use telemetry::{read_telemetry, write_telemetry, SourceSample, Telemetry, TelemetryRecord};
