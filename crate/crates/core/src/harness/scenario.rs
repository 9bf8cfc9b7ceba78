//! Scenario documents: JSON with a `schema_version`, every block optional
//! except the version. Missing keys take defaults, each of which is logged.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::control::{
    InverterControlConfig, InverterRole, LoopGains, PllConfig, VirtualAdmittanceParams, VsgParams,
};
use crate::error::{Result, SimError};
use crate::network::{GridEquivalent, LcFilterParams, LineImpedance};
use crate::pv::PvRating;
use crate::simcore::PerUnitBase;
use crate::storage::BatteryParams;
use crate::synchronizer::{SyncGains, SyncThresholds};

pub const SCHEMA_VERSION: u32 = 1;

// Every key has a default except the version, which the loader insists on.
fn require_version(schema: &mut schemars::Schema) {
    schema.insert("required".into(), serde_json::json!(["schema_version"]));
}
/// Fixed simulation step (s).
pub const STEP: f64 = 1e-4;

/// Inner-loop settings shared by every inverter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSpec {
    pub admittance: VirtualAdmittanceParams,
    pub gains: LoopGains,
    pub pll: PllConfig,
    /// Power averaging time constant (s).
    pub t_avg: f64,
    /// Grid-following current limit (p.u.).
    pub i_limit_ccm: f64,
}

impl Default for ControlSpec {
    fn default() -> Self {
        let c = InverterControlConfig::new(InverterRole::Pv);
        Self {
            admittance: c.admittance,
            gains: c.gains,
            pll: c.pll,
            t_avg: c.t_avg,
            i_limit_ccm: c.i_limit_ccm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PvSpec {
    pub name: String,
    pub rating: PvRating,
    /// W/m^2
    pub irradiance: f64,
    /// Cell temperature (C).
    pub temperature: f64,
    /// Array-side DC capacitance (F).
    pub c_dc: f64,
    /// Regulated bridge DC bus (V).
    pub v_bus: f64,
    /// DC voltage loop gain (W per V of error).
    pub k_dc: f64,
    pub mppt_rate_hz: f64,
    /// Perturbation step (V).
    pub mppt_step: f64,
    pub filter: LcFilterParams,
    pub line: LineImpedance,
    pub vsg: VsgParams,
    pub control: ControlSpec,
    pub enabled: bool,
}

impl Default for PvSpec {
    fn default() -> Self {
        Self {
            name: "pv".into(),
            rating: PvRating::default(),
            irradiance: 1000.0,
            temperature: 25.0,
            c_dc: 0.0033,
            v_bus: 800.0,
            k_dc: 290.0,
            mppt_rate_hz: 10.0,
            mppt_step: 2.0,
            filter: LcFilterParams::default(),
            line: LineImpedance { r: 0.02, x: 0.007 },
            vsg: VsgParams::default(),
            control: ControlSpec::default(),
            enabled: true,
        }
    }
}

/// Static droop settings of the battery inverter (no inertia).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryDroop {
    pub omega_nom: f64,
    pub k_w: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub v_nom: f64,
    pub n_q: f64,
}

impl Default for BatteryDroop {
    fn default() -> Self {
        let v = VsgParams::battery_default();
        Self {
            omega_nom: v.omega_nom,
            k_w: v.k_w,
            p_ref: v.p_ref,
            q_ref: v.q_ref,
            v_nom: v.v_nom,
            n_q: v.n_q,
        }
    }
}

impl BatteryDroop {
    pub fn to_vsg(&self) -> VsgParams {
        VsgParams {
            omega_nom: self.omega_nom,
            k_w: self.k_w,
            p_ref: self.p_ref,
            q_ref: self.q_ref,
            v_nom: self.v_nom,
            n_q: self.n_q,
            ..VsgParams::battery_default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct BatterySpec {
    pub name: String,
    pub params: BatteryParams,
    /// Initial state of charge (fraction of usable capacity).
    pub soc0: f64,
    pub v_bus: f64,
    pub filter: LcFilterParams,
    pub line: LineImpedance,
    pub droop: BatteryDroop,
    pub control: ControlSpec,
    pub enabled: bool,
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self {
            name: "battery".into(),
            params: BatteryParams::default(),
            soc0: 0.8,
            v_bus: 800.0,
            filter: LcFilterParams::default(),
            line: LineImpedance { r: 0.005, x: 0.002 },
            droop: BatteryDroop::default(),
            control: ControlSpec::default(),
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSpec {
    pub name: String,
    /// Power drawn at 1.0 p.u. voltage (p.u.).
    pub p: f64,
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            name: "feeder".into(),
            p: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SynchronizerSpec {
    pub thresholds: SyncThresholds,
    pub gains: SyncGains,
}

/// Gaussian measurement noise, standard deviations in p.u.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub v_std: f64,
    pub i_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    OpenBreaker {
        time: f64,
    },
    /// Arm the synchronizer; the breaker closes once it grants permission.
    RequestResync {
        time: f64,
    },
    /// Change load `load` by `delta` p.u. at nominal voltage.
    LoadStep {
        time: f64,
        delta: f64,
        #[serde(default)]
        load: usize,
    },
    IrradianceStep {
        time: f64,
        source: String,
        value: f64,
    },
    SetEnable {
        time: f64,
        source: String,
        value: bool,
    },
    /// Active power setpoint (p.u.).
    SetPRef {
        time: f64,
        source: String,
        value: f64,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match self {
            Event::OpenBreaker { time }
            | Event::RequestResync { time }
            | Event::LoadStep { time, .. }
            | Event::IrradianceStep { time, .. }
            | Event::SetEnable { time, .. }
            | Event::SetPRef { time, .. } => *time,
        }
    }

    fn source(&self) -> Option<&str> {
        match self {
            Event::IrradianceStep { source, .. }
            | Event::SetEnable { source, .. }
            | Event::SetPRef { source, .. } => Some(source),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Event::OpenBreaker { .. } => "open_breaker".into(),
            Event::RequestResync { .. } => "request_resync".into(),
            Event::LoadStep { delta, load, .. } => format!("load_step load={load} delta={delta}"),
            Event::IrradianceStep { source, value, .. } => {
                format!("irradiance_step {source}={value}")
            }
            Event::SetEnable { source, value, .. } => format!("set_enable {source}={value}"),
            Event::SetPRef { source, value, .. } => format!("set_p_ref {source}={value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
#[schemars(transform = require_version)]
pub struct Scenario {
    #[schemars(range(min = 1, max = 1))]
    pub schema_version: u32,
    pub name: String,
    pub description: String,
    /// Recorded duration (s).
    pub duration: f64,
    pub dt: f64,
    /// Unrecorded settling run before t = 0 (s).
    pub settle_time: f64,
    /// Reference ramp at the start of the settling run (s).
    pub soft_start: f64,
    pub telemetry_hz: f64,
    pub base: PerUnitBase,
    pub grid: GridEquivalent,
    pub initially_connected: bool,
    pub loads: Vec<LoadSpec>,
    pub pv: Vec<PvSpec>,
    pub battery: BatterySpec,
    pub synchronizer: SynchronizerSpec,
    pub noise: NoiseSpec,
    pub events: Vec<Event>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "unnamed".into(),
            description: String::new(),
            duration: 5.0,
            dt: STEP,
            settle_time: 3.0,
            soft_start: 0.5,
            telemetry_hz: 1000.0,
            base: PerUnitBase::default(),
            grid: GridEquivalent::default(),
            initially_connected: true,
            loads: vec![LoadSpec::default()],
            pv: vec![
                PvSpec {
                    name: "pv1".into(),
                    ..PvSpec::default()
                },
                PvSpec {
                    name: "pv2".into(),
                    line: LineImpedance { r: 0.015, x: 0.005 },
                    ..PvSpec::default()
                },
            ],
            battery: BatterySpec::default(),
            synchronizer: SynchronizerSpec::default(),
            noise: NoiseSpec::default(),
            events: Vec::new(),
        }
    }
}

impl Scenario {
    /// Names of all sources in stepping order: PVs, then the battery.
    pub fn source_names(&self) -> Vec<String> {
        self.pv
            .iter()
            .map(|p| p.name.clone())
            .chain(std::iter::once(self.battery.name.clone()))
            .collect()
    }

    /// Telemetry decimation factor.
    pub fn decimation(&self) -> usize {
        (1.0 / (self.dt * self.telemetry_hz)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::config("duration", "must be positive"));
        }
        if (self.dt - STEP).abs() > 1e-12 {
            return Err(SimError::config(
                "dt",
                format!("the simulator runs at a fixed {STEP} s step"),
            ));
        }
        if !(self.settle_time >= 0.0) {
            return Err(SimError::config("settle_time", "must be nonnegative"));
        }
        if !(self.soft_start >= 0.0) {
            return Err(SimError::config("soft_start", "must be nonnegative"));
        }
        let ratio = 1.0 / (self.dt * self.telemetry_hz);
        if !(self.telemetry_hz > 0.0) || ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6
        {
            return Err(SimError::config(
                "telemetry_hz",
                "must divide the simulation rate",
            ));
        }
        self.base.validate()?;
        let g = &self.grid;
        if !(g.v_th > 0.0 && g.r_th >= 0.0 && g.x_th > 0.0) {
            return Err(SimError::config(
                "grid",
                "need v_th > 0, r_th >= 0, x_th > 0",
            ));
        }
        if !((g.f_grid - self.base.f_base).abs() <= 0.1 * self.base.f_base) {
            return Err(SimError::config(
                "grid.f_grid",
                "must be within 10% of the base frequency",
            ));
        }
        if self.loads.is_empty() {
            return Err(SimError::config("loads", "at least one load is required"));
        }
        for (k, l) in self.loads.iter().enumerate() {
            if !(l.p > 0.0 && l.p.is_finite()) {
                return Err(SimError::config(
                    format!("loads[{k}].p"),
                    "must be positive",
                ));
            }
        }
        for (k, p) in self.pv.iter().enumerate() {
            let at = |f: &str| format!("pv[{k}].{f}");
            p.vsg.validate().map_err(|e| prefix(e, &at("vsg")))?;
            control_config(&p.control, InverterRole::Pv, p.vsg, p.filter)
                .validate()
                .map_err(|e| prefix(e, &at("control")))?;
            if !(p.irradiance >= 0.0) {
                return Err(SimError::config(at("irradiance"), "must be nonnegative"));
            }
            let pos = [
                ("c_dc", p.c_dc),
                ("v_bus", p.v_bus),
                ("mppt_rate_hz", p.mppt_rate_hz),
                ("mppt_step", p.mppt_step),
            ];
            for (f, v) in pos {
                if !(v > 0.0) {
                    return Err(SimError::config(at(f), "must be positive"));
                }
            }
            if !(p.k_dc >= 0.0) {
                return Err(SimError::config(at("k_dc"), "must be nonnegative"));
            }
            validate_line(&p.line, &at("line"))?;
        }
        let b = &self.battery;
        b.params
            .validate()
            .map_err(|e| prefix(e, "battery.params"))?;
        control_config(
            &b.control,
            InverterRole::Battery,
            b.droop.to_vsg(),
            b.filter,
        )
        .validate()
        .map_err(|e| prefix(e, "battery"))?;
        if !(b.soc0 >= b.params.soc_min() && b.soc0 <= 1.0) {
            return Err(SimError::config(
                "battery.soc0",
                "outside the usable state-of-charge window",
            ));
        }
        if !(b.v_bus > 0.0) {
            return Err(SimError::config("battery.v_bus", "must be positive"));
        }
        validate_line(&b.line, "battery.line")?;
        self.synchronizer.thresholds.validate()?;
        self.synchronizer.gains.validate()?;
        if !(self.noise.v_std >= 0.0 && self.noise.i_std >= 0.0) {
            return Err(SimError::config(
                "noise",
                "standard deviations must be nonnegative",
            ));
        }

        let names = self.source_names();
        for (k, n) in names.iter().enumerate() {
            if names[..k].contains(n) {
                return Err(SimError::config(
                    "pv",
                    format!("duplicate source name `{n}`"),
                ));
            }
        }
        let mut last = 0.0;
        for (k, e) in self.events.iter().enumerate() {
            let at = format!("events[{k}]");
            let t = e.time();
            if !(t >= 0.0 && t <= self.duration) {
                return Err(SimError::config(
                    format!("{at}.time"),
                    format!("{t} s is outside [0, {}]", self.duration),
                ));
            }
            if t < last {
                return Err(SimError::config(
                    format!("{at}.time"),
                    "events must be sorted by time",
                ));
            }
            last = t;
            if let Some(s) = e.source() {
                if !names.iter().any(|n| n == s) {
                    return Err(SimError::config(
                        format!("{at}.source"),
                        format!("unknown source `{s}`"),
                    ));
                }
            }
            match e {
                Event::LoadStep { load, delta, .. } => {
                    if *load >= self.loads.len() {
                        return Err(SimError::config(
                            format!("{at}.load"),
                            format!("no load with index {load}"),
                        ));
                    }
                    if !delta.is_finite() {
                        return Err(SimError::config(format!("{at}.delta"), "must be finite"));
                    }
                }
                Event::IrradianceStep { source, value, .. } => {
                    if !(*value >= 0.0) {
                        return Err(SimError::config(
                            format!("{at}.value"),
                            "irradiance must be nonnegative",
                        ));
                    }
                    if *source == self.battery.name {
                        return Err(SimError::config(
                            format!("{at}.source"),
                            "irradiance applies to PV sources",
                        ));
                    }
                }
                Event::SetPRef { value, .. } if !value.is_finite() => {
                    return Err(SimError::config(format!("{at}.value"), "must be finite"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn validate_line(l: &LineImpedance, at: &str) -> Result<()> {
    if !(l.r >= 0.0 && l.x > 0.0) {
        return Err(SimError::config(at, "need r >= 0 and x > 0"));
    }
    Ok(())
}

fn prefix(e: SimError, at: &str) -> SimError {
    match e {
        SimError::Config { path, message } => SimError::config(format!("{at}.{path}"), message),
        other => other,
    }
}

pub(crate) fn control_config(
    c: &ControlSpec,
    role: InverterRole,
    vsg: VsgParams,
    filter: LcFilterParams,
) -> InverterControlConfig {
    InverterControlConfig {
        role,
        vsg,
        admittance: c.admittance,
        gains: c.gains,
        pll: c.pll,
        filter,
        t_avg: c.t_avg,
        i_limit_ccm: c.i_limit_ccm,
    }
}

/// A validated scenario and the defaulted keys, as `path = value` lines.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub defaults: Vec<String>,
}

pub fn load_scenario(text: &str) -> Result<LoadedScenario> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| SimError::config("<document>", e.to_string()))?;
    match doc.get("schema_version") {
        None => return Err(SimError::config("schema_version", "missing")),
        Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
            return Err(SimError::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {v}"),
            ))
        }
        _ => {}
    }
    let scenario: Scenario = serde_path_to_error::deserialize(&doc).map_err(|e| {
        let path = e.path().to_string();
        SimError::config(path, e.into_inner().to_string())
    })?;
    scenario.validate()?;

    let mut defaults = Vec::new();
    let reference = serde_json::to_value(Scenario::default()).expect("default scenario serializes");
    collect_defaults(&doc, &reference, "", &mut defaults);
    for d in &defaults {
        log::info!("default {d}");
    }
    Ok(LoadedScenario { scenario, defaults })
}

fn element_default(path: &str) -> Option<Value> {
    let v = match path {
        "pv" => serde_json::to_value(PvSpec::default()),
        "loads" => serde_json::to_value(LoadSpec::default()),
        _ => return None,
    };
    v.ok()
}

fn collect_defaults(doc: &Value, reference: &Value, path: &str, out: &mut Vec<String>) {
    let join = |k: &str| {
        if path.is_empty() {
            k.to_string()
        } else {
            format!("{path}.{k}")
        }
    };
    match (doc, reference) {
        (Value::Object(d), Value::Object(r)) => {
            for (k, rv) in r {
                match d.get(k) {
                    None => out.push(format!("{} = {}", join(k), rv)),
                    Some(dv) => collect_defaults(dv, rv, &join(k), out),
                }
            }
        }
        (Value::Array(d), Value::Array(_)) => {
            if let Some(elem) = element_default(path) {
                for (i, dv) in d.iter().enumerate() {
                    collect_defaults(dv, &elem, &format!("{path}[{i}]"), out);
                }
            }
        }
        _ => {}
    }
}
