//! Community battery: energy bookkeeping and the static droop law used by
//! its grid-forming inverter.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::control::VsgParams;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryParams {
    /// Inverter active power rating (W).
    pub p_rate: f64,
    /// Inverter reactive power rating (var).
    pub q_rate: f64,
    /// Usable energy (Wh).
    pub usable_capacity: f64,
    /// Nominal energy (Wh).
    pub nominal_capacity: f64,
    pub dod_limit: f64,
    pub efficiency: f64,
    pub v_dc_min: f64,
    pub v_dc_max: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            p_rate: 30_000.0,
            q_rate: 30_000.0,
            usable_capacity: 50_000.0,
            nominal_capacity: 80_000.0,
            dod_limit: 0.95,
            efficiency: 0.97,
            v_dc_min: 384.0,
            v_dc_max: 498.0,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.usable_capacity > 0.0 && self.usable_capacity <= self.nominal_capacity) {
            return Err(SimError::config(
                "battery.usable_capacity",
                "need 0 < usable <= nominal",
            ));
        }
        if !(self.dod_limit > 0.0 && self.dod_limit <= 1.0) {
            return Err(SimError::config(
                "battery.dod_limit",
                "need 0 < dod_limit <= 1",
            ));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(SimError::config(
                "battery.efficiency",
                "need 0 < efficiency <= 1",
            ));
        }
        if !(self.p_rate > 0.0 && self.q_rate > 0.0) {
            return Err(SimError::config(
                "battery.p_rate",
                "ratings must be positive",
            ));
        }
        if !(self.v_dc_min > 0.0 && self.v_dc_min < self.v_dc_max) {
            return Err(SimError::config(
                "battery.v_dc_min",
                "invalid DC voltage window",
            ));
        }
        Ok(())
    }

    pub fn soc_min(&self) -> f64 {
        1.0 - self.dod_limit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    /// Fraction of usable capacity.
    pub soc: f64,
    /// DC-side power of the last step (W, discharge positive).
    pub p_dc: f64,
    /// AC power actually delivered in the last step (W).
    pub p_delivered: f64,
    /// Set when the last step hit a state-of-charge bound.
    pub limit_event: bool,
}

impl BatteryState {
    pub fn new(soc: f64) -> Self {
        Self {
            soc,
            p_dc: 0.0,
            p_delivered: 0.0,
            limit_event: false,
        }
    }
}

/// Coulomb-counting update for AC power `p_ac` (W, discharge positive).
pub fn battery_step(
    state: &BatteryState,
    p_ac: f64,
    dt: f64,
    params: &BatteryParams,
) -> Result<BatteryState> {
    if !(dt > 0.0) {
        return Err(SimError::config("dt", "time step must be positive"));
    }
    let mut p = p_ac.clamp(-params.p_rate, params.p_rate);
    let mut limit_event = false;
    if (p > 0.0 && state.soc <= params.soc_min()) || (p < 0.0 && state.soc >= 1.0) {
        p = 0.0;
        limit_event = true;
    }
    let p_dc = if p >= 0.0 {
        p / params.efficiency
    } else {
        p * params.efficiency
    };
    let capacity_ws = params.usable_capacity * 3600.0;
    let mut soc = state.soc - p_dc * dt / capacity_ws;
    if soc < params.soc_min() {
        soc = params.soc_min();
        limit_event = true;
    } else if soc > 1.0 {
        soc = 1.0;
        limit_event = true;
    }
    Ok(BatteryState {
        soc,
        p_dc,
        p_delivered: p,
        limit_event,
    })
}

/// Static droop of the battery inverter (no inertial lag):
/// returns `(omega_ref, v_ref)` with `omega_ref` in rad/s.
pub fn bess_droop_step(params: &VsgParams, p_avg: f64, q_avg: f64) -> (f64, f64) {
    let omega_ref = params.omega_nom - params.omega_nom * params.k_w * (p_avg - params.p_ref);
    let v_ref = params.v_nom - params.n_q * (q_avg - params.q_ref);
    (omega_ref, v_ref)
}
