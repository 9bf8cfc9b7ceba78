use std::f64::consts::PI;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::simcore::FirstOrderLag;

/// Frequency and voltage reference parameters. Powers and voltages in p.u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct VsgParams {
    /// Nominal angular frequency (rad/s).
    pub omega_nom: f64,
    /// Frequency droop (p.u. frequency per p.u. power).
    pub k_w: f64,
    /// Inertia constant H (s).
    pub h: f64,
    /// Damping coefficient D.
    pub d: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub v_nom: f64,
    /// Voltage droop (p.u. voltage per p.u. reactive power).
    pub n_q: f64,
}

impl Default for VsgParams {
    fn default() -> Self {
        Self {
            omega_nom: 100.0 * PI,
            k_w: 0.02,
            h: 2.0,
            d: 40.0,
            p_ref: 0.0,
            q_ref: 0.0,
            v_nom: 1.0,
            n_q: 0.05,
        }
    }
}

impl VsgParams {
    /// Static droop: no inertial lag.
    pub fn battery_default() -> Self {
        Self {
            h: 0.0,
            ..Self::default()
        }
    }

    /// Lag time constant `H / D`.
    pub fn t_w(&self) -> f64 {
        self.h / self.d
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_nom > 0.0) {
            return Err(SimError::config("vsg.omega_nom", "must be positive"));
        }
        if !(self.k_w > 0.0) {
            return Err(SimError::config("vsg.k_w", "must be positive"));
        }
        if !(self.d > 0.0) {
            return Err(SimError::config("vsg.d", "must be positive"));
        }
        if !(self.h >= 0.0) {
            return Err(SimError::config("vsg.h", "must be nonnegative"));
        }
        if !(self.n_q >= 0.0) {
            return Err(SimError::config("vsg.n_q", "must be nonnegative"));
        }
        if !(self.v_nom > 0.0) {
            return Err(SimError::config("vsg.v_nom", "must be positive"));
        }
        Ok(())
    }

    pub fn new_lag(&self) -> Result<FirstOrderLag> {
        FirstOrderLag::new(self.t_w())
    }
}

/// `omega_ref = omega_nom - K_w / (T_w s + 1) (P_avg - P_ref)`, in rad/s.
pub fn freq_ref_step(vsg: &VsgParams, lag: &mut FirstOrderLag, p_avg: f64, dt: f64) -> Result<f64> {
    let dev = lag.step(vsg.k_w * (p_avg - vsg.p_ref), dt)?;
    Ok(vsg.omega_nom * (1.0 - dev))
}

/// `V_ref = V_nom - n_q (Q_avg - Q_ref)`.
pub fn volt_ref(vsg: &VsgParams, q_avg: f64) -> f64 {
    vsg.v_nom - vsg.n_q * (q_avg - vsg.q_ref)
}
