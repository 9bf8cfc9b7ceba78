use nalgebra::Complex;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::simcore::Dq;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct VirtualAdmittanceParams {
    /// Virtual resistance (p.u.).
    pub r_v: f64,
    /// Virtual reactance at base frequency (p.u.).
    pub x_v: f64,
    /// Current magnitude limit (p.u.).
    pub i_limit: f64,
}

impl Default for VirtualAdmittanceParams {
    fn default() -> Self {
        Self {
            r_v: 0.05,
            x_v: 0.25,
            i_limit: 1.2,
        }
    }
}

impl VirtualAdmittanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_v > 0.0) {
            return Err(SimError::config("admittance.r_v", "must be positive"));
        }
        if !(self.x_v >= 0.0) {
            return Err(SimError::config("admittance.x_v", "must be nonnegative"));
        }
        if !(self.i_limit > 0.0) {
            return Err(SimError::config("admittance.i_limit", "must be positive"));
        }
        Ok(())
    }

    /// Impedance `R_v + j (omega / omega_b) X_v`.
    pub fn impedance(&self, omega_pu: f64) -> Complex<f64> {
        Complex::new(self.r_v, omega_pu * self.x_v)
    }
}

/// Current reference from a voltage error through `1 / (R_v + s L_v)` in the
/// rotating frame:
/// `(X_v / omega_b) di/dt = dv - (R_v + j omega X_v) i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualAdmittance {
    pub params: VirtualAdmittanceParams,
    i: Complex<f64>,
    dv_prev: Complex<f64>,
    pub saturated: bool,
}

impl VirtualAdmittance {
    pub fn new(params: VirtualAdmittanceParams) -> Self {
        Self {
            params,
            i: Complex::new(0.0, 0.0),
            dv_prev: Complex::new(0.0, 0.0),
            saturated: false,
        }
    }

    pub fn current(&self) -> (f64, f64) {
        (self.i.re, self.i.im)
    }

    /// Load a steady state carrying `(i_d, i_q)` so the next step starts
    /// without a kick.
    pub fn preload(&mut self, i_d: f64, i_q: f64, omega_pu: f64) {
        self.i = Complex::new(i_d, i_q);
        self.dv_prev = self.params.impedance(omega_pu) * self.i;
        self.saturated = false;
    }

    /// Rotate the stored state into a frame advanced by `delta`.
    pub fn rotate(&mut self, delta: f64) {
        let r = Complex::from_polar(1.0, -delta);
        self.i *= r;
        self.dv_prev *= r;
    }

    /// One step. `omega_pu` is the frame speed over base and `omega_b` the
    /// base angular frequency in rad/s.
    pub fn step(
        &mut self,
        v_ref: &Dq,
        v_meas: &Dq,
        omega_pu: f64,
        omega_b: f64,
        dt: f64,
    ) -> Result<Dq> {
        if (v_ref.theta_used - v_meas.theta_used).abs() > 1e-12 {
            return Err(SimError::Contract(
                "virtual admittance inputs in different frames".into(),
            ));
        }
        let dv = Complex::new(v_ref.d - v_meas.d, v_ref.q - v_meas.q);
        let z = self.params.impedance(omega_pu);
        let next = if self.params.x_v == 0.0 {
            dv / z
        } else {
            let a = 0.5 * dt * omega_b / self.params.x_v;
            ((Complex::new(1.0, 0.0) - z * a) * self.i + (self.dv_prev + dv) * a)
                / (Complex::new(1.0, 0.0) + z * a)
        };
        self.dv_prev = dv;
        let mag = next.norm();
        self.saturated = mag > self.params.i_limit;
        self.i = if self.saturated {
            next * (self.params.i_limit / mag)
        } else {
            next
        };
        Ok(Dq::new(self.i.re, self.i.im, v_ref.theta_used))
    }
}
