use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Wrap an angle to `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2pi for tiny negative inputs
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Unity-gain first-order lag `1 / (T s + 1)` discretized with the
/// trapezoidal (bilinear) rule. `T = 0` degenerates to a passthrough.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderLag {
    pub y: f64,
    pub t_const: f64,
    u_prev: f64,
}

impl FirstOrderLag {
    pub fn new(t_const: f64) -> Result<Self> {
        if !(t_const.is_finite() && t_const >= 0.0) {
            return Err(SimError::config("t_const", "time constant must be >= 0"));
        }
        Ok(Self {
            y: 0.0,
            t_const,
            u_prev: 0.0,
        })
    }

    /// Start in steady state at `value`.
    pub fn with_initial(mut self, value: f64) -> Self {
        self.reset(value);
        self
    }

    pub fn reset(&mut self, value: f64) {
        self.y = value;
        self.u_prev = value;
    }

    /// Re-express a (d, q) pair of lags in a frame advanced by `delta`.
    pub fn rotate_pair(d: &mut Self, q: &mut Self, delta: f64) {
        let (s, c) = delta.sin_cos();
        let rot = |a: f64, b: f64| (a * c + b * s, -a * s + b * c);
        (d.y, q.y) = rot(d.y, q.y);
        (d.u_prev, q.u_prev) = rot(d.u_prev, q.u_prev);
    }

    pub fn step(&mut self, u: f64, dt: f64) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(SimError::config("dt", "time step must be positive"));
        }
        if self.t_const == 0.0 {
            self.y = u;
        } else {
            if dt > 0.5 * self.t_const {
                return Err(SimError::config(
                    "dt",
                    format!(
                        "dt = {dt} exceeds half the lag time constant {}",
                        self.t_const
                    ),
                ));
            }
            let den = 2.0 * self.t_const + dt;
            let a = (2.0 * self.t_const - dt) / den;
            let b = dt / den;
            self.y = a * self.y + b * (u + self.u_prev);
        }
        self.u_prev = u;
        Ok(self.y)
    }
}

/// PI controller with output clamp and back-calculation anti-windup.
///
/// The integrator is additionally held inside the output limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiController {
    pub kp: f64,
    pub ki: f64,
    /// Back-calculation gain (1/s).
    pub k_aw: f64,
    pub out_min: f64,
    pub out_max: f64,
    pub integral: f64,
    pub saturated: bool,
}

impl PiController {
    pub fn new(kp: f64, ki: f64, limit: f64) -> Self {
        let k_aw = if kp > 0.0 { ki / kp } else { 0.0 };
        Self {
            kp,
            ki,
            k_aw,
            out_min: -limit,
            out_max: limit,
            integral: 0.0,
            saturated: false,
        }
    }

    /// Returns the clamped output `kp e + I + feedforward`.
    pub fn step(&mut self, error: f64, feedforward: f64, dt: f64) -> f64 {
        let unsat = self.kp * error + self.integral + feedforward;
        let out = unsat.clamp(self.out_min, self.out_max);
        self.saturated = out != unsat;
        self.integral += dt * (self.ki * error + self.k_aw * (out - unsat));
        self.integral = self.integral.clamp(self.out_min, self.out_max);
        out
    }
}

/// A pair of PI controllers acting on the d and q axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorPi {
    pub d: PiController,
    pub q: PiController,
}

impl VectorPi {
    pub fn new(kp: f64, ki: f64, limit: f64) -> Self {
        let pi = PiController::new(kp, ki, limit);
        Self { d: pi, q: pi }
    }

    /// Rotate the integrator vector by `delta` radians (frame change).
    pub fn rotate_integrators(&mut self, delta: f64) {
        let (s, c) = delta.sin_cos();
        let (d, q) = (self.d.integral, self.q.integral);
        // vector expressed in a frame advanced by delta
        self.d.integral = d * c + q * s;
        self.q.integral = -d * s + q * c;
    }

    pub fn set_integrators(&mut self, d: f64, q: f64) {
        self.d.integral = d.clamp(self.d.out_min, self.d.out_max);
        self.q.integral = q.clamp(self.q.out_min, self.q.out_max);
    }
}
