//! Dual second-order generalized integrator PLL.
//!
//! Two SOGI quadrature generators filter the alpha and beta components; the
//! positive and negative sequences follow from
//!
//! ```text
//! v+ = 1/2 (alpha' - q beta', q alpha' + beta')
//! v- = 1/2 (alpha' + q beta', beta' - q alpha')
//! ```
//!
//! and a synchronous-frame PLL tracks the positive-sequence angle. The SOGIs
//! are discretized with the bilinear rule at a prewarped centre frequency.

use std::f64::consts::PI;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::simcore::{abc_to_alpha_beta, wrap_angle, AlphaBeta, ThreePhase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PllConfig {
    pub omega_nom: f64,
    /// SOGI damping gain.
    pub k_sogi: f64,
    /// Loop bandwidth (Hz).
    pub bandwidth_hz: f64,
    pub damping: f64,
    /// Bandwidth with which the SOGI centre frequency follows the estimate
    /// (Hz); zero pins it at nominal.
    pub sogi_tracking_hz: f64,
}

impl Default for PllConfig {
    fn default() -> Self {
        Self {
            omega_nom: 100.0 * PI,
            k_sogi: std::f64::consts::SQRT_2,
            bandwidth_hz: 20.0,
            damping: 1.0,
            sogi_tracking_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Sogi {
    x: f64,
    qx: f64,
    u_prev: f64,
}

impl Sogi {
    fn step(&mut self, u: f64, omega: f64, k: f64, dt: f64) -> (f64, f64) {
        let w = 2.0 / dt * (0.5 * omega * dt).tan();
        let a = 0.5 * dt;
        let (aw, akw) = (a * w, a * k * w);
        let r1 = (1.0 - akw) * self.x - aw * self.qx + akw * (u + self.u_prev);
        let r2 = aw * self.x + self.qx;
        let det = 1.0 + akw + aw * aw;
        self.x = (r1 - aw * r2) / det;
        self.qx = (aw * r1 + (1.0 + akw) * r2) / det;
        self.u_prev = u;
        (self.x, self.qx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllOutput {
    pub theta_plus: f64,
    pub theta_minus: f64,
    /// Estimated angular frequency (rad/s).
    pub omega: f64,
    pub v_plus: AlphaBeta,
    pub v_minus: AlphaBeta,
    pub out_of_band: bool,
}

/// DSOGI-PLL state. Angles are wrapped to `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsogiPll {
    pub config: PllConfig,
    sogi_alpha: Sogi,
    sogi_beta: Sogi,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub omega_hat: f64,
    omega_sogi: f64,
    integrator: f64,
    pub out_of_band: bool,
    pub v_plus: AlphaBeta,
    pub v_minus: AlphaBeta,
}

impl DsogiPll {
    pub fn new(config: PllConfig) -> Self {
        Self {
            config,
            sogi_alpha: Sogi::default(),
            sogi_beta: Sogi::default(),
            theta_plus: 0.0,
            theta_minus: 0.0,
            omega_hat: config.omega_nom,
            omega_sogi: config.omega_nom,
            integrator: 0.0,
            out_of_band: false,
            v_plus: AlphaBeta::default(),
            v_minus: AlphaBeta::default(),
        }
    }

    fn gains(&self) -> (f64, f64) {
        let wn = 2.0 * PI * self.config.bandwidth_hz;
        (2.0 * self.config.damping * wn, wn * wn)
    }

    /// Processes the sample taken at the current time; the returned angle is
    /// the estimate for that same instant.
    pub fn step(&mut self, v: &ThreePhase, dt: f64) -> PllOutput {
        let ab = abc_to_alpha_beta(v);
        let k = self.config.k_sogi;
        let (xa, qa) = self.sogi_alpha.step(ab.alpha, self.omega_sogi, k, dt);
        let (xb, qb) = self.sogi_beta.step(ab.beta, self.omega_sogi, k, dt);
        self.v_plus = AlphaBeta::new(0.5 * (xa - qb), 0.5 * (qa + xb));
        self.v_minus = AlphaBeta::new(0.5 * (xa + qb), 0.5 * (xb - qa));

        let mag = self.v_plus.magnitude().max(1e-3);
        let (s, c) = self.theta_plus.sin_cos();
        let err = (-self.v_plus.alpha * s + self.v_plus.beta * c) / mag;

        let (kp, ki) = self.gains();
        let w0 = self.config.omega_nom;
        let (lo, hi) = (0.8 * w0, 1.2 * w0);
        self.integrator += ki * err * dt;
        self.integrator = self.integrator.clamp(lo - w0, hi - w0);
        let raw = w0 + kp * err + self.integrator;
        self.omega_hat = raw.clamp(lo, hi);
        self.out_of_band = raw != self.omega_hat;
        let a = (2.0 * PI * self.config.sogi_tracking_hz * dt).min(1.0);
        self.omega_sogi += a * (self.omega_hat - self.omega_sogi);

        let out = PllOutput {
            theta_plus: self.theta_plus,
            theta_minus: self.v_minus.angle(),
            omega: self.omega_hat,
            v_plus: self.v_plus,
            v_minus: self.v_minus,
            out_of_band: self.out_of_band,
        };
        self.theta_minus = out.theta_minus;
        self.theta_plus = wrap_angle(self.theta_plus + self.omega_hat * dt);
        out
    }

    pub fn positive_magnitude(&self) -> f64 {
        self.v_plus.magnitude()
    }

    pub fn negative_magnitude(&self) -> f64 {
        self.v_minus.magnitude()
    }
}
