use std::f64::consts::{PI, SQRT_2};
use std::str::FromStr;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Per-unit base quantities.
///
/// Voltages and currents are expressed as peak phase values, so a balanced
/// set at the nominal line-line RMS voltage has magnitude 1.0 and
/// `p = v_d * i_d + v_q * i_q` holds in per-unit without the 3/2 factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PerUnitBase {
    /// Apparent power base (VA).
    pub s_base: f64,
    /// Line-line RMS voltage base (V).
    pub v_base_ll: f64,
    /// Frequency base (Hz).
    pub f_base: f64,
}

impl Default for PerUnitBase {
    fn default() -> Self {
        Self {
            s_base: 50_000.0,
            v_base_ll: 400.0,
            f_base: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantityKind {
    /// Peak phase voltage (V).
    Voltage,
    /// Peak phase current (A).
    Current,
    /// Three-phase power (W, var or VA).
    Power,
    /// Angular frequency (rad/s).
    AngularFrequency,
    /// Frequency (Hz).
    Frequency,
    /// Impedance (ohm).
    Impedance,
}

impl FromStr for QuantityKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "voltage" => QuantityKind::Voltage,
            "current" => QuantityKind::Current,
            "power" => QuantityKind::Power,
            "angular_frequency" => QuantityKind::AngularFrequency,
            "frequency" => QuantityKind::Frequency,
            "impedance" => QuantityKind::Impedance,
            other => {
                return Err(SimError::config(
                    "kind",
                    format!("unknown quantity kind `{other}`"),
                ))
            }
        })
    }
}

impl PerUnitBase {
    pub fn new(s_base: f64, v_base_ll: f64, f_base: f64) -> Result<Self> {
        let base = Self {
            s_base,
            v_base_ll,
            f_base,
        };
        base.validate()?;
        Ok(base)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("s_base", self.s_base),
            ("v_base_ll", self.v_base_ll),
            ("f_base", self.f_base),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::config(
                    name,
                    "base quantities must be strictly positive",
                ));
            }
        }
        Ok(())
    }

    pub fn omega_base(&self) -> f64 {
        2.0 * PI * self.f_base
    }

    pub fn v_base_phase_peak(&self) -> f64 {
        self.v_base_ll * SQRT_2 / 3f64.sqrt()
    }

    /// Peak phase current base, `2 S / (3 V_peak)`.
    pub fn i_base(&self) -> f64 {
        2.0 * self.s_base / (3.0 * self.v_base_phase_peak())
    }

    pub fn z_base(&self) -> f64 {
        self.v_base_ll * self.v_base_ll / self.s_base
    }

    fn base_of(&self, kind: QuantityKind) -> f64 {
        match kind {
            QuantityKind::Voltage => self.v_base_phase_peak(),
            QuantityKind::Current => self.i_base(),
            QuantityKind::Power => self.s_base,
            QuantityKind::AngularFrequency => self.omega_base(),
            QuantityKind::Frequency => self.f_base,
            QuantityKind::Impedance => self.z_base(),
        }
    }

    pub fn to_per_unit(&self, x: f64, kind: QuantityKind) -> f64 {
        x / self.base_of(kind)
    }

    pub fn from_per_unit(&self, x: f64, kind: QuantityKind) -> f64 {
        x * self.base_of(kind)
    }
}
