use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Constant-impedance load. `r` is in per-unit of the feeder base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantImpedanceLoad {
    pub name: String,
    pub r: f64,
}

impl ConstantImpedanceLoad {
    /// Load drawing `p` (p.u.) at 1.0 p.u. voltage.
    pub fn from_power(name: impl Into<String>, p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(SimError::config(
                "loads.power",
                "load power must be positive",
            ));
        }
        Ok(Self {
            name: name.into(),
            r: 1.0 / p,
        })
    }

    pub fn power_at_nominal(&self) -> f64 {
        1.0 / self.r
    }
}

/// Loads aggregated at the PCC bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadBank {
    pub loads: Vec<ConstantImpedanceLoad>,
}

impl LoadBank {
    pub fn new(loads: Vec<ConstantImpedanceLoad>) -> Result<Self> {
        if loads.is_empty() {
            return Err(SimError::config("loads", "at least one load is required"));
        }
        for (k, l) in loads.iter().enumerate() {
            if !(l.r.is_finite() && l.r > 0.0) {
                return Err(SimError::config(
                    format!("loads[{k}].r"),
                    "resistance must be positive",
                ));
            }
        }
        Ok(Self { loads })
    }

    /// Equivalent parallel resistance.
    pub fn r_equivalent(&self) -> f64 {
        1.0 / self.loads.iter().map(|l| 1.0 / l.r).sum::<f64>()
    }

    pub fn total_power_at_nominal(&self) -> f64 {
        self.loads.iter().map(|l| l.power_at_nominal()).sum()
    }
}

/// Change load `index` by `delta` p.u. (power at nominal voltage).
pub fn apply_load_step(bank: &LoadBank, index: usize, delta: f64) -> Result<LoadBank> {
    let Some(load) = bank.loads.get(index) else {
        return Err(SimError::config(
            "load_step.load",
            format!("no load with index {index}"),
        ));
    };
    if delta == 0.0 {
        return Ok(bank.clone());
    }
    let p = load.power_at_nominal() + delta;
    if !(p > 0.0) {
        return Err(SimError::config(
            "load_step.delta",
            format!("load `{}` would draw {p} p.u.", load.name),
        ));
    }
    let mut out = bank.clone();
    out.loads[index].r = 1.0 / p;
    Ok(out)
}
