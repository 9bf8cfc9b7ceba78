use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    /// Current control, grid-following with MPPT.
    Ccm,
    /// Voltage control, grid-forming.
    Vcm,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Ccm => "CCM",
            Mode::Vcm => "VCM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlMode {
    pub mode: Mode,
    pub transition_time: f64,
}

impl ControlMode {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            transition_time: 0.0,
        }
    }
}

/// Next mode for a switching inverter. A disabled inverter keeps its mode;
/// its output is zeroed at the modulator.
pub fn select_mode(grid_connected: bool, en: bool, current: ControlMode, t: f64) -> ControlMode {
    if !en {
        return current;
    }
    let mode = if grid_connected { Mode::Ccm } else { Mode::Vcm };
    if mode == current.mode {
        current
    } else {
        ControlMode {
            mode,
            transition_time: t,
        }
    }
}
