use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::simcore::{dq_to_abc, Dq, PerUnitBase, ThreePhase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationOutput {
    pub m: ThreePhase,
    pub overmodulated: bool,
}

/// Averaged-switch modulation index for a terminal voltage command `e`
/// (p.u., peak phase) on a DC bus of `v_dc` volts.
pub fn modulate(
    e: &Dq,
    theta: f64,
    v_dc: f64,
    base: &PerUnitBase,
    en: bool,
) -> Result<ModulationOutput> {
    if !en {
        return Ok(ModulationOutput {
            m: ThreePhase::ZERO,
            overmodulated: false,
        });
    }
    if !(v_dc > 0.0) {
        return Err(SimError::Domain(format!(
            "inverter trip: DC bus at {v_dc} V"
        )));
    }
    let k = 2.0 * base.v_base_phase_peak() / v_dc;
    let m = dq_to_abc(&Dq::new(e.d * k, e.q * k, e.theta_used), theta)?;
    let clamped = ThreePhase::from_array(m.as_array().map(|x| x.clamp(-1.0, 1.0)));
    Ok(ModulationOutput {
        m: clamped,
        overmodulated: clamped != m,
    })
}
