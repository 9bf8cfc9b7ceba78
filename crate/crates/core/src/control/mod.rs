//! Grid-forming inverter control stack.
//!
//! Signal flow for one inverter: DSOGI-PLL on the filter capacitor voltage,
//! average P/Q, frequency reference with first-order inertia lag, Q-V droop,
//! virtual admittance, the SRF capacitor-node and current loops, and finally
//! the averaged modulation index. PV inverters switch between current
//! control (grid-following, MPPT) and voltage control (grid-forming); the
//! battery inverter is always grid-forming with a static droop.

mod admittance;
mod ccm;
mod inverter;
mod mode;
mod modulation;
mod pll;
mod power;
mod srf;
mod vsg;

pub use admittance::{VirtualAdmittance, VirtualAdmittanceParams};
pub use ccm::{ccm_power_loop, CcmOutput, RIDE_THROUGH_VOLTAGE};
pub use inverter::{
    ControlFlags, ControllerState, InverterControlConfig, InverterInputs, InverterOutput,
    InverterRole, LoopGains,
};
pub use mode::{select_mode, ControlMode, Mode};
pub use modulation::{modulate, ModulationOutput};
pub use pll::{DsogiPll, PllConfig, PllOutput};
pub use power::{compute_avg_powers, instantaneous_powers, PowerAverager};
pub use srf::{srf_current_step, srf_voltage_step, SrfLoopState};
pub use vsg::{freq_ref_step, volt_ref, VsgParams};
