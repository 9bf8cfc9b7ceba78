use serde::{Deserialize, Serialize};

use crate::simcore::Dq;

/// Below this d-axis voltage (p.u.) the current references are frozen.
pub const RIDE_THROUGH_VOLTAGE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcmOutput {
    pub i_ref: Dq,
    pub ride_through: bool,
    pub limited: bool,
}

/// Current references for grid-following operation in the PLL frame.
/// `held` is the previous reference, reused while riding through.
pub fn ccm_power_loop(p_target: f64, q_ref: f64, v: &Dq, held: &Dq, i_limit: f64) -> CcmOutput {
    if v.d < RIDE_THROUGH_VOLTAGE {
        return CcmOutput {
            i_ref: Dq::new(held.d, held.q, v.theta_used),
            ride_through: true,
            limited: false,
        };
    }
    let mut d = p_target / v.d;
    let mut q = -q_ref / v.d;
    let mag = d.hypot(q);
    let limited = mag > i_limit;
    if limited {
        d *= i_limit / mag;
        q *= i_limit / mag;
    }
    CcmOutput {
        i_ref: Dq::new(d, q, v.theta_used),
        ride_through: false,
        limited,
    }
}
