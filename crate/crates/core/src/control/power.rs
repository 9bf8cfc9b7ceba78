use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::simcore::{Dq, FirstOrderLag};

/// Instantaneous `(p, q)` in p.u. from same-frame voltage and current.
///
/// With peak-value quantities on the feeder base the 3/2 factor cancels:
/// `p = v_d i_d + v_q i_q`, `q = v_q i_d - v_d i_q`. Lagging (inductive)
/// current gives positive `q`.
pub fn instantaneous_powers(v: &Dq, i: &Dq) -> Result<(f64, f64)> {
    if (v.theta_used - i.theta_used).abs() > 1e-12 {
        return Err(SimError::Contract(format!(
            "voltage frame {} rad differs from current frame {} rad",
            v.theta_used, i.theta_used
        )));
    }
    Ok((v.d * i.d + v.q * i.q, v.q * i.d - v.d * i.q))
}

/// Lag filters producing `P_avg` and `Q_avg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAverager {
    pub p: FirstOrderLag,
    pub q: FirstOrderLag,
}

impl PowerAverager {
    pub fn new(t_const: f64) -> Result<Self> {
        Ok(Self {
            p: FirstOrderLag::new(t_const)?,
            q: FirstOrderLag::new(t_const)?,
        })
    }

    pub fn p_avg(&self) -> f64 {
        self.p.y
    }

    pub fn q_avg(&self) -> f64 {
        self.q.y
    }
}

pub fn compute_avg_powers(v: &Dq, i: &Dq, avg: &mut PowerAverager, dt: f64) -> Result<(f64, f64)> {
    let (p, q) = instantaneous_powers(v, i)?;
    Ok((avg.p.step(p, dt)?, avg.q.step(q, dt)?))
}
