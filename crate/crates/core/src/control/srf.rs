use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::simcore::{Dq, FirstOrderLag, VectorPi};

use super::inverter::LoopGains;

/// Integrators of the outer capacitor-node loop and the inner inductor
/// current loop, plus the low-pass of the capacitor voltage used for
/// active damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrfLoopState {
    pub voltage: VectorPi,
    pub current: VectorPi,
    /// Virtual conductance across the capacitor above `f_ad` (p.u.).
    pub g_ad: f64,
    lag: FirstOrderLag,
    v_lp: Option<[FirstOrderLag; 2]>,
}

impl SrfLoopState {
    pub fn new(g: &LoopGains) -> Self {
        Self {
            voltage: VectorPi::new(g.kp_v, g.ki_v, g.i_limit),
            current: VectorPi::new(g.kp_i, g.ki_i, g.e_limit),
            g_ad: g.g_ad,
            lag: FirstOrderLag::new(1.0 / (2.0 * std::f64::consts::PI * g.f_ad))
                .expect("validated corner frequency"),
            v_lp: None,
        }
    }

    /// Frame change: integrators and the damping filter follow the rotation.
    pub fn rotate_integrators(&mut self, delta: f64) {
        self.voltage.rotate_integrators(delta);
        self.current.rotate_integrators(delta);
        if let Some([d, q]) = &mut self.v_lp {
            FirstOrderLag::rotate_pair(d, q, delta);
        }
    }

    /// High-passed capacitor voltage.
    fn v_hp(&mut self, v: &Dq, dt: f64) -> Result<(f64, f64)> {
        if self.g_ad == 0.0 {
            return Ok((0.0, 0.0));
        }
        let lag = self.lag;
        let lp = self
            .v_lp
            .get_or_insert_with(|| [lag.with_initial(v.d), lag.with_initial(v.q)]);
        let d = lp[0].step(v.d, dt)?;
        let q = lp[1].step(v.q, dt)?;
        Ok((v.d - d, v.q - q))
    }

    pub fn saturated(&self) -> bool {
        self.voltage.d.saturated
            || self.voltage.q.saturated
            || self.current.d.saturated
            || self.current.q.saturated
    }
}

fn same_frame(xs: &[&Dq]) -> Result<f64> {
    let th = xs[0].theta_used;
    if xs.iter().any(|x| (x.theta_used - th).abs() > 1e-12) {
        return Err(SimError::Contract(
            "SRF loop inputs in different frames".into(),
        ));
    }
    Ok(th)
}

/// Capacitor-node stage: inverter-side current reference that steers the
/// output current onto `i_o_ref`, with the capacitor charging current
/// `j omega c_f v_o` fed forward and a high-pass virtual conductance across
/// the capacitor.
pub fn srf_voltage_step(
    st: &mut SrfLoopState,
    i_o_ref: &Dq,
    i_o: &Dq,
    v_o: &Dq,
    omega_pu: f64,
    c_f: f64,
    dt: f64,
) -> Result<Dq> {
    let th = same_frame(&[i_o_ref, i_o, v_o])?;
    let (hd, hq) = st.v_hp(v_o, dt)?;
    let ff_d = i_o_ref.d - omega_pu * c_f * v_o.q - st.g_ad * hd;
    let ff_q = i_o_ref.q + omega_pu * c_f * v_o.d - st.g_ad * hq;
    let d = st.voltage.d.step(i_o_ref.d - i_o.d, ff_d, dt);
    let q = st.voltage.q.step(i_o_ref.q - i_o.q, ff_q, dt);
    Ok(Dq::new(d, q, th))
}

/// Inductor current loop. Returns the terminal voltage command in p.u.
pub fn srf_current_step(
    st: &mut SrfLoopState,
    i_i_ref: &Dq,
    i_i: &Dq,
    v_o: &Dq,
    omega_pu: f64,
    l_f: f64,
    dt: f64,
) -> Result<Dq> {
    let th = same_frame(&[i_i_ref, i_i, v_o])?;
    let ff_d = v_o.d - omega_pu * l_f * i_i.q;
    let ff_q = v_o.q + omega_pu * l_f * i_i.d;
    let d = st.current.d.step(i_i_ref.d - i_i.d, ff_d, dt);
    let q = st.current.q.step(i_i_ref.q - i_i.q, ff_q, dt);
    Ok(Dq::new(d, q, th))
}
