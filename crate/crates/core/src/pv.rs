//! PV array model, DC link and perturb-and-observe MPPT.
//!
//! The array uses the explicit single-diode approximation
//!
//! ```text
//! I(V) = I_ph [1 - (exp(V / (s V_oc)) - 1) / (exp(1 / s) - 1)]
//! ```
//!
//! which passes through `(0, I_sc)` and `(V_oc, 0)` exactly. The shape
//! parameter `s` and `I_sc` are fitted so that the curve's power maximum sits
//! at the rated `(V_mp, P_mp)` point.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const STC_IRRADIANCE: f64 = 1000.0;
pub const STC_TEMPERATURE: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvArrayParams {
    pub i_sc: f64,
    pub v_oc: f64,
    pub v_mp: f64,
    pub i_mp: f64,
    /// Curve shape parameter `s` (dimensionless, small values give a squarer knee).
    pub shape: f64,
    /// Relative change of I_sc per degree C.
    pub alpha_isc: f64,
    /// Relative change of V_oc per degree C.
    pub beta_voc: f64,
}

/// Rating anchors from which [`PvArrayParams`] are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PvRating {
    pub v_oc: f64,
    pub v_mp: f64,
    /// Rated power (W) at standard conditions.
    pub p_mp: f64,
    pub alpha_isc: f64,
    pub beta_voc: f64,
}

impl Default for PvRating {
    fn default() -> Self {
        Self {
            v_oc: 700.0,
            v_mp: 580.0,
            p_mp: 22_000.0,
            alpha_isc: 0.0005,
            beta_voc: -0.003,
        }
    }
}

fn shape_residual(x: f64, s: f64) -> f64 {
    // dP/dV = 0 at V = x V_oc, scaled by (exp(1/s) - 1)
    let e1 = (1.0 / s).exp_m1();
    let ex = (x / s).exp();
    e1 - (ex - 1.0) - (x / s) * ex
}

impl PvArrayParams {
    pub fn fit(rating: &PvRating) -> Result<Self> {
        let PvRating {
            v_oc,
            v_mp,
            p_mp,
            alpha_isc,
            beta_voc,
        } = *rating;
        if !(v_oc > 0.0 && v_mp > 0.0 && v_mp < v_oc && p_mp > 0.0) {
            return Err(SimError::config(
                "pv.rating",
                "need 0 < v_mp < v_oc and p_mp > 0",
            ));
        }
        let x = v_mp / v_oc;
        // residual is positive for small s and negative for large s
        let (mut lo, mut hi) = (1e-2, 10.0);
        if shape_residual(x, lo) <= 0.0 || shape_residual(x, hi) >= 0.0 {
            return Err(SimError::config(
                "pv.rating",
                "v_mp / v_oc ratio cannot be fitted",
            ));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if shape_residual(x, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let frac = 1.0 - (x / s).exp_m1() / (1.0 / s).exp_m1();
        let i_mp = p_mp / v_mp;
        Ok(Self {
            i_sc: i_mp / frac,
            v_oc,
            v_mp,
            i_mp,
            shape: s,
            alpha_isc,
            beta_voc,
        })
    }

    pub fn p_mp(&self) -> f64 {
        self.v_mp * self.i_mp
    }

    fn conditions(&self, irradiance: f64, temperature: f64) -> (f64, f64) {
        let dt = temperature - STC_TEMPERATURE;
        let i_ph = self.i_sc * (irradiance / STC_IRRADIANCE) * (1.0 + self.alpha_isc * dt);
        let v_oc = self.v_oc * (1.0 + self.beta_voc * dt);
        (i_ph, v_oc)
    }

    /// Open-circuit voltage at the given temperature.
    pub fn v_oc_at(&self, temperature: f64) -> f64 {
        self.conditions(STC_IRRADIANCE, temperature).1
    }
}

/// Array current at terminal voltage `v_dc`. Above the open-circuit voltage
/// the current turns negative.
pub fn pv_current(
    v_dc: f64,
    irradiance: f64,
    temperature: f64,
    params: &PvArrayParams,
) -> Result<f64> {
    if !(v_dc >= 0.0) {
        return Err(SimError::Domain(format!("PV voltage {v_dc} V is negative")));
    }
    let (i_ph, v_oc) = params.conditions(irradiance.max(0.0), temperature);
    let s = params.shape;
    Ok(i_ph * (1.0 - (v_dc / (s * v_oc)).exp_m1() / (1.0 / s).exp_m1()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvOperatingPoint {
    pub v_dc: f64,
    pub i_dc: f64,
    pub p: f64,
    pub irradiance: f64,
    pub temperature: f64,
}

impl PvOperatingPoint {
    pub fn at(
        v_dc: f64,
        irradiance: f64,
        temperature: f64,
        params: &PvArrayParams,
    ) -> Result<Self> {
        let i_dc = pv_current(v_dc, irradiance, temperature, params)?;
        Ok(Self {
            v_dc,
            i_dc,
            p: v_dc * i_dc,
            irradiance,
            temperature,
        })
    }
}

/// Perturb-and-observe state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpptState {
    pub v_ref: f64,
    pub last_p: f64,
    pub last_v: f64,
    pub step_size: f64,
    pub enabled: bool,
    /// +1 when the last perturbation raised the voltage.
    pub direction: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl MpptState {
    pub fn new(v_ref: f64, step_size: f64, v_oc: f64) -> Self {
        let (v_min, v_max) = (0.1 * v_oc, v_oc);
        Self {
            v_ref: v_ref.clamp(v_min, v_max),
            last_p: f64::NEG_INFINITY,
            last_v: v_ref,
            step_size,
            enabled: true,
            direction: 1.0,
            v_min,
            v_max,
        }
    }

    /// Restart tracking from the present operating voltage.
    pub fn restart_at(&mut self, v: f64) {
        self.v_ref = v.clamp(self.v_min, self.v_max);
        self.last_v = v;
        self.last_p = f64::NEG_INFINITY;
    }
}

/// One P&O iteration. A flat power change keeps the current direction.
pub fn mppt_step(state: &MpptState, p: f64, v_dc: f64) -> MpptState {
    let mut next = *state;
    if !state.enabled {
        return next;
    }
    if p < state.last_p {
        next.direction = -state.direction;
    }
    next.v_ref = (state.v_ref + next.direction * state.step_size).clamp(state.v_min, state.v_max);
    next.last_p = p;
    next.last_v = v_dc;
    next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcLinkStep {
    pub v_dc: f64,
    /// Set when the voltage was clamped at zero.
    pub collapsed: bool,
}

/// Forward-Euler DC capacitor update `v' = v + dt (i_pv - i_inv) / c_dc`.
pub fn dc_link_step(v_dc: f64, i_pv: f64, i_inv: f64, c_dc: f64, dt: f64) -> Result<DcLinkStep> {
    if !(c_dc > 0.0) {
        return Err(SimError::config(
            "pv.c_dc",
            "DC capacitance must be positive",
        ));
    }
    let v = v_dc + dt * (i_pv - i_inv) / c_dc;
    Ok(if v <= 0.0 {
        DcLinkStep {
            v_dc: 0.0,
            collapsed: true,
        }
    } else {
        DcLinkStep {
            v_dc: v,
            collapsed: false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn array() -> PvArrayParams {
        PvArrayParams::fit(&PvRating::default()).unwrap()
    }

    /// Brute-force maximum of v * i(v) on a fine grid.
    fn scan_mpp(p: &PvArrayParams, g: f64, t: f64) -> (f64, f64) {
        let n = 200_000;
        let v_oc = p.v_oc_at(t);
        (0..=n)
            .map(|k| {
                let v = v_oc * k as f64 / n as f64;
                (v, v * pv_current(v, g, t, p).unwrap())
            })
            .fold(
                (0.0, f64::MIN),
                |best, x| if x.1 > best.1 { x } else { best },
            )
    }

    #[test]
    fn short_and_open_circuit() {
        let p = array();
        assert_abs_diff_eq!(
            pv_current(0.0, 1000.0, 25.0, &p).unwrap(),
            p.i_sc,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pv_current(p.v_oc, 1000.0, 25.0, &p).unwrap(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn rated_power_at_v_mp() {
        let p = array();
        let pw = p.v_mp * pv_current(p.v_mp, 1000.0, 25.0, &p).unwrap();
        assert!((pw - 22_000.0).abs() / 22_000.0 < 0.005);
        let (v_best, p_best) = scan_mpp(&p, 1000.0, 25.0);
        assert!((v_best - 580.0).abs() < 0.1, "scan v = {v_best}");
        assert!((p_best - 22_000.0).abs() < 1.0);
    }

    #[test]
    fn negative_voltage_rejected() {
        assert!(matches!(
            pv_current(-1.0, 1000.0, 25.0, &array()),
            Err(SimError::Domain(_))
        ));
    }

    #[test]
    fn strictly_decreasing_with_single_interior_max() {
        let p = array();
        let vs: Vec<f64> = (1..7000).map(|k| k as f64 * 0.1).collect();
        let is: Vec<f64> = vs
            .iter()
            .map(|&v| pv_current(v, 1000.0, 25.0, &p).unwrap())
            .collect();
        assert!(is.windows(2).all(|w| w[1] < w[0]));
        let ps: Vec<f64> = vs.iter().zip(&is).map(|(v, i)| v * i).collect();
        let sign_changes = ps
            .windows(3)
            .filter(|w| (w[1] - w[0]).signum() != (w[2] - w[1]).signum())
            .count();
        assert_eq!(sign_changes, 1);
    }

    #[test]
    fn half_irradiance() {
        let p = array();
        let (v1, p1) = scan_mpp(&p, 1000.0, 25.0);
        let (v2, p2) = scan_mpp(&p, 500.0, 25.0);
        assert_abs_diff_eq!(p2 / p1, 0.5, epsilon = 0.01);
        assert_abs_diff_eq!(
            pv_current(0.0, 500.0, 25.0, &p).unwrap() / p.i_sc,
            0.5,
            epsilon = 1e-12
        );
        assert!(((v2 - v1) / v1).abs() < 0.05);
    }

    #[test]
    fn mppt_converges_to_brute_force_optimum() {
        let p = array();
        let (v_true, p_true) = scan_mpp(&p, 1000.0, 25.0);
        let mut st = MpptState::new(0.8 * p.v_oc, 2.0, p.v_oc);
        let mut tail = Vec::new();
        for k in 0..400 {
            let v = st.v_ref;
            let pw = v * pv_current(v, 1000.0, 25.0, &p).unwrap();
            st = mppt_step(&st, pw, v);
            if k > 300 {
                tail.push((st.v_ref, pw));
            }
        }
        for (v, pw) in tail {
            assert!((v - v_true).abs() <= st.step_size + 0.01, "v = {v}");
            assert!(pw >= 0.99 * p_true);
        }
    }

    #[test]
    fn mppt_flat_keeps_direction() {
        let mut st = MpptState::new(500.0, 2.0, 700.0);
        st.last_p = 1000.0;
        st.direction = -1.0;
        let next = mppt_step(&st, 1000.0, 500.0);
        assert_eq!(next.direction, -1.0);
        assert_eq!(next.v_ref, 498.0);
    }

    #[test]
    fn mppt_disabled_freezes() {
        let mut st = MpptState::new(500.0, 2.0, 700.0);
        st.enabled = false;
        assert_eq!(mppt_step(&st, 123.0, 500.0).v_ref, 500.0);
    }

    #[test]
    fn mppt_reference_clamped() {
        let mut st = MpptState::new(699.0, 2.0, 700.0);
        for k in 0..10 {
            st = mppt_step(&st, k as f64, 699.0);
        }
        assert_eq!(st.v_ref, 700.0);
    }

    #[test]
    fn dc_link_balance_and_charge() {
        assert_eq!(
            dc_link_step(600.0, 5.0, 5.0, 0.01, 1e-4).unwrap().v_dc,
            600.0
        );
        let s = dc_link_step(600.0, 10.0, 0.0, 0.01, 1e-4).unwrap();
        assert_abs_diff_eq!(s.v_dc - 600.0, 0.1, epsilon = 1e-9);
        assert!(dc_link_step(600.0, 1.0, 0.0, 0.0, 1e-4).is_err());
    }

    #[test]
    fn dc_link_decays_to_collapse() {
        let mut v = 50.0;
        let mut prev = v;
        for _ in 0..10_000 {
            let s = dc_link_step(v, 1.0, 5.0, 0.01, 1e-4).unwrap();
            assert!(s.v_dc <= prev);
            prev = s.v_dc;
            v = s.v_dc;
            if s.collapsed {
                assert_eq!(v, 0.0);
                return;
            }
        }
        panic!("no collapse");
    }
}
