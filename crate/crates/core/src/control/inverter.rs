//! Per-inverter controller: ties the PLL, power averaging, reference
//! generation, inner loops and modulation together and handles bumpless
//! transfer between current and voltage control.

use std::f64::consts::PI;

use nalgebra::Complex;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::network::{InverterMeasurement, LcFilterParams};
use crate::simcore::{abc_to_dq, wrap_angle, Dq, FirstOrderLag, PerUnitBase, ThreePhase};

use super::admittance::{VirtualAdmittance, VirtualAdmittanceParams};
use super::ccm::ccm_power_loop;
use super::mode::{select_mode, ControlMode, Mode};
use super::modulation::modulate;
use super::pll::{DsogiPll, PllConfig, PllOutput};
use super::power::{compute_avg_powers, PowerAverager};
use super::srf::{srf_current_step, srf_voltage_step, SrfLoopState};
use super::vsg::{freq_ref_step, volt_ref, VsgParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverterRole {
    /// Current control while grid-connected, voltage control when islanded.
    Pv,
    /// Always voltage control.
    Battery,
}

/// Inner-loop gains in p.u. with time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct LoopGains {
    pub kp_i: f64,
    pub ki_i: f64,
    /// Terminal voltage command limit (p.u.).
    pub e_limit: f64,
    pub kp_v: f64,
    pub ki_v: f64,
    /// Active damping conductance across the filter capacitor (p.u.).
    pub g_ad: f64,
    /// Corner of the damping high-pass (Hz).
    pub f_ad: f64,
    /// Inverter-side current reference limit (p.u.).
    pub i_limit: f64,
}

impl Default for LoopGains {
    fn default() -> Self {
        // 1 kHz current loop on l_f = 0.08. The capacitor-node stage is
        // feedforward only: integral action on the line current drives the
        // circulating mode between paralleled sources unstable.
        let kp_i = 2.0 * PI * 1000.0 * 0.08 / (100.0 * PI);
        Self {
            kp_i,
            ki_i: kp_i * 2.0 * PI * 100.0,
            e_limit: 1.5,
            kp_v: 0.0,
            ki_v: 0.0,
            g_ad: 0.5,
            f_ad: 20.0,
            i_limit: 1.5,
        }
    }
}

impl LoopGains {
    pub fn validate(&self) -> Result<()> {
        let all = [self.kp_i, self.ki_i, self.kp_v, self.ki_v, self.g_ad];
        if all.iter().any(|g| !(*g >= 0.0)) {
            return Err(SimError::config("gains", "gains must be nonnegative"));
        }
        if !(self.e_limit > 0.0 && self.i_limit > 0.0) {
            return Err(SimError::config("gains", "limits must be positive"));
        }
        if !(self.f_ad > 0.0 && self.f_ad.is_finite()) {
            return Err(SimError::config("gains.f_ad", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverterControlConfig {
    pub role: InverterRole,
    pub vsg: VsgParams,
    pub admittance: VirtualAdmittanceParams,
    pub gains: LoopGains,
    pub pll: PllConfig,
    pub filter: LcFilterParams,
    /// Power averaging time constant (s).
    pub t_avg: f64,
    /// Current limit for grid-following references (p.u.).
    pub i_limit_ccm: f64,
}

impl InverterControlConfig {
    pub fn new(role: InverterRole) -> Self {
        Self {
            role,
            vsg: match role {
                InverterRole::Pv => VsgParams::default(),
                InverterRole::Battery => VsgParams::battery_default(),
            },
            admittance: VirtualAdmittanceParams::default(),
            gains: LoopGains::default(),
            pll: PllConfig::default(),
            filter: LcFilterParams::default(),
            t_avg: 0.02,
            i_limit_ccm: 1.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vsg.validate()?;
        self.admittance.validate()?;
        self.gains.validate()?;
        if !(self.t_avg >= 0.0) {
            return Err(SimError::config("t_avg", "must be nonnegative"));
        }
        if !(self.i_limit_ccm > 0.0) {
            return Err(SimError::config("i_limit_ccm", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterInputs {
    pub meas: InverterMeasurement,
    pub grid_connected: bool,
    pub en: bool,
    /// Grid-following active power target (p.u.).
    pub p_target: f64,
    /// DC bus voltage at the bridge (V).
    pub v_dc: f64,
    /// Synchronizer trims, applied in voltage control only.
    pub omega_trim: f64,
    pub v_trim: f64,
    /// Soft-start scale on the voltage reference, 0..1.
    pub ramp: f64,
    pub t: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlFlags {
    pub pll_out_of_band: bool,
    pub admittance_saturated: bool,
    pub loop_saturated: bool,
    pub overmodulated: bool,
    pub ride_through: bool,
    pub current_limited: bool,
}

impl ControlFlags {
    /// Bit mask in declaration order.
    pub fn bits(&self) -> u32 {
        [
            self.pll_out_of_band,
            self.admittance_saturated,
            self.loop_saturated,
            self.overmodulated,
            self.ride_through,
            self.current_limited,
        ]
        .iter()
        .enumerate()
        .map(|(k, &b)| (b as u32) << k)
        .sum()
    }
}

/// Terminal voltage command of the new mode against the command the old
/// mode issues on the same sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeTransition {
    pub from: Mode,
    pub to: Mode,
    pub time: f64,
    /// Angle difference (deg).
    pub angle_jump_deg: f64,
    /// Magnitude difference relative to the old-mode command.
    pub magnitude_jump: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterOutput {
    pub m: ThreePhase,
    pub mode: Mode,
    /// Frequency reported for the source (rad/s).
    pub omega: f64,
    pub p_avg: f64,
    pub q_avg: f64,
    pub v_ref: f64,
    pub pll: PllOutput,
    pub flags: ControlFlags,
    pub transition: Option<ModeTransition>,
    /// Stationary-frame angle and magnitude of the terminal command.
    pub terminal: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub config: InverterControlConfig,
    pub pll: DsogiPll,
    pub avg: PowerAverager,
    pub lag: FirstOrderLag,
    pub va: VirtualAdmittance,
    pub srf: SrfLoopState,
    pub mode: ControlMode,
    pub theta_vsg: f64,
    pub omega_ref: f64,
    ccm_held: Dq,
}

impl ControllerState {
    pub fn new(config: InverterControlConfig, mode: Mode) -> Result<Self> {
        config.validate()?;
        let mode = match config.role {
            InverterRole::Battery => Mode::Vcm,
            InverterRole::Pv => mode,
        };
        Ok(Self {
            pll: DsogiPll::new(config.pll),
            avg: PowerAverager::new(config.t_avg)?,
            lag: config.vsg.new_lag()?,
            va: VirtualAdmittance::new(config.admittance),
            srf: SrfLoopState::new(&config.gains),
            mode: ControlMode::new(mode),
            theta_vsg: 0.0,
            omega_ref: config.vsg.omega_nom,
            ccm_held: Dq::default(),
            config,
        })
    }

    /// Control frame at the current sample: the VSG angle in VCM, the PLL
    /// estimate in CCM.
    fn frame_angle(&self, pll: &PllOutput) -> f64 {
        match self.mode.mode {
            Mode::Vcm => self.theta_vsg,
            Mode::Ccm => pll.theta_plus,
        }
    }

    // Seeds the admittance with the CCM reference this step would have used,
    // so i_o* is continuous.
    fn enter_vcm(&mut self, v: &Dq, p_target: f64, pll: &PllOutput, omega_b: f64) {
        let w_pu = pll.omega / omega_b;
        let ccm = ccm_power_loop(
            p_target,
            self.config.vsg.q_ref,
            v,
            &self.ccm_held,
            self.config.i_limit_ccm,
        );
        let iv = Complex::new(ccm.i_ref.d, ccm.i_ref.q);
        let e0 = Complex::new(v.d, v.q) + self.config.admittance.impedance(w_pu) * iv;
        let delta = e0.arg();
        self.theta_vsg = wrap_angle(pll.theta_plus + delta);
        self.lag.reset(1.0 - pll.omega / self.config.vsg.omega_nom);
        self.omega_ref = pll.omega;
        self.srf.rotate_integrators(delta);
        let i_new = iv * Complex::from_polar(1.0, -delta);
        self.va.preload(i_new.re, i_new.im, w_pu);
    }

    fn enter_ccm(&mut self, pll: &PllOutput, i_o_pll: &Dq) {
        let delta = wrap_angle(pll.theta_plus - self.theta_vsg);
        self.srf.rotate_integrators(delta);
        self.ccm_held = *i_o_pll;
    }

    fn reset_loops(&mut self) {
        self.srf = SrfLoopState::new(&self.config.gains);
        self.va = VirtualAdmittance::new(self.config.admittance);
    }

    pub fn step(&mut self, inp: &InverterInputs, base: &PerUnitBase) -> Result<InverterOutput> {
        let switching = self.config.role == InverterRole::Pv
            && inp.en
            && select_mode(inp.grid_connected, inp.en, self.mode, inp.t).mode != self.mode.mode;
        if !switching {
            return self.advance(inp, base, true);
        }
        let mut shadow = self.clone();
        let old = shadow.advance(inp, base, false)?;
        let mut out = self.advance(inp, base, true)?;
        let ((a0, m0), (a1, m1)) = (old.terminal, out.terminal);
        out.transition = Some(ModeTransition {
            from: old.mode,
            to: out.mode,
            time: inp.t,
            angle_jump_deg: wrap_angle(a1 - a0).to_degrees(),
            magnitude_jump: (m1 - m0) / m0.max(1e-6),
        });
        Ok(out)
    }

    fn advance(
        &mut self,
        inp: &InverterInputs,
        base: &PerUnitBase,
        allow_switch: bool,
    ) -> Result<InverterOutput> {
        let dt = inp.dt;
        let omega_b = base.omega_base();
        let pll = self.pll.step(&inp.meas.v_o, dt);

        let previous = self.mode;
        if allow_switch && self.config.role == InverterRole::Pv {
            self.mode = select_mode(inp.grid_connected, inp.en, self.mode, inp.t);
        }
        if self.mode.mode != previous.mode {
            let v = abc_to_dq(&inp.meas.v_o, pll.theta_plus)?;
            let i = abc_to_dq(&inp.meas.i_o, pll.theta_plus)?;
            match self.mode.mode {
                Mode::Vcm => self.enter_vcm(&v, inp.p_target, &pll, omega_b),
                Mode::Ccm => self.enter_ccm(&pll, &i),
            }
        }

        let theta = self.frame_angle(&pll);
        let v_o = abc_to_dq(&inp.meas.v_o, theta)?;
        let i_o = abc_to_dq(&inp.meas.i_o, theta)?;
        let i_i = abc_to_dq(&inp.meas.i_i, theta)?;
        let (p_avg, q_avg) = compute_avg_powers(&v_o, &i_o, &mut self.avg, dt)?;

        let mut flags = ControlFlags {
            pll_out_of_band: pll.out_of_band,
            ..Default::default()
        };
        let (omega, v_ref, i_o_ref) = match self.mode.mode {
            Mode::Vcm => {
                self.omega_ref = freq_ref_step(&self.config.vsg, &mut self.lag, p_avg, dt)?;
                let omega = self.omega_ref + inp.omega_trim;
                let v_ref = volt_ref(&self.config.vsg, q_avg) * inp.ramp + inp.v_trim;
                let e_star = Dq::new(v_ref, 0.0, theta);
                let i_ref = self.va.step(&e_star, &v_o, omega / omega_b, omega_b, dt)?;
                flags.admittance_saturated = self.va.saturated;
                (omega, v_ref, i_ref)
            }
            Mode::Ccm => {
                let out = ccm_power_loop(
                    inp.p_target,
                    self.config.vsg.q_ref,
                    &v_o,
                    &self.ccm_held,
                    self.config.i_limit_ccm,
                );
                self.ccm_held = out.i_ref;
                flags.ride_through = out.ride_through;
                flags.current_limited = out.limited;
                (pll.omega, v_o.d, out.i_ref)
            }
        };

        let w_pu = omega / omega_b;
        let f = self.config.filter;
        let i_i_ref = srf_voltage_step(&mut self.srf, &i_o_ref, &i_o, &v_o, w_pu, f.c_f, dt)?;
        let e = srf_current_step(&mut self.srf, &i_i_ref, &i_i, &v_o, w_pu, f.l_f, dt)?;
        flags.loop_saturated = self.srf.saturated();

        let theta_mod = theta + 0.5 * omega * dt;
        let modulation = modulate(&e, theta_mod, inp.v_dc, base, inp.en)?;
        flags.overmodulated = modulation.overmodulated;

        if !inp.en {
            self.reset_loops();
        }
        if self.mode.mode == Mode::Vcm {
            self.theta_vsg = wrap_angle(self.theta_vsg + omega * dt);
        }

        Ok(InverterOutput {
            m: modulation.m,
            mode: self.mode.mode,
            omega,
            p_avg,
            q_avg,
            v_ref,
            pll,
            flags,
            transition: None,
            terminal: (theta + e.q.atan2(e.d), e.magnitude()),
        })
    }
}
