//! Reconnection supervisor at the point of common coupling.
//!
//! Compares a PLL on the utility side with a PLL on the island bus, trims
//! the frequency and voltage references of every grid-forming source until
//! the two sides line up, and grants breaker closure once all errors have
//! stayed inside their bands for a contiguous dwell time.
//!
//! All deltas are island minus grid.

use std::f64::consts::PI;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::control::PllOutput;
use crate::error::{Result, SimError};
use crate::simcore::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SyncThresholds {
    /// rad
    pub max_phase_err: f64,
    /// p.u.
    pub max_volt_err: f64,
    /// Hz
    pub max_freq_err: f64,
    /// s
    pub dwell: f64,
}

impl Default for SyncThresholds {
    fn default() -> Self {
        Self {
            max_phase_err: 5f64.to_radians(),
            max_volt_err: 0.02,
            max_freq_err: 0.05,
            dwell: 0.1,
        }
    }
}

impl SyncThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.max_phase_err,
            self.max_volt_err,
            self.max_freq_err,
            self.dwell,
        ];
        if all.iter().any(|x| !(*x > 0.0)) {
            return Err(SimError::config(
                "synchronizer.thresholds",
                "all thresholds must be positive",
            ));
        }
        Ok(())
    }
}

/// Trim gains and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SyncGains {
    /// (rad/s) per rad
    pub k_theta: f64,
    /// (rad/s) per (rad s)
    pub ki_theta: f64,
    /// (rad/s) per (rad/s)
    pub k_f: f64,
    pub k_v: f64,
    /// 1/s
    pub ki_v: f64,
    /// Frequency trim limit (Hz).
    pub max_freq_trim: f64,
    /// Voltage trim limit (p.u.).
    pub max_volt_trim: f64,
    /// Trim update rate (Hz).
    pub update_hz: f64,
    /// Time to unwind the trims after closing (s).
    pub release_time: f64,
}

impl Default for SyncGains {
    fn default() -> Self {
        Self {
            k_theta: 50.0,
            ki_theta: 600.0,
            k_f: 0.8,
            k_v: 0.2,
            ki_v: 20.0,
            max_freq_trim: 0.5,
            max_volt_trim: 0.05,
            update_hz: 100.0,
            release_time: 1.0,
        }
    }
}

impl SyncGains {
    pub fn validate(&self) -> Result<()> {
        let gains = [self.k_theta, self.ki_theta, self.k_f, self.k_v, self.ki_v];
        if gains.iter().any(|g| !(*g >= 0.0)) {
            return Err(SimError::config(
                "synchronizer.gains",
                "gains must be nonnegative",
            ));
        }
        if !(self.k_f < 1.0) {
            return Err(SimError::config(
                "synchronizer.gains.k_f",
                "must be below 1",
            ));
        }
        let pos = [self.max_freq_trim, self.max_volt_trim, self.update_hz];
        if pos.iter().any(|x| !(*x > 0.0)) {
            return Err(SimError::config(
                "synchronizer.gains",
                "limits and update rate must be positive",
            ));
        }
        if !(self.release_time >= 0.0) {
            return Err(SimError::config(
                "synchronizer.gains.release_time",
                "must be nonnegative",
            ));
        }
        Ok(())
    }

    pub fn omega_limit(&self) -> f64 {
        2.0 * PI * self.max_freq_trim
    }
}

/// Angle, frequency and positive-sequence magnitude from one PLL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PllReading {
    pub theta: f64,
    pub omega: f64,
    pub v: f64,
    pub out_of_band: bool,
}

impl From<&PllOutput> for PllReading {
    fn from(o: &PllOutput) -> Self {
        Self {
            theta: o.theta_plus,
            omega: o.omega,
            v: o.v_plus.magnitude(),
            out_of_band: o.out_of_band,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncStatus {
    /// rad, wrapped to `[-pi, pi)`
    pub delta_theta: f64,
    /// p.u.
    pub delta_v: f64,
    /// Hz
    pub delta_f: f64,
    pub in_band_since: Option<f64>,
    pub armed: bool,
    /// False while either PLL is out of band.
    pub available: bool,
}

pub fn sync_error(grid: &PllReading, island: &PllReading) -> SyncStatus {
    SyncStatus {
        delta_theta: wrap_angle(island.theta - grid.theta),
        delta_v: island.v - grid.v,
        delta_f: (island.omega - grid.omega) / (2.0 * PI),
        in_band_since: None,
        armed: false,
        available: !(grid.out_of_band || island.out_of_band),
    }
}

/// Integrator state of the trim controllers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncIntegrators {
    pub theta: f64,
    pub v: f64,
}

/// Frequency trim (rad/s) and voltage trim (p.u.) for the given errors;
/// advances the integrators by `dt`.
pub fn sync_adjust(
    status: &SyncStatus,
    gains: &SyncGains,
    integ: &mut SyncIntegrators,
    dt: f64,
) -> (f64, f64) {
    let w_lim = gains.omega_limit();
    let v_lim = gains.max_volt_trim;
    let omega =
        -gains.k_theta * status.delta_theta - gains.k_f * 2.0 * PI * status.delta_f + integ.theta;
    let v = -gains.k_v * status.delta_v + integ.v;
    let omega_trim = omega.clamp(-w_lim, w_lim);
    let v_trim = v.clamp(-v_lim, v_lim);
    // conditional integration: hold while pushing further into the clamp
    if omega == omega_trim || omega.signum() == status.delta_theta.signum() {
        integ.theta = (integ.theta - gains.ki_theta * status.delta_theta * dt).clamp(-w_lim, w_lim);
    }
    if v == v_trim || v.signum() == status.delta_v.signum() {
        integ.v = (integ.v - gains.ki_v * status.delta_v * dt).clamp(-v_lim, v_lim);
    }
    (omega_trim, v_trim)
}

/// Updates the dwell timer in `status` and reports whether closing is
/// permitted at time `t`.
pub fn check_and_close(status: &mut SyncStatus, thr: &SyncThresholds, t: f64) -> bool {
    let inside = status.armed
        && status.available
        && status.delta_theta.abs() < thr.max_phase_err
        && status.delta_v.abs() < thr.max_volt_err
        && status.delta_f.abs() < thr.max_freq_err;
    if !inside {
        status.in_band_since = None;
        return false;
    }
    let since = *status.in_band_since.get_or_insert(t);
    t - since >= thr.dwell - 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncPhase {
    Idle,
    Armed,
    /// Breaker closed; trims unwinding.
    Releasing,
}

/// Output of one synchronizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncOutput {
    pub status: SyncStatus,
    /// Set on the step where closing becomes permitted.
    pub close_permission: bool,
    /// True on update instants where an armed check was denied.
    pub denied: bool,
}

/// Stateful supervisor stepped once per simulation step after the
/// controllers. Trims computed here are read by the controllers on the next
/// step.
#[derive(Debug, Clone, PartialEq)]
pub struct Synchronizer {
    pub thresholds: SyncThresholds,
    pub gains: SyncGains,
    pub phase: SyncPhase,
    pub status: SyncStatus,
    integ: SyncIntegrators,
    omega_trim: f64,
    v_trim: f64,
    next_update: f64,
    release: Option<(f64, f64, f64)>,
    /// Unwrapped phase error steered by the trims, with the last wrapped
    /// sample it was advanced from.
    tracked: Option<(f64, f64)>,
}

impl Synchronizer {
    pub fn new(thresholds: SyncThresholds, gains: SyncGains) -> Result<Self> {
        thresholds.validate()?;
        gains.validate()?;
        Ok(Self {
            thresholds,
            gains,
            phase: SyncPhase::Idle,
            status: SyncStatus {
                delta_theta: 0.0,
                delta_v: 0.0,
                delta_f: 0.0,
                in_band_since: None,
                armed: false,
                available: false,
            },
            integ: SyncIntegrators::default(),
            omega_trim: 0.0,
            v_trim: 0.0,
            next_update: 0.0,
            release: None,
            tracked: None,
        })
    }

    /// `(omega_trim, v_trim)` currently broadcast.
    pub fn trims(&self) -> (f64, f64) {
        (self.omega_trim, self.v_trim)
    }

    pub fn arm(&mut self, t: f64) {
        if self.phase != SyncPhase::Armed {
            self.phase = SyncPhase::Armed;
            self.integ = SyncIntegrators::default();
            self.status.in_band_since = None;
            self.next_update = t;
            self.tracked = None;
        }
    }

    /// Breaker has closed: freeze the trims and unwind them linearly.
    pub fn on_closed(&mut self, t: f64) {
        self.phase = SyncPhase::Releasing;
        self.status.armed = false;
        self.status.in_band_since = None;
        self.release = Some((t, self.omega_trim, self.v_trim));
    }

    /// Breaker opened: drop everything back to idle.
    pub fn on_opened(&mut self) {
        self.phase = SyncPhase::Idle;
        self.status.armed = false;
        self.status.in_band_since = None;
        self.omega_trim = 0.0;
        self.v_trim = 0.0;
        self.integ = SyncIntegrators::default();
        self.release = None;
        self.tracked = None;
    }

    /// Phase error to steer. On the first sample the slip direction is
    /// picked by which way round the circle closes sooner given the trim
    /// authority left over after the present frequency offset; afterwards
    /// the error is unwrapped so the choice sticks.
    fn steering_error(&mut self, status: &SyncStatus) -> f64 {
        let e = match self.tracked {
            Some((unwrapped, last)) => unwrapped + wrap_angle(status.delta_theta - last),
            None => {
                let w_lim = self.gains.omega_limit();
                let slip = 2.0 * PI * status.delta_f - self.omega_trim;
                let down = (w_lim - slip).max(1e-3);
                let up = (w_lim + slip).max(1e-3);
                let e = status.delta_theta;
                let other = if e > 0.0 { e - 2.0 * PI } else { e + 2.0 * PI };
                let time = |x: f64| if x > 0.0 { x / down } else { -x / up };
                if time(other) < time(e) {
                    other
                } else {
                    e
                }
            }
        };
        self.tracked = Some((e, status.delta_theta));
        e
    }

    pub fn step(&mut self, grid: &PllReading, island: &PllReading, t: f64) -> SyncOutput {
        let mut status = sync_error(grid, island);
        status.armed = self.phase == SyncPhase::Armed;
        status.in_band_since = self.status.in_band_since;
        let mut out = SyncOutput {
            status,
            close_permission: false,
            denied: false,
        };
        match self.phase {
            SyncPhase::Idle => {
                self.status = status;
            }
            SyncPhase::Releasing => {
                if let Some((t0, w0, v0)) = self.release {
                    let k = if self.gains.release_time > 0.0 {
                        (1.0 - (t - t0) / self.gains.release_time).max(0.0)
                    } else {
                        0.0
                    };
                    self.omega_trim = w0 * k;
                    self.v_trim = v0 * k;
                    if k == 0.0 {
                        self.release = None;
                        self.phase = SyncPhase::Idle;
                    }
                }
                self.status = status;
            }
            SyncPhase::Armed => {
                let period = 1.0 / self.gains.update_hz;
                if t + 1e-9 >= self.next_update {
                    self.next_update += period;
                    if status.available {
                        let steer = SyncStatus {
                            delta_theta: self.steering_error(&status),
                            ..status
                        };
                        let (w, v) = sync_adjust(&steer, &self.gains, &mut self.integ, period);
                        self.omega_trim = w;
                        self.v_trim = v;
                    }
                    out.close_permission = check_and_close(&mut status, &self.thresholds, t);
                    out.denied = !out.close_permission;
                }
                self.status = status;
                out.status = status;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reading(theta: f64, f: f64, v: f64) -> PllReading {
        PllReading {
            theta,
            omega: 2.0 * PI * f,
            v,
            out_of_band: false,
        }
    }

    fn armed(dth: f64, dv: f64, df: f64) -> SyncStatus {
        SyncStatus {
            delta_theta: dth,
            delta_v: dv,
            delta_f: df,
            in_band_since: None,
            armed: true,
            available: true,
        }
    }

    #[test]
    fn identical_inputs() {
        let r = reading(0.3, 50.0, 1.0);
        let s = sync_error(&r, &r);
        assert_eq!((s.delta_theta, s.delta_v, s.delta_f), (0.0, 0.0, 0.0));
    }

    #[test]
    fn slow_island_ramps_phase() {
        let dt = 1e-3;
        let mut prev = None;
        for n in 0..500 {
            let t = n as f64 * dt;
            let g = reading(wrap_angle(2.0 * PI * 50.0 * t), 50.0, 1.0);
            let i = reading(wrap_angle(2.0 * PI * 49.9 * t), 49.9, 1.0);
            let s = sync_error(&g, &i);
            assert_abs_diff_eq!(s.delta_f.abs(), 0.1, epsilon = 1e-9);
            if let Some(p) = prev {
                let rate = wrap_angle(s.delta_theta - p) / dt;
                assert_abs_diff_eq!(rate.abs(), 2.0 * PI * 0.1, epsilon = 1e-6);
            }
            prev = Some(s.delta_theta);
        }
    }

    #[test]
    fn wraps_350_degrees() {
        let s = sync_error(
            &reading(0.0, 50.0, 1.0),
            &reading(350f64.to_radians(), 50.0, 1.0),
        );
        assert_abs_diff_eq!(s.delta_theta.to_degrees(), -10.0, epsilon = 1e-9);
    }

    #[test]
    fn out_of_band_makes_unavailable() {
        let mut g = reading(0.0, 50.0, 1.0);
        g.out_of_band = true;
        assert!(!sync_error(&g, &reading(0.0, 50.0, 1.0)).available);
    }

    #[test]
    fn zero_errors_zero_trims() {
        let mut integ = SyncIntegrators::default();
        let t = sync_adjust(
            &armed(0.0, 0.0, 0.0),
            &SyncGains::default(),
            &mut integ,
            0.01,
        );
        assert_eq!(t, (0.0, 0.0));
    }

    #[test]
    fn leading_island_slows_down() {
        let g = SyncGains::default();
        let mut integ = SyncIntegrators::default();
        let (w, _) = sync_adjust(&armed(0.002, 0.0, 0.0), &g, &mut integ, 0.01);
        assert!(w < 0.0);
        assert_abs_diff_eq!(w, -g.k_theta * 0.002, epsilon = 1e-12);
        // unclamped at +0.2 rad with a softer gain
        let soft = SyncGains { k_theta: 1.0, ..g };
        let (w, _) = sync_adjust(
            &armed(0.2, 0.0, 0.0),
            &soft,
            &mut SyncIntegrators::default(),
            0.01,
        );
        assert_abs_diff_eq!(w, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn trims_clamped() {
        let g = SyncGains::default();
        let mut integ = SyncIntegrators::default();
        let (w, v) = sync_adjust(&armed(3.0, -0.5, 0.0), &g, &mut integ, 0.01);
        assert_abs_diff_eq!(w, -PI, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.05, epsilon = 1e-12);
        for _ in 0..1000 {
            sync_adjust(&armed(3.0, -0.5, 0.0), &g, &mut integ, 0.01);
        }
        assert!(integ.theta.abs() <= g.omega_limit() && integ.v.abs() <= g.max_volt_trim);
    }

    #[test]
    fn permission_after_dwell() {
        let thr = SyncThresholds::default();
        let mut s = armed(0.0, 0.0, 0.0);
        assert!(!check_and_close(&mut s, &thr, 1.0));
        assert!(!check_and_close(&mut s, &thr, 1.05));
        assert!(check_and_close(&mut s, &thr, 1.1));
    }

    #[test]
    fn large_phase_denied() {
        let thr = SyncThresholds::default();
        let mut s = armed(30f64.to_radians(), 0.0, 0.0);
        for k in 0..100 {
            assert!(!check_and_close(&mut s, &thr, k as f64 * 0.01));
        }
    }

    #[test]
    fn dwell_restarts_after_leaving_band() {
        let thr = SyncThresholds::default();
        let mut s = armed(0.0, 0.0, 0.0);
        assert!(!check_and_close(&mut s, &thr, 0.0));
        assert!(!check_and_close(&mut s, &thr, 0.05));
        s.delta_theta = 0.5;
        assert!(!check_and_close(&mut s, &thr, 0.06));
        s.delta_theta = 0.0;
        assert!(!check_and_close(&mut s, &thr, 0.07));
        assert!(!check_and_close(&mut s, &thr, 0.16));
        assert!(check_and_close(&mut s, &thr, 0.17));
    }

    #[test]
    fn unarmed_never_permits() {
        let thr = SyncThresholds::default();
        let mut s = armed(0.0, 0.0, 0.0);
        s.armed = false;
        assert!(!check_and_close(&mut s, &thr, 0.0));
        assert!(!check_and_close(&mut s, &thr, 1.0));
    }

    fn balanced(theta: f64) -> crate::simcore::ThreePhase {
        let s = 2.0 * PI / 3.0;
        crate::simcore::ThreePhase::new(theta.cos(), (theta - s).cos(), (theta + s).cos())
    }

    /// Island angle driven by a droop offset plus the broadcast trim, trims
    /// refreshed at the update rate and applied one step late. Both angles
    /// reach the synchronizer through DSOGI-PLLs as in the harness.
    fn time_to_band(theta0: f64, df0: f64) -> Option<f64> {
        use crate::control::{DsogiPll, PllConfig};
        let thr = SyncThresholds::default();
        let mut sync = Synchronizer::new(thr, SyncGains::default()).unwrap();
        let dt = 1e-4;
        let w_g = 2.0 * PI * 50.0;
        let w_i0 = w_g + 2.0 * PI * df0;
        let (mut pll_g, mut pll_i) = (
            DsogiPll::new(PllConfig::default()),
            DsogiPll::new(PllConfig::default()),
        );
        let mut th_g = 0.0;
        let mut th_i = theta0;
        let lock = 5_000;
        for n in 0..lock + 60_000 {
            let t = (n - lock) as f64 * dt;
            if n == lock {
                sync.arm(0.0);
            }
            let (trim, _) = if n >= lock { sync.trims() } else { (0.0, 0.0) };
            let w_i = w_i0 + trim;
            let g = pll_g.step(&balanced(th_g), dt);
            let i = pll_i.step(&balanced(th_i), dt);
            if n >= lock {
                let s = sync.step(&(&g).into(), &(&i).into(), t).status;
                if s.delta_theta.abs() < thr.max_phase_err && s.delta_f.abs() < thr.max_freq_err {
                    return Some(t);
                }
            }
            th_g = wrap_angle(th_g + w_g * dt);
            th_i = wrap_angle(th_i + w_i * dt);
        }
        None
    }

    #[test]
    fn enters_band_within_five_seconds() {
        for k in -6..=6 {
            let theta0 = k as f64 / 6.0 * (PI - 1e-6);
            for df0 in [-0.45, -0.3, -0.15, 0.0, 0.15, 0.3, 0.45] {
                let t = time_to_band(theta0, df0);
                assert!(
                    matches!(t, Some(t) if t < 5.0),
                    "theta0 {theta0}, df0 {df0}: {t:?}"
                );
            }
        }
    }

    #[test]
    fn release_unwinds_trims() {
        let mut sync = Synchronizer::new(SyncThresholds::default(), SyncGains::default()).unwrap();
        sync.omega_trim = 1.0;
        sync.v_trim = 0.02;
        sync.on_closed(2.0);
        let r = reading(0.0, 50.0, 1.0);
        sync.step(&r, &r, 2.5);
        assert_abs_diff_eq!(sync.trims().0, 0.5, epsilon = 1e-12);
        sync.step(&r, &r, 3.1);
        assert_eq!(sync.trims(), (0.0, 0.0));
        assert_eq!(sync.phase, SyncPhase::Idle);
    }

    proptest! {
        #[test]
        fn delta_theta_wrapped(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let s = sync_error(&reading(a, 50.0, 1.0), &reading(b, 50.0, 1.0));
            prop_assert!((-PI..PI).contains(&s.delta_theta));
        }

        #[test]
        fn trims_within_clamps(dth in -PI..PI, dv in -1.0f64..1.0, df in -2.0f64..2.0) {
            let g = SyncGains::default();
            let mut integ = SyncIntegrators::default();
            for _ in 0..10 {
                let (w, v) = sync_adjust(&armed(dth, dv, df), &g, &mut integ, 0.01);
                prop_assert!(w.abs() <= g.omega_limit() + 1e-12);
                prop_assert!(v.abs() <= g.max_volt_trim + 1e-12);
            }
        }
    }
}
