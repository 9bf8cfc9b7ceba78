//! Full-system stepping loop.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::report::{summarize, RunReport};
use super::scenario::{control_config, BatterySpec, Event, PvSpec, Scenario};
use super::telemetry::{SourceSample, Telemetry, TelemetryRecord};
use crate::control::{
    ControllerState, DsogiPll, InverterInputs, InverterOutput, InverterRole, Mode, PllConfig,
    PllOutput,
};
use crate::error::{Result, SimError};
use crate::network::{
    apply_load_step, measure, set_breaker, BreakerState, ConstantImpedanceLoad, InverterDrive,
    LoadBank, MeasurementSet, Plant, PlantParams, PlantState,
};
use crate::pv::{dc_link_step, mppt_step, pv_current, MpptState, PvArrayParams};
use crate::simcore::{abc_to_alpha_beta, ThreePhase};
use crate::storage::{battery_step, BatteryState};
use crate::synchronizer::{sync_error, PllReading, SyncPhase, Synchronizer};

/// Window after a breaker closure scanned for the grid current peak (s).
pub const INRUSH_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRecord {
    pub source: String,
    pub from: Mode,
    pub to: Mode,
    pub time: f64,
    pub angle_jump_deg: f64,
    pub magnitude_jump: f64,
}

/// Conditions at a synchronized closure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloseRecord {
    pub time: f64,
    pub delta_theta_deg: f64,
    pub delta_v: f64,
    pub delta_f: f64,
    /// Largest grid current magnitude within the inrush window (p.u.).
    pub i_grid_peak: f64,
    /// Load current magnitude at closing (p.u.).
    pub i_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Abort {
    pub time: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub telemetry: Telemetry,
    /// `None` when fewer than two records were captured.
    pub report: Option<RunReport>,
    pub aborted: Option<Abort>,
    pub transitions: Vec<TransitionRecord>,
    pub closures: Vec<CloseRecord>,
    /// Applied scenario events and supervisory actions, in order.
    pub event_log: Vec<(f64, String)>,
}

struct PvUnit {
    spec: PvSpec,
    array: PvArrayParams,
    ctrl: ControllerState,
    irradiance: f64,
    enabled: bool,
    v_pv: f64,
    p_pv: f64,
    mppt: MpptState,
    /// Raised-cosine transition of the MPPT reference over one tracking
    /// period: (from, to, steps elapsed).
    v_set: (f64, f64, usize),
    out: Option<InverterOutput>,
}

struct BatteryUnit {
    spec: BatterySpec,
    ctrl: ControllerState,
    state: BatteryState,
    enabled: bool,
    out: Option<InverterOutput>,
}

struct Noise {
    rng: ChaCha8Rng,
    v: Option<Normal<f64>>,
    i: Option<Normal<f64>>,
}

impl Noise {
    fn new(v_std: f64, i_std: f64, seed: u64) -> Self {
        let dist = |s: f64| (s > 0.0).then(|| Normal::new(0.0, s).expect("nonnegative deviation"));
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            v: dist(v_std),
            i: dist(i_std),
        }
    }

    fn add(&mut self, x: &mut ThreePhase, current: bool) {
        let dist = if current { self.i } else { self.v };
        if let Some(d) = dist {
            x.a += d.sample(&mut self.rng);
            x.b += d.sample(&mut self.rng);
            x.c += d.sample(&mut self.rng);
        }
    }

    fn apply(&mut self, m: &mut MeasurementSet) {
        if self.v.is_none() && self.i.is_none() {
            return;
        }
        for inv in &mut m.inverters {
            self.add(&mut inv.i_i, true);
            self.add(&mut inv.v_o, false);
            self.add(&mut inv.i_o, true);
        }
        self.add(&mut m.v_g, false);
        self.add(&mut m.v_pcc, false);
        self.add(&mut m.i_grid, true);
    }
}

fn magnitude(x: &ThreePhase) -> f64 {
    abc_to_alpha_beta(x).magnitude()
}

fn sample(out: &Option<InverterOutput>, s_base: f64, v_dc: f64) -> SourceSample {
    match out {
        Some(o) => SourceSample {
            p_kw: o.p_avg * s_base / 1000.0,
            q_kvar: o.q_avg * s_base / 1000.0,
            f_hz: o.omega / (2.0 * PI),
            mode: u8::from(o.mode == Mode::Vcm),
            v_dc,
        },
        None => SourceSample {
            v_dc,
            ..Default::default()
        },
    }
}

struct Sim<'a> {
    s: &'a Scenario,
    plant: Plant,
    state: PlantState,
    breaker: BreakerState,
    loads: LoadBank,
    pvs: Vec<PvUnit>,
    battery: BatteryUnit,
    grid_pll: DsogiPll,
    island_pll: DsogiPll,
    sync: Synchronizer,
    drives: Vec<InverterDrive>,
    noise: Noise,
    pending_close: bool,
    next_event: usize,
    mppt_every: Vec<usize>,
    out: RunOutput,
}

impl<'a> Sim<'a> {
    fn new(s: &'a Scenario, seed: u64) -> Result<Self> {
        let initial_mode = if s.initially_connected {
            Mode::Ccm
        } else {
            Mode::Vcm
        };
        let mut pvs = Vec::with_capacity(s.pv.len());
        for (k, p) in s.pv.iter().enumerate() {
            let array = PvArrayParams::fit(&p.rating).map_err(|e| match e {
                SimError::Config { message, .. } => {
                    SimError::config(format!("pv[{k}].rating"), message)
                }
                other => other,
            })?;
            let cfg = control_config(&p.control, InverterRole::Pv, p.vsg, p.filter);
            let ctrl = ControllerState::new(cfg, initial_mode)?;
            let v_pv = match initial_mode {
                Mode::Ccm => p.rating.v_mp,
                Mode::Vcm => 0.95 * array.v_oc_at(p.temperature),
            };
            let p_pv = v_pv * pv_current(v_pv, p.irradiance, p.temperature, &array)?;
            pvs.push(PvUnit {
                spec: p.clone(),
                array,
                ctrl,
                irradiance: p.irradiance,
                enabled: p.enabled,
                v_pv,
                p_pv,
                mppt: MpptState::new(v_pv, p.mppt_step, array.v_oc_at(p.temperature)),
                v_set: (v_pv, v_pv, 0),
                out: None,
            });
        }
        let b = &s.battery;
        let cfg = control_config(
            &b.control,
            InverterRole::Battery,
            b.droop.to_vsg(),
            b.filter,
        );
        let battery = BatteryUnit {
            spec: b.clone(),
            ctrl: ControllerState::new(cfg, Mode::Vcm)?,
            state: BatteryState::new(b.soc0),
            enabled: b.enabled,
            out: None,
        };

        let params = PlantParams {
            base: s.base,
            dt: s.dt,
            filters: s.pv.iter().map(|p| p.filter).chain([b.filter]).collect(),
            lines: s.pv.iter().map(|p| p.line).chain([b.line]).collect(),
            grid: s.grid,
        };
        let mut state = PlantState::zero(&params);
        state.time = -s.settle_time;
        let plant = Plant::new(params)?;
        let loads = LoadBank::new(
            s.loads
                .iter()
                .map(|l| ConstantImpedanceLoad::from_power(l.name.clone(), l.p))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let drives =
            s.pv.iter()
                .map(|p| p.v_bus)
                .chain([b.v_bus])
                .map(|v_dc| InverterDrive {
                    m: ThreePhase::ZERO,
                    v_dc,
                    blocked: false,
                })
                .collect();
        let mppt_every =
            s.pv.iter()
                .map(|p| ((1.0 / (p.mppt_rate_hz * s.dt)).round() as usize).max(1))
                .collect();
        let pll = PllConfig {
            omega_nom: 2.0 * PI * s.base.f_base,
            ..PllConfig::default()
        };
        Ok(Self {
            s,
            plant,
            state,
            breaker: BreakerState::new(s.initially_connected),
            loads,
            pvs,
            battery,
            grid_pll: DsogiPll::new(pll),
            island_pll: DsogiPll::new(pll),
            sync: Synchronizer::new(s.synchronizer.thresholds, s.synchronizer.gains)?,
            drives,
            noise: Noise::new(s.noise.v_std, s.noise.i_std, seed),
            pending_close: false,
            next_event: 0,
            mppt_every,
            out: RunOutput {
                telemetry: Telemetry {
                    sources: s.source_names(),
                    records: Vec::new(),
                },
                report: None,
                aborted: None,
                transitions: Vec::new(),
                closures: Vec::new(),
                event_log: Vec::new(),
            },
        })
    }

    fn log(&mut self, t: f64, what: String) {
        log::debug!("t = {t:.4}: {what}");
        self.out.event_log.push((t, what));
    }

    fn source_mut(&mut self, name: &str) -> (&mut ControllerState, &mut bool) {
        match self.pvs.iter_mut().find(|p| p.spec.name == name) {
            Some(p) => (&mut p.ctrl, &mut p.enabled),
            None => (&mut self.battery.ctrl, &mut self.battery.enabled),
        }
    }

    fn apply_event(&mut self, e: &Event, t: f64) -> Result<()> {
        match e {
            Event::OpenBreaker { .. } => {
                self.breaker = set_breaker(self.breaker, false, t);
                self.sync.on_opened();
                self.pending_close = false;
            }
            Event::RequestResync { .. } => {
                if self.breaker.closed {
                    self.log(t, "request_resync ignored: breaker already closed".into());
                    return Ok(());
                }
                self.sync.arm(t);
            }
            Event::LoadStep { delta, load, .. } => {
                self.loads = apply_load_step(&self.loads, *load, *delta)?;
            }
            Event::IrradianceStep { source, value, .. } => {
                if let Some(p) = self.pvs.iter_mut().find(|p| p.spec.name == *source) {
                    p.irradiance = *value;
                }
            }
            Event::SetEnable { source, value, .. } => {
                *self.source_mut(source).1 = *value;
            }
            Event::SetPRef { source, value, .. } => {
                self.source_mut(source).0.config.vsg.p_ref = *value;
            }
        }
        self.log(t, e.describe());
        Ok(())
    }

    /// One simulation step starting at step index `k` (time `k dt`).
    fn step(&mut self, k: i64) -> Result<()> {
        let s = self.s;
        let dt = s.dt;
        let t0 = k as f64 * dt;
        let t = (k + 1) as f64 * dt;
        let s_base = s.base.s_base;

        if k >= 0 {
            while let Some(e) = s.events.get(self.next_event) {
                if (e.time() / dt).round() as i64 > k {
                    break;
                }
                self.next_event += 1;
                self.apply_event(e, t0)?;
            }
        }
        if self.pending_close {
            self.pending_close = false;
            self.breaker = set_breaker(self.breaker, true, t0);
            let st = self.sync.status;
            self.sync.on_closed(t0);
            self.out.closures.push(CloseRecord {
                time: t0,
                delta_theta_deg: st.delta_theta.to_degrees(),
                delta_v: st.delta_v,
                delta_f: st.delta_f,
                i_grid_peak: 0.0,
                i_load: magnitude(&self.state.v_pcc) / self.loads.r_equivalent(),
            });
            self.log(t0, "breaker closed by synchronizer".into());
        }

        self.state = self
            .plant
            .step(&self.state, &self.drives, &self.breaker, &self.loads)?;
        let i_grid = magnitude(&self.state.i_grid);
        if let Some(c) = self.out.closures.last_mut() {
            if t <= c.time + INRUSH_WINDOW + 0.5 * dt {
                c.i_grid_peak = c.i_grid_peak.max(i_grid);
            }
        }

        // DC side over the step just taken
        for (j, pv) in self.pvs.iter_mut().enumerate() {
            let e = self.drives[j].terminal_voltage(&s.base);
            let p_term = 2.0 / 3.0 * e.dot(&self.state.inverters[j].i_i) * s_base;
            let i_pv = pv_current(pv.v_pv, pv.irradiance, pv.spec.temperature, &pv.array)?;
            let i_inv = if pv.v_pv > 1.0 { p_term / pv.v_pv } else { 0.0 };
            let next = dc_link_step(pv.v_pv, i_pv, i_inv, pv.spec.c_dc, dt)?;
            if next.collapsed {
                return Err(SimError::DcLinkCollapse {
                    source_name: pv.spec.name.clone(),
                    time: t,
                });
            }
            pv.v_pv = next.v_dc;
            pv.p_pv =
                next.v_dc * pv_current(next.v_dc, pv.irradiance, pv.spec.temperature, &pv.array)?;
        }

        let mut meas = measure(&self.state, &s.grid);
        self.noise.apply(&mut meas);
        let grid_pll = self.grid_pll.step(&meas.v_g, dt);
        let island_pll = self.island_pll.step(&meas.v_pcc, dt);

        let ramp = if s.soft_start > 0.0 {
            ((t + s.settle_time) / s.soft_start).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let (omega_trim, v_trim) = self.sync.trims();
        let connected = self.breaker.closed;
        let base = s.base;
        let mut transitions = Vec::new();
        for (j, pv) in self.pvs.iter_mut().enumerate() {
            // MPPT restarts at v_pv on CCM entry, so a VCM unit sees no correction term yet
            let in_ccm = pv.out.as_ref().is_none_or(|o| o.mode == Mode::Ccm);
            let (from, to, n) = pv.v_set;
            let x = (n as f64 / self.mppt_every[j] as f64).min(1.0);
            let v_set = from + (to - from) * 0.5 * (1.0 - (PI * x).cos());
            pv.v_set.2 = n + 1;
            let v_ref = if in_ccm { v_set } else { pv.v_pv };
            let p_target = ramp * (pv.p_pv + pv.spec.k_dc * (pv.v_pv - v_ref)) / s_base;
            let inputs = InverterInputs {
                meas: meas.inverters[j],
                grid_connected: connected,
                en: pv.enabled,
                p_target,
                v_dc: self.drives[j].v_dc,
                omega_trim,
                v_trim,
                ramp,
                t,
                dt,
            };
            let o = pv.ctrl.step(&inputs, &base)?;
            if let Some(tr) = &o.transition {
                transitions.push((pv.spec.name.clone(), *tr));
                if tr.to == Mode::Ccm {
                    pv.mppt.restart_at(pv.v_pv);
                    pv.v_set = (pv.v_pv, pv.v_pv, 0);
                }
            }
            if o.mode == Mode::Ccm
                && pv.enabled
                && k >= 0
                && (k as usize + 1).is_multiple_of(self.mppt_every[j])
            {
                pv.mppt = mppt_step(&pv.mppt, pv.p_pv, pv.v_pv);
                pv.v_set = (v_set, pv.mppt.v_ref, 0);
            }
            self.drives[j].m = o.m;
            self.drives[j].blocked = !pv.enabled;
            pv.out = Some(o);
        }
        let nb = self.pvs.len();
        let bat = &mut self.battery;
        let inputs = InverterInputs {
            meas: meas.inverters[nb],
            grid_connected: connected,
            en: bat.enabled,
            p_target: 0.0,
            v_dc: self.drives[nb].v_dc,
            omega_trim,
            v_trim,
            ramp,
            t,
            dt,
        };
        let o = bat.ctrl.step(&inputs, &base)?;
        bat.state = battery_step(&bat.state, o.p_avg * s_base, dt, &bat.spec.params)?;
        self.drives[nb].m = o.m;
        self.drives[nb].blocked = !bat.enabled;
        bat.out = Some(o);

        if k >= 0 {
            for (name, tr) in transitions {
                self.out.transitions.push(TransitionRecord {
                    source: name,
                    from: tr.from,
                    to: tr.to,
                    time: tr.time,
                    angle_jump_deg: tr.angle_jump_deg,
                    magnitude_jump: tr.magnitude_jump,
                });
            }
        }

        let grid_r = PllReading::from(&grid_pll);
        let island_r = PllReading::from(&island_pll);
        let sync = self.sync.step(&grid_r, &island_r, t);
        if sync.close_permission && !self.breaker.closed {
            self.pending_close = true;
        }

        let dec = s.decimation() as i64;
        if k + 1 >= 0 && (k + 1) % dec == 0 {
            self.record(t, &meas, &grid_pll, &island_pll);
        }
        Ok(())
    }

    fn record(&mut self, t: f64, meas: &MeasurementSet, grid: &PllOutput, island: &PllOutput) {
        let s_base = self.s.base.s_base;
        let mut sources: Vec<SourceSample> = self
            .pvs
            .iter()
            .map(|p| sample(&p.out, s_base, p.v_pv))
            .collect();
        sources.push(sample(&self.battery.out, s_base, self.battery.spec.v_bus));
        let mut flags = 0u32;
        let outs = self.pvs.iter().map(|p| &p.out).chain([&self.battery.out]);
        for (k, o) in outs.enumerate() {
            if let Some(o) = o {
                flags |= o.flags.bits() << (8 * k);
            }
        }
        let diff = sync_error(&PllReading::from(grid), &PllReading::from(island));
        let thr = &self.sync.thresholds;
        let in_band = diff.delta_theta.abs() < thr.max_phase_err
            && diff.delta_v.abs() < thr.max_volt_err
            && diff.delta_f.abs() < thr.max_freq_err;
        let v_pcc = magnitude(&meas.v_pcc);
        self.out.telemetry.records.push(TelemetryRecord {
            t,
            sources,
            battery_soc: self.battery.state.soc,
            f_pcc_hz: island.omega / (2.0 * PI),
            v_pcc_peak_v: v_pcc * self.s.base.v_base_phase_peak(),
            i_grid_pu: magnitude(&meas.i_grid),
            i_load_pu: v_pcc / self.loads.r_equivalent(),
            phase_diff_deg: diff.delta_theta.to_degrees(),
            breaker: u8::from(self.breaker.closed),
            sync_state: match self.sync.phase {
                SyncPhase::Idle => 0,
                SyncPhase::Armed => 1,
                SyncPhase::Releasing => 2,
            },
            sync_in_band: u8::from(in_band),
            flags,
        });
    }
}

/// Runs a validated scenario. Setup problems are returned as errors; a
/// failure while stepping aborts the run and is reported in the output
/// along with the telemetry captured so far.
pub fn run_scenario(s: &Scenario, seed: u64) -> Result<RunOutput> {
    s.validate()?;
    let mut sim = Sim::new(s, seed)?;
    let n_pre = (s.settle_time / s.dt).round() as i64;
    let n_run = (s.duration / s.dt).round() as i64;
    for k in -n_pre..n_run {
        if let Err(e) = sim.step(k) {
            let time = (k + 1) as f64 * s.dt;
            log::warn!("run aborted at t = {time:.4} s: {e}");
            sim.log(time, format!("abort: {e}"));
            sim.out.aborted = Some(Abort {
                time,
                reason: e.to_string(),
            });
            break;
        }
    }
    let mut out = sim.out;
    out.report = summarize(&out.telemetry).ok();
    Ok(out)
}
