use std::f64::consts::PI;

use nalgebra::DMatrix;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::breaker::BreakerState;
use super::circuit::LinearStateSpace;
use super::load::LoadBank;
use crate::error::{Result, SimError};
use crate::simcore::{PerUnitBase, ThreePhase};

/// Any state magnitude above this (p.u.) aborts the run.
const BLOW_UP_LIMIT: f64 = 100.0;

/// LC output filter, all values in per-unit (inductance and capacitance
/// expressed as their reactance and susceptance at the base frequency).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct LcFilterParams {
    pub l_f: f64,
    pub c_f: f64,
    pub r_f: f64,
}

impl Default for LcFilterParams {
    fn default() -> Self {
        Self {
            l_f: 0.08,
            c_f: 0.05,
            r_f: 0.005,
        }
    }
}

impl LcFilterParams {
    pub fn resonance_hz(&self, base: &PerUnitBase) -> f64 {
        base.f_base / (self.l_f * self.c_f).sqrt()
    }
}

/// Series R + jX feeder segment between an inverter and the PCC bus (p.u.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LineImpedance {
    pub r: f64,
    pub x: f64,
}

/// Transformer and upstream network lumped into a Thevenin source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct GridEquivalent {
    /// Source magnitude (p.u. peak phase).
    pub v_th: f64,
    pub r_th: f64,
    pub x_th: f64,
    pub f_grid: f64,
    /// Source phase at t = 0 (degrees).
    pub phase_deg: f64,
}

impl Default for GridEquivalent {
    fn default() -> Self {
        Self {
            v_th: 1.0,
            r_th: 0.01,
            x_th: 0.05,
            f_grid: 50.0,
            phase_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub base: PerUnitBase,
    pub dt: f64,
    pub filters: Vec<LcFilterParams>,
    pub lines: Vec<LineImpedance>,
    pub grid: GridEquivalent,
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.dt > 0.0) {
            return Err(SimError::config("dt", "time step must be positive"));
        }
        if self.filters.len() != self.lines.len()
            || self.filters.is_empty()
            || self.filters.len() > 64
        {
            return Err(SimError::config(
                "network",
                "need one filter and one line per inverter, at most 64 inverters",
            ));
        }
        let nyquist = 0.5 / self.dt;
        for (k, f) in self.filters.iter().enumerate() {
            if !(f.l_f > 0.0 && f.c_f > 0.0 && f.r_f > 0.0) {
                return Err(SimError::config(
                    format!("filters[{k}]"),
                    "filter values must be positive",
                ));
            }
            let fr = f.resonance_hz(&self.base);
            if fr <= 10.0 * self.base.f_base || fr >= nyquist {
                return Err(SimError::config(
                    format!("filters[{k}]"),
                    format!("resonance {fr:.1} Hz outside (10 f_base, {nyquist:.0} Hz)"),
                ));
            }
        }
        for (k, l) in self.lines.iter().enumerate() {
            if !(l.r >= 0.0 && l.x > 0.0) {
                return Err(SimError::config(
                    format!("lines[{k}]"),
                    "line needs r >= 0 and x > 0",
                ));
            }
        }
        let g = &self.grid;
        if !(g.r_th >= 0.0 && g.x_th > 0.0 && g.r_th.hypot(g.x_th) > 0.0) {
            return Err(SimError::config(
                "grid",
                "Thevenin impedance must be nonzero with x > 0",
            ));
        }
        if !(g.f_grid > 0.8 * self.base.f_base && g.f_grid < 1.2 * self.base.f_base) {
            return Err(SimError::config(
                "grid.f_grid",
                "grid frequency must be near nominal",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InverterBranchState {
    /// Inverter-side inductor current.
    pub i_i: ThreePhase,
    /// Filter capacitor voltage.
    pub v_o: ThreePhase,
    /// Current leaving the filter towards the PCC.
    pub i_o: ThreePhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub inverters: Vec<InverterBranchState>,
    /// Grid branch current into the PCC bus.
    pub i_grid: ThreePhase,
    /// PCC bus voltage (algebraic, consistent with the stored currents).
    pub v_pcc: ThreePhase,
    /// Grid source angle (rad, unwrapped).
    pub grid_angle: f64,
    pub time: f64,
}

impl PlantState {
    pub fn zero(params: &PlantParams) -> Self {
        Self {
            inverters: vec![InverterBranchState::default(); params.filters.len()],
            i_grid: ThreePhase::ZERO,
            v_pcc: ThreePhase::ZERO,
            grid_angle: params.grid.phase_deg.to_radians(),
            time: 0.0,
        }
    }

    /// Magnetic plus electric field energy (per-unit power times seconds,
    /// summed over phases).
    pub fn stored_energy(&self, params: &PlantParams) -> f64 {
        let wb = params.base.omega_base();
        let sq = |x: &ThreePhase| x.dot(x);
        let mut w = 0.5 * params.grid.x_th / wb * sq(&self.i_grid);
        for ((s, f), l) in self
            .inverters
            .iter()
            .zip(&params.filters)
            .zip(&params.lines)
        {
            w += 0.5 / wb * (f.l_f * sq(&s.i_i) + f.c_f * sq(&s.v_o) + l.x * sq(&s.i_o));
        }
        w
    }
}

/// Averaged VSI input: per-phase modulation index and DC bus voltage (V).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InverterDrive {
    pub m: ThreePhase,
    pub v_dc: f64,
    /// Gating off: the bridge conducts no current.
    pub blocked: bool,
}

impl InverterDrive {
    /// Terminal voltage `m V_dc / 2` in per-unit.
    pub fn terminal_voltage(&self, base: &PerUnitBase) -> ThreePhase {
        self.m.scale(0.5 * self.v_dc / base.v_base_phase_peak())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InverterMeasurement {
    pub i_i: ThreePhase,
    pub v_o: ThreePhase,
    pub i_o: ThreePhase,
}

/// Immutable snapshot of the sensed signals.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub inverters: Vec<InverterMeasurement>,
    /// Grid-side voltage at the breaker (Thevenin source).
    pub v_g: ThreePhase,
    pub v_pcc: ThreePhase,
    pub i_grid: ThreePhase,
    pub time: f64,
}

/// Pure read of the plant state.
pub fn measure(state: &PlantState, grid: &GridEquivalent) -> MeasurementSet {
    MeasurementSet {
        inverters: state
            .inverters
            .iter()
            .map(|s| InverterMeasurement {
                i_i: s.i_i,
                v_o: s.v_o,
                i_o: s.i_o,
            })
            .collect(),
        v_g: ThreePhase::balanced(grid.v_th, state.grid_angle),
        v_pcc: state.v_pcc,
        i_grid: state.i_grid,
        time: state.time,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TopologyKey {
    closed: bool,
    blocked: u64,
    r_load_bits: u64,
}

/// Steps the plant. Holds the discretized system for the current topology.
#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    cached: Option<(TopologyKey, LinearStateSpace)>,
}

impl Plant {
    pub fn new(params: PlantParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            cached: None,
        })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    fn n_inv(&self) -> usize {
        self.params.filters.len()
    }

    fn build(&self, closed: bool, blocked: u64, r_load: f64) -> Result<LinearStateSpace> {
        let p = &self.params;
        let ns = self.n_inv();
        let n = 3 * ns + 1;
        let ig = 3 * ns;
        let wb = p.base.omega_base();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DMatrix::<f64>::zeros(n, ns + 1);
        // v_pcc = r_load * (sum of line currents + grid current)
        let bus_inputs: Vec<usize> = (0..ns)
            .map(|k| 3 * k + 2)
            .chain(closed.then_some(ig))
            .collect();
        for k in 0..ns {
            let (f, line) = (&p.filters[k], &p.lines[k]);
            let (ii, vo, io) = (3 * k, 3 * k + 1, 3 * k + 2);
            if blocked & (1 << k) == 0 {
                a[(ii, ii)] = -wb * f.r_f / f.l_f;
                a[(ii, vo)] = -wb / f.l_f;
                b[(ii, k)] = wb / f.l_f;
                a[(vo, ii)] = wb / f.c_f;
            }
            a[(vo, io)] = -wb / f.c_f;
            a[(io, vo)] = wb / line.x;
            a[(io, io)] -= wb * line.r / line.x;
            for &j in &bus_inputs {
                a[(io, j)] -= wb * r_load / line.x;
            }
        }
        if closed {
            let g = &p.grid;
            a[(ig, ig)] -= wb * g.r_th / g.x_th;
            for &j in &bus_inputs {
                a[(ig, j)] -= wb * r_load / g.x_th;
            }
            b[(ig, ns)] = wb / g.x_th;
        }
        LinearStateSpace::new(&a, &b, p.dt)
            .ok_or_else(|| SimError::config("network", "singular plant discretization"))
    }

    /// Advance one step. Drives are held over the step; the grid source is
    /// averaged over its endpoints.
    pub fn step(
        &mut self,
        state: &PlantState,
        drives: &[InverterDrive],
        breaker: &BreakerState,
        loads: &LoadBank,
    ) -> Result<PlantState> {
        let ns = self.n_inv();
        if drives.len() != ns || state.inverters.len() != ns {
            return Err(SimError::Contract(format!(
                "plant has {ns} inverters, got {} drives / {} states",
                drives.len(),
                state.inverters.len()
            )));
        }
        let r_load = loads.r_equivalent();
        let blocked = drives
            .iter()
            .enumerate()
            .filter(|(_, d)| d.blocked)
            .fold(0u64, |acc, (k, _)| acc | (1 << k));
        let key = TopologyKey {
            closed: breaker.closed,
            blocked,
            r_load_bits: r_load.to_bits(),
        };
        let mut damp = false;
        match &self.cached {
            Some((k, _)) if *k == key => {}
            prev => {
                damp = prev.is_some();
                let ss = self.build(breaker.closed, blocked, r_load)?;
                self.cached = Some((key, ss));
            }
        }
        let ss = &self.cached.as_ref().expect("discretization cached").1;

        let n = 3 * ns + 1;
        let mut x = DMatrix::<f64>::zeros(n, 3);
        for (k, s) in state.inverters.iter().enumerate() {
            for (ph, (ii, (vo, io))) in s
                .i_i
                .as_array()
                .into_iter()
                .zip(s.v_o.as_array().into_iter().zip(s.i_o.as_array()))
                .enumerate()
            {
                x[(3 * k, ph)] = if drives[k].blocked { 0.0 } else { ii };
                x[(3 * k + 1, ph)] = vo;
                x[(3 * k + 2, ph)] = io;
            }
        }
        if breaker.closed {
            for (ph, v) in state.i_grid.as_array().into_iter().enumerate() {
                x[(3 * ns, ph)] = v;
            }
        }

        let g = &self.params.grid;
        let dt = self.params.dt;
        let next_angle = state.grid_angle + 2.0 * PI * g.f_grid * dt;
        let vg0 = ThreePhase::balanced(g.v_th, state.grid_angle).as_array();
        let vg1 = ThreePhase::balanced(g.v_th, next_angle).as_array();
        let mut u = DMatrix::<f64>::zeros(ns + 1, 3);
        for (k, d) in drives.iter().enumerate() {
            let e = d.terminal_voltage(&self.params.base).as_array();
            for ph in 0..3 {
                u[(k, ph)] = e[ph];
            }
        }
        for ph in 0..3 {
            u[(ns, ph)] = 0.5 * (vg0[ph] + vg1[ph]);
        }

        let xn = if damp {
            ss.step_damped(&x, &u)
        } else {
            ss.step(&x, &u)
        };

        let time = state.time + dt;
        let row = |r: usize| ThreePhase::new(xn[(r, 0)], xn[(r, 1)], xn[(r, 2)]);
        let mut inverters = Vec::with_capacity(ns);
        for k in 0..ns {
            inverters.push(InverterBranchState {
                i_i: row(3 * k),
                v_o: row(3 * k + 1),
                i_o: row(3 * k + 2),
            });
        }
        let i_grid = if breaker.closed {
            row(3 * ns)
        } else {
            ThreePhase::ZERO
        };
        let mut bus = i_grid;
        for s in &inverters {
            bus.a += s.i_o.a;
            bus.b += s.i_o.b;
            bus.c += s.i_o.c;
        }
        let next = PlantState {
            inverters,
            i_grid,
            v_pcc: bus.scale(r_load),
            grid_angle: next_angle,
            time,
        };
        check_divergence(&next)?;
        Ok(next)
    }
}

fn check_divergence(s: &PlantState) -> Result<()> {
    let check = |name: String, x: &ThreePhase| -> Result<()> {
        for (ph, v) in ["a", "b", "c"].iter().zip(x.as_array()) {
            if !v.is_finite() || v.abs() > BLOW_UP_LIMIT {
                return Err(SimError::BlowUp {
                    time: s.time,
                    state: format!("{name}.{ph}"),
                    value: v,
                });
            }
        }
        Ok(())
    };
    for (k, inv) in s.inverters.iter().enumerate() {
        check(format!("inverter[{k}].i_i"), &inv.i_i)?;
        check(format!("inverter[{k}].v_o"), &inv.v_o)?;
        check(format!("inverter[{k}].i_o"), &inv.i_o)?;
    }
    check("grid.i".into(), &s.i_grid)?;
    check("pcc.v".into(), &s.v_pcc)
}
