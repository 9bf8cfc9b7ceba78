//! Run metrics computed from telemetry alone.

use serde::Serialize;

use super::telemetry::{Telemetry, TelemetryRecord};
use crate::error::{Result, SimError};

/// Half-width of the centered RoCoF difference (s).
pub const ROCOF_HALF_WINDOW: f64 = 0.01;
/// Frequency band defining settling (Hz).
pub const SETTLING_BAND_HZ: f64 = 0.02;
/// Window after a mode change scanned for overshoot (s).
pub const OVERSHOOT_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub t: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settling {
    pub event_time: f64,
    pub description: String,
    /// Time from the event until PCC frequency stays inside the band
    /// around its value at the end of the segment.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overshoot {
    pub t: f64,
    pub source: String,
    /// Largest active power departure from the post-transition level (kW).
    pub peak_deviation_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    /// Max |RoCoF| of the PCC frequency (Hz/s).
    pub max_rocof: f64,
    pub max_rocof_by_source: Vec<f64>,
    pub f_nadir_hz: f64,
    pub f_zenith_hz: f64,
    pub settling: Vec<Settling>,
    /// `P_i / sum P` over the final 10% of the last islanded stretch.
    pub sharing: Vec<(String, f64)>,
    pub overshoot: Vec<Overshoot>,
    pub events: Vec<LogEntry>,
}

/// Largest centered-difference |df/dt| with a +-10 ms window.
pub fn max_rocof(t: &[f64], f: &[f64]) -> f64 {
    if t.len() < 2 {
        return 0.0;
    }
    let step = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let h = ((ROCOF_HALF_WINDOW / step).round() as usize).max(1);
    if t.len() <= 2 * h {
        return ((f[t.len() - 1] - f[0]) / (t[t.len() - 1] - t[0])).abs();
    }
    let mut best: f64 = 0.0;
    for k in h..t.len() - h {
        let r = (f[k + h] - f[k - h]) / (t[k + h] - t[k - h]);
        best = best.max(r.abs());
    }
    best
}

fn event_log(tel: &Telemetry) -> Vec<LogEntry> {
    let mut out = Vec::new();
    for w in tel.records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.breaker != b.breaker {
            let what = if b.breaker == 1 {
                "breaker closed"
            } else {
                "breaker opened"
            };
            out.push(LogEntry {
                t: b.t,
                description: what.into(),
            });
        }
        if a.sync_state != b.sync_state {
            let what = match b.sync_state {
                1 => "synchronizer armed",
                2 => "synchronizer releasing",
                _ => "synchronizer idle",
            };
            out.push(LogEntry {
                t: b.t,
                description: what.into(),
            });
        }
        for (k, (sa, sb)) in a.sources.iter().zip(&b.sources).enumerate() {
            if sa.mode != sb.mode {
                let to = if sb.mode == 1 { "VCM" } else { "CCM" };
                out.push(LogEntry {
                    t: b.t,
                    description: format!("{} -> {to}", tel.sources[k]),
                });
            }
        }
        if a.breaker == b.breaker && (b.i_load_pu - a.i_load_pu).abs() > 0.02 {
            out.push(LogEntry {
                t: b.t,
                description: format!("load change {:+.3} p.u.", b.i_load_pu - a.i_load_pu),
            });
        }
    }
    out
}

fn settling(recs: &[TelemetryRecord], events: &[LogEntry]) -> Vec<Settling> {
    let mut times: Vec<&LogEntry> = Vec::new();
    for e in events {
        if times.last().is_none_or(|l| e.t > l.t) {
            times.push(e);
        }
    }
    let mut out = Vec::new();
    for (i, e) in times.iter().enumerate() {
        let end = times.get(i + 1).map_or(f64::INFINITY, |n| n.t);
        let seg: Vec<&TelemetryRecord> = recs.iter().filter(|r| r.t >= e.t && r.t < end).collect();
        let Some(last) = seg.last() else { continue };
        let target = last.f_pcc_hz;
        let outside = seg
            .iter()
            .rposition(|r| (r.f_pcc_hz - target).abs() > SETTLING_BAND_HZ);
        let settling_time = match outside {
            None => Some(0.0),
            Some(k) if k + 1 < seg.len() => Some(seg[k + 1].t - e.t),
            Some(_) => None,
        };
        out.push(Settling {
            event_time: e.t,
            description: e.description.clone(),
            settling_time,
        });
    }
    out
}

fn sharing(tel: &Telemetry) -> Vec<(String, f64)> {
    let recs = &tel.records;
    let Some(end) = recs.iter().rposition(|r| r.breaker == 0) else {
        return Vec::new();
    };
    let start = recs[..=end]
        .iter()
        .rposition(|r| r.breaker == 1)
        .map_or(0, |k| k + 1);
    let n = end + 1 - start;
    let tail = &recs[end + 1 - (n / 10).max(1)..=end];
    let mut sums = vec![0.0; tel.sources.len()];
    for r in tail {
        for (s, x) in sums.iter_mut().zip(&r.sources) {
            *s += x.p_kw;
        }
    }
    let total: f64 = sums.iter().sum();
    tel.sources
        .iter()
        .zip(sums)
        .map(|(name, s)| (name.clone(), if total != 0.0 { s / total } else { 0.0 }))
        .collect()
}

fn overshoot(tel: &Telemetry) -> Vec<Overshoot> {
    let recs = &tel.records;
    let mut out = Vec::new();
    for k in 1..recs.len() {
        for (j, name) in tel.sources.iter().enumerate() {
            if recs[k].sources[j].mode == recs[k - 1].sources[j].mode {
                continue;
            }
            let t0 = recs[k].t;
            let win: Vec<f64> = recs[k..]
                .iter()
                .take_while(|r| r.t <= t0 + OVERSHOOT_WINDOW)
                .map(|r| r.sources[j].p_kw)
                .collect();
            let tail = &win[win.len() - (win.len() / 10).max(1)..];
            let level = tail.iter().sum::<f64>() / tail.len() as f64;
            let peak = win.iter().map(|p| (p - level).abs()).fold(0.0, f64::max);
            out.push(Overshoot {
                t: t0,
                source: name.clone(),
                peak_deviation_kw: peak,
            });
        }
    }
    out
}

pub fn summarize(tel: &Telemetry) -> Result<RunReport> {
    let recs = &tel.records;
    if recs.len() < 2 {
        return Err(SimError::Domain(format!(
            "summary needs at least 2 records, got {}",
            recs.len()
        )));
    }
    let t: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let f: Vec<f64> = recs.iter().map(|r| r.f_pcc_hz).collect();
    let max_rocof_by_source = (0..tel.sources.len())
        .map(|j| {
            let fs: Vec<f64> = recs.iter().map(|r| r.sources[j].f_hz).collect();
            max_rocof(&t, &fs)
        })
        .collect();
    let events = event_log(tel);
    Ok(RunReport {
        max_rocof: max_rocof(&t, &f),
        max_rocof_by_source,
        f_nadir_hz: f.iter().copied().fold(f64::INFINITY, f64::min),
        f_zenith_hz: f.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        settling: settling(recs, &events),
        sharing: sharing(tel),
        overshoot: overshoot(tel),
        events,
    })
}
