//! Decimated telemetry records and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, SimError};

/// Per-source quantities in one record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SourceSample {
    pub p_kw: f64,
    pub q_kvar: f64,
    pub f_hz: f64,
    /// 0 = current control, 1 = voltage control.
    pub mode: u8,
    /// PV array voltage, or the DC bus for the battery (V).
    pub v_dc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub sources: Vec<SourceSample>,
    pub battery_soc: f64,
    /// Frequency at the PCC from the island-side PLL.
    pub f_pcc_hz: f64,
    /// Peak phase voltage at the PCC (V).
    pub v_pcc_peak_v: f64,
    pub i_grid_pu: f64,
    pub i_load_pu: f64,
    /// Island minus grid phase angle (deg).
    pub phase_diff_deg: f64,
    pub breaker: u8,
    /// 0 idle, 1 armed, 2 releasing.
    pub sync_state: u8,
    /// 1 while every synchro-check condition holds.
    pub sync_in_band: u8,
    /// Controller flag bits, source `k` at bit offset `8 k`.
    pub flags: u32,
}

/// A telemetry stream with its source names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Telemetry {
    pub sources: Vec<String>,
    pub records: Vec<TelemetryRecord>,
}

const SOURCE_COLUMNS: [&str; 5] = ["p_kw", "q_kvar", "f_hz", "mode", "v_dc"];
const TAIL_COLUMNS: [&str; 10] = [
    "battery_soc",
    "f_pcc_hz",
    "v_pcc_peak_v",
    "i_grid_pu",
    "i_load_pu",
    "phase_diff_deg",
    "breaker",
    "sync_state",
    "sync_in_band",
    "flags",
];

fn num(x: f64) -> String {
    format!("{x:.8e}")
}

impl Telemetry {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for s in &self.sources {
            h.extend(SOURCE_COLUMNS.iter().map(|c| format!("{s}_{c}")));
        }
        h.extend(TAIL_COLUMNS.iter().map(|c| c.to_string()));
        h
    }

    pub fn write<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.records {
            let mut row = vec![num(r.t)];
            for s in &r.sources {
                row.extend([
                    num(s.p_kw),
                    num(s.q_kvar),
                    num(s.f_hz),
                    s.mode.to_string(),
                    num(s.v_dc),
                ]);
            }
            row.extend([
                num(r.battery_soc),
                num(r.f_pcc_hz),
                num(r.v_pcc_peak_v),
                num(r.i_grid_pu),
                num(r.i_load_pu),
                num(r.phase_diff_deg),
                r.breaker.to_string(),
                r.sync_state.to_string(),
                r.sync_in_band.to_string(),
                r.flags.to_string(),
            ]);
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn read<R: Read>(r: R, origin: &str) -> Result<Self> {
        let bad = |m: String| SimError::config(origin, m);
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let sources: Vec<String> = header
            .iter()
            .filter_map(|h| h.strip_suffix("_p_kw").map(str::to_string))
            .collect();
        let tel = Telemetry {
            sources,
            records: Vec::new(),
        };
        if tel.header() != header {
            return Err(bad("unrecognized telemetry header".into()));
        }
        let ns = tel.sources.len();
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| bad(e.to_string()))?;
            let at = |i: usize| -> Result<f64> {
                row.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| {
                        bad(format!(
                            "row {}: bad value in column `{}`",
                            line + 2,
                            header[i]
                        ))
                    })
            };
            let int = |i: usize| -> Result<u32> {
                row.get(i)
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| {
                        bad(format!(
                            "row {}: bad value in column `{}`",
                            line + 2,
                            header[i]
                        ))
                    })
            };
            let mut sources = Vec::with_capacity(ns);
            for k in 0..ns {
                let c = 1 + 5 * k;
                sources.push(SourceSample {
                    p_kw: at(c)?,
                    q_kvar: at(c + 1)?,
                    f_hz: at(c + 2)?,
                    mode: int(c + 3)? as u8,
                    v_dc: at(c + 4)?,
                });
            }
            let c = 1 + 5 * ns;
            records.push(TelemetryRecord {
                t: at(0)?,
                sources,
                battery_soc: at(c)?,
                f_pcc_hz: at(c + 1)?,
                v_pcc_peak_v: at(c + 2)?,
                i_grid_pu: at(c + 3)?,
                i_load_pu: at(c + 4)?,
                phase_diff_deg: at(c + 5)?,
                breaker: int(c + 6)? as u8,
                sync_state: int(c + 7)? as u8,
                sync_in_band: int(c + 8)? as u8,
                flags: int(c + 9)?,
            });
        }
        Ok(Telemetry { records, ..tel })
    }

    pub fn source_index(&self, name: &str) -> Option<usize> {
        self.sources.iter().position(|s| s == name)
    }
}

pub fn write_telemetry(tel: &Telemetry, path: &Path) -> Result<()> {
    let io = |source: std::io::Error| SimError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    tel.write(std::io::BufWriter::new(file))
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(err) => io(err),
            other => io(std::io::Error::other(format!("{other:?}"))),
        })
}

pub fn read_telemetry(path: &Path) -> Result<Telemetry> {
    let file = std::fs::File::open(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Telemetry::read(std::io::BufReader::new(file), &path.display().to_string())
}
