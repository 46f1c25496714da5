//! CSV emission and ingestion for traces and sweeps.
//!
//! All numeric fields are written with 12 significant digits in scientific
//! notation so golden files are stable across platforms.

use crate::analysis::{Sweep2d, SweepRow};
use crate::trace::TraceSet;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Fixed-precision numeric formatting used in every CSV (12 significant
/// digits).
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

/// Write through a temp file in the same directory, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub const TRACE_HEADER: &str = "time_us,re12,im12,re13,im13,re23,im23,p11,p22,p33";

/// The macroscopic trace: one row per grid time.
pub fn trace_csv(traces: &TraceSet) -> String {
    let mut out = String::with_capacity(traces.len() * 160);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for (t, s) in traces.samples() {
        let cols = [
            t, s.re12, s.im12, s.re13, s.im13, s.re23, s.im23, s.p11, s.p22, s.p33,
        ];
        let row: Vec<String> = cols.iter().map(|&v| fmt_num(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Per-group rho_12 series: columns `time_us, re12@<delta>kHz, im12@<delta>kHz, ...`.
pub fn groups_csv(traces: &TraceSet) -> Option<String> {
    let per_group = traces.per_group.as_ref()?;
    let mut out = String::new();
    out.push_str("time_us");
    for g in per_group {
        out.push_str(&format!(",re12@{0}kHz,im12@{0}kHz", g.delta_khz));
    }
    out.push('\n');
    for (k, t) in traces.times.iter().enumerate() {
        out.push_str(&fmt_num(*t));
        for g in per_group {
            out.push(',');
            out.push_str(&fmt_num(g.rho12[k].re));
            out.push(',');
            out.push_str(&fmt_num(g.rho12[k].im));
        }
        out.push('\n');
    }
    Some(out)
}

pub const SWEEP_HEADER: &str = "phi_rad,amplitude,intensity,amplitude_homogeneous";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(r.phi_rad),
            fmt_num(r.amplitude),
            fmt_num(r.intensity),
            fmt_num(r.amplitude_homogeneous)
        ));
    }
    out
}

/// Row-major amplitude matrix: one row per detuning offset, one column per
/// phase grid point.
pub fn sweep2d_csv(grid: &Sweep2d) -> String {
    let mut out = String::new();
    out.push_str("delta_offset_mhz");
    for phi in &grid.phis_rad {
        out.push_str(&format!(",phi={}", fmt_num(*phi)));
    }
    out.push('\n');
    for (row, off) in grid.amplitude.iter().zip(&grid.offsets_mhz) {
        out.push_str(&fmt_num(*off));
        for v in row {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

/// A parsed CSV: header names plus column-major data.
pub struct CsvTable {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }
}

pub fn read_csv(text: &str) -> Result<CsvTable, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty CSV")?;
    let headers: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != headers.len() {
            return Err(format!(
                "row {} has {} fields, header has {}",
                n + 2,
                fields.len(),
                headers.len()
            ));
        }
        for (c, field) in fields.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format!("row {}: bad number '{}'", n + 2, field))?;
            columns[c].push(v);
        }
    }
    Ok(CsvTable { headers, columns })
}
