//! CSV serialization of traces and summaries.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), so a value read
//! back parses to the same `f64`. Undefined `cos θ` is the literal `NA`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dbgd::solver::TraceRecord;

use crate::error::Result;

pub const TRACE_HEADER: [&str; 14] = [
    "k",
    "f",
    "g",
    "grad_f_sq",
    "grad_g_sq",
    "lambda",
    "d_sq",
    "cos_theta",
    "f_perp_sq",
    "f_par_sq",
    "delta_f",
    "delta_g",
    "potential",
    "degenerate",
];

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

pub fn write_trace<W: Write>(trace: &TraceRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace.rows() {
        w.write_record([
            r.k.to_string(),
            num(r.f),
            num(r.g),
            num(r.grad_f_sq),
            num(r.grad_g_sq),
            num(r.lambda),
            num(r.d_sq),
            opt_num(r.cos_theta),
            num(r.f_perp_sq),
            num(r.f_par_sq),
            num(r.delta_f),
            num(r.delta_g),
            num(r.potential),
            (r.degenerate as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &TraceRecord, path: &Path) -> Result<()> {
    write_trace(trace, BufWriter::new(File::create(path)?))
}

/// Writes a header plus pre-formatted rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::HarnessError {
    crate::error::HarnessError::Io(e.to_string())
}
