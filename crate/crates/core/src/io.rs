//! Reading and writing run artifacts: JSON documents for structured data and
//! CSV tables for sweeps and radial diagnostics.

use crate::ball::RadialDiagnostics;
use crate::error::{Error, Result};
use crate::partition::EllEstimate;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    beta: f64,
    ell_beta: f64,
    ell_upper: f64,
    lambda_beta: f64,
    interaction: f64,
    iterations: usize,
    residual: f64,
}

/// One row per β of the sweep.
pub fn write_sweep_csv(path: &Path, est: &EllEstimate) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (r, upper) in est.results.iter().zip(&est.ell_uppers) {
        w.serialize(SweepRow {
            beta: r.beta,
            ell_beta: r.ell_beta,
            ell_upper: *upper,
            lambda_beta: r.lambda_beta,
            interaction: r.interaction,
            iterations: r.iterations,
            residual: r.residual,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `r, H, E, N, J_1, …, J_k`.
pub fn write_diagnostics_csv(path: &Path, diag: &RadialDiagnostics) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["r", "H", "E", "N"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=diag.j.len()).map(|i| format!("J_{i}")));
    w.write_record(&header)?;
    for s in 0..diag.radii.len() {
        let mut row = vec![diag.radii[s], diag.h[s], diag.e[s], diag.nq[s]];
        row.extend(diag.j.iter().map(|j| j[s]));
        w.write_record(row.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_diagnostics_csv`]. The interaction
/// column is not stored, so it comes back as zeros; `dimension` and
/// `coupling` are supplied by the caller.
pub fn read_diagnostics_csv(path: &Path, dimension: usize, coupling: f64) -> Result<RadialDiagnostics> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let expected = ["r", "H", "E", "N"];
    if header.len() < 5 || header.iter().take(4).ne(expected) {
        return Err(Error::InvalidInput(format!(
            "{}: expected columns r,H,E,N,J_1..J_k",
            path.display()
        )));
    }
    let k = header.len() - 4;
    let mut d = RadialDiagnostics {
        dimension,
        coupling,
        radii: Vec::new(),
        h: Vec::new(),
        e: Vec::new(),
        nq: Vec::new(),
        j: vec![Vec::new(); k],
        interaction: Vec::new(),
    };
    for record in r.records() {
        let record = record?;
        let vals = record
            .iter()
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        d.radii.push(vals[0]);
        d.h.push(vals[1]);
        d.e.push(vals[2]);
        d.nq.push(vals[3]);
        for (i, j) in d.j.iter_mut().enumerate() {
            j.push(vals[4 + i]);
        }
        d.interaction.push(0.0);
    }
    Ok(d)
}

/// Parses `start:end:xFactor` (geometric, end included when hit within
/// round-off) or a comma-separated list.
pub fn parse_schedule(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("cannot parse schedule `{spec}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [start, end, factor] => {
            let factor = factor.trim().strip_prefix('x').ok_or_else(bad)?;
            let (start, end, factor) = (num(start)?, num(end)?, num(factor)?);
            if !(start > 0.0 && end >= start && factor > 1.0) {
                return Err(bad());
            }
            let mut out = Vec::new();
            let mut b = start;
            while b <= end * (1.0 + 1e-12) {
                out.push(b);
                b *= factor;
            }
            out
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<f64>>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}
