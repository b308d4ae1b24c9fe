//! Experiment trace files: CSV with the header `t_s,input,theta_rad` or
//! `t_s,input,theta_deg`.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::CliError;
use crate::sysid::ExperimentTrace;

pub const HEADER_RAD: &str = "t_s,input,theta_rad";
pub const HEADER_DEG: &str = "t_s,input,theta_deg";

pub fn parse_trace(text: &str, origin: &str) -> Result<ExperimentTrace, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = match records.next() {
        Some(Ok(h)) => h.iter().collect::<Vec<_>>().join(","),
        Some(Err(e)) => return Err(CliError::validation(format!("{origin}:1: {e}"))),
        None => return Err(CliError::validation(format!("{origin}: empty file"))),
    };
    let degrees = match header.as_str() {
        HEADER_RAD => false,
        HEADER_DEG => true,
        other => {
            return Err(CliError::validation(format!(
                "{origin}:1: header must be `{HEADER_RAD}` or `{HEADER_DEG}`, found `{other}`"
            )))
        }
    };
    let (mut t, mut u, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::validation(format!("{origin}:{line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(CliError::validation(format!("{origin}:{line}: expected 3 fields, found {}", rec.len())));
        }
        let field = |k: usize| -> Result<f64, CliError> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| CliError::validation(format!("{origin}:{line}: `{}` is not a number", &rec[k])))
        };
        t.push(field(0)?);
        u.push(field(1)?);
        let theta = field(2)?;
        y.push(if degrees { theta.to_radians() } else { theta });
    }
    ExperimentTrace::new(t, u, y).map_err(|e| CliError::validation(format!("{origin}: {e}")))
}

/// All `*.csv` files in `dir`, sorted by file name.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::validation(format!("cannot read traces directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::validation(format!("no traces (*.csv) found in {}", dir.display())));
    }
    Ok(files)
}

pub fn load_traces(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>, ExperimentTrace)>, CliError> {
    trace_files(dir)?
        .into_iter()
        .map(|path| {
            let bytes = std::fs::read(&path)
                .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| CliError::validation(format!("{}: not UTF-8", path.display())))?;
            let trace = parse_trace(text, &path.display().to_string())?;
            Ok((path, bytes, trace))
        })
        .collect()
}

/// Writes a trace in the radian format.
pub fn write_trace<W: Write>(trace: &ExperimentTrace, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER_RAD.split(','))?;
    for ((t, u), y) in trace.timestamps().iter().zip(trace.input()).zip(trace.output()) {
        w.write_record([t.to_string(), u.to_string(), y.to_string()])?;
    }
    w.flush()
}
