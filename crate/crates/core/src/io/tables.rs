use std::io::Write;

use crate::error::{Error, Result};
use crate::optimize::TraceRecord;
use crate::scalar::Real;
use crate::theory::MonotonicityProfile;

/// Writes a header row and data rows as comma-separated values.
pub fn write_table(out: impl Write, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// `iteration,mu,objective,measure_1..measure_n`.
pub fn trace_header(phases: usize) -> Vec<String> {
    let mut header: Vec<String> = ["iteration", "mu", "objective"].map(String::from).to_vec();
    header.extend((1..=phases).map(|i| format!("measure_{i}")));
    header
}

pub fn write_trace_csv<T: Real>(out: impl Write, trace: &[TraceRecord<T>], phases: usize) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|t| {
            let mut row = vec![t.iteration.to_string(), t.mu.to_string(), t.objective.to_string()];
            row.extend(t.measures.iter().map(|m| m.to_string()));
            row
        })
        .collect();
    write_table(out, &trace_header(phases), &rows)
}

/// `r,A_1..A_3,b_1..b_3,B_1..B_3,Phi2,Phi3,Phi_ctv`.
pub fn profile_header() -> Vec<String> {
    let mut header = vec!["r".to_string()];
    for prefix in ["A", "b", "B"] {
        header.extend((1..=3).map(|i| format!("{prefix}_{i}")));
    }
    header.extend(["Phi2", "Phi3", "Phi_ctv"].map(String::from));
    header
}

/// One row per radius; columns of absent fields or products are left empty.
pub fn write_profile_csv<T: Real>(out: impl Write, profile: &MonotonicityProfile<T>) -> Result<()> {
    let cell = |v: Option<T>| v.map_or_else(String::new, |v| v.to_string());
    let rows: Vec<Vec<String>> = profile
        .rows
        .iter()
        .map(|row| {
            let mut out = vec![row.r.to_string()];
            for column in [&row.a, &row.b, &row.boundary] {
                out.extend((0..3).map(|i| cell(column.get(i).copied())));
            }
            out.push(row.phi2.to_string());
            out.push(cell(row.phi3));
            out.push(cell(row.phi_ctv));
            out
        })
        .collect();
    write_table(out, &profile_header(), &rows)
}
