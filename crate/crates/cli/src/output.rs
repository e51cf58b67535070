//! Output writers: JSON with a trailing newline, sweep CSV and its reader.

use qode_core::discretization::ErrorRow;
use qode_core::pipeline::{SweepAxis, SweepRow};
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{CliError, CliResult};

/// One CSV row of a sweep, taken from the chosen scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub axis_value: f64,
    pub scheme: String,
    pub k: usize,
    pub p: u64,
    pub omega_tilde: f64,
    #[serde(rename = "kappa_L")]
    pub kappa_l: f64,
    pub pr_lower: f64,
    #[serde(rename = "eps_L")]
    pub eps_l: f64,
    pub q_qlsa: f64,
    pub rounds: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// Q divided by the horizon: the axis value on a T sweep, the
    /// template horizon otherwise.
    #[serde(rename = "Q_per_T")]
    pub q_per_t: f64,
}

impl SweepCsvRow {
    /// Flatten a sweep row.
    pub fn from_row(axis: SweepAxis, row: &SweepRow) -> Self {
        let rec = row.report.chosen_record();
        let horizon = match axis {
            SweepAxis::T => row.axis_value,
            SweepAxis::Mu | SweepAxis::Epsilon => row.report.t,
        };
        SweepCsvRow {
            axis_value: row.axis_value,
            scheme: rec.scheme.name().to_string(),
            k: rec.k,
            p: rec.p,
            omega_tilde: rec.omega_tilde,
            kappa_l: rec.kappa_l,
            pr_lower: rec.pr_lower,
            eps_l: rec.eps_l,
            q_qlsa: rec.q_qlsa,
            rounds: rec.rounds,
            q: row.report.q,
            q_per_t: row.report.q / horizon,
        }
    }
}

fn csv_writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

/// Serialize rows as CSV with a header.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Computation(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Computation(format!("csv: {e}")))
}

/// Per-step rows of a verification run as CSV.
pub fn error_rows_csv(rows: &[ErrorRow]) -> CliResult<Vec<u8>> {
    csv_bytes(rows)
}

/// Parse a sweep CSV.
pub fn read_sweep_csv(path: &str, text: &str) -> CliResult<Vec<SweepCsvRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<SweepCsvRow>, _>>()
        .map_err(|e| CliError::io(path, e))
}

/// Pretty JSON followed by a newline.
pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Computation(format!("json: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// Write to a file, or to standard output when `path` is `None` or `-`.
pub fn emit(path: Option<&str>, bytes: &[u8]) -> CliResult<()> {
    match path {
        None | Some("-") => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("stdout", e))
        }
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qode_core::pipeline::{sweep, EstimateRequest};

    #[test]
    fn header_and_line_endings() {
        let template = EstimateRequest::negative_lognorm(1e6, -1.0, 1e-10).unwrap();
        let rows = sweep(&template, SweepAxis::T, &[1e6, 1e7]).unwrap();
        let flat: Vec<_> = rows.iter().map(|r| SweepCsvRow::from_row(SweepAxis::T, r)).collect();
        let text = String::from_utf8(csv_bytes(&flat).unwrap()).unwrap();
        assert!(text.starts_with(
            "axis_value,scheme,k,p,omega_tilde,kappa_L,pr_lower,eps_L,q_qlsa,rounds,Q,Q_per_T\n"
        ));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 3);
        let back = read_sweep_csv("mem", &text).unwrap();
        assert_eq!(back, flat);
    }
}
