use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{AngleCell, ExperimentKind, ResultRow};
use crate::error::{Error, Result};
use crate::matrix::fmt_f64;
use crate::metrics::REPORT_COLUMNS;

/// Leading columns of `results.csv`; [`REPORT_COLUMNS`] follow.
pub const RESULT_HEADER: [&str; 9] = [
    "config_hash",
    "seed",
    "kind",
    "method",
    "eta",
    "fold",
    "k1",
    "k2",
    "hyper",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders rows in the order given.
pub fn results_csv(hash: &str, kind: ExperimentKind, rows: &[ResultRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let header: Vec<&str> = RESULT_HEADER
        .iter()
        .chain(REPORT_COLUMNS.iter())
        .copied()
        .collect();
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![
            hash.to_string(),
            r.seed.to_string(),
            kind.name().to_string(),
            r.method.clone(),
            r.eta.map(fmt_f64).unwrap_or_default(),
            r.fold.label(),
            opt(r.k1),
            opt(r.k2),
            r.hyper.clone(),
        ];
        match &r.report {
            Some(rep) => rec.extend(rep.csv_cells()),
            None => rec.extend(std::iter::repeat_n(String::new(), REPORT_COLUMNS.len())),
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub(crate) fn angles_csv(hash: &str, cells: &[AngleCell]) -> String {
    let mut out = String::from("config_hash,seed,i,j,abs_cos\n");
    for c in cells {
        out.push_str(&format!(
            "{hash},{},{},{},{}\n",
            c.seed,
            c.i,
            c.j,
            fmt_f64(c.value)
        ));
    }
    out
}

/// Machine-readable failure description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorReport {
    pub error: String,
    pub message: String,
    pub exit_code: i32,
}

impl ErrorReport {
    pub fn from_error(e: &Error) -> ErrorReport {
        ErrorReport {
            error: e.kind().to_string(),
            message: e.to_string(),
            exit_code: if e.is_numerical() { 3 } else { 2 },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

pub fn write_error_json(path: &Path, e: &Error) -> Result<()> {
    let body = serde_json::to_string_pretty(&ErrorReport::from_error(e))? + "\n";
    fs::write(path, body).map_err(|err| Error::io(path, err))
}
