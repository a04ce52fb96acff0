use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 10] = [
    "run",
    "algo",
    "iter",
    "objective",
    "stationarity",
    "clean_err",
    "attack",
    "eps",
    "adv_err",
    "ms",
];

/// One line of a metrics file. Absent values are written as empty cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRow {
    pub run: String,
    pub algo: String,
    /// Iteration or communication round.
    pub iter: usize,
    pub objective: Option<f64>,
    pub stationarity: Option<f64>,
    pub clean_err: Option<f64>,
    pub attack: Option<String>,
    pub eps: Option<f64>,
    pub adv_err: Option<f64>,
    /// Wall-clock milliseconds since the run started.
    pub ms: Option<f64>,
}

fn real(v: Option<f64>) -> String {
    // `Debug` prints the shortest string that parses back exactly, switching
    // to exponent notation for very large or small magnitudes
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl MetricsRow {
    fn cells(&self) -> [String; 10] {
        [
            self.run.clone(),
            self.algo.clone(),
            self.iter.to_string(),
            real(self.objective),
            real(self.stationarity),
            real(self.clean_err),
            self.attack.clone().unwrap_or_default(),
            real(self.eps),
            real(self.adv_err),
            real(self.ms),
        ]
    }
}

fn csv_err(path: &Path, e: impl ToString) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Serializes `rows` as CSV (LF line endings, quoting only where needed).
pub fn metrics_bytes(rows: &[MetricsRow]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    // writing to a Vec cannot fail
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(r.cells()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes the metrics file through a temp file and a rename, so readers
/// never observe a partial file.
pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    write_atomic(path, &metrics_bytes(rows))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(csv_err(path, "unexpected metrics header"));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| csv_err(path, format!("{s:?} is not a number")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let r = rec.map_err(|e| csv_err(path, e))?;
        rows.push(MetricsRow {
            run: r[0].to_string(),
            algo: r[1].to_string(),
            iter: r[2].parse().map_err(|_| csv_err(path, format!("bad iteration {:?}", &r[2])))?,
            objective: opt(&r[3])?,
            stationarity: opt(&r[4])?,
            clean_err: opt(&r[5])?,
            attack: (!r[6].is_empty()).then(|| r[6].to_string()),
            eps: opt(&r[7])?,
            adv_err: opt(&r[8])?,
            ms: opt(&r[9])?,
        });
    }
    Ok(rows)
}
