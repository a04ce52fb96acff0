use std::path::Path;

use super::{write_atomic, Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::model::Datum;
use crate::scalar::Scalar;

fn csv_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a headered table; `label_column` names the label, every other
/// column is a feature.
///
/// Labels that are all non-negative integers make a classification dataset
/// with `max + 1` classes. The feature range is the observed `[min, max]`.
pub fn load_csv<F: Scalar>(path: &Path, label_column: &str, delimiter: u8) -> Result<Dataset<F>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e.to_string()))?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| csv_err(path, format!("no column named {label_column:?}")))?;
    let mut data = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e.to_string()))?;
        let mut x = Vec::with_capacity(rec.len().saturating_sub(1));
        let mut y = F::zero();
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                csv_err(path, format!("row {}, column {:?}: {cell:?} is not a number", row + 1, &header[col]))
            })?;
            if col == label_idx {
                y = F::of(v);
            } else {
                x.push(F::of(v));
            }
        }
        data.push(Datum::new(x, y));
    }
    if data.is_empty() {
        return Err(csv_err(path, "no data rows after the header"));
    }
    let (mut lo, mut hi) = (F::infinity(), F::neg_infinity());
    for v in data.iter().flat_map(|z| z.x.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !(lo < hi) {
        // constant or empty features
        lo = if lo.is_finite() { lo } else { F::zero() };
        hi = lo + F::one();
    }
    let labels = if data.iter().all(|z| z.class().is_some()) {
        LabelKind::Classes(data.iter().filter_map(Datum::class).max().unwrap_or(0) + 1)
    } else {
        LabelKind::Regression
    };
    Dataset::new(data, (lo, hi), labels)
}

/// Writes columns `x0 .. x{d-1}, y` with shortest round-trip reals.
pub fn write_csv<F: Scalar>(path: &Path, ds: &Dataset<F>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<String> = (0..ds.dim()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(|e| csv_err(path, e.to_string()))?;
    for z in &ds.data {
        let row: Vec<String> = z.x.iter().chain(std::iter::once(&z.y)).map(|v| format!("{v:?}")).collect();
        w.write_record(&row).map_err(|e| csv_err(path, e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(path, e.to_string()))?;
    write_atomic(path, &bytes)
}
