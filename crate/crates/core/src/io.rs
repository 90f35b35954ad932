//! CSV input/output and robust per-series scaling.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::SeriesMatrix;

/// Normal-consistent MAD factor.
pub const MAD_SCALE: f64 = 1.4826;

/// Reads a numeric CSV file; rows are time points, columns are series.
///
/// A first row containing any non-numeric cell is treated as a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    read_csv(BufReader::new(file))
}

pub fn read_csv<R: Read>(reader: R) -> Result<SeriesMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = idx + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if line == 1 && record.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::input(format!(
                    "row {line} has {} columns, expected {w}",
                    record.len()
                )));
            }
            Some(_) => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::input(format!("row {line}, column {}: '{cell}' is not a number", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::input(format!("row {line}, column {}: non-finite value", col + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let p = width.unwrap_or(0);
    if rows < 2 {
        return Err(Error::input(format!("need at least 2 data rows, found {rows}")));
    }
    SeriesMatrix::from_row_major(rows, p, values)
}

/// Writes `m` as headerless CSV. Values round-trip exactly.
pub fn write_csv<W: Write>(m: &SeriesMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(m: &SeriesMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_csv(m, File::create(path)?)
}

/// Median of a slice (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scaled median absolute deviation `1.4826·median(|x - median(x)|)`.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    MAD_SCALE * median(&dev)
}

/// Divides every column by its MAD. Columns with zero MAD are left as they
/// are and returned in the second element.
pub fn scale_mad(m: &SeriesMatrix) -> (SeriesMatrix, Vec<usize>) {
    let scales: Vec<f64> = (0..m.p()).map(|j| mad(&m.column(j))).collect();
    let flagged: Vec<usize> = scales
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == 0.0)
        .map(|(j, _)| j)
        .collect();
    for &j in &flagged {
        log::warn!("series {} has zero MAD and is left unscaled", j + 1);
    }
    let scaled = m.map_columns(|j, v| if scales[j] == 0.0 { v } else { v / scales[j] });
    (scaled, flagged)
}
