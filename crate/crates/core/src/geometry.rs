//! Distance and angle mappings of a multivariate series relative to a fixed
//! reference vector.
//!
//! Every column is first shifted so that its minimum equals the matching
//! entry of the reference vector (all ones by default). Each time vector is
//! then summarised by two scalars: its Euclidean distance from the reference
//! and the principal angle it makes with the all-ones direction. Changes in
//! mean mostly move the distance, changes in spread mostly move the angle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation matrix, rows are time points and columns are series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesMatrix {
    values: Vec<f64>,
    n: usize,
    p: usize,
}

impl SeriesMatrix {
    /// Builds a matrix from row-major values.
    pub fn from_row_major(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::input(format!("need at least 2 time points, got {n}")));
        }
        if p < 1 {
            return Err(Error::input("need at least 1 series"));
        }
        if values.len() != n * p {
            return Err(Error::input(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite value at row {}, column {}",
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(Self { values, n, p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::input(format!(
                "row {} has {} columns, expected {p}",
                bad + 1,
                rows[bad].len()
            )));
        }
        Self::from_row_major(n, p, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Applies `f(column, value)` to every entry.
    pub(crate) fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let p = self.p;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &v)| f(idx % p, v))
            .collect();
        Self {
            values,
            n: self.n,
            p,
        }
    }

    pub fn column_minima(&self) -> Vec<f64> {
        let mut mins = self.row(0).to_vec();
        for row in self.rows().skip(1) {
            for (m, &v) in mins.iter_mut().zip(row) {
                if v < *m {
                    *m = v;
                }
            }
        }
        mins
    }
}

/// Matrix after shifting every column onto the reference vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslatedMatrix {
    values: Vec<f64>,
    reference: Vec<f64>,
    n: usize,
    p: usize,
}

impl TranslatedMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Distance,
    Angle,
}

impl std::fmt::Display for MapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Distance => f.write_str("distance"),
            Self::Angle => f.write_str("angle"),
        }
    }
}

/// A univariate series produced by one of the mappings.
#[derive(Clone, Debug, PartialEq)]
pub struct MappedSeries {
    pub values: Vec<f64>,
    pub kind: MapKind,
}

impl MappedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Shifts each column so that its minimum equals the matching reference entry.
///
/// `reference` defaults to the all-ones vector. The reference only affects the
/// angle mapping; distances are measured from the reference itself and are
/// therefore invariant to its choice.
pub fn translate(m: &SeriesMatrix, reference: Option<&[f64]>) -> Result<TranslatedMatrix> {
    let p = m.p();
    let reference = match reference {
        None => vec![1.0; p],
        Some(r) => {
            if r.len() != p {
                return Err(Error::config(format!(
                    "reference vector has length {}, matrix has {p} columns",
                    r.len()
                )));
            }
            if r.iter().any(|v| *v == 0.0 || !v.is_finite()) {
                return Err(Error::config("reference vector entries must be finite and nonzero"));
            }
            r.to_vec()
        }
    };
    let mins = m.column_minima();
    // Column minimisers map to the reference exactly; `max` absorbs rounding
    // in `v - off` everywhere else.
    let mut values = Vec::with_capacity(m.n() * p);
    for row in m.rows() {
        values.extend(row.iter().zip(&mins).zip(&reference).map(|((&v, &min), &r)| {
            if v == min {
                r
            } else {
                (v - (min - r)).max(r)
            }
        }));
    }
    Ok(TranslatedMatrix {
        values,
        reference,
        n: m.n(),
        p,
    })
}

/// Euclidean distance of every translated row from the reference vector.
pub fn distance_map(t: &TranslatedMatrix) -> MappedSeries {
    let reference = t.reference();
    let values = t
        .rows()
        .map(|row| {
            pairwise_sum(row.len(), &|j| {
                let d = row[j] - reference[j];
                d * d
            })
            .sqrt()
        })
        .collect();
    MappedSeries {
        values,
        kind: MapKind::Distance,
    }
}

/// Principal angle between every translated row and the all-ones direction.
pub fn angle_map(t: &TranslatedMatrix) -> Result<MappedSeries> {
    let sqrt_p = (t.p() as f64).sqrt();
    let mut values = Vec::with_capacity(t.n());
    for (i, row) in t.rows().enumerate() {
        values.push(row_angle(row, sqrt_p).ok_or_else(|| {
            Error::degenerate(format!("row {} has zero norm after translation", i + 1))
        })?);
    }
    Ok(MappedSeries {
        values,
        kind: MapKind::Angle,
    })
}

/// Both mappings from one translated matrix.
pub fn map_both(t: &TranslatedMatrix) -> Result<(MappedSeries, MappedSeries)> {
    Ok((distance_map(t), angle_map(t)?))
}

/// Angle between `row` and the all-ones direction.
///
/// Evaluated as `atan2(‖row - mean·𝟙‖, √p·mean)`, which equals
/// `arccos(⟨row, 𝟙⟩ / (‖row‖·√p))` but stays exact for rows parallel to 𝟙.
fn row_angle(row: &[f64], sqrt_p: f64) -> Option<f64> {
    let p = row.len() as f64;
    let mean = pairwise_sum(row.len(), &|j| row[j]) / p;
    let spread = pairwise_sum(row.len(), &|j| {
        let d = row[j] - mean;
        d * d
    })
    .sqrt();
    let along = sqrt_p * mean;
    if spread == 0.0 && along == 0.0 {
        return None;
    }
    Some(spread.atan2(along))
}

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise summation of `term(0..len)`; error grows as O(log len) rather than O(len).
fn pairwise_sum<F: Fn(usize) -> f64>(len: usize, term: &F) -> f64 {
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            (lo..hi).map(term).sum()
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    go(0, len, term)
}
