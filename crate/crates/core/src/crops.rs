//! Every optimal segmentation over a range of penalties.
//!
//! The optimal unpenalized cost `Q(m)` as a function of the number of
//! changepoints has a lower convex hull; each hull vertex is optimal for an
//! interval of penalties. The path is found by probing the penalty at which
//! two known solutions tie and recursing until no new solution appears.

use serde::Serialize;

use crate::cost::{precompute, CostContext, CostModel};
use crate::error::{Error, Result};
use crate::pelt::{pelt_with_context, Penalty, PenaltyValue, SearchOptions, Segmentation};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CropsEntry {
    /// Penalties in `[beta_lo, beta_hi)` select this segmentation; the last
    /// entry's interval is closed at `beta_hi`.
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub segmentation: Segmentation,
}

impl CropsEntry {
    pub fn changepoint_count(&self) -> usize {
        self.segmentation.len()
    }

    pub fn unpenalized_cost(&self) -> f64 {
        self.segmentation.unpenalized_cost
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CropsResult {
    /// Sorted by decreasing changepoint count.
    pub entries: Vec<CropsEntry>,
    pub beta_min: f64,
    pub beta_max: f64,
    /// How many times the search was run.
    pub searches: usize,
}

/// Default penalty range `[ln n, 50·ln n]`.
pub fn default_beta_range(n: usize) -> (f64, f64) {
    let l = (n as f64).ln();
    (l, 50.0 * l)
}

/// Runs the penalty-path search on `series` for penalties in `[beta_min, beta_max]`.
pub fn crops(
    series: &[f64],
    model: CostModel,
    beta_min: f64,
    beta_max: f64,
    minseglen: usize,
) -> Result<CropsResult> {
    let ctx = precompute(series, model)?;
    crops_with_context(&ctx, beta_min, beta_max, minseglen)
}

/// As [`crops`], but refuses penalty schemes other than a manual `β`.
pub fn crops_for_penalty(series: &[f64], model: CostModel, penalty: Penalty, beta_max: f64, minseglen: usize) -> Result<CropsResult> {
    match penalty {
        Penalty::Manual(beta_min) => crops(series, model, beta_min, beta_max, minseglen),
        Penalty::Mbic => Err(Error::config(
            "the penalty path needs a penalty linear in the changepoint count; MBIC adds per-segment terms",
        )),
    }
}

pub fn crops_with_context(ctx: &CostContext, beta_min: f64, beta_max: f64, minseglen: usize) -> Result<CropsResult> {
    if !(beta_min >= 0.0) || !beta_max.is_finite() {
        return Err(Error::input(format!("invalid penalty range [{beta_min}, {beta_max}]")));
    }
    if beta_min > beta_max {
        return Err(Error::input(format!("beta_min {beta_min} exceeds beta_max {beta_max}")));
    }
    let opts = SearchOptions {
        minseglen,
        pruning: true,
    };
    let mut searches = 0usize;
    let mut run = |beta: f64| -> Result<Segmentation> {
        searches += 1;
        pelt_with_context(ctx, PenaltyValue::manual(beta), opts)
    };

    let low = run(beta_min)?;
    let mut found: Vec<Segmentation> = vec![low.clone()];
    if beta_max > beta_min {
        let high = run(beta_max)?;
        if high.changepoints != low.changepoints {
            found.push(high.clone());
        }
        let mut pending = vec![(low, high)];
        while let Some((a, b)) = pending.pop() {
            // a has more changepoints than b
            if a.len() <= b.len() + 1 {
                continue;
            }
            let beta = (b.unpenalized_cost - a.unpenalized_cost) / (a.len() - b.len()) as f64;
            let mid = run(beta)?;
            if mid.len() == b.len() || mid.len() == a.len() {
                continue;
            }
            found.push(mid.clone());
            pending.push((a, mid.clone()));
            pending.push((mid, b));
        }
    }

    found.sort_by(|x, y| y.len().cmp(&x.len()));
    found.dedup_by(|x, y| x.changepoints == y.changepoints);

    let mut entries = Vec::with_capacity(found.len());
    for (i, seg) in found.iter().enumerate() {
        let beta_lo = if i == 0 {
            beta_min
        } else {
            crossing(&found[i - 1], seg).clamp(beta_min, beta_max)
        };
        let beta_hi = match found.get(i + 1) {
            Some(next) => crossing(seg, next).clamp(beta_min, beta_max),
            None => beta_max,
        };
        entries.push(CropsEntry {
            beta_lo,
            beta_hi,
            segmentation: seg.clone(),
        });
    }
    Ok(CropsResult {
        entries,
        beta_min,
        beta_max,
        searches,
    })
}

/// Penalty at which `more` (more changepoints) and `fewer` tie.
fn crossing(more: &Segmentation, fewer: &Segmentation) -> f64 {
    (fewer.unpenalized_cost - more.unpenalized_cost) / (more.len() - fewer.len()) as f64
}

/// One row of the elbow diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElbowRow {
    pub m: usize,
    pub q: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub elbow: bool,
}

/// Rows sorted by changepoint count, with the point of maximum discrete
/// curvature of `Q(m)` flagged as the suggested elbow.
pub fn elbow_table(result: &CropsResult) -> Result<Vec<ElbowRow>> {
    if result.entries.is_empty() {
        return Err(Error::input("empty penalty path"));
    }
    let mut rows: Vec<ElbowRow> = result
        .entries
        .iter()
        .map(|e| ElbowRow {
            m: e.changepoint_count(),
            q: e.unpenalized_cost(),
            beta_lo: e.beta_lo,
            beta_hi: e.beta_hi,
            elbow: false,
        })
        .collect();
    rows.sort_by_key(|r| r.m);

    let scale = rows.iter().map(|r| r.q.abs()).fold(1.0, f64::max);
    let mut pick = 0;
    let mut best = 0.0;
    for i in 1..rows.len().saturating_sub(1) {
        let left = (rows[i].q - rows[i - 1].q) / (rows[i].m - rows[i - 1].m) as f64;
        let right = (rows[i + 1].q - rows[i].q) / (rows[i + 1].m - rows[i].m) as f64;
        let curvature = right - left;
        if curvature > best + 1e-12 * scale {
            best = curvature;
            pick = i;
        }
    }
    rows[pick].elbow = true;
    Ok(rows)
}

/// Writes diagnostic rows as CSV with columns `m,Q,beta_lo,beta_hi,elbow_flag`.
pub fn write_elbow_csv<W: std::io::Write>(rows: &[ElbowRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "Q", "beta_lo", "beta_hi", "elbow_flag"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.q.to_string(),
            r.beta_lo.to_string(),
            r.beta_hi.to_string(),
            u8::from(r.elbow).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
