//! Segment cost models for the univariate search.
//!
//! Two models are provided: the Normal negative log-likelihood with a change
//! in both mean and variance, and a nonparametric cost built from the
//! empirical distribution function evaluated at a fixed set of quantiles.
//! Both precompute prefix statistics so that a segment query costs O(1) or
//! O(K).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    /// Normal likelihood, mean and variance both free within a segment.
    NormalMeanVar { variance_floor: f64 },
    /// Empirical-distribution cost; `quantiles: None` means ⌈4·ln n⌉.
    Empirical { quantiles: Option<usize> },
}

impl Default for CostModel {
    fn default() -> Self {
        Self::normal()
    }
}

impl CostModel {
    pub fn normal() -> Self {
        Self::NormalMeanVar {
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }

    pub fn empirical() -> Self {
        Self::Empirical { quantiles: None }
    }

    /// Number of free parameters per segment, as used by the MBIC penalty.
    pub fn params_per_segment(&self) -> usize {
        match self {
            Self::NormalMeanVar { .. } => 2,
            Self::Empirical { .. } => 1,
        }
    }

    /// Shortest segment the model can score.
    pub fn min_segment_len(&self) -> usize {
        match self {
            Self::NormalMeanVar { .. } => 2,
            Self::Empirical { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::NormalMeanVar { variance_floor } => {
                if !(variance_floor > 0.0 && variance_floor.is_finite()) {
                    return Err(Error::config(format!(
                        "variance floor must be positive and finite, got {variance_floor}"
                    )));
                }
            }
            Self::Empirical { quantiles: Some(0) } => {
                return Err(Error::config("empirical cost needs at least one quantile"));
            }
            Self::Empirical { .. } => {}
        }
        Ok(())
    }
}

/// Default quantile count ⌈4·ln n⌉ (natural log).
pub fn default_quantile_count(n: usize) -> usize {
    ((4.0 * (n as f64).ln()).ceil() as usize).max(1)
}

/// Quantile probability levels for `k = 1..=K`.
///
/// `p_k = 1 / (1 + (2n-1)·exp(-c·(2k-1)/K))` with `c = ln(2n-1)`; the levels
/// concentrate near both tails.
pub fn quantile_levels(n: usize, k: usize) -> Vec<f64> {
    let m = (2 * n - 1) as f64;
    let c = m.ln();
    (1..=k)
        .map(|i| 1.0 / (1.0 + m * (-c * (2 * i - 1) as f64 / k as f64).exp()))
        .collect()
}

/// Quantile values and the uniform per-quantile weight `γ = 2·ln(2n-1)/K`.
///
/// The `p`-quantile is the order statistic at zero-based rank `⌊(n-1)·p⌋`.
pub fn choose_quantiles(series: &[f64], k: usize) -> Result<(Vec<f64>, f64)> {
    let n = series.len();
    if n < 2 {
        return Err(Error::input("quantiles need at least 2 observations"));
    }
    if k == 0 {
        return Err(Error::config("quantile count must be at least 1"));
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = quantile_levels(n, k)
        .into_iter()
        .map(|p| sorted[(((n - 1) as f64) * p).floor() as usize])
        .collect();
    let weight = 2.0 * ((2 * n - 1) as f64).ln() / k as f64;
    Ok((quantiles, weight))
}

/// A segment cost together with whether the variance floor was hit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentCost {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
enum Stats {
    Normal {
        sum: Vec<f64>,
        sum_sq: Vec<f64>,
        variance_floor: f64,
    },
    Empirical {
        quantiles: Vec<f64>,
        weight: f64,
        /// `counts[k * (n + 1) + i]` is twice the tie-weighted count of
        /// values below quantile `k` among the first `i` observations.
        counts: Vec<u32>,
    },
}

/// Precomputed prefix statistics for one series under one cost model.
#[derive(Clone, Debug)]
pub struct CostContext {
    n: usize,
    model: CostModel,
    stats: Stats,
}

impl CostContext {
    pub fn new(series: &[f64], model: CostModel) -> Result<Self> {
        precompute(series, model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn model(&self) -> CostModel {
        self.model
    }

    pub fn quantiles(&self) -> Option<&[f64]> {
        match &self.stats {
            Stats::Empirical { quantiles, .. } => Some(quantiles),
            Stats::Normal { .. } => None,
        }
    }

    /// Prefix sums of the (globally centred) values and their squares.
    pub fn prefix_sums(&self) -> Option<(&[f64], &[f64])> {
        match &self.stats {
            Stats::Normal { sum, sum_sq, .. } => Some((sum, sum_sq)),
            Stats::Empirical { .. } => None,
        }
    }

    /// Cost of the segment covering zero-based positions `s..t`.
    ///
    /// Bounds are the caller's responsibility; the search only queries
    /// admissible segments.
    #[inline]
    pub fn cost(&self, s: usize, t: usize) -> f64 {
        match &self.stats {
            Stats::Normal {
                sum,
                sum_sq,
                variance_floor,
            } => normal_cost(sum, sum_sq, *variance_floor, s, t).value,
            Stats::Empirical {
                weight, counts, quantiles,
            } => empirical_cost_inner(counts, quantiles.len(), self.n, *weight, s, t),
        }
    }

    fn check_bounds(&self, s: usize, t: usize, min_len: usize) -> Result<()> {
        if s >= t || t > self.n {
            return Err(Error::input(format!(
                "segment ({s}, {t}] is out of range for a series of length {}",
                self.n
            )));
        }
        if t - s < min_len {
            return Err(Error::input(format!(
                "segment ({s}, {t}] is shorter than the minimum length {min_len}"
            )));
        }
        Ok(())
    }
}

/// Builds the prefix statistics for `series`.
pub fn precompute(series: &[f64], model: CostModel) -> Result<CostContext> {
    model.validate()?;
    let n = series.len();
    if n < 2 {
        return Err(Error::input(format!("series needs at least 2 points, got {n}")));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite value at position {}", i + 1)));
    }
    let stats = match model {
        CostModel::NormalMeanVar { variance_floor } => {
            // Centring first keeps the prefix sums small; segment variances
            // are unaffected.
            let centre = series.iter().sum::<f64>() / n as f64;
            let mut sum = Vec::with_capacity(n + 1);
            let mut sum_sq = Vec::with_capacity(n + 1);
            sum.push(0.0);
            sum_sq.push(0.0);
            let (mut a, mut b) = (0.0, 0.0);
            for &v in series {
                let x = v - centre;
                a += x;
                b += x * x;
                sum.push(a);
                sum_sq.push(b);
            }
            Stats::Normal {
                sum,
                sum_sq,
                variance_floor,
            }
        }
        CostModel::Empirical { quantiles } => {
            let k = quantiles.unwrap_or_else(|| default_quantile_count(n));
            let (quantiles, weight) = choose_quantiles(series, k)?;
            let mut counts = vec![0u32; k * (n + 1)];
            for (qi, &q) in quantiles.iter().enumerate() {
                let row = &mut counts[qi * (n + 1)..(qi + 1) * (n + 1)];
                let mut acc = 0u32;
                for (i, &v) in series.iter().enumerate() {
                    acc += if v < q {
                        2
                    } else if v == q {
                        1
                    } else {
                        0
                    };
                    row[i + 1] = acc;
                }
            }
            Stats::Empirical {
                quantiles,
                weight,
                counts,
            }
        }
    };
    Ok(CostContext { n, model, stats })
}

/// Normal mean-and-variance cost `ℓ·(ln 2π + ln σ̂² + 1)` of positions `s..t`.
pub fn normal_meanvar_cost(ctx: &CostContext, s: usize, t: usize) -> Result<SegmentCost> {
    let Stats::Normal {
        sum,
        sum_sq,
        variance_floor,
    } = &ctx.stats
    else {
        return Err(Error::config("context was not built for the Normal cost"));
    };
    ctx.check_bounds(s, t, 2)?;
    Ok(normal_cost(sum, sum_sq, *variance_floor, s, t))
}

/// Empirical-distribution cost of positions `s..t`; always nonnegative.
pub fn empirical_cost(ctx: &CostContext, s: usize, t: usize) -> Result<f64> {
    let Stats::Empirical {
        quantiles,
        weight,
        counts,
    } = &ctx.stats
    else {
        return Err(Error::config("context was not built for the empirical cost"));
    };
    ctx.check_bounds(s, t, 1)?;
    Ok(empirical_cost_inner(counts, quantiles.len(), ctx.n, *weight, s, t))
}

#[inline]
fn normal_cost(sum: &[f64], sum_sq: &[f64], floor: f64, s: usize, t: usize) -> SegmentCost {
    let len = (t - s) as f64;
    let a = sum[t] - sum[s];
    let b = sum_sq[t] - sum_sq[s];
    let var = (b - a * a / len) / len;
    let (var, degenerate) = if var < floor { (floor, true) } else { (var, false) };
    SegmentCost {
        value: len * (LN_2PI + var.ln() + 1.0),
        degenerate,
    }
}

#[inline]
fn empirical_cost_inner(counts: &[u32], k: usize, n: usize, weight: f64, s: usize, t: usize) -> f64 {
    let len = (t - s) as f64;
    let stride = n + 1;
    let mut total = 0.0;
    for qi in 0..k {
        let row = &counts[qi * stride..(qi + 1) * stride];
        let f = f64::from(row[t] - row[s]) / (2.0 * len);
        total += len * (xlnx(f) + xlnx(1.0 - f));
    }
    -weight * total
}

#[inline]
fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}
