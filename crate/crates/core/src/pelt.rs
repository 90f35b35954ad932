//! Exact penalized segmentation by pruned dynamic programming.
//!
//! `pelt` minimises `Σ C(segment) + m·β` over all segmentations whose
//! segments are at least `minseglen` long. Candidates for the last
//! changepoint are pruned once they can never again be optimal, which keeps
//! the search close to linear when changes are frequent and at worst
//! quadratic. `brute_force_segment` enumerates every admissible segmentation
//! and is used to check the search on short series.
//!
//! Ties in the objective (up to a relative tolerance of 1e-10) are broken
//! toward fewer changepoints, then toward the lexicographically smallest
//! changepoint sequence.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cost::{precompute, CostContext, CostModel};
use crate::error::{Error, Result};

pub const DEFAULT_MINSEGLEN: usize = 2;
pub const BRUTE_FORCE_MAX_N: usize = 40;

const TIE_TOL: f64 = 1e-10;

/// Penalty scheme for the number of changepoints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", content = "beta", rename_all = "snake_case")]
pub enum Penalty {
    Manual(f64),
    #[default]
    Mbic,
}

/// A penalty resolved against a series length and cost model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyValue {
    /// Cost per changepoint.
    pub beta: f64,
    /// Whether `ln(segment length)` is added to every segment's cost.
    pub segment_log: bool,
}

impl PenaltyValue {
    pub fn manual(beta: f64) -> Self {
        Self {
            beta,
            segment_log: false,
        }
    }
}

impl Penalty {
    pub fn resolve(&self, n: usize, model: &CostModel) -> Result<PenaltyValue> {
        match *self {
            Self::Manual(beta) => {
                if !(beta >= 0.0) || beta.is_nan() {
                    return Err(Error::config(format!("penalty must be nonnegative, got {beta}")));
                }
                Ok(PenaltyValue::manual(beta))
            }
            Self::Mbic => Ok(mbic_penalty(n, model.params_per_segment())),
        }
    }
}

impl std::fmt::Display for Penalty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Manual(beta) => write!(f, "manual:{beta}"),
            Self::Mbic => f.write_str("mbic"),
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("mbic") {
            return Ok(Self::Mbic);
        }
        let value = s.strip_prefix("manual:").unwrap_or(s);
        value
            .parse::<f64>()
            .ok()
            .filter(|b| *b >= 0.0 && b.is_finite())
            .map(Self::Manual)
            .ok_or_else(|| Error::config(format!("unrecognised penalty '{s}' (expected mbic or manual:<beta>)")))
    }
}

/// Modified BIC: `(q + 2)·ln n` per changepoint plus `ln(ℓ)` per segment.
pub fn mbic_penalty(n: usize, q_params: usize) -> PenaltyValue {
    PenaltyValue {
        beta: (q_params as f64 + 2.0) * (n as f64).ln(),
        segment_log: true,
    }
}

/// Result of a search: changepoints are the last index (1-based) of every
/// segment but the final one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub changepoints: Vec<usize>,
    /// Penalized objective value.
    pub total_cost: f64,
    /// Sum of raw segment costs, without `β` or `ln ℓ` terms.
    pub unpenalized_cost: f64,
    pub n: usize,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.changepoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changepoints.is_empty()
    }

    /// Segment bounds as zero-based half-open ranges.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        bounds(&self.changepoints, self.n)
    }
}

fn bounds(cpts: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(cpts.len() + 1);
    let mut start = 0;
    for &c in cpts.iter().chain(std::iter::once(&n)) {
        out.push((start, c));
        start = c;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchOptions {
    pub minseglen: usize,
    pub pruning: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            minseglen: DEFAULT_MINSEGLEN,
            pruning: true,
        }
    }
}

/// Extends a partial objective by the segment `(s, t]` with raw cost `cost`.
///
/// Both the search and the brute-force oracle go through this so that equal
/// segmentations produce bitwise-equal objectives.
#[inline]
fn extend(acc: f64, cost: f64, s: usize, t: usize, pen: PenaltyValue) -> f64 {
    let log_term = if pen.segment_log { ((t - s) as f64).ln() } else { 0.0 };
    extend_with_log(acc, cost, s, pen.beta, log_term)
}

#[inline]
fn extend_with_log(acc: f64, cost: f64, s: usize, beta: f64, log_term: f64) -> f64 {
    let beta = if s > 0 { beta } else { 0.0 };
    ((acc + cost) + beta) + log_term
}

#[inline]
fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

fn check_inputs(n: usize, model: &CostModel, minseglen: usize) -> Result<()> {
    if minseglen < model.min_segment_len().max(1) {
        return Err(Error::config(format!(
            "minimum segment length {minseglen} is below the model's minimum {}",
            model.min_segment_len().max(1)
        )));
    }
    if n < 2 * minseglen {
        return Err(Error::input(format!(
            "series of length {n} is too short for minimum segment length {minseglen}"
        )));
    }
    Ok(())
}

/// Optimal penalized segmentation of `series`.
pub fn pelt(series: &[f64], model: CostModel, penalty: Penalty, minseglen: usize) -> Result<Segmentation> {
    check_inputs(series.len(), &model, minseglen)?;
    let ctx = precompute(series, model)?;
    let pen = penalty.resolve(series.len(), &model)?;
    pelt_with_context(
        &ctx,
        pen,
        SearchOptions {
            minseglen,
            pruning: true,
        },
    )
}

/// Search over a prepared cost context.
pub fn pelt_with_context(ctx: &CostContext, pen: PenaltyValue, opts: SearchOptions) -> Result<Segmentation> {
    let n = ctx.n();
    let minseglen = opts.minseglen;
    check_inputs(n, &ctx.model(), minseglen)?;
    if !(pen.beta >= 0.0) {
        return Err(Error::config(format!("penalty must be nonnegative, got {}", pen.beta)));
    }

    let mut best = vec![f64::INFINITY; n + 1];
    let mut count = vec![0u32; n + 1];
    let mut prev = vec![0usize; n + 1];
    best[0] = 0.0;

    // (candidate, time from which it is discarded)
    let mut candidates: Vec<(usize, usize)> = vec![(0, usize::MAX)];
    let log_len: Vec<f64> = if pen.segment_log {
        (0..=n).map(|l| (l as f64).ln()).collect()
    } else {
        vec![0.0; n + 1]
    };
    // (index into `candidates`, raw segment cost)
    let mut evaluated: Vec<(usize, f64)> = Vec::new();

    for t in minseglen..=n {
        candidates.retain(|&(_, kill)| kill > t);
        evaluated.clear();
        let mut arg: Option<(usize, f64)> = None;
        for (idx, &(s, _)) in candidates.iter().enumerate() {
            if t - s < minseglen {
                continue;
            }
            let cost = ctx.cost(s, t);
            let value = extend_with_log(best[s], cost, s, pen.beta, log_len[t - s]);
            evaluated.push((idx, cost));
            let better = match arg {
                None => true,
                Some((a, cur)) => prefer(value, s, cur, a, &count, &prev) == Ordering::Less,
            };
            if better {
                arg = Some((s, value));
            }
        }
        let Some((s_best, value)) = arg else {
            continue;
        };
        best[t] = value;
        prev[t] = s_best;
        count[t] = if s_best > 0 { count[s_best] + 1 } else { 0 };

        if opts.pruning {
            // s can never beat t for any later end point once
            // F(s) + C(s,t) + β_s - β > F(t), because C is split-subadditive.
            // t only becomes admissible `minseglen` steps later, so s stays
            // until then.
            for &(idx, cost) in &evaluated {
                let (s, kill) = &mut candidates[idx];
                let beta_s = if *s > 0 { pen.beta } else { 0.0 };
                let lhs = best[*s] + cost + beta_s - pen.beta;
                if *kill == usize::MAX && lhs > value && !near(lhs, value) {
                    *kill = t + minseglen;
                }
            }
        }
        candidates.push((t, usize::MAX));
    }

    if !best[n].is_finite() {
        return Err(Error::invariant("no admissible segmentation reached the end of the series"));
    }
    let changepoints = trace(&prev, n);
    let unpenalized_cost = bounds(&changepoints, n).iter().map(|&(s, t)| ctx.cost(s, t)).sum();
    Ok(Segmentation {
        changepoints,
        total_cost: best[n],
        unpenalized_cost,
        n,
    })
}

fn trace(prev: &[usize], t: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = t;
    while prev[t] > 0 {
        t = prev[t];
        out.push(t);
    }
    out.reverse();
    out
}

/// Orders two candidate last-changepoints `a` and `b` for the same end point.
fn prefer(va: f64, a: usize, vb: f64, b: usize, count: &[u32], prev: &[usize]) -> Ordering {
    if !near(va, vb) {
        return va.total_cmp(&vb);
    }
    let ca = if a > 0 { count[a] + 1 } else { 0 };
    let cb = if b > 0 { count[b] + 1 } else { 0 };
    ca.cmp(&cb).then_with(|| {
        let mut pa = trace(prev, a);
        let mut pb = trace(prev, b);
        if a > 0 {
            pa.push(a);
        }
        if b > 0 {
            pb.push(b);
        }
        pa.cmp(&pb)
    })
}

/// Objective of an arbitrary segmentation, recomputed from scratch.
///
/// Returns `(total, unpenalized)`.
pub fn objective(ctx: &CostContext, changepoints: &[usize], pen: PenaltyValue) -> (f64, f64) {
    let mut total = 0.0;
    let mut raw = 0.0;
    for (s, t) in bounds(changepoints, ctx.n()) {
        let c = ctx.cost(s, t);
        raw += c;
        total = extend(total, c, s, t, pen);
    }
    (total, raw)
}

/// Exhaustive search; refuses series longer than 40 points.
pub fn brute_force_segment(
    series: &[f64],
    model: CostModel,
    penalty: Penalty,
    minseglen: usize,
) -> Result<Segmentation> {
    let ctx = precompute(series, model)?;
    let pen = penalty.resolve(series.len(), &model)?;
    let mut out = brute_force_many(&ctx, &[pen], minseglen)?;
    Ok(out.pop().expect("one penalty in, one result out"))
}

/// Exhaustive search for several penalties in one enumeration.
pub fn brute_force_many(ctx: &CostContext, pens: &[PenaltyValue], minseglen: usize) -> Result<Vec<Segmentation>> {
    let n = ctx.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::input(format!(
            "brute-force search is limited to {BRUTE_FORCE_MAX_N} points, got {n}"
        )));
    }
    check_inputs(n, &ctx.model(), minseglen)?;

    let mut table = vec![f64::NAN; (n + 1) * (n + 1)];
    for s in 0..n {
        for t in s + minseglen..=n {
            table[s * (n + 1) + t] = ctx.cost(s, t);
        }
    }

    struct Walk<'a> {
        n: usize,
        minseglen: usize,
        table: &'a [f64],
        pens: &'a [PenaltyValue],
        path: Vec<usize>,
        best: Vec<Option<(f64, Vec<usize>)>>,
    }

    impl Walk<'_> {
        fn go(&mut self, pos: usize, acc: &[f64]) {
            let n = self.n;
            for end in pos + self.minseglen..=n {
                if end < n && n - end < self.minseglen {
                    continue;
                }
                let cost = self.table[pos * (n + 1) + end];
                let next: Vec<f64> = acc
                    .iter()
                    .zip(self.pens)
                    .map(|(&a, &pen)| extend(a, cost, pos, end, pen))
                    .collect();
                if end == n {
                    for (slot, &value) in self.best.iter_mut().zip(&next) {
                        let replace = match slot {
                            None => true,
                            Some((bv, bp)) => {
                                if near(value, *bv) {
                                    (self.path.len(), &self.path).cmp(&(bp.len(), bp)) == Ordering::Less
                                } else {
                                    value < *bv
                                }
                            }
                        };
                        if replace {
                            *slot = Some((value, self.path.clone()));
                        }
                    }
                } else {
                    self.path.push(end);
                    self.go(end, &next);
                    self.path.pop();
                }
            }
        }
    }

    let mut walk = Walk {
        n,
        minseglen,
        table: &table,
        pens,
        path: Vec::new(),
        best: vec![None; pens.len()],
    };
    walk.go(0, &vec![0.0; pens.len()]);

    walk.best
        .into_iter()
        .map(|slot| {
            let (total_cost, changepoints) = slot.ok_or_else(|| Error::invariant("no admissible segmentation"))?;
            let unpenalized_cost = bounds(&changepoints, n).iter().map(|&(s, t)| ctx.cost(s, t)).sum();
            Ok(Segmentation {
                changepoints,
                total_cost,
                unpenalized_cost,
                n,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const EIGHT: [f64; 8] = [0.0, 0.0, 1.0, 1.0, 10.0, 10.0, 11.0, 11.0];

    #[test]
    fn eight_point_example() {
        // Constant pairs hit the variance floor and are far cheaper than any
        // longer segment, so with minseglen 2 the optimum isolates them.
        let seg = pelt(&EIGHT, CostModel::normal(), Penalty::Manual(4.0), 2).unwrap();
        let brute = brute_force_segment(&EIGHT, CostModel::normal(), Penalty::Manual(4.0), 2).unwrap();
        assert_eq!(brute.changepoints, vec![2, 4, 6]);
        assert_eq!(seg.changepoints, brute.changepoints);
        assert_abs_diff_eq!(seg.total_cost, brute.total_cost, epsilon = 1e-9);

        let seg = pelt(&EIGHT, CostModel::normal(), Penalty::Manual(4.0), 4).unwrap();
        let brute = brute_force_segment(&EIGHT, CostModel::normal(), Penalty::Manual(4.0), 4).unwrap();
        assert_eq!(seg.changepoints, vec![4]);
        assert_eq!(brute.changepoints, vec![4]);
    }

    #[test]
    fn huge_penalty_gives_no_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let series: Vec<f64> = (0..300).map(|i| rng.sample::<f64, _>(StandardNormal) + if i > 150 { 5.0 } else { 0.0 }).collect();
        let seg = pelt(&series, CostModel::normal(), Penalty::Manual(1e12), 2).unwrap();
        assert!(seg.is_empty());
    }

    #[test]
    fn mbic_values() {
        assert_abs_diff_eq!(mbic_penalty(100, 2).beta, 18.420680743952367, epsilon = 1e-12);
        assert!(mbic_penalty(100, 2).segment_log);
        assert_abs_diff_eq!(mbic_penalty(100, 0).beta, 2.0 * 100f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(mbic_penalty(1, 2).beta, 0.0);
    }

    #[test]
    fn brute_force_length_four() {
        let series = [0.0, 1.0, 5.0, 7.0];
        let ctx = precompute(&series, CostModel::normal()).unwrap();
        let seg = brute_force_segment(&series, CostModel::normal(), Penalty::Manual(1.0), 2).unwrap();
        let none = objective(&ctx, &[], PenaltyValue::manual(1.0)).0;
        let split = objective(&ctx, &[2], PenaltyValue::manual(1.0)).0;
        let expected = if split < none { vec![2] } else { vec![] };
        assert_eq!(seg.changepoints, expected);
    }

    #[test]
    fn zero_penalty_splits_maximally() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let series: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        let seg = brute_force_segment(&series, CostModel::normal(), Penalty::Manual(0.0), 2).unwrap();
        // Any segment of length >= 4 can be split without increasing the cost.
        assert!(seg.segments().iter().all(|&(s, t)| (2..4).contains(&(t - s))));
        let fast = pelt(&series, CostModel::normal(), Penalty::Manual(0.0), 2).unwrap();
        assert_eq!(fast.changepoints, seg.changepoints);
    }

    #[test]
    fn brute_force_refuses_long_series() {
        let series = vec![0.0; 41];
        assert!(brute_force_segment(&series, CostModel::normal(), Penalty::Manual(1.0), 2).is_err());
    }

    #[test]
    fn input_errors() {
        assert!(matches!(pelt(&[1.0, 2.0, 3.0], CostModel::normal(), Penalty::Mbic, 2), Err(Error::Input(_))));
        assert!(matches!(pelt(&[1.0, 2.0, 3.0, 4.0], CostModel::normal(), Penalty::Mbic, 1), Err(Error::Config(_))));
        assert!(pelt(&[1.0, f64::NAN, 3.0, 4.0], CostModel::normal(), Penalty::Mbic, 2).is_err());
        assert!(pelt(&[1.0, 2.0, 3.0, 4.0], CostModel::normal(), Penalty::Manual(-1.0), 2).is_err());
    }

    #[test]
    fn penalty_parsing() {
        assert_eq!("mbic".parse::<Penalty>().unwrap(), Penalty::Mbic);
        assert_eq!("manual:12.5".parse::<Penalty>().unwrap(), Penalty::Manual(12.5));
        assert!("manual:-1".parse::<Penalty>().is_err());
        assert!("bic".parse::<Penalty>().is_err());
    }

    fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut level = 0.0;
        let mut scale = 1.0;
        (0..n)
            .map(|_| {
                if rng.random_bool(0.1) {
                    level += rng.random_range(-3.0..3.0);
                    scale = rng.random_range(0.3..3.0);
                }
                level + scale * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..150 {
            let n = rng.random_range(4..=18);
            let series = random_series(&mut rng, n);
            let model = if case % 2 == 0 { CostModel::normal() } else { CostModel::empirical() };
            let minseglen = 2;
            let ctx = precompute(&series, model).unwrap();
            let pens: Vec<PenaltyValue> = [0.0, 1.0, 3.0, 10.0].into_iter().map(PenaltyValue::manual).chain([mbic_penalty(n, model.params_per_segment())]).collect();
            let brute = brute_force_many(&ctx, &pens, minseglen).unwrap();
            for (pen, b) in pens.iter().zip(brute) {
                let f = pelt_with_context(&ctx, *pen, SearchOptions { minseglen, pruning: true }).unwrap();
                assert_eq!(f.changepoints, b.changepoints, "case {case} pen {pen:?}");
                assert!((f.total_cost - b.total_cost).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn pruning_does_not_change_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..60 {
            let n = rng.random_range(10..300);
            let series = random_series(&mut rng, n);
            let model = if case % 3 == 0 { CostModel::empirical() } else { CostModel::normal() };
            let minseglen = rng.random_range(2..5).min(n / 2);
            let ctx = precompute(&series, model).unwrap();
            for pen in [PenaltyValue::manual(rng.random_range(0.0..20.0)), mbic_penalty(n, model.params_per_segment())] {
                let a = pelt_with_context(&ctx, pen, SearchOptions { minseglen, pruning: true }).unwrap();
                let b = pelt_with_context(&ctx, pen, SearchOptions { minseglen, pruning: false }).unwrap();
                assert_eq!(a.changepoints, b.changepoints, "case {case}");
                assert_eq!(a.total_cost, b.total_cost);
            }
        }
    }

    #[test]
    fn objective_consistency_and_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(20..200);
            let series = random_series(&mut rng, n);
            let minseglen = rng.random_range(2..6).min(n / 2);
            let ctx = precompute(&series, CostModel::normal()).unwrap();
            let pen = PenaltyValue::manual(rng.random_range(1.0..15.0));
            let seg = pelt_with_context(&ctx, pen, SearchOptions { minseglen, pruning: true }).unwrap();
            let (total, raw) = objective(&ctx, &seg.changepoints, pen);
            assert!((total - seg.total_cost).abs() <= 1e-9 * total.abs().max(1.0));
            assert!((raw - seg.unpenalized_cost).abs() <= 1e-9 * raw.abs().max(1.0));
            assert!((seg.total_cost - (seg.unpenalized_cost + seg.len() as f64 * pen.beta)).abs() <= 1e-8 * total.abs().max(1.0));
            for (s, t) in seg.segments() {
                assert!(t - s >= minseglen);
            }
        }
    }

    #[test]
    fn changepoint_count_monotone_in_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let series = random_series(&mut rng, 150);
            for model in [CostModel::normal(), CostModel::empirical()] {
                let ctx = precompute(&series, model).unwrap();
                let mut last = usize::MAX;
                for i in 0..30 {
                    let beta = f64::from(i) * 1.5;
                    let seg = pelt_with_context(&ctx, PenaltyValue::manual(beta), SearchOptions::default()).unwrap();
                    assert!(seg.len() <= last);
                    last = seg.len();
                }
            }
        }
    }

    #[test]
    fn null_series_rarely_split_under_mbic() {
        let mut quiet = 0;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let series: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
            if pelt(&series, CostModel::normal(), Penalty::Mbic, 2).unwrap().is_empty() {
                quiet += 1;
            }
        }
        assert!(quiet >= 190, "only {quiet}/200 null series had no changepoints");
    }
}
