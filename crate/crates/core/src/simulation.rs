//! Synthetic scenarios: changepoint placement, change plans and Gaussian data.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SeriesMatrix;

pub const DEFAULT_MIN_GAP: usize = 30;
const MAX_REJECTIONS: usize = 100_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    #[default]
    Mean,
    Variance,
    MeanAndVariance,
}

impl ChangeKind {
    fn has_mean(self) -> bool {
        matches!(self, Self::Mean | Self::MeanAndVariance)
    }

    fn has_variance(self) -> bool {
        matches!(self, Self::Variance | Self::MeanAndVariance)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Independent,
    BlockDiagonal,
    Random,
}

/// Everything needed to generate one family of synthetic data sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: usize,
    /// Total mean change is `sqrt(p)·theta`.
    pub theta: f64,
    /// Product of the standard-deviation ratios is `phi^sqrt(p)`.
    pub phi: f64,
    /// Probability that a series takes part in a given change.
    pub kappa: f64,
    pub change_kind: ChangeKind,
    pub covariance: CovarianceKind,
    /// Number of changepoints; `ceil(n/200)` when absent.
    pub m: Option<usize>,
    pub min_gap: usize,
    pub seed: u64,
    /// Fixed changepoint locations instead of random placement.
    pub changepoints: Option<Vec<usize>>,
    /// Per-series mean shift overriding the one derived from `theta`.
    pub mean_shift: Option<f64>,
    /// Per-series standard-deviation ratio overriding the one derived from `phi`.
    pub sd_ratio: Option<f64>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n: 200,
            p: 100,
            theta: 1.2,
            phi: 1.0,
            kappa: 1.0,
            change_kind: ChangeKind::Mean,
            covariance: CovarianceKind::Independent,
            m: None,
            min_gap: DEFAULT_MIN_GAP,
            seed: 0,
            changepoints: None,
            mean_shift: None,
            sd_ratio: None,
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::config(format!("scenario file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 {
            return Err(Error::config(format!("need n >= 2 and p >= 1, got n = {}, p = {}", self.n, self.p)));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::config(format!("phi must be positive, got {}", self.phi)));
        }
        if !self.theta.is_finite() {
            return Err(Error::config("theta must be finite"));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::config(format!("kappa must lie in (0, 1], got {}", self.kappa)));
        }
        if let Some(r) = self.sd_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config(format!("sd_ratio must be positive, got {r}")));
            }
        }
        if self.mean_shift.is_some_and(|s| !s.is_finite()) {
            return Err(Error::config("mean_shift must be finite"));
        }
        if self.covariance == CovarianceKind::BlockDiagonal && self.p % 2 == 1 {
            return Err(Error::config(format!("block-diagonal covariance needs an even p, got {}", self.p)));
        }
        if self.covariance == CovarianceKind::Random && self.p < 2 {
            return Err(Error::config("random covariance needs p >= 2"));
        }
        if let Some(c) = &self.changepoints {
            if c.windows(2).any(|w| w[0] >= w[1]) || c.iter().any(|&t| t == 0 || t >= self.n) {
                return Err(Error::config("changepoints must be strictly increasing and inside (0, n)"));
            }
        }
        Ok(())
    }

    pub fn changepoint_count(&self) -> usize {
        match (&self.changepoints, self.m) {
            (Some(c), _) => c.len(),
            (None, Some(m)) => m,
            (None, None) => default_changepoint_count(self.n),
        }
    }

    /// Per-series mean shift of a changing series.
    pub fn per_series_shift(&self) -> f64 {
        let p = self.p as f64;
        self.mean_shift.unwrap_or_else(|| p.sqrt() * self.theta / (self.kappa * p))
    }

    /// Per-series standard-deviation ratio of a changing series.
    pub fn per_series_sd_ratio(&self) -> f64 {
        let p = self.p as f64;
        self.sd_ratio.unwrap_or_else(|| self.phi.powf(p.sqrt() / (self.kappa * p)))
    }
}

/// True changepoints with the mean and standard deviation of every segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePlan {
    pub true_cpts: Vec<usize>,
    /// One vector per segment.
    pub means: Vec<Vec<f64>>,
    pub sds: Vec<Vec<f64>>,
    /// Which series change at each changepoint.
    pub masks: Vec<Vec<bool>>,
}

impl ChangePlan {
    pub fn stationary(p: usize) -> Self {
        Self {
            true_cpts: Vec::new(),
            means: vec![vec![0.0; p]],
            sds: vec![vec![1.0; p]],
            masks: Vec::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.means[0].len()
    }

    fn segment_of(&self, t: usize) -> usize {
        self.true_cpts.partition_point(|&c| c <= t)
    }
}

pub fn default_changepoint_count(n: usize) -> usize {
    n.div_ceil(200)
}

/// Generator for replication `rep` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draws `m` sorted changepoints uniformly among the sets whose gaps, including
/// the gaps to `0` and `n`, are all at least `min_gap`.
pub fn place_changepoints<R: Rng + ?Sized>(n: usize, m: usize, min_gap: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let min_gap = min_gap.max(1);
    let need = (m + 1).checked_mul(min_gap).unwrap_or(usize::MAX);
    if need > n {
        return Err(Error::input(format!(
            "cannot place {m} changepoints {min_gap} apart in {n} time points"
        )));
    }
    let (lo, hi) = (min_gap, n - min_gap);
    if hi - lo + 1 >= m {
        for _ in 0..MAX_REJECTIONS {
            let mut cand: Vec<usize> = index::sample(rng, hi - lo + 1, m).into_iter().map(|i| i + lo).collect();
            cand.sort_unstable();
            if cand.windows(2).all(|w| w[1] - w[0] >= min_gap) {
                return Ok(cand);
            }
        }
        log::debug!("changepoint placement fell back to direct sampling");
    }
    // Exact uniform draw: gaps beyond the minimum form a multiset of size m
    // in [0, slack], which maps to m distinct values in [0, slack + m - 1].
    let slack = n - need;
    let mut picks: Vec<usize> = index::sample(rng, slack + m, m).into_iter().collect();
    picks.sort_unstable();
    Ok(picks
        .iter()
        .enumerate()
        .map(|(k, &x)| x - k + (k + 1) * min_gap)
        .collect())
}

/// Builds segment parameters for `cpts` under `spec`. Successive changes
/// alternate in direction.
pub fn plan_changes<R: Rng + ?Sized>(spec: &ScenarioSpec, cpts: &[usize], rng: &mut R) -> Result<ChangePlan> {
    spec.validate()?;
    let p = spec.p;
    if spec.kappa * (p as f64) < 1.0 {
        log::warn!("kappa·p = {} is below one; many changes will touch no series", spec.kappa * p as f64);
    }
    let shift = spec.per_series_shift();
    let ratio = spec.per_series_sd_ratio();
    let mut plan = ChangePlan::stationary(p);
    plan.true_cpts = cpts.to_vec();
    for k in 0..cpts.len() {
        let up = k % 2 == 0;
        let mask: Vec<bool> = (0..p)
            .map(|_| spec.kappa >= 1.0 || rng.random_bool(spec.kappa))
            .collect();
        let mut mu = plan.means[k].clone();
        let mut sd = plan.sds[k].clone();
        for j in (0..p).filter(|&j| mask[j]) {
            if spec.change_kind.has_mean() {
                mu[j] += if up { shift } else { -shift };
            }
            if spec.change_kind.has_variance() {
                sd[j] *= if up { ratio } else { ratio.recip() };
            }
        }
        plan.means.push(mu);
        plan.sds.push(sd);
        plan.masks.push(mask);
    }
    Ok(plan)
}

/// Three changes at n/4, n/2 and 3n/4: a mean shift, a variance change, then
/// both reversed together. `var_ratio` multiplies the variance.
pub fn channel_separation_plan(n: usize, p: usize, shift: f64, var_ratio: f64) -> ChangePlan {
    let sd = var_ratio.sqrt();
    ChangePlan {
        true_cpts: vec![n / 4, n / 2, 3 * n / 4],
        means: vec![vec![0.0; p], vec![shift; p], vec![shift; p], vec![0.0; p]],
        sds: vec![vec![1.0; p], vec![1.0; p], vec![sd; p], vec![1.0; p]],
        masks: vec![vec![true; p]; 3],
    }
}

/// Covariance matrix of the requested structure.
pub fn covariance_matrix<R: Rng + ?Sized>(kind: CovarianceKind, p: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    match kind {
        CovarianceKind::Independent => Ok(DMatrix::identity(p, p)),
        CovarianceKind::BlockDiagonal => {
            if p % 2 == 1 {
                return Err(Error::input(format!("block-diagonal covariance needs an even dimension, got {p}")));
            }
            let mut s = DMatrix::identity(p, p);
            for b in (0..p).step_by(2) {
                let magnitude = rng.random_range(0.3..0.6);
                let rho = if rng.random_bool(0.5) { magnitude } else { -magnitude };
                s[(b, b + 1)] = rho;
                s[(b + 1, b)] = rho;
            }
            Ok(s)
        }
        CovarianceKind::Random => {
            if p < 2 {
                return Err(Error::input("random covariance needs dimension >= 2"));
            }
            let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = g.qr().q();
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(p, |i, _| {
                30.0 - 29.0 * i as f64 / (p - 1) as f64
            }));
            let s = &q * d * q.transpose();
            // symmetrize away rounding
            Ok((&s + s.transpose()) * 0.5)
        }
    }
}

/// Lower-triangular factor of `sigma`; fails if it is not positive definite.
pub fn cholesky_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sigma
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::degenerate("covariance matrix is not positive definite"))
}

pub fn eigenvalues(sigma: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(sigma.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Draws `n` rows following `plan`. Row `t` is `mu + sd ⊙ (L z)` for the
/// segment containing `t`, with `L = I` when `factor` is `None`.
pub fn generate_from_plan<R: Rng + ?Sized>(
    plan: &ChangePlan,
    n: usize,
    factor: Option<&DMatrix<f64>>,
    rng: &mut R,
) -> Result<SeriesMatrix> {
    let p = plan.p();
    if plan.true_cpts.last().is_some_and(|&c| c >= n) {
        return Err(Error::input(format!("changepoint beyond series length {n}")));
    }
    let mut values = Vec::with_capacity(n * p);
    let mut z = vec![0.0; p];
    for t in 0..n {
        let k = plan.segment_of(t);
        let (mu, sd) = (&plan.means[k], &plan.sds[k]);
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        match factor {
            None => values.extend((0..p).map(|j| mu[j] + sd[j] * z[j])),
            Some(l) => values.extend((0..p).map(|j| {
                let w: f64 = (0..=j).map(|i| l[(j, i)] * z[i]).sum();
                mu[j] + sd[j] * w
            })),
        }
    }
    SeriesMatrix::from_row_major(n, p, values)
}

/// Generates one data set. Draw order: covariance, placement, plan, data.
pub fn generate<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<(SeriesMatrix, ChangePlan)> {
    spec.validate()?;
    let factor = match spec.covariance {
        CovarianceKind::Independent => None,
        kind => Some(cholesky_factor(&covariance_matrix(kind, spec.p, rng)?)?),
    };
    let cpts = match &spec.changepoints {
        Some(c) => c.clone(),
        None => place_changepoints(spec.n, spec.changepoint_count(), spec.min_gap, rng)?,
    };
    let plan = plan_changes(spec, &cpts, rng)?;
    let m = generate_from_plan(&plan, spec.n, factor.as_ref(), rng)?;
    Ok((m, plan))
}

/// Writes the plan as JSON ground truth.
pub fn write_truth_json<W: std::io::Write>(plan: &ChangePlan, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, plan)?;
    Ok(())
}

pub fn read_truth_json<R: std::io::Read>(input: R) -> Result<ChangePlan> {
    Ok(serde_json::from_reader(input)?)
}
