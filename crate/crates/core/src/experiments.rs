//! Replicated simulation studies built from the other modules.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{fpr, summarize, tdr_fdr, BatchRow, EvalReport};
use crate::geometry::{distance_map, translate};
use crate::pipeline::{geomcp_detect, DetectionConfig};
use crate::simulation::{
    channel_separation_plan, generate, generate_from_plan, replication_rng, ChangePlan, ScenarioSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchOutcome {
    pub reports: Vec<EvalReport>,
    pub row: BatchRow,
}

/// Sizes the global worker pool. Only the first call has an effect.
pub fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::config("thread count must be at least 1"));
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::debug!("worker pool already configured: {e}");
    }
    Ok(())
}

/// Generates `reps` data sets from `spec` and scores the detections.
/// Replication `r` uses the generator stream `r` of `spec.seed`.
pub fn run_batch(
    name: &str,
    spec: &ScenarioSpec,
    cfg: &DetectionConfig,
    reps: usize,
    tol: usize,
) -> Result<BatchOutcome> {
    if reps == 0 {
        return Err(Error::input("a batch needs at least one replication"));
    }
    spec.validate()?;
    cfg.validate()?;
    let reports = (0..reps)
        .into_par_iter()
        .map(|r| {
            let (m, plan) = generate(spec, &mut replication_rng(spec.seed, r as u64))?;
            let found = geomcp_detect(&m, cfg)?;
            Ok(tdr_fdr(&plan.true_cpts, &found.reconciled, tol))
        })
        .collect::<Result<Vec<_>>>()?;
    let (tdr, fdr) = summarize(&reports)?;
    let row = BatchRow {
        scenario: name.to_string(),
        n: spec.n,
        p: spec.p,
        theta: spec.theta,
        phi: spec.phi,
        kappa: spec.kappa,
        reps,
        tdr: tdr.mean,
        tdr_ci: tdr.half_width,
        fdr: fdr.mean,
        fdr_ci: fdr.half_width,
    };
    Ok(BatchOutcome { reports, row })
}

/// Detections per replication on i.i.d. N(0, 1) data.
pub fn null_fpr(n: usize, p: usize, cfg: &DetectionConfig, reps: usize, seed: u64) -> Result<f64> {
    let plan = ChangePlan::stationary(p);
    let counts = (0..reps)
        .into_par_iter()
        .map(|r| {
            let m = generate_from_plan(&plan, n, None, &mut replication_rng(seed, r as u64))?;
            Ok(geomcp_detect(&m, cfg)?.reconciled.len())
        })
        .collect::<Result<Vec<_>>>()?;
    fpr(&counts)
}

/// How often each of the three planted changes was found in each mapped series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelCounts {
    pub reps: usize,
    pub true_cpts: Vec<usize>,
    pub distance_hits: Vec<usize>,
    pub angle_hits: Vec<usize>,
}

impl ChannelCounts {
    pub fn distance_rate(&self, k: usize) -> f64 {
        self.distance_hits[k] as f64 / self.reps as f64
    }

    pub fn angle_rate(&self, k: usize) -> f64 {
        self.angle_hits[k] as f64 / self.reps as f64
    }
}

/// Mean shift, variance change, then both reversed, at n/4, n/2, 3n/4. A change
/// counts as found in a series when one of its changepoints lies within `tol`.
pub fn channel_separation(
    n: usize,
    p: usize,
    cfg: &DetectionConfig,
    reps: usize,
    seed: u64,
    tol: usize,
) -> Result<ChannelCounts> {
    let plan = channel_separation_plan(n, p, 0.1, 1.2);
    let hits = |cpts: &[usize], t: usize| cpts.iter().any(|&c| c.abs_diff(t) <= tol);
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|r| {
            let m = generate_from_plan(&plan, n, None, &mut replication_rng(seed, r as u64))?;
            let found = geomcp_detect(&m, cfg)?;
            Ok(plan
                .true_cpts
                .iter()
                .map(|&t| (hits(&found.distance_cpts, t), hits(&found.angle_cpts, t)))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let k = plan.true_cpts.len();
    let count = |f: fn(&(bool, bool)) -> bool, i: usize| per_rep.iter().filter(|r| f(&r[i])).count();
    Ok(ChannelCounts {
        reps,
        true_cpts: plan.true_cpts.clone(),
        distance_hits: (0..k).map(|i| count(|x| x.0, i)).collect(),
        angle_hits: (0..k).map(|i| count(|x| x.1, i)).collect(),
    })
}

/// Observed and predicted change in the mean distance across one mean shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistanceShift {
    pub p: usize,
    pub per_series_shift: f64,
    /// Mean of `d` after the change minus mean before, averaged over replications.
    pub observed: f64,
    /// `sqrt(p)` times the per-series mean shift.
    pub linear: f64,
    /// `sqrt(p)·(sqrt(mu_post^2 + 1) - sqrt(mu_pre^2 + 1))` at the observed
    /// pre-change level of the translated data.
    pub exact: f64,
    /// Average per-series mean of the translated data before the change.
    pub pre_level: f64,
}

impl DistanceShift {
    pub fn relative_gap(&self) -> f64 {
        (self.observed - self.linear).abs() / self.linear
    }
}

/// Unit-variance data with a single dense mean shift of total size `sqrt(p)·theta`
/// at `n/2`, passed through the translation and the distance map.
pub fn distance_shift(n: usize, p: usize, theta: f64, reps: usize, seed: u64) -> Result<DistanceShift> {
    let spec = ScenarioSpec {
        n,
        p,
        theta,
        changepoints: Some(vec![n / 2]),
        ..Default::default()
    };
    spec.validate()?;
    let shift = spec.per_series_shift();
    let per_rep = (0..reps)
        .into_par_iter()
        .map(|r| {
            let (m, _) = generate(&spec, &mut replication_rng(seed, r as u64))?;
            let t = translate(&m, None)?;
            let d = distance_map(&t).values;
            let half = n / 2;
            let pre = d[..half].iter().sum::<f64>() / half as f64;
            let post = d[half..].iter().sum::<f64>() / (n - half) as f64;
            let mins = m.column_minima();
            let level = -mins.iter().sum::<f64>() / p as f64;
            Ok((post - pre, level))
        })
        .collect::<Result<Vec<_>>>()?;
    let observed = per_rep.iter().map(|x| x.0).sum::<f64>() / reps as f64;
    let pre_level = per_rep.iter().map(|x| x.1).sum::<f64>() / reps as f64;
    let sp = (p as f64).sqrt();
    let post_level = pre_level + shift;
    Ok(DistanceShift {
        p,
        per_series_shift: shift,
        observed,
        linear: sp * shift,
        exact: sp * ((post_level * post_level + 1.0).sqrt() - (pre_level * pre_level + 1.0).sqrt()),
        pre_level,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub seconds: f64,
}

/// Wall time of a full detection on null data for every `(n, p)` in the grid.
pub fn time_grid(grid: &[(usize, usize)], reps: usize, seed: u64, cfg: &DetectionConfig) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for &(n, p) in grid {
        let plan = ChangePlan::stationary(p);
        for rep in 0..reps {
            let m = generate_from_plan(&plan, n, None, &mut replication_rng(seed, rep as u64))?;
            let start = Instant::now();
            let found = geomcp_detect(&m, cfg)?;
            let seconds = start.elapsed().as_secs_f64();
            std::hint::black_box(found);
            rows.push(TimingRow { n, p, rep, seconds });
        }
    }
    Ok(rows)
}

/// Median time per `(n, p)` cell, in grid order.
pub fn median_times(rows: &[TimingRow]) -> Vec<(usize, usize, f64)> {
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for r in rows {
        if !cells.contains(&(r.n, r.p)) {
            cells.push((r.n, r.p));
        }
    }
    cells
        .into_iter()
        .map(|(n, p)| {
            let t: Vec<f64> = rows.iter().filter(|r| (r.n, r.p) == (n, p)).map(|r| r.seconds).collect();
            (n, p, crate::io::median(&t))
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::input("slope needs two or more positive points"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / k;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|l| (l.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::input("slope needs two distinct x values"));
    }
    Ok(sxy / sxx)
}

pub fn write_timing_csv<W: std::io::Write>(rows: &[TimingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
