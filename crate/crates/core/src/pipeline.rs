//! End-to-end detection: translate, map, search both mapped series, merge.

use serde::{Deserialize, Serialize};

use crate::cost::{precompute, CostModel};
use crate::error::{Error, Result};
use crate::geometry::{map_both, translate, MapKind, MappedSeries, SeriesMatrix};
use crate::io::scale_mad;
use crate::pelt::{pelt_with_context, Penalty, SearchOptions, DEFAULT_MINSEGLEN};

pub const DEFAULT_XI: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// A distance and an angle changepoint at most this far apart are one change.
    pub xi: usize,
    pub model: CostModel,
    pub penalty: Penalty,
    pub minseglen: usize,
    /// Divide every series by its MAD before mapping.
    pub scale_first: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            xi: DEFAULT_XI,
            model: CostModel::normal(),
            penalty: Penalty::Mbic,
            minseglen: DEFAULT_MINSEGLEN,
            scale_first: false,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Penalty::Manual(beta) = self.penalty {
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(Error::config(format!("penalty must be nonnegative and finite, got {beta}")));
            }
        }
        let min = self.model.min_segment_len().max(1);
        if self.minseglen < min {
            return Err(Error::config(format!(
                "minimum segment length {} is below the cost model's minimum {min}",
                self.minseglen
            )));
        }
        Ok(())
    }
}

/// Where a reported changepoint came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Distance,
    Angle,
    /// An angle changepoint that absorbed a nearby distance changepoint.
    Both,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Distance => "distance",
            Self::Angle => "angle",
            Self::Both => "both",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    pub distance_cpts: Vec<usize>,
    pub angle_cpts: Vec<usize>,
    pub reconciled: Vec<usize>,
    pub sources: Vec<Source>,
    pub distance: MappedSeries,
    pub angle: MappedSeries,
}

/// Runs the full procedure on `m`.
pub fn geomcp_detect(m: &SeriesMatrix, cfg: &DetectionConfig) -> Result<DetectionResult> {
    cfg.validate()?;
    if m.n() < 2 * cfg.minseglen {
        return Err(Error::input(format!(
            "{} time points are too few for minimum segment length {}",
            m.n(),
            cfg.minseglen
        )));
    }
    let scaled;
    let m = if cfg.scale_first {
        scaled = scale_mad(m).0;
        &scaled
    } else {
        m
    };
    let translated = translate(m, None)?;
    let (distance, angle) = map_both(&translated)?;
    let (d, a) = rayon::join(|| detect_series(&distance, cfg), || detect_series(&angle, cfg));
    let (distance_cpts, angle_cpts) = (d?, a?);
    let merged = reconcile_sources(&distance_cpts, &angle_cpts, cfg.xi);
    Ok(DetectionResult {
        distance_cpts,
        angle_cpts,
        reconciled: merged.iter().map(|x| x.0).collect(),
        sources: merged.iter().map(|x| x.1).collect(),
        distance,
        angle,
    })
}

/// Changepoints of one mapped series under `cfg`.
pub fn detect_series(series: &MappedSeries, cfg: &DetectionConfig) -> Result<Vec<usize>> {
    let ctx = precompute(&series.values, cfg.model)?;
    let pen = cfg.penalty.resolve(series.len(), &cfg.model)?;
    let seg = pelt_with_context(
        &ctx,
        pen,
        SearchOptions {
            minseglen: cfg.minseglen,
            pruning: true,
        },
    )?;
    Ok(seg.changepoints)
}

/// Drops every distance changepoint within `xi` of an angle changepoint and
/// returns the sorted union of what remains with the angle changepoints.
pub fn reconcile(dist: &[usize], ang: &[usize], xi: usize) -> Vec<usize> {
    reconcile_sources(dist, ang, xi).into_iter().map(|x| x.0).collect()
}

pub fn reconcile_sources(dist: &[usize], ang: &[usize], xi: usize) -> Vec<(usize, Source)> {
    let mut absorbed = vec![false; ang.len()];
    let mut out = Vec::with_capacity(dist.len() + ang.len());
    for &d in dist {
        // ang is sorted, so the matches form one contiguous run.
        let lo = ang.partition_point(|&a| a + xi < d);
        let hi = ang.partition_point(|&a| a <= d.saturating_add(xi));
        if lo < hi {
            absorbed[lo..hi].iter_mut().for_each(|x| *x = true);
        } else {
            out.push((d, Source::Distance));
        }
    }
    out.extend(
        ang.iter()
            .zip(&absorbed)
            .map(|(&a, &hit)| (a, if hit { Source::Both } else { Source::Angle })),
    );
    out.sort_by_key(|x| x.0);
    out
}

/// Writes `index,source` rows for every reconciled changepoint.
pub fn write_changepoints_csv<W: std::io::Write>(result: &DetectionResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "source"])?;
    for (c, s) in result.reconciled.iter().zip(&result.sources) {
        w.write_record([c.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Machine-readable summary mirroring the text report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub n: usize,
    pub p: usize,
    pub config: DetectionConfig,
    pub distance_changepoints: Vec<usize>,
    pub angle_changepoints: Vec<usize>,
    pub changepoints: Vec<usize>,
    pub sources: Vec<Source>,
}

impl DetectionResult {
    pub fn summary(&self, p: usize, cfg: &DetectionConfig) -> DetectionSummary {
        DetectionSummary {
            n: self.distance.len(),
            p,
            config: *cfg,
            distance_changepoints: self.distance_cpts.clone(),
            angle_changepoints: self.angle_cpts.clone(),
            changepoints: self.reconciled.clone(),
            sources: self.sources.clone(),
        }
    }

    /// Human-readable report.
    pub fn report(&self, p: usize, cfg: &DetectionConfig) -> String {
        use std::fmt::Write;
        let list = |v: &[usize]| {
            if v.is_empty() {
                "none".to_string()
            } else {
                v.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
            }
        };
        let mut s = String::new();
        let _ = writeln!(s, "series: n = {}, p = {p}", self.distance.len());
        let _ = writeln!(
            s,
            "cost: {}, penalty: {}, minseglen: {}, xi: {}, mad scaling: {}",
            match cfg.model {
                CostModel::NormalMeanVar { .. } => "normal".to_string(),
                CostModel::Empirical { quantiles: None } => "empirical".to_string(),
                CostModel::Empirical { quantiles: Some(k) } => format!("empirical ({k} quantiles)"),
            },
            cfg.penalty,
            cfg.minseglen,
            cfg.xi,
            if cfg.scale_first { "yes" } else { "no" }
        );
        let _ = writeln!(s, "{} changepoints: {}", MapKind::Distance, list(&self.distance_cpts));
        let _ = writeln!(s, "{} changepoints: {}", MapKind::Angle, list(&self.angle_cpts));
        let _ = writeln!(s, "reconciled changepoints ({}): {}", self.reconciled.len(), list(&self.reconciled));
        s
    }
}
