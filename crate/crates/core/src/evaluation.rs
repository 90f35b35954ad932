//! Scoring detections against ground truth.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub tdr: f64,
    pub fdr: f64,
    pub true_count: usize,
    pub est_count: usize,
    pub correct_count: usize,
    pub false_count: usize,
    pub tolerance: usize,
}

/// Pairs `(truth index, estimate index)`, in truth order.
///
/// True changepoints are visited in increasing order; each takes the closest
/// unmatched estimate within `tol`, the smaller estimate on ties.
pub fn match_changepoints(truth: &[usize], est: &[usize], tol: usize) -> Vec<(usize, usize)> {
    let mut used = vec![false; est.len()];
    let mut pairs = Vec::new();
    for (i, &t) in truth.iter().enumerate() {
        let lo = est.partition_point(|&e| e + tol < t);
        let hi = est.partition_point(|&e| e <= t.saturating_add(tol));
        let best = (lo..hi)
            .filter(|&k| !used[k])
            .min_by_key(|&k| (est[k].abs_diff(t), est[k]));
        if let Some(k) = best {
            used[k] = true;
            pairs.push((i, k));
        }
    }
    pairs
}

pub fn tdr_fdr(truth: &[usize], est: &[usize], tol: usize) -> EvalReport {
    let correct = match_changepoints(truth, est, tol).len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    EvalReport {
        tdr: ratio(correct, truth.len()),
        fdr: ratio(est.len() - correct, est.len()),
        true_count: truth.len(),
        est_count: est.len(),
        correct_count: correct,
        false_count: est.len() - correct,
        tolerance: tol,
    }
}

/// Average number of detections per replication on null data.
pub fn fpr(detected_counts: &[usize]) -> Result<f64> {
    if detected_counts.is_empty() {
        return Err(Error::input("false positive rate of an empty batch"));
    }
    Ok(detected_counts.iter().sum::<usize>() as f64 / detected_counts.len() as f64)
}

/// Mean and two-standard-error half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::input("no replications to summarize"));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let half_width = if xs.len() < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            2.0 * (var / n).sqrt()
        };
        Ok(Self { mean, half_width })
    }
}

/// Replication summary for one scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchRow {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub theta: f64,
    pub phi: f64,
    pub kappa: f64,
    pub reps: usize,
    pub tdr: f64,
    pub tdr_ci: f64,
    pub fdr: f64,
    pub fdr_ci: f64,
}

/// Per-replication TDR and FDR averaged over the batch.
pub fn summarize(reports: &[EvalReport]) -> Result<(Estimate, Estimate)> {
    let tdr: Vec<f64> = reports.iter().map(|r| r.tdr).collect();
    let fdr: Vec<f64> = reports.iter().map(|r| r.fdr).collect();
    Ok((Estimate::from_samples(&tdr)?, Estimate::from_samples(&fdr)?))
}

pub fn write_batch_csv<W: std::io::Write>(rows: &[BatchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per replication: `rep,tdr,fdr,true_count,est_count,correct_count,false_count,tolerance`.
pub fn write_reports_csv<W: std::io::Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rep", "tdr", "fdr", "true_count", "est_count", "correct_count", "false_count", "tolerance"])?;
    for (i, r) in reports.iter().enumerate() {
        w.write_record([
            i.to_string(),
            r.tdr.to_string(),
            r.fdr.to_string(),
            r.true_count.to_string(),
            r.est_count.to_string(),
            r.correct_count.to_string(),
            r.false_count.to_string(),
            r.tolerance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn matching_examples() {
        assert_eq!(match_changepoints(&[100], &[105], 10), vec![(0, 0)]);
        assert_eq!(match_changepoints(&[100], &[95, 105], 10), vec![(0, 0)]);
        assert!(match_changepoints(&[100, 200], &[150], 10).is_empty());
        // equidistant between two truths: the smaller truth takes it
        assert_eq!(match_changepoints(&[100, 110], &[105], 10), vec![(0, 0)]);
    }

    #[test]
    fn rate_examples() {
        let r = tdr_fdr(&[100], &[105], 10);
        assert_eq!((r.tdr, r.fdr), (1.0, 0.0));
        let r = tdr_fdr(&[100], &[95, 105], 10);
        assert_eq!((r.tdr, r.fdr), (1.0, 0.5));
        let r = tdr_fdr(&[], &[50], 10);
        assert_eq!((r.tdr, r.fdr), (0.0, 1.0));
        let r = tdr_fdr(&[], &[], 10);
        assert_eq!((r.tdr, r.fdr), (0.0, 0.0));
    }

    #[test]
    fn fpr_examples() {
        let mut counts = vec![0usize; 500];
        counts[..30].iter_mut().for_each(|c| *c = 1);
        assert_abs_diff_eq!(fpr(&counts).unwrap(), 0.06, epsilon = 1e-15);
        assert_eq!(fpr(&[0; 10]).unwrap(), 0.0);
        let mut counts = vec![0usize; 28];
        counts.extend([1, 2]);
        assert_abs_diff_eq!(fpr(&counts).unwrap(), 0.1, epsilon = 1e-15);
        assert!(matches!(fpr(&[]), Err(Error::Input(_))));
    }

    #[test]
    fn summaries_and_csv() {
        let e = Estimate::from_samples(&[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(e.mean, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.half_width, 2.0 * (1.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert!(Estimate::from_samples(&[]).is_err());

        let row = BatchRow {
            scenario: "dense_mean".into(),
            n: 200,
            p: 100,
            theta: 1.2,
            phi: 1.0,
            kappa: 1.0,
            reps: 4,
            tdr: 0.5,
            tdr_ci: 0.1,
            fdr: 0.25,
            fdr_ci: 0.05,
        };
        let mut buf = Vec::new();
        write_reports_csv(&[tdr_fdr(&[100], &[95, 105], 10)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rep,tdr,fdr,true_count,est_count,correct_count,false_count,tolerance\n0,1,0.5,1,2,1,1,10\n"
        );

        let mut buf = Vec::new();
        write_batch_csv(&[row], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scenario,n,p,theta,phi,kappa,reps,tdr,tdr_ci,fdr,fdr_ci\ndense_mean,200,100,1.2,1.0,1.0,4,0.5,0.1,0.25,0.05\n"
        );
    }

    fn sorted_set() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::btree_set(0usize..300, 0..10).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn perfect_detection(t in sorted_set(), tol in 0usize..20) {
            let r = tdr_fdr(&t, &t, tol);
            prop_assert_eq!(r.fdr, 0.0);
            prop_assert_eq!(r.tdr, if t.is_empty() { 0.0 } else { 1.0 });
        }

        #[test]
        fn counts_are_consistent(t in sorted_set(), e in sorted_set(), tol in 0usize..30) {
            let r = tdr_fdr(&t, &e, tol);
            prop_assert_eq!(r.correct_count + r.false_count, r.est_count);
            prop_assert!(r.correct_count <= r.true_count);
            prop_assert!((0.0..=1.0).contains(&r.tdr) && (0.0..=1.0).contains(&r.fdr));
        }

        #[test]
        fn shift_invariance(t in sorted_set(), e in sorted_set(), tol in 0usize..30, k in 0usize..1000) {
            let shift = |v: &[usize]| v.iter().map(|x| x + k).collect::<Vec<_>>();
            prop_assert_eq!(tdr_fdr(&t, &e, tol), tdr_fdr(&shift(&t), &shift(&e), tol));
        }

        #[test]
        fn tolerance_monotone(t in sorted_set(), e in sorted_set(), tol in 0usize..30, extra in 0usize..30) {
            prop_assert!(tdr_fdr(&t, &e, tol + extra).tdr >= tdr_fdr(&t, &e, tol).tdr);
        }
    }
}
