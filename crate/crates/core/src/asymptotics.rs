//! Closed-form moments of the distance statistic and Monte-Carlo normality checks.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::simulation::replication_rng;

/// Large-`p` mean and standard deviation of `X = sqrt(sum Y_i^2)` with
/// `Y_i ~ N(mu_i, sigma_i^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Theorem1Moments {
    pub mean: f64,
    pub sd: f64,
}

/// `rho` is the correlation between the two limiting Normal terms; it is not
/// identified by the data and must be supplied.
pub fn theorem1_moments(mu: &[f64], sigma: &[f64], rho: f64) -> Result<Theorem1Moments> {
    if mu.len() != sigma.len() || mu.is_empty() {
        return Err(Error::input(format!(
            "mean and sd vectors must be non-empty and equal in length ({} vs {})",
            mu.len(),
            sigma.len()
        )));
    }
    if sigma.iter().any(|&s| !(s >= 0.0)) || mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::input("sd entries must be nonnegative and all entries finite"));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::input(format!("rho must lie in [-1, 1], got {rho}")));
    }
    let second: f64 = mu.iter().zip(sigma).map(|(m, s)| m * m + s * s).sum();
    if second == 0.0 {
        return Err(Error::degenerate("all means and standard deviations are zero"));
    }
    let mu_sigma2: f64 = mu.iter().zip(sigma).map(|(m, s)| (m * s).powi(2)).sum();
    let sigma4: f64 = sigma.iter().map(|s| s.powi(4)).sum();
    // the double sum over i, j factorises
    let cross = 2.0 * rho * (2.0 * mu_sigma2 * sigma4).sqrt();
    let var = (2.0 * mu_sigma2 + sigma4 + cross) / (2.0 * second);
    Ok(Theorem1Moments {
        mean: second.sqrt(),
        sd: var.max(0.0).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormalityStats {
    pub n: usize,
    pub sample_mean: f64,
    pub sample_sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Kolmogorov-Smirnov distance of the standardized sample from N(0, 1).
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

/// Moments of `sample` and a KS test of its standardized values against N(0, 1).
pub fn normality_stats(sample: &[f64]) -> Result<NormalityStats> {
    let n = sample.len();
    if n < 3 {
        return Err(Error::input(format!("need at least 3 draws, got {n}")));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in sample {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    if m2 == 0.0 {
        return Err(Error::degenerate("sample has zero variance"));
    }
    let sd = (m2 * nf / (nf - 1.0)).sqrt();
    let mut z: Vec<f64> = sample.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let std_normal = Normal::standard();
    let d = z
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = std_normal.cdf(v);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    Ok(NormalityStats {
        n,
        sample_mean: mean,
        sample_sd: sd,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        ks_statistic: d,
        ks_p_value: kolmogorov_p(d, n),
    })
}

/// Asymptotic Kolmogorov tail probability with Stephens' small-sample correction.
pub fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn draws(reps: usize, seed: u64, f: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync) -> Vec<f64> {
    (0..reps)
        .into_par_iter()
        .map(|r| f(&mut replication_rng(seed, r as u64)))
        .collect()
}

/// Draws of `sqrt(sum Y_i^2)`, `Y_i ~ N(mu_i, sigma_i^2)`.
pub fn sample_distance(mu: &[f64], sigma: &[f64], reps: usize, seed: u64) -> Vec<f64> {
    draws(reps, seed, |rng| {
        mu.iter()
            .zip(sigma)
            .map(|(m, s)| (m + s * rng.sample::<f64, _>(StandardNormal)).powi(2))
            .sum::<f64>()
            .sqrt()
    })
}

pub fn monte_carlo_distance(mu: &[f64], sigma: &[f64], reps: usize, seed: u64) -> Result<NormalityStats> {
    if mu.len() != sigma.len() {
        return Err(Error::input("mean and sd vectors differ in length"));
    }
    normality_stats(&sample_distance(mu, sigma, reps, seed))
}

/// Draws of `(sum Y_i^2 - sum sigma_i^2) / sqrt(2 sum sigma_i^4)`, `Y_i ~ N(0, sigma_i^2)`.
pub fn monte_carlo_lemma2(sigma: &[f64], reps: usize, seed: u64) -> Result<NormalityStats> {
    let s2: f64 = sigma.iter().map(|s| s * s).sum();
    let s4: f64 = sigma.iter().map(|s| s.powi(4)).sum();
    if s4 == 0.0 {
        return Err(Error::degenerate("all standard deviations are zero"));
    }
    let scale = (2.0 * s4).sqrt();
    let sample = draws(reps, seed, |rng| {
        let x: f64 = sigma.iter().map(|s| (s * rng.sample::<f64, _>(StandardNormal)).powi(2)).sum();
        (x - s2) / scale
    });
    normality_stats(&sample)
}

/// Angles between `Y ~ N(mu, diag(sigma^2))` and the all-ones direction. Exploratory only.
pub fn monte_carlo_angle(mu: &[f64], sigma: &[f64], reps: usize, seed: u64) -> Result<NormalityStats> {
    if mu.len() != sigma.len() || mu.is_empty() {
        return Err(Error::input("mean and sd vectors must be non-empty and equal in length"));
    }
    let p = mu.len() as f64;
    let sample = draws(reps, seed, |rng| {
        let y: Vec<f64> = mu
            .iter()
            .zip(sigma)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mean = y.iter().sum::<f64>() / p;
        let spread = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
        spread.atan2(p.sqrt() * mean)
    });
    normality_stats(&sample)
}

/// One line of a validation report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationRow {
    pub check: String,
    pub p: usize,
    pub reps: usize,
    pub theory_mean: Option<f64>,
    pub theory_sd: Option<f64>,
    pub sample_mean: f64,
    pub sample_sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

impl ValidationRow {
    pub fn new(check: impl Into<String>, p: usize, theory: Option<Theorem1Moments>, s: &NormalityStats) -> Self {
        Self {
            check: check.into(),
            p,
            reps: s.n,
            theory_mean: theory.map(|t| t.mean),
            theory_sd: theory.map(|t| t.sd),
            sample_mean: s.sample_mean,
            sample_sd: s.sample_sd,
            skewness: s.skewness,
            excess_kurtosis: s.excess_kurtosis,
            ks_statistic: s.ks_statistic,
            ks_p_value: s.ks_p_value,
        }
    }
}

pub fn write_validation_csv<W: std::io::Write>(rows: &[ValidationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// The standard set of checks: unit-variance distance and standardized sum-of-squares statistics
/// at `p`, a large-mean case, heterogeneous scales, and the p = 1 / p = 2
/// negative controls.
pub fn standard_validation(p: usize, reps: usize, seed: u64) -> Result<Vec<ValidationRow>> {
    let zeros = vec![0.0; p];
    let ones = vec![1.0; p];
    let mut rows = Vec::new();

    let theory = theorem1_moments(&zeros, &ones, 0.0)?;
    let s = monte_carlo_distance(&zeros, &ones, reps, seed)?;
    rows.push(ValidationRow::new("distance_null", p, Some(theory), &s));

    let big = vec![50.0; 100];
    let unit = vec![1.0; 100];
    let s = monte_carlo_distance(&big, &unit, reps, seed)?;
    rows.push(ValidationRow::new("distance_large_mean", 100, Some(theorem1_moments(&big, &unit, 0.0)?), &s));

    let s = monte_carlo_lemma2(&ones, reps, seed)?;
    rows.push(ValidationRow::new("lemma2_equal_scales", p, None, &s));
    let hetero: Vec<f64> = (1..=p).map(|i| 1.0 + i as f64 / p as f64).collect();
    let s = monte_carlo_lemma2(&hetero, reps, seed)?;
    rows.push(ValidationRow::new("lemma2_varying_scales", p, None, &s));

    let s = monte_carlo_distance(&[0.0], &[1.0], reps, seed)?;
    rows.push(ValidationRow::new("distance_p1_control", 1, theorem1_moments(&[0.0], &[1.0], 0.0).ok(), &s));
    let s = monte_carlo_lemma2(&[1.0, 1.0], reps, seed)?;
    rows.push(ValidationRow::new("lemma2_p2_control", 2, None, &s));

    let s = monte_carlo_angle(&vec![3.0; p], &ones, reps, seed)?;
    rows.push(ValidationRow::new("angle_exploratory", p, None, &s));
    Ok(rows)
}
