use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::Tensor;

/// Sample sizes at or below this use the exact null distribution.
pub const WILCOXON_EXACT_MAX: usize = 25;
/// Minimum number of nonzero paired differences.
pub const WILCOXON_MIN: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiStats {
    /// Non-excess kurtosis `m4 / m2²`.
    pub kurtosis: f64,
    /// `m3 / m2^{3/2}`.
    pub skewness: f64,
    pub pixels: usize,
}

/// Central moments of the ROI after min-max normalization within it.
pub fn roi_histogram_stats(image: &Tensor, roi: &Tensor) -> Result<RoiStats> {
    if image.len() != roi.len() {
        return Err(shape_err!(
            "image {:?} vs ROI {:?}",
            image.shape(),
            roi.shape()
        ));
    }
    let vals: Vec<f64> = image
        .data()
        .iter()
        .zip(roi.data())
        .filter(|(_, &m)| m != 0.0)
        .map(|(&v, _)| v)
        .collect();
    moments(&vals)
}

pub fn moments(vals: &[f64]) -> Result<RoiStats> {
    if vals.is_empty() {
        return Err(Error::Domain("ROI is empty".into()));
    }
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    if !(hi > lo) {
        return Err(Error::Domain("ROI intensities have zero variance".into()));
    }
    let norm: Vec<f64> = vals.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let n = norm.len() as f64;
    let mean = norm.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in &norm {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    Ok(RoiStats {
        kurtosis: m4 / (m2 * m2),
        skewness: m3 / m2.powf(1.5),
        pixels: vals.len(),
    })
}

/// Nonzero paired differences and their average ranks (doubled, so ties stay integral).
fn signed_ranks(a: &[f64], b: &[f64]) -> Result<Vec<(u64, bool)>> {
    if a.len() != b.len() {
        return Err(shape_err!(
            "paired samples have lengths {} and {}",
            a.len(),
            b.len()
        ));
    }
    let mut d: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x != y)
        .map(|(x, y)| x - y)
        .collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("paired differences must be finite".into()));
    }
    d.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mut out = Vec::with_capacity(d.len());
    let mut i = 0;
    while i < d.len() {
        let mut j = i;
        while j + 1 < d.len() && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled
        let doubled = (i + 1 + j + 1) as u64;
        for v in &d[i..=j] {
            out.push((doubled, *v > 0.0));
        }
        i = j + 1;
    }
    Ok(out)
}

/// Two-sided Wilcoxon signed-rank p-value for paired samples.
///
/// Zero differences are dropped; if none remain the p-value is 1.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    let ranks = signed_ranks(a, b)?;
    if ranks.is_empty() {
        return Ok(1.0);
    }
    if ranks.len() < WILCOXON_MIN {
        return Err(Error::Domain(format!(
            "Wilcoxon test needs at least {WILCOXON_MIN} nonzero differences, got {}",
            ranks.len()
        )));
    }
    if ranks.len() <= WILCOXON_EXACT_MAX {
        Ok(exact_p(&ranks))
    } else {
        Ok(normal_p(&ranks))
    }
}

/// Exact branch regardless of sample size.
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<f64> {
    let ranks = signed_ranks(a, b)?;
    Ok(if ranks.is_empty() {
        1.0
    } else {
        exact_p(&ranks)
    })
}

/// Normal-approximation branch regardless of sample size.
pub fn wilcoxon_normal(a: &[f64], b: &[f64]) -> Result<f64> {
    let ranks = signed_ranks(a, b)?;
    Ok(if ranks.is_empty() {
        1.0
    } else {
        normal_p(&ranks)
    })
}

/// Null distribution of the doubled positive-rank sum by subset-sum counting.
fn exact_p(ranks: &[(u64, bool)]) -> f64 {
    let total: u64 = ranks.iter().map(|r| r.0).sum();
    let observed: u64 = ranks.iter().filter(|r| r.1).map(|r| r.0).sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &(r, _) in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(ranks.len() as i32);
    let lower: f64 = counts[..=observed as usize].iter().sum::<f64>() / all;
    let upper: f64 = counts[observed as usize..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(ranks: &[(u64, bool)]) -> f64 {
    let n = ranks.len() as f64;
    let w: f64 = ranks.iter().filter(|r| r.1).map(|r| r.0 as f64 / 2.0).sum();
    let mean = n * (n + 1.0) / 4.0;
    let mut tie = 0.0;
    let mut i = 0;
    while i < ranks.len() {
        let mut j = i;
        while j + 1 < ranks.len() && ranks[j + 1].0 == ranks[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}
