//! Distribution summaries for simulated statistics: moments, histograms,
//! and Kolmogorov-Smirnov distance to the standard normal reference.
//!
//! Undefined statistics (zero-variance replications) are first-class here:
//! they are excluded from moments, distance, and histogram, and surface as
//! an undefined fraction instead of being silently dropped or poisoning the
//! sums with NaN.

use serde::Serialize;

use crate::dist::normal_cdf;
use crate::error::{Error, Result};

/// Fixed-width histogram with explicit underflow and overflow bins, so mass
/// outside the range stays visible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub underflow: u64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && width.is_finite()) || hi <= lo || width <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "invalid histogram range [{lo}, {hi}) with width {width}"
            )));
        }
        let bins = ((hi - lo) / width).ceil() as usize;
        Ok(Self {
            lo,
            hi,
            width,
            underflow: 0,
            counts: vec![0; bins],
            overflow: 0,
        })
    }

    pub fn record(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x >= self.hi {
            self.overflow += 1;
        } else {
            let idx = ((x - self.lo) / self.width) as usize;
            let idx = idx.min(self.counts.len() - 1);
            self.counts[idx] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.counts.iter().sum::<u64>()
    }

    /// Rows `(left edge, right edge, count)` including the two open-ended
    /// bins, for tabular export.
    pub fn rows(&self) -> Vec<(f64, f64, u64)> {
        let mut rows = Vec::with_capacity(self.counts.len() + 2);
        rows.push((f64::NEG_INFINITY, self.lo, self.underflow));
        for (i, &count) in self.counts.iter().enumerate() {
            let left = self.lo + self.width * i as f64;
            let right = (left + self.width).min(self.hi);
            rows.push((left, right, count));
        }
        rows.push((self.hi, f64::INFINITY, self.overflow));
        rows
    }
}

/// Moments, normal distance, and histogram of a batch of statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    /// Total replications, defined or not.
    pub count: usize,
    pub defined_count: usize,
    pub undefined_fraction: f64,
    pub mean: f64,
    /// Sample variance (defined-count minus one in the denominator).
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub min: f64,
    pub max: f64,
    /// Kolmogorov-Smirnov distance to the standard normal.
    pub ks_normal: f64,
    pub histogram: Histogram,
}

/// Default histogram range used by [`summarize`].
pub const DEFAULT_HISTOGRAM_LO: f64 = -5.0;
pub const DEFAULT_HISTOGRAM_HI: f64 = 5.0;
pub const DEFAULT_HISTOGRAM_WIDTH: f64 = 0.25;

/// Summarize with the default `[-5, 5)` quarter-width histogram.
pub fn summarize(samples: &[Option<f64>]) -> Result<DistributionSummary> {
    summarize_with(
        samples,
        DEFAULT_HISTOGRAM_LO,
        DEFAULT_HISTOGRAM_HI,
        DEFAULT_HISTOGRAM_WIDTH,
    )
}

/// Summarize with a caller-chosen histogram range.
///
/// The defined values are sorted before any accumulation, so the summary is
/// bit-identical under permutation of the input.
pub fn summarize_with(
    samples: &[Option<f64>],
    lo: f64,
    hi: f64,
    width: f64,
) -> Result<DistributionSummary> {
    let mut defined: Vec<f64> = samples.iter().copied().flatten().collect();
    if defined.is_empty() {
        return Err(Error::InvalidConfig(
            "no defined statistics to summarize".into(),
        ));
    }
    defined.sort_unstable_by(f64::total_cmp);
    let count = samples.len();
    let m = defined.len();
    let mf = m as f64;

    let mean = defined.iter().sum::<f64>() / mf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in &defined {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = if m > 1 { m2 / (mf - 1.0) } else { 0.0 };
    m2 /= mf;
    m3 /= mf;
    m4 /= mf;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut histogram = Histogram::new(lo, hi, width)?;
    for &x in &defined {
        histogram.record(x);
    }

    Ok(DistributionSummary {
        count,
        defined_count: m,
        undefined_fraction: (count - m) as f64 / count as f64,
        mean,
        variance,
        skewness,
        excess_kurtosis,
        min: defined[0],
        max: defined[m - 1],
        ks_normal: ks_distance_normal(&defined),
        histogram,
    })
}

/// Kolmogorov-Smirnov distance between the empirical law of `sorted`
/// (ascending) and the standard normal, checking both sides of each jump.
pub fn ks_distance_normal(sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = normal_cdf(x);
        let above = (i + 1) as f64 / m - phi;
        let below = phi - i as f64 / m;
        d = d.max(above).max(below);
    }
    d
}

/// Which of two summaries sits closer to the standard normal reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    FirstCloser,
    SecondCloser,
    Tie,
}

/// Side-by-side normal-distance comparison of two statistic batches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub first_ks: f64,
    pub second_ks: f64,
    pub first_variance: f64,
    pub second_variance: f64,
    pub verdict: Verdict,
}

pub fn compare(first: &DistributionSummary, second: &DistributionSummary) -> ComparisonReport {
    let verdict = if first.ks_normal < second.ks_normal {
        Verdict::FirstCloser
    } else if second.ks_normal < first.ks_normal {
        Verdict::SecondCloser
    } else {
        Verdict::Tie
    };
    ComparisonReport {
        first_ks: first.ks_normal,
        second_ks: second.ks_normal,
        first_variance: first.variance,
        second_variance: second.variance,
        verdict,
    }
}
