//! Logrank and stratified logrank statistics.
//!
//! The statistic is built from one 2x2 table per distinct observed event
//! time: at each such time the treated event count is compared with its
//! mean under random allocation of the tied events across the risk set,
//! and the centered counts are summed and studentized by the summed
//! allocation variances. Times with no events contribute nothing. When the
//! total variance is zero the statistic is undefined and reported as
//! `None` rather than an error.

use serde::Serialize;

use crate::dist::normal_two_sided_p;
use crate::error::{Error, Result};
use crate::survival::{hypergeometric_mean_var, SurvivalRecord};

/// Per-event-time pieces of the statistic: the distinct times with at least
/// one event, the treated event count, and the hypergeometric mean and
/// variance of that count given the table margins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogrankComponents {
    pub times: Vec<f64>,
    pub treated_events: Vec<u32>,
    pub expected: Vec<f64>,
    pub variance: Vec<f64>,
}

impl LogrankComponents {
    /// Sum of observed-minus-expected treated events, in time order.
    pub fn score(&self) -> f64 {
        self.treated_events
            .iter()
            .zip(&self.expected)
            .map(|(&d1, &m)| f64::from(d1) - m)
            .sum()
    }

    /// Sum of the per-time allocation variances, in time order.
    pub fn total_variance(&self) -> f64 {
        self.variance.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Unstratified test result. `statistic` is `None` exactly when the total
/// variance is zero (no events, or every event in a degenerate risk set).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogrankResult {
    pub score: f64,
    pub variance: f64,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub components: LogrankComponents,
}

/// One stratum's contribution to the stratified statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumContribution {
    pub stratum: u32,
    pub score: f64,
    pub variance: f64,
    /// The stratum's own studentized statistic, when defined.
    pub statistic: Option<f64>,
}

/// Stratified test result: per-stratum scores and variances are summed
/// before studentizing, so strata with heavy censoring are weighted by
/// their information rather than equally.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedResult {
    pub strata: Vec<StratumContribution>,
    pub score: f64,
    pub variance: f64,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

/// Compute the per-time components in one pass over the records.
///
/// Records are ranked by observed time; walking tie groups from the
/// earliest time while decrementing running at-risk counts yields each
/// table's margins without rescanning, so the whole computation is one
/// sort plus a linear sweep. Stratum labels are ignored: callers wanting a
/// stratified analysis split the records first (see [`stratified_logrank`]).
pub fn logrank_components(records: &[SurvivalRecord]) -> Result<LogrankComponents> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<u32> = (0..records.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        records[a as usize]
            .time
            .total_cmp(&records[b as usize].time)
    });

    let mut at_risk = records.len() as u32;
    let mut treated_at_risk = records.iter().filter(|r| r.group == 1).count() as u32;

    let mut components = LogrankComponents {
        times: Vec::new(),
        treated_events: Vec::new(),
        expected: Vec::new(),
        variance: Vec::new(),
    };

    let mut i = 0;
    while i < order.len() {
        let t = records[order[i] as usize].time;
        let mut tied = 0u32;
        let mut tied_treated = 0u32;
        let mut events = 0u32;
        let mut treated_events = 0u32;
        let mut j = i;
        while j < order.len() && records[order[j] as usize].time == t {
            let r = &records[order[j] as usize];
            tied += 1;
            if r.group == 1 {
                tied_treated += 1;
            }
            if r.event {
                events += 1;
                if r.group == 1 {
                    treated_events += 1;
                }
            }
            j += 1;
        }
        if events > 0 {
            let (expected, variance) = hypergeometric_mean_var(at_risk, events, treated_at_risk)
                .expect("sweep margins are consistent by construction");
            components.times.push(t);
            components.treated_events.push(treated_events);
            components.expected.push(expected);
            components.variance.push(variance);
        }
        at_risk -= tied;
        treated_at_risk -= tied_treated;
        i = j;
    }
    Ok(components)
}

/// Logrank test over all records, ignoring stratum labels.
pub fn logrank_statistic(records: &[SurvivalRecord]) -> Result<LogrankResult> {
    let components = logrank_components(records)?;
    let score = components.score();
    let variance = components.total_variance();
    let statistic = (variance > 0.0).then(|| score / variance.sqrt());
    Ok(LogrankResult {
        score,
        variance,
        statistic,
        p_value: statistic.map(normal_two_sided_p),
        components,
    })
}

/// Stratified logrank test: records are split by stratum label, scores and
/// variances are computed within each stratum and summed in increasing
/// label order, and the summed score is studentized by the summed variance.
pub fn stratified_logrank(records: &[SurvivalRecord]) -> Result<StratifiedResult> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut labels: Vec<u32> = records.iter().map(|r| r.stratum).collect();
    labels.sort_unstable();
    labels.dedup();

    let mut strata = Vec::with_capacity(labels.len());
    let mut score = 0.0;
    let mut variance = 0.0;
    let mut scratch = Vec::new();
    for label in labels {
        scratch.clear();
        scratch.extend(records.iter().filter(|r| r.stratum == label).copied());
        let components = logrank_components(&scratch)?;
        let s = components.score();
        let v = components.total_variance();
        score += s;
        variance += v;
        strata.push(StratumContribution {
            stratum: label,
            score: s,
            variance: v,
            statistic: (v > 0.0).then(|| s / v.sqrt()),
        });
    }
    let statistic = (variance > 0.0).then(|| score / variance.sqrt());
    Ok(StratifiedResult {
        strata,
        score,
        variance,
        statistic,
        p_value: statistic.map(normal_two_sided_p),
    })
}

/// Two-sided p-value for a studentized statistic against the standard
/// normal reference. The reference is asymptotic; for small risk sets use
/// the enumeration oracle instead.
pub fn two_sided_p_value(statistic: f64) -> f64 {
    normal_two_sided_p(statistic)
}
