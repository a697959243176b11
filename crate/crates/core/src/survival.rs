//! Data model for censored two-group comparisons: per-unit records, the
//! grid of event times with at-risk counts, empirical survival quantities,
//! and finite populations with their assignment/censoring mechanisms.
//!
//! Conventions used throughout the crate:
//!
//! * times are finite and nonnegative; ties are exact `f64` equality,
//!   callers are expected to round to a common resolution upstream;
//! * a unit is at risk at `t` when its observed time is `>= t`;
//! * group 1 is treated, group 0 is control;
//! * every `0/0` arising from empty risk sets is defined as `0` in exactly
//!   one place, [`hypergeometric_mean_var`].

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// One unit's observed data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalRecord {
    pub id: u32,
    /// Observed time: the minimum of the event and censoring times.
    pub time: f64,
    /// True when the event was observed, false when censored.
    pub event: bool,
    /// Treatment arm, 0 or 1.
    pub group: u8,
    pub stratum: u32,
}

impl SurvivalRecord {
    pub fn new(id: u32, time: f64, event: bool, group: u8) -> Result<Self> {
        Self::in_stratum(id, time, event, group, 0)
    }

    pub fn in_stratum(id: u32, time: f64, event: bool, group: u8, stratum: u32) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidTime(time));
        }
        if group > 1 {
            return Err(Error::InvalidGroup(group));
        }
        Ok(Self {
            id,
            time,
            event,
            group,
            stratum,
        })
    }
}

/// Distinct potential event times in increasing order, with the number of
/// units event-ing at each time, the number still at risk, and the discrete
/// hazard.
///
/// Built from *potential* event times (every unit contributes one), so the
/// at-risk count at the k-th time is the tail sum of multiplicities and the
/// last hazard is always 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventGrid {
    times: Vec<f64>,
    multiplicities: Vec<u32>,
    at_risk: Vec<u32>,
    hazard: Vec<f64>,
}

impl EventGrid {
    pub fn from_times(potential_event_times: &[f64]) -> Result<Self> {
        if potential_event_times.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let mut sorted = potential_event_times.to_vec();
        for &t in &sorted {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidTime(t));
            }
        }
        sorted.sort_unstable_by(f64::total_cmp);

        let mut times = Vec::new();
        let mut multiplicities: Vec<u32> = Vec::new();
        for &t in &sorted {
            if times.last() == Some(&t) {
                *multiplicities.last_mut().unwrap() += 1;
            } else {
                times.push(t);
                multiplicities.push(1);
            }
        }

        let mut at_risk = vec![0u32; times.len()];
        let mut tail = 0u32;
        for k in (0..times.len()).rev() {
            tail += multiplicities[k];
            at_risk[k] = tail;
        }
        let hazard = multiplicities
            .iter()
            .zip(&at_risk)
            .map(|(&d, &n)| f64::from(d) / f64::from(n))
            .collect();

        Ok(Self {
            times,
            multiplicities,
            at_risk,
            hazard,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of units the grid was built from.
    pub fn n_units(&self) -> u32 {
        self.at_risk.first().copied().unwrap_or(0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    pub fn at_risk(&self) -> &[u32] {
        &self.at_risk
    }

    /// Discrete hazards `multiplicity / at-risk`; the final entry is 1.
    pub fn hazard(&self) -> &[f64] {
        &self.hazard
    }

    /// Index of the grid time equal to `t`, if any.
    pub fn position(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&tk| tk < t);
        (k < self.times.len() && self.times[k] == t).then_some(k)
    }
}

/// At-risk and event counts at one time, split by arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ContingencyTable {
    pub at_risk: u32,
    pub events: u32,
    pub treated_at_risk: u32,
    pub treated_events: u32,
}

impl ContingencyTable {
    /// Mean and variance of the treated event count under random draws
    /// without replacement, given the margins. See
    /// [`hypergeometric_mean_var`].
    pub fn mean_variance(&self) -> (f64, f64) {
        hypergeometric_mean_var(self.at_risk, self.events, self.treated_at_risk)
            .expect("margins of a realized table are consistent")
    }
}

/// Tabulate at-risk and event counts at time `t` over `records`.
///
/// A unit is at risk when its observed time is `>= t`; it contributes an
/// event when its event indicator is set and its time equals `t` exactly.
pub fn contingency_at(records: &[SurvivalRecord], t: f64) -> ContingencyTable {
    let mut table = ContingencyTable {
        at_risk: 0,
        events: 0,
        treated_at_risk: 0,
        treated_events: 0,
    };
    for r in records {
        if r.time >= t {
            table.at_risk += 1;
            if r.group == 1 {
                table.treated_at_risk += 1;
            }
            if r.event && r.time == t {
                table.events += 1;
                if r.group == 1 {
                    table.treated_events += 1;
                }
            }
        }
    }
    table
}

/// Mean and variance of a hypergeometric count: `events` events distributed
/// over `at_risk` units of which `treated_at_risk` are treated.
///
/// This is the single place where the `0/0 := 0` convention lives: an empty
/// risk set, or a risk set of one, yields variance 0 (and mean 0 when empty)
/// rather than NaN. The factor order is fixed so every caller computes
/// bit-identical values:
/// `mean = d*n1/n`, `var = (d*n1/n) * ((n-d)/n) * (n0/(n-1))`.
pub fn hypergeometric_mean_var(
    at_risk: u32,
    events: u32,
    treated_at_risk: u32,
) -> Result<(f64, f64)> {
    if events > at_risk || treated_at_risk > at_risk {
        return Err(Error::InvalidCounts {
            n: at_risk,
            d: events,
            n1: treated_at_risk,
        });
    }
    if at_risk == 0 {
        return Ok((0.0, 0.0));
    }
    let n = f64::from(at_risk);
    let d = f64::from(events);
    let n1 = f64::from(treated_at_risk);
    let n0 = f64::from(at_risk - treated_at_risk);
    let mean = d * n1 / n;
    if at_risk == 1 {
        return Ok((mean, 0.0));
    }
    let var = (d * n1 / n) * ((n - d) / n) * (n0 / (n - 1.0));
    Ok((mean, var))
}

/// Step functions derived from a grid of potential event times: the
/// fraction of units with event time `>= t` and the cumulative hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSurvival {
    grid: EventGrid,
    cumulative_hazard: Vec<f64>,
}

impl EmpiricalSurvival {
    pub fn new(grid: EventGrid) -> Self {
        let mut acc = 0.0;
        let cumulative_hazard = grid
            .hazard()
            .iter()
            .map(|&h| {
                acc += h;
                acc
            })
            .collect();
        Self {
            grid,
            cumulative_hazard,
        }
    }

    pub fn grid(&self) -> &EventGrid {
        &self.grid
    }

    /// Fraction of units whose event time is `>= t` (left limit of the
    /// empirical survival function; equals 1 at and below the first time,
    /// 0 beyond the last).
    pub fn survival(&self, t: f64) -> f64 {
        let k = self.grid.times().partition_point(|&tk| tk < t);
        if k == self.grid.len() {
            0.0
        } else {
            f64::from(self.grid.at_risk()[k]) / f64::from(self.grid.n_units())
        }
    }

    /// Sum of discrete hazards over grid times `<= t`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let k = self.grid.times().partition_point(|&tk| tk <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative_hazard[k - 1]
        }
    }
}

/// Censoring distribution for one arm, evaluated through its survival
/// function `P(C >= t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CensoringDist {
    /// No censoring: every censoring time is `+inf`.
    None,
    /// Exponential with the given scale (mean).
    Exponential { scale: f64 },
    /// Finitely many atoms; values may include `+inf`.
    Discrete(DiscreteDist),
}

impl CensoringDist {
    pub fn exponential(scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "exponential scale {scale} must be finite and positive"
            )));
        }
        Ok(Self::Exponential { scale })
    }

    /// `P(C >= t)`. For the continuous exponential this equals the usual
    /// survival function; for discrete supports the atom at `t` is included.
    pub fn survival(&self, t: f64) -> f64 {
        match self {
            Self::None => 1.0,
            Self::Exponential { scale } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-t / scale).exp()
                }
            }
            Self::Discrete(d) => d.survival(t),
        }
    }

    /// The atoms `(value, probability)` when the distribution has finite
    /// support, `None` for the exponential. The no-censoring case is a
    /// single atom at `+inf`.
    pub fn finite_support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Self::None => Some(vec![(f64::INFINITY, 1.0)]),
            Self::Exponential { .. } => None,
            Self::Discrete(d) => Some(d.atoms().to_vec()),
        }
    }
}

/// A distribution on finitely many time points (possibly including `+inf`),
/// stored sorted by value.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    atoms: Vec<(f64, f64)>,
    /// `tail[i]` = total probability of atoms `i..`.
    tail: Vec<f64>,
}

impl DiscreteDist {
    /// Build from `(value, probability)` pairs. Values must be distinct and
    /// either nonnegative finite or `+inf`; probabilities must be strictly
    /// positive and sum to 1 within 1e-15.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution(
                "discrete distribution needs at least one atom".into(),
            ));
        }
        atoms.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        for w in atoms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidDistribution(format!(
                    "duplicate atom value {}",
                    w[0].0
                )));
            }
        }
        let mut total = 0.0;
        for &(v, p) in &atoms {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidTime(v));
            }
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "atom probability {p} must be positive"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-15 {
            return Err(Error::InvalidDistribution(format!(
                "atom probabilities sum to {total}, not 1"
            )));
        }
        let mut tail = vec![0.0; atoms.len()];
        let mut acc = 0.0;
        for i in (0..atoms.len()).rev() {
            acc += atoms[i].1;
            tail[i] = acc;
        }
        Ok(Self { atoms, tail })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// `P(C >= t)` as the exact tail sum over atoms with value `>= t`.
    pub fn survival(&self, t: f64) -> f64 {
        let i = self.atoms.partition_point(|&(v, _)| v < t);
        if i == self.atoms.len() {
            0.0
        } else {
            self.tail[i]
        }
    }
}

/// Per-arm censoring distributions (treated and control units are censored
/// independently, each by its own arm's law).
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringModel {
    pub treated: CensoringDist,
    pub control: CensoringDist,
}

/// Assignment and censoring mechanism shared by the units of one stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumMechanism {
    p1: f64,
    censoring: CensoringModel,
}

impl StratumMechanism {
    pub fn new(p1: f64, censoring: CensoringModel) -> Result<Self> {
        if !p1.is_finite() || p1 <= 0.0 || p1 >= 1.0 {
            return Err(Error::InvalidProbability(p1));
        }
        Ok(Self { p1, censoring })
    }

    /// Probability that a unit is assigned to the treated arm.
    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn censoring(&self) -> &CensoringModel {
        &self.censoring
    }
}

/// The object randomization-based inference treats as fixed: every unit's
/// potential event time, its stratum label, and each stratum's mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    potential_event_times: Vec<f64>,
    strata: Vec<u32>,
    mechanisms: BTreeMap<u32, StratumMechanism>,
}

impl FinitePopulation {
    pub fn new(
        potential_event_times: Vec<f64>,
        strata: Vec<u32>,
        mechanisms: BTreeMap<u32, StratumMechanism>,
    ) -> Result<Self> {
        if potential_event_times.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if strata.len() != potential_event_times.len() {
            return Err(Error::SizeMismatch {
                left: "event times",
                left_len: potential_event_times.len(),
                right: "stratum labels",
                right_len: strata.len(),
            });
        }
        for &t in &potential_event_times {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidTime(t));
            }
        }
        for &s in &strata {
            if !mechanisms.contains_key(&s) {
                return Err(Error::MissingMechanism(s));
            }
        }
        Ok(Self {
            potential_event_times,
            strata,
            mechanisms,
        })
    }

    /// Single-stratum population: every unit in stratum 0 under `mechanism`.
    pub fn homogeneous(
        potential_event_times: Vec<f64>,
        mechanism: StratumMechanism,
    ) -> Result<Self> {
        let strata = vec![0; potential_event_times.len()];
        let mechanisms = BTreeMap::from([(0, mechanism)]);
        Self::new(potential_event_times, strata, mechanisms)
    }

    pub fn len(&self) -> usize {
        self.potential_event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> &[f64] {
        &self.potential_event_times
    }

    pub fn strata(&self) -> &[u32] {
        &self.strata
    }

    pub fn mechanism(&self, stratum: u32) -> Option<&StratumMechanism> {
        self.mechanisms.get(&stratum)
    }

    pub fn mechanisms(&self) -> &BTreeMap<u32, StratumMechanism> {
        &self.mechanisms
    }

    /// Sorted distinct stratum labels actually used by units.
    pub fn stratum_labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self.strata.clone();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// Potential event times of the units in one stratum.
    pub fn times_in(&self, stratum: u32) -> Vec<f64> {
        self.potential_event_times
            .iter()
            .zip(&self.strata)
            .filter(|&(_, &s)| s == stratum)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Grid over all units, ignoring strata.
    pub fn event_grid(&self) -> EventGrid {
        EventGrid::from_times(&self.potential_event_times)
            .expect("population times were validated at construction")
    }
}
