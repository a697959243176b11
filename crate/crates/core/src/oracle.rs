//! Exhaustive enumeration of the randomization distribution for small
//! populations, with distribution-law checks used as ground truth for the
//! statistic and the closed-form moments.
//!
//! Every outcome of the experiment is a choice, per unit, of a treatment
//! arm and a censoring value from that arm's finite support. Enumerating
//! all combinations with their exact probabilities gives the full joint
//! law of the observed data, from which conditional and marginal laws can
//! be checked against their closed forms to floating-point accuracy.
//! Unrealized counterfactual censoring values are never enumerated: a
//! unit's outcome depends only on its realized arm's censoring value, so
//! the pruned enumeration reaches the same observable law with exponentially
//! fewer outcomes (a unit test verifies this against the unpruned join).
//!
//! The checks assume every unit shares one mechanism (common assignment
//! probability and per-arm censoring laws); enumeration itself works for
//! stratified populations too.

use std::collections::HashMap;

use serde::Serialize;

use crate::dist::{binomial_pmf, hypergeometric_pmf};
use crate::error::{Error, Result};
use crate::moments::{exact_variance_l, MechanismSpec};
use crate::survival::{ContingencyTable, EventGrid, FinitePopulation};

/// Enumeration refuses populations larger than this unless the caller
/// raises the cap explicitly.
pub const DEFAULT_ENUMERATION_CAP: usize = 8;

/// Hard ceiling on population size (the per-atom encoding is fixed width).
pub const MAX_ENUMERATION_UNITS: usize = 12;

/// Hard ceiling on the number of enumerated outcomes.
pub const MAX_ENUMERATION_ATOMS: u128 = 1 << 22;

/// Absolute deviation allowed before a check fails. The enumerated masses
/// are compensated sums of exact-probability products, so agreement with
/// the closed forms is limited only by rounding.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// One outcome of the experiment: a joint choice of arm and realized-arm
/// censoring value for every unit, with its exact probability and the
/// statistic pieces computed from the implied observed data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAtom {
    digits: [u8; MAX_ENUMERATION_UNITS],
    pub probability: f64,
    pub score: f64,
    pub variance: f64,
}

impl OracleAtom {
    /// Studentized statistic, `None` when the variance is zero.
    pub fn statistic(&self) -> Option<f64> {
        (self.variance > 0.0).then(|| self.score / self.variance.sqrt())
    }
}

/// One unit's enumerable choices: `(probability, censoring value, treated)`.
struct UnitChoices {
    choices: Vec<(f64, f64, bool)>,
}

/// The full randomization distribution of a small population.
pub struct OracleDistribution {
    population: FinitePopulation,
    grid: EventGrid,
    /// Grid index of each unit's potential event time.
    time_index: Vec<usize>,
    units: Vec<UnitChoices>,
    atoms: Vec<OracleAtom>,
    total_probability: f64,
}

/// Outcome of one distribution-law check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: &'static str,
    /// Conditioning contexts examined (history classes, margins, strata of
    /// a conditional law).
    pub contexts: usize,
    /// Individual probability or expectation comparisons.
    pub comparisons: usize,
    pub max_abs_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Three routes to the score variance that must agree: the enumerated
/// variance, the enumerated mean of the statistic's denominator, and the
/// closed-form expression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceIdentityReport {
    pub score_variance: f64,
    pub mean_total_variance: f64,
    pub closed_form: f64,
    pub max_abs_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compensated (Neumaier) summation; the enumeration adds up to millions of
/// tiny probabilities and the checks need the totals exact to the last few
/// ulps.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Enumerate with the default population-size cap.
pub fn enumerate(population: &FinitePopulation) -> Result<OracleDistribution> {
    enumerate_with_cap(population, DEFAULT_ENUMERATION_CAP)
}

/// Enumerate the full randomization distribution of `population`.
///
/// Every unit's censoring law must have finite support (discrete atoms or
/// no censoring). Outcome counts grow as the product of per-unit choice
/// counts, so both the population size and the total outcome count are
/// capped.
pub fn enumerate_with_cap(population: &FinitePopulation, cap: usize) -> Result<OracleDistribution> {
    let n = population.len();
    if n > cap.min(MAX_ENUMERATION_UNITS) {
        return Err(Error::EnumerationTooLarge {
            n,
            cap: cap.min(MAX_ENUMERATION_UNITS),
        });
    }

    let mut units = Vec::with_capacity(n);
    let mut atom_count: u128 = 1;
    for i in 0..n {
        let mechanism = population
            .mechanism(population.strata()[i])
            .expect("population validated mechanism coverage");
        let treated_support = mechanism
            .censoring()
            .treated
            .finite_support()
            .ok_or_else(|| finite_support_error(i))?;
        let control_support = mechanism
            .censoring()
            .control
            .finite_support()
            .ok_or_else(|| finite_support_error(i))?;
        let mut choices = Vec::with_capacity(treated_support.len() + control_support.len());
        for &(value, p) in &treated_support {
            choices.push((mechanism.p1() * p, value, true));
        }
        for &(value, p) in &control_support {
            choices.push(((1.0 - mechanism.p1()) * p, value, false));
        }
        if choices.len() > u8::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "unit {i} has {} enumerable choices; at most {} are supported",
                choices.len(),
                u8::MAX
            )));
        }
        atom_count *= choices.len() as u128;
        units.push(UnitChoices { choices });
    }
    if atom_count > MAX_ENUMERATION_ATOMS {
        return Err(Error::InvalidConfig(format!(
            "enumeration would produce {atom_count} outcomes, above the limit of {MAX_ENUMERATION_ATOMS}; shrink the censoring supports"
        )));
    }

    let grid = population.event_grid();
    let time_index: Vec<usize> = population
        .times()
        .iter()
        .map(|&t| grid.position(t).expect("grid holds every potential time"))
        .collect();

    let mut dist = OracleDistribution {
        population: population.clone(),
        grid,
        time_index,
        units,
        atoms: Vec::with_capacity(atom_count as usize),
        total_probability: 0.0,
    };

    let mut digits = [0u8; MAX_ENUMERATION_UNITS];
    let mut observations = vec![(0.0, false, false); n];
    let mut tables = vec![ContingencyTable::default(); dist.grid.len()];
    let mut total = KahanSum::new();
    loop {
        let mut probability = 1.0;
        for (unit, &digit) in digits[..n].iter().enumerate() {
            probability *= dist.units[unit].choices[digit as usize].0;
        }
        let mut atom = OracleAtom {
            digits,
            probability,
            score: 0.0,
            variance: 0.0,
        };
        dist.fill_observations(&atom, &mut observations);
        dist.fill_tables(&observations, &mut tables);
        let (score, variance) = score_from_tables(&tables);
        atom.score = score;
        atom.variance = variance;
        total.add(probability);
        dist.atoms.push(atom);

        // Mixed-radix odometer over the per-unit choice indices.
        let mut i = n;
        loop {
            if i == 0 {
                dist.total_probability = total.value();
                return Ok(dist);
            }
            i -= 1;
            digits[i] += 1;
            if (digits[i] as usize) < dist.units[i].choices.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

fn finite_support_error(unit: usize) -> Error {
    Error::InvalidConfig(format!(
        "unit {unit} has a censoring law without finite support; enumeration needs discrete atoms or no censoring"
    ))
}

fn score_from_tables(tables: &[ContingencyTable]) -> (f64, f64) {
    let mut score = 0.0;
    let mut variance = 0.0;
    for table in tables {
        if table.events > 0 {
            let (mean, var) = table.mean_variance();
            score += f64::from(table.treated_events) - mean;
            variance += var;
        }
    }
    (score, variance)
}

impl OracleDistribution {
    pub fn population(&self) -> &FinitePopulation {
        &self.population
    }

    pub fn grid(&self) -> &EventGrid {
        &self.grid
    }

    pub fn atoms(&self) -> &[OracleAtom] {
        &self.atoms
    }

    /// Sum of all atom probabilities; 1 up to rounding.
    pub fn total_probability(&self) -> f64 {
        self.total_probability
    }

    /// The observed data `(time, event, treated)` of one unit under `atom`.
    pub fn observation(&self, atom: &OracleAtom, unit: usize) -> (f64, bool, bool) {
        let (_, censor, treated) = self.units[unit].choices[atom.digits[unit] as usize];
        let t = self.population.times()[unit];
        (t.min(censor), t <= censor, treated)
    }

    /// Per-grid-time at-risk/event tables under `atom`.
    pub fn tables(&self, atom: &OracleAtom) -> Vec<ContingencyTable> {
        let mut observations = vec![(0.0, false, false); self.population.len()];
        let mut tables = vec![ContingencyTable::default(); self.grid.len()];
        self.fill_observations(atom, &mut observations);
        self.fill_tables(&observations, &mut tables);
        tables
    }

    fn fill_observations(&self, atom: &OracleAtom, out: &mut [(f64, bool, bool)]) {
        for (unit, slot) in out.iter_mut().enumerate() {
            *slot = self.observation(atom, unit);
        }
    }

    fn fill_tables(&self, observations: &[(f64, bool, bool)], tables: &mut [ContingencyTable]) {
        for table in tables.iter_mut() {
            *table = ContingencyTable::default();
        }
        for (unit, &(w, delta, treated)) in observations.iter().enumerate() {
            let limit = self.grid.times().partition_point(|&t| t <= w);
            for table in &mut tables[..limit] {
                table.at_risk += 1;
                if treated {
                    table.treated_at_risk += 1;
                }
            }
            if delta {
                let k = self.time_index[unit];
                tables[k].events += 1;
                if treated {
                    tables[k].treated_events += 1;
                }
            }
        }
    }

    /// Encode everything revealed up to just before the treated event count
    /// at grid time `k` is read: per-unit at-risk and event indicators for
    /// times `<= k`, per-unit treated-event indicators strictly before `k`,
    /// and the treated at-risk counts through `k`.
    fn history_key(
        &self,
        observations: &[(f64, bool, bool)],
        tables: &[ContingencyTable],
        k: usize,
        key: &mut Vec<u8>,
    ) {
        key.clear();
        for (q, table) in tables[..=k].iter().enumerate() {
            let tq = self.grid.times()[q];
            let mut risk_mask: u16 = 0;
            let mut event_mask: u16 = 0;
            let mut treated_event_mask: u16 = 0;
            for (unit, &(w, delta, treated)) in observations.iter().enumerate() {
                if w >= tq {
                    risk_mask |= 1 << unit;
                }
                if delta && self.time_index[unit] == q {
                    event_mask |= 1 << unit;
                    if treated {
                        treated_event_mask |= 1 << unit;
                    }
                }
            }
            key.extend_from_slice(&risk_mask.to_le_bytes());
            key.extend_from_slice(&event_mask.to_le_bytes());
            key.push(table.treated_at_risk as u8);
            if q < k {
                key.extend_from_slice(&treated_event_mask.to_le_bytes());
            }
        }
    }

    /// Within every history class at every grid time, the treated event
    /// count must follow the hypergeometric law set by the class margins.
    pub fn check_conditional_hypergeometric(&self) -> CheckReport {
        let mut contexts = 0;
        let mut comparisons = 0;
        let mut max_dev = 0.0f64;

        let n = self.population.len();
        let mut observations = vec![(0.0, false, false); n];
        let mut tables = vec![ContingencyTable::default(); self.grid.len()];
        let mut key = Vec::new();

        struct Group {
            margins: ContingencyTable,
            total: KahanSum,
            masses: Vec<KahanSum>,
        }

        for k in 0..self.grid.len() {
            let mut groups: HashMap<Vec<u8>, Group> = HashMap::new();
            for atom in &self.atoms {
                self.fill_observations(atom, &mut observations);
                self.fill_tables(&observations, &mut tables);
                self.history_key(&observations, &tables, k, &mut key);
                let treated_events = tables[k].treated_events;
                let margins = ContingencyTable {
                    treated_events: 0,
                    ..tables[k]
                };
                let group = match groups.get_mut(key.as_slice()) {
                    Some(group) => group,
                    None => {
                        let width = margins.events.min(margins.treated_at_risk) as usize + 1;
                        groups.entry(key.clone()).or_insert(Group {
                            margins,
                            total: KahanSum::new(),
                            masses: vec![KahanSum::new(); width],
                        })
                    }
                };
                debug_assert_eq!(
                    group.margins, margins,
                    "margins vary within a history class"
                );
                group.total.add(atom.probability);
                group.masses[treated_events as usize].add(atom.probability);
            }
            contexts += groups.len();
            for group in groups.values() {
                let p_class = group.total.value();
                for (x, mass) in group.masses.iter().enumerate() {
                    let law = hypergeometric_pmf(
                        group.margins.at_risk,
                        group.margins.events,
                        group.margins.treated_at_risk,
                        x as u32,
                    )
                    .expect("class margins are consistent");
                    max_dev = max_dev.max((mass.value() / p_class - law).abs());
                    comparisons += 1;
                }
            }
        }
        report("conditional-hypergeometric", contexts, comparisons, max_dev)
    }

    /// Within every history class the centered treated event count must
    /// have conditional mean zero, and the score mean zero overall.
    pub fn check_martingale(&self) -> CheckReport {
        let mut contexts = 0;
        let mut comparisons = 0;
        let mut max_dev = 0.0f64;

        let n = self.population.len();
        let mut observations = vec![(0.0, false, false); n];
        let mut tables = vec![ContingencyTable::default(); self.grid.len()];
        let mut key = Vec::new();

        struct Group {
            total: KahanSum,
            centered: KahanSum,
        }

        for k in 0..self.grid.len() {
            let mut groups: HashMap<Vec<u8>, Group> = HashMap::new();
            for atom in &self.atoms {
                self.fill_observations(atom, &mut observations);
                self.fill_tables(&observations, &mut tables);
                self.history_key(&observations, &tables, k, &mut key);
                let margins = tables[k];
                let (mean, _) = margins.mean_variance();
                let group = match groups.get_mut(key.as_slice()) {
                    Some(group) => group,
                    None => groups.entry(key.clone()).or_insert(Group {
                        total: KahanSum::new(),
                        centered: KahanSum::new(),
                    }),
                };
                group.total.add(atom.probability);
                group
                    .centered
                    .add(atom.probability * (f64::from(margins.treated_events) - mean));
            }
            contexts += groups.len();
            for group in groups.values() {
                max_dev = max_dev.max((group.centered.value() / group.total.value()).abs());
                comparisons += 1;
            }
        }

        let mut mean_score = KahanSum::new();
        for atom in &self.atoms {
            mean_score.add(atom.probability * atom.score);
        }
        max_dev = max_dev.max(mean_score.value().abs());
        contexts += 1;
        comparisons += 1;
        report("martingale", contexts, comparisons, max_dev)
    }

    /// Marginal and conditional laws of the per-time counts for a common
    /// mechanism: at-risk and event counts are binomial with the observable
    /// rate, the treated at-risk count is binomial with the treated-arm
    /// rate, and given the at-risk count the event count is hypergeometric,
    /// the treated count binomial, and the two independent.
    pub fn check_marginal_laws(&self, mech: &MechanismSpec) -> CheckReport {
        let mut contexts = 0;
        let mut comparisons = 0;
        let mut max_dev = 0.0f64;

        let n = self.population.len();
        let mut observations = vec![(0.0, false, false); n];
        let mut tables = vec![ContingencyTable::default(); self.grid.len()];

        #[derive(Clone)]
        struct AtRiskClass {
            total: KahanSum,
            events: Vec<KahanSum>,
            treated: Vec<KahanSum>,
            joint: HashMap<(u32, u32), KahanSum>,
        }

        for k in 0..self.grid.len() {
            let t = self.grid.times()[k];
            let n_k = self.grid.at_risk()[k];
            let d_k = self.grid.multiplicities()[k];
            let g = mech.observable_rate(t);
            let phi = mech.treated_share(t);
            let treated_rate = mech.p1() * mech.treated_censoring().survival(t);

            let mut at_risk_pmf = vec![KahanSum::new(); n_k as usize + 1];
            let mut events_pmf = vec![KahanSum::new(); d_k as usize + 1];
            let mut treated_pmf = vec![KahanSum::new(); n_k as usize + 1];
            let mut classes: Vec<Option<AtRiskClass>> = vec![None; n_k as usize + 1];

            for atom in &self.atoms {
                self.fill_observations(atom, &mut observations);
                self.fill_tables(&observations, &mut tables);
                let table = tables[k];
                at_risk_pmf[table.at_risk as usize].add(atom.probability);
                events_pmf[table.events as usize].add(atom.probability);
                treated_pmf[table.treated_at_risk as usize].add(atom.probability);
                let class = classes[table.at_risk as usize].get_or_insert_with(|| AtRiskClass {
                    total: KahanSum::new(),
                    events: vec![KahanSum::new(); table.at_risk as usize + 1],
                    treated: vec![KahanSum::new(); table.at_risk as usize + 1],
                    joint: HashMap::new(),
                });
                class.total.add(atom.probability);
                class.events[table.events as usize].add(atom.probability);
                class.treated[table.treated_at_risk as usize].add(atom.probability);
                class
                    .joint
                    .entry((table.events, table.treated_at_risk))
                    .or_default()
                    .add(atom.probability);
            }

            contexts += 3;
            for (x, mass) in at_risk_pmf.iter().enumerate() {
                let law = binomial_pmf(n_k, g, x as u32).expect("rate is a probability");
                max_dev = max_dev.max((mass.value() - law).abs());
                comparisons += 1;
            }
            for (x, mass) in events_pmf.iter().enumerate() {
                let law = binomial_pmf(d_k, g, x as u32).expect("rate is a probability");
                max_dev = max_dev.max((mass.value() - law).abs());
                comparisons += 1;
            }
            for (x, mass) in treated_pmf.iter().enumerate() {
                let law = binomial_pmf(n_k, treated_rate, x as u32).expect("rate is a probability");
                max_dev = max_dev.max((mass.value() - law).abs());
                comparisons += 1;
            }

            for (nu, class) in classes.iter().enumerate() {
                let Some(class) = class else { continue };
                let nu = nu as u32;
                let p_class = class.total.value();
                contexts += 1;
                let event_cap = d_k.min(nu);
                for x in 0..=event_cap {
                    let law = hypergeometric_pmf(n_k, d_k, nu, x).expect("margins consistent");
                    let mass = class.events[x as usize].value() / p_class;
                    max_dev = max_dev.max((mass - law).abs());
                    comparisons += 1;
                }
                for b in 0..=nu {
                    let law = binomial_pmf(nu, phi, b).expect("rate is a probability");
                    let mass = class.treated[b as usize].value() / p_class;
                    max_dev = max_dev.max((mass - law).abs());
                    comparisons += 1;
                }
                for a in 0..=event_cap {
                    for b in 0..=nu {
                        let product = hypergeometric_pmf(n_k, d_k, nu, a).unwrap()
                            * binomial_pmf(nu, phi, b).unwrap();
                        let mass = class
                            .joint
                            .get(&(a, b))
                            .map_or(0.0, |m| m.value() / p_class);
                        max_dev = max_dev.max((mass - product).abs());
                        comparisons += 1;
                    }
                }
            }
        }
        report("marginal-laws", contexts, comparisons, max_dev)
    }

    /// The enumerated score variance, the enumerated mean of the summed
    /// allocation variances, and the closed-form expression must coincide.
    pub fn variance_identity(&self, mech: &MechanismSpec) -> VarianceIdentityReport {
        let mut mean = KahanSum::new();
        let mut second = KahanSum::new();
        let mut mean_variance = KahanSum::new();
        for atom in &self.atoms {
            mean.add(atom.probability * atom.score);
            second.add(atom.probability * atom.score * atom.score);
            mean_variance.add(atom.probability * atom.variance);
        }
        let score_variance = second.value() - mean.value() * mean.value();
        let mean_total_variance = mean_variance.value();
        let closed_form = exact_variance_l(&self.grid, mech);
        let max_abs_deviation = (score_variance - mean_total_variance)
            .abs()
            .max((score_variance - closed_form).abs())
            .max((mean_total_variance - closed_form).abs());
        VarianceIdentityReport {
            score_variance,
            mean_total_variance,
            closed_form,
            max_abs_deviation,
            tolerance: ORACLE_TOLERANCE,
            pass: max_abs_deviation <= ORACLE_TOLERANCE,
        }
    }
}

fn report(check: &'static str, contexts: usize, comparisons: usize, max_dev: f64) -> CheckReport {
    CheckReport {
        check,
        contexts,
        comparisons,
        max_abs_deviation: max_dev,
        tolerance: ORACLE_TOLERANCE,
        pass: max_dev <= ORACLE_TOLERANCE,
    }
}
