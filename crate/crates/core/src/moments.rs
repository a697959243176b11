//! Closed-form randomization moments of the logrank score and finite-sample
//! regularity diagnostics.
//!
//! Conditioning on the population of potential event times, the score has
//! mean zero, and its variance has an exact expression as a sum over the
//! grid of potential event times involving only the discrete hazards, the
//! at-risk counts, and two mechanism-derived rates per time: the
//! probability `g(t)` that a unit with potential event time `t` is actually
//! observed to event, and the share `phi(t)` of such observable events that
//! fall in the treated arm. A simpler large-sample form drops the
//! finite-risk-set correction; both are implemented here along with
//! diagnostics for the regularity conditions behind the normal reference.

use serde::Serialize;

use crate::error::Result;
use crate::survival::{CensoringDist, EmpiricalSurvival, EventGrid, StratumMechanism};

/// Assignment and per-arm censoring laws used to derive the moment
/// formulas' rates. `conditional` marks specs whose censoring laws are
/// conditional (for example within one covariate cell); the formulas are
/// unchanged, the flag documents how the result should be read and is
/// echoed into reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSpec {
    p1: f64,
    treated: CensoringDist,
    control: CensoringDist,
    conditional: bool,
}

impl MechanismSpec {
    pub fn new(p1: f64, treated: CensoringDist, control: CensoringDist) -> Result<Self> {
        Self::build(p1, treated, control, false)
    }

    /// Same rates, flagged as conditional-on-covariate moments.
    pub fn conditional(p1: f64, treated: CensoringDist, control: CensoringDist) -> Result<Self> {
        Self::build(p1, treated, control, true)
    }

    fn build(
        p1: f64,
        treated: CensoringDist,
        control: CensoringDist,
        conditional: bool,
    ) -> Result<Self> {
        if !p1.is_finite() || p1 <= 0.0 || p1 >= 1.0 {
            return Err(crate::error::Error::InvalidProbability(p1));
        }
        Ok(Self {
            p1,
            treated,
            control,
            conditional,
        })
    }

    pub fn from_mechanism(mechanism: &StratumMechanism) -> Self {
        Self {
            p1: mechanism.p1(),
            treated: mechanism.censoring().treated.clone(),
            control: mechanism.censoring().control.clone(),
            conditional: false,
        }
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }

    pub fn is_conditional(&self) -> bool {
        self.conditional
    }

    pub fn treated_censoring(&self) -> &CensoringDist {
        &self.treated
    }

    pub fn control_censoring(&self) -> &CensoringDist {
        &self.control
    }

    /// `g(t)`: probability that a unit with potential event time `t` is
    /// uncensored at `t`, averaged over its random arm.
    pub fn observable_rate(&self, t: f64) -> f64 {
        self.p1 * self.treated.survival(t) + self.p0() * self.control.survival(t)
    }

    /// `phi(t)`: conditional probability that an observable event at `t`
    /// belongs to the treated arm. When `g(t) = 0` no event is observable
    /// and the value is irrelevant; it is pinned to `p1` so the rate stays
    /// continuous as censoring mass vanishes.
    pub fn treated_share(&self, t: f64) -> f64 {
        let g = self.observable_rate(t);
        if g == 0.0 {
            self.p1
        } else {
            self.p1 * self.treated.survival(t) / g
        }
    }
}

/// The two mechanism rates evaluated at every grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedRates {
    pub observable: Vec<f64>,
    pub treated_share: Vec<f64>,
}

pub fn derived_rates(grid: &EventGrid, mech: &MechanismSpec) -> DerivedRates {
    let observable = grid
        .times()
        .iter()
        .map(|&t| mech.observable_rate(t))
        .collect();
    let treated_share = grid
        .times()
        .iter()
        .map(|&t| mech.treated_share(t))
        .collect();
    DerivedRates {
        observable,
        treated_share,
    }
}

/// `(1 - g)^n` without cancellation for small `g`.
fn pow_one_minus(g: f64, n: u32) -> f64 {
    if g >= 1.0 {
        0.0
    } else if g <= 0.0 {
        1.0
    } else {
        (f64::from(n) * (-g).ln_1p()).exp()
    }
}

/// Exact variance of the logrank score under the randomization
/// distribution, conditional on the potential event times that `grid` was
/// built from.
///
/// Each grid time contributes
/// `n_k^2/(n_k - 1) * h_k(1-h_k) * phi_k(1-phi_k) * (g_k - (1-(1-g_k)^{n_k})/n_k)`;
/// times with a single unit at risk have `h_k = 1` and contribute nothing.
pub fn exact_variance_l(grid: &EventGrid, mech: &MechanismSpec) -> f64 {
    let mut total = 0.0;
    for k in 0..grid.len() {
        let n_k = grid.at_risk()[k];
        if n_k < 2 {
            continue;
        }
        let t = grid.times()[k];
        let h = grid.hazard()[k];
        let g = mech.observable_rate(t);
        let phi = mech.treated_share(t);
        let n = f64::from(n_k);
        let bracket = g - (1.0 - pow_one_minus(g, n_k)) / n;
        total += (n * n / (n - 1.0)) * (h * (1.0 - h)) * (phi * (1.0 - phi)) * bracket;
    }
    total
}

/// Expected total allocation variance of the statistic's denominator.
/// Equals [`exact_variance_l`]: the score's variance and the expected
/// studentizer agree exactly, which is what makes the studentized statistic
/// asymptotically pivotal.
pub fn exact_mean_u(grid: &EventGrid, mech: &MechanismSpec) -> f64 {
    exact_variance_l(grid, mech)
}

/// Large-sample approximation to the score variance:
/// `sum_k n_k h_k(1-h_k) phi_k(1-phi_k) g_k`.
///
/// Written against the empirical survival quantities rather than the raw
/// grid to mirror its integral form; it drops the finite-risk-set
/// correction and is cheap to evaluate from summary curves alone.
pub fn asymptotic_variance_approx(emp: &EmpiricalSurvival, mech: &MechanismSpec) -> f64 {
    let grid = emp.grid();
    let mut total = 0.0;
    for k in 0..grid.len() {
        let t = grid.times()[k];
        let h = grid.hazard()[k];
        let n = f64::from(grid.at_risk()[k]);
        let g = mech.observable_rate(t);
        let phi = mech.treated_share(t);
        total += n * (h * (1.0 - h)) * (phi * (1.0 - phi)) * g;
    }
    total
}

/// Fixed footnote attached to every condition report.
pub const DIAGNOSTIC_NOTE: &str =
    "finite-sample diagnostic of asymptotic regularity conditions, not a limit claim";

/// Regularity checks at one grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimePointFlags {
    pub time: f64,
    /// Share of all units whose potential event time equals this time.
    pub event_fraction: f64,
    pub treated_censoring: f64,
    pub control_censoring: f64,
    pub hazard: f64,
    pub event_fraction_positive: bool,
    pub treated_censoring_positive: bool,
    pub control_censoring_positive: bool,
    pub hazard_below_one: bool,
    pub all_hold: bool,
}

/// Finite-sample surrogates for the regularity conditions behind the
/// normal approximation, evaluated on one stratum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub n: u32,
    /// Largest tie multiplicity on the grid.
    pub max_tied_events: u32,
    /// Average over units of the probability that both a treated and a
    /// control unit at the same potential time would remain uncensored:
    /// `n^{-1} sum_k d_k G1(t_k) G0(t_k)`.
    pub observable_fraction: f64,
    /// `min( (g/d) sqrt(n/ln n), g n / d^3 )` with `g` the observable
    /// fraction and `d` the maximum tie multiplicity; large values favor
    /// the normal reference, values near zero warn against it.
    pub clt_criterion: f64,
    pub assignment_nondegenerate: bool,
    /// True when at least one grid time satisfies every per-time check.
    pub witness_time_exists: bool,
    pub time_points: Vec<TimePointFlags>,
    pub note: &'static str,
}

/// Per-stratum condition report plus the stratum's share of all units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumConditionReport {
    pub stratum: u32,
    pub share: f64,
    pub report: ConditionReport,
}

/// Condition diagnostics for a stratified analysis: every stratum is
/// checked on its own, and the smallest stratum share is reported since the
/// normal reference also needs each stratum to carry a nonvanishing
/// fraction of the units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedConditionReport {
    pub total_n: u32,
    pub smallest_share: f64,
    pub all_strata_have_witness: bool,
    pub strata: Vec<StratumConditionReport>,
    pub note: &'static str,
}

pub fn condition_report(grid: &EventGrid, mech: &MechanismSpec) -> ConditionReport {
    let n = grid.n_units();
    let nf = f64::from(n);
    let max_tied_events = grid.multiplicities().iter().copied().max().unwrap_or(0);

    let mut observable_sum = 0.0;
    let mut time_points = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let t = grid.times()[k];
        let d = grid.multiplicities()[k];
        let g1 = mech.treated_censoring().survival(t);
        let g0 = mech.control_censoring().survival(t);
        observable_sum += f64::from(d) * g1 * g0;
        let hazard = grid.hazard()[k];
        let flags = TimePointFlags {
            time: t,
            event_fraction: f64::from(d) / nf,
            treated_censoring: g1,
            control_censoring: g0,
            hazard,
            event_fraction_positive: d > 0,
            treated_censoring_positive: g1 > 0.0,
            control_censoring_positive: g0 > 0.0,
            hazard_below_one: hazard < 1.0,
            all_hold: d > 0 && g1 > 0.0 && g0 > 0.0 && hazard < 1.0,
        };
        time_points.push(flags);
    }
    let observable_fraction = observable_sum / nf;
    let d = f64::from(max_tied_events);
    let clt_criterion = f64::min(
        observable_fraction / d * (nf / nf.ln()).sqrt(),
        observable_fraction * nf / (d * d * d),
    );
    ConditionReport {
        n,
        max_tied_events,
        observable_fraction,
        clt_criterion,
        assignment_nondegenerate: mech.p1() > 0.0 && mech.p1() < 1.0,
        witness_time_exists: time_points.iter().any(|f| f.all_hold),
        time_points,
        note: DIAGNOSTIC_NOTE,
    }
}

pub fn stratified_condition_report(
    strata: &[(u32, &EventGrid, &MechanismSpec)],
) -> StratifiedConditionReport {
    let total_n: u32 = strata.iter().map(|(_, grid, _)| grid.n_units()).sum();
    let mut reports = Vec::with_capacity(strata.len());
    let mut smallest_share = f64::INFINITY;
    for &(stratum, grid, mech) in strata {
        let share = f64::from(grid.n_units()) / f64::from(total_n);
        smallest_share = smallest_share.min(share);
        reports.push(StratumConditionReport {
            stratum,
            share,
            report: condition_report(grid, mech),
        });
    }
    StratifiedConditionReport {
        total_n,
        smallest_share,
        all_strata_have_witness: reports.iter().all(|r| r.report.witness_time_exists),
        strata: reports,
        note: DIAGNOSTIC_NOTE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::DiscreteDist;

    fn no_censoring(p1: f64) -> MechanismSpec {
        MechanismSpec::new(p1, CensoringDist::None, CensoringDist::None).unwrap()
    }

    fn atom_censoring(p1: f64, atoms: Vec<(f64, f64)>) -> MechanismSpec {
        let dist = CensoringDist::Discrete(DiscreteDist::new(atoms).unwrap());
        MechanismSpec::new(p1, dist.clone(), dist).unwrap()
    }

    #[test]
    fn mechanism_rates_blend_arms() {
        // Treated never censored, control always censored before t = 1.
        let mech = MechanismSpec::new(
            0.5,
            CensoringDist::None,
            CensoringDist::Discrete(DiscreteDist::new(vec![(0.5, 1.0)]).unwrap()),
        )
        .unwrap();
        assert_eq!(mech.observable_rate(1.0), 0.5);
        assert_eq!(mech.treated_share(1.0), 1.0);
        // With all mass gone, the share falls back to p1.
        let dead = MechanismSpec::new(
            0.25,
            CensoringDist::Discrete(DiscreteDist::new(vec![(0.5, 1.0)]).unwrap()),
            CensoringDist::Discrete(DiscreteDist::new(vec![(0.5, 1.0)]).unwrap()),
        )
        .unwrap();
        assert_eq!(dead.observable_rate(1.0), 0.0);
        assert_eq!(dead.treated_share(1.0), 0.25);
        assert!(MechanismSpec::new(1.0, CensoringDist::None, CensoringDist::None).is_err());
    }

    #[test]
    fn exact_variance_two_unit_population_is_one_eighth() {
        let grid = EventGrid::from_times(&[1.0, 2.0]).unwrap();
        let mech = no_censoring(0.5);
        assert!((exact_variance_l(&grid, &mech) - 0.125).abs() < 1e-15);
        assert_eq!(exact_mean_u(&grid, &mech), exact_variance_l(&grid, &mech));
        let emp = EmpiricalSurvival::new(grid);
        assert!((asymptotic_variance_approx(&emp, &mech) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn exact_variance_with_ties_matches_hand_sum() {
        let grid = EventGrid::from_times(&[1.0, 2.0, 2.0, 5.0]).unwrap();
        let mech = no_censoring(0.5);
        assert!((exact_variance_l(&grid, &mech) - 17.0 / 48.0).abs() < 1e-15);
    }

    #[test]
    fn exact_and_approximate_agree_without_censoring() {
        // With g = 1 everywhere the finite correction collapses:
        // n^2/(n-1) * (1 - 1/n) = n, so the two sums coincide.
        let grid = EventGrid::from_times(&[0.5, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 9.0]).unwrap();
        for p1 in [0.3, 0.5, 0.7] {
            let mech = no_censoring(p1);
            let exact = exact_variance_l(&grid, &mech);
            let approx = asymptotic_variance_approx(&EmpiricalSurvival::new(grid.clone()), &mech);
            assert!((exact - approx).abs() <= 1e-12 * exact.max(1.0));
        }
    }

    #[test]
    fn censoring_separates_exact_from_approximate() {
        let grid = EventGrid::from_times(&[1.0, 2.0, 3.0]).unwrap();
        let mech = atom_censoring(0.5, vec![(1.5, 0.4), (f64::INFINITY, 0.6)]);
        let exact = exact_variance_l(&grid, &mech);
        let approx = asymptotic_variance_approx(&EmpiricalSurvival::new(grid.clone()), &mech);
        assert!((exact - (1.0 / 6.0 + 0.045)).abs() < 1e-15);
        assert!((approx - (1.0 / 6.0 + 0.075)).abs() < 1e-15);
        // The coarse bound used elsewhere: the gap is below the hazard sum.
        let hazard_sum: f64 = grid.hazard().iter().sum();
        assert!((approx - exact).abs() <= hazard_sum);
    }

    #[test]
    fn variance_term_is_monotone_in_the_observable_rate() {
        // g -> g - (1 - (1-g)^n)/n is nondecreasing on [0, 1].
        for n in [2u32, 3, 5, 17] {
            let mut last = -1.0;
            for i in 0..=1000 {
                let g = f64::from(i) / 1000.0;
                let bracket = g - (1.0 - pow_one_minus(g, n)) / f64::from(n);
                assert!(bracket >= last - 1e-15, "n={n} g={g}");
                assert!(bracket >= -1e-15);
                last = bracket;
            }
        }
    }

    #[test]
    fn pow_one_minus_matches_direct_power() {
        for n in [1u32, 2, 7, 40] {
            for g in [0.0f64, 1e-12, 0.01, 0.3, 0.5, 0.9, 0.999, 1.0] {
                let direct = (1.0 - g).powi(n as i32);
                let exponent_scale =
                    1.0 + f64::from(n) * (1.0 - g).max(f64::MIN_POSITIVE).ln().abs();
                assert!(
                    (pow_one_minus(g, n) - direct).abs()
                        <= 1e-15 * exponent_scale * direct.max(1e-300),
                    "n={n} g={g}"
                );
            }
        }
    }

    #[test]
    fn condition_report_no_censoring_hand_values() {
        let grid = EventGrid::from_times(&[1.0, 2.0, 2.0, 5.0]).unwrap();
        let report = condition_report(&grid, &no_censoring(0.5));
        assert_eq!(report.n, 4);
        assert_eq!(report.max_tied_events, 2);
        assert_eq!(report.observable_fraction, 1.0);
        // min( (1/2) sqrt(4/ln 4), 4/8 ) = 1/2.
        assert!((report.clt_criterion - 0.5).abs() < 1e-15);
        assert!(report.assignment_nondegenerate);
        assert!(report.witness_time_exists);
        assert_eq!(report.time_points.len(), 3);
        assert!(report.time_points[0].all_hold);
        // The last grid time always fails the hazard check.
        assert!(!report.time_points[2].hazard_below_one);
    }

    #[test]
    fn fully_tied_population_has_no_witness_time() {
        let grid = EventGrid::from_times(&[1.0, 1.0]).unwrap();
        let report = condition_report(&grid, &no_censoring(0.5));
        assert_eq!(report.max_tied_events, 2);
        assert!(!report.witness_time_exists);
    }

    #[test]
    fn heavy_censoring_drives_the_criterion_down() {
        let grid = EventGrid::from_times(&(1..=64).map(f64::from).collect::<Vec<_>>()).unwrap();
        let open = condition_report(&grid, &no_censoring(0.5));
        let censored = condition_report(
            &grid,
            &atom_censoring(0.5, vec![(1.5, 0.95), (f64::INFINITY, 0.05)]),
        );
        assert!(censored.observable_fraction < open.observable_fraction);
        assert!(censored.clt_criterion < open.clt_criterion);
        assert!(censored.observable_fraction < 0.05);
        assert!(censored.witness_time_exists);
    }

    #[test]
    fn stratified_report_tracks_shares_and_witnesses() {
        let big = EventGrid::from_times(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let tiny = EventGrid::from_times(&[1.0, 1.0]).unwrap();
        let mech = no_censoring(0.5);
        let report = stratified_condition_report(&[(0, &big, &mech), (4, &tiny, &mech)]);
        assert_eq!(report.total_n, 8);
        assert_eq!(report.smallest_share, 0.25);
        assert_eq!(report.strata.len(), 2);
        assert_eq!(report.strata[1].stratum, 4);
        assert!(!report.all_strata_have_witness);
        assert!(report.strata[0].report.witness_time_exists);
    }
}
