//! Seeded battery of randomized small populations pushed through the
//! enumeration oracle. Every distributional claim the statistic relies on
//! is checked to near machine precision on each population: conditional
//! hypergeometric tables, the martingale structure of the score, the
//! marginal and conditional laws of the per-time counts, and the
//! three-way variance identity.

use lrtest_core::moments::{asymptotic_variance_approx, exact_variance_l, MechanismSpec};
use lrtest_core::oracle::enumerate;
use lrtest_core::{
    CensoringDist, CensoringModel, DiscreteDist, EmpiricalSurvival, FinitePopulation,
    StratumMechanism,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BATTERY_SEED: u64 = 0x00b5_e55e_d0ba_7701;
const BATTERY_SIZE: usize = 60;

fn random_censoring(rng: &mut ChaCha8Rng) -> CensoringDist {
    if rng.random_bool(0.25) {
        return CensoringDist::None;
    }
    const CENSOR_POOL: [f64; 4] = [0.75, 1.25, 1.75, 2.25];
    let finite_atoms = rng.random_range(1..=3usize);
    let mut order: Vec<usize> = (0..CENSOR_POOL.len()).collect();
    for i in 0..finite_atoms {
        let j = rng.random_range(i..order.len());
        order.swap(i, j);
    }
    let mut values: Vec<f64> = order[..finite_atoms]
        .iter()
        .map(|&i| CENSOR_POOL[i])
        .collect();
    if rng.random_bool(0.7) {
        values.push(f64::INFINITY);
    }
    let weights: Vec<f64> = values.iter().map(|_| rng.random_range(0.25..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut atoms = Vec::with_capacity(values.len());
    let mut assigned = 0.0;
    for (i, (&value, &weight)) in values.iter().zip(&weights).enumerate() {
        let prob = if i + 1 == values.len() {
            1.0 - assigned
        } else {
            weight / total
        };
        assigned += prob;
        atoms.push((value, prob));
    }
    CensoringDist::Discrete(DiscreteDist::new(atoms).expect("atoms are valid"))
}

fn random_population(rng: &mut ChaCha8Rng) -> FinitePopulation {
    const TIME_POOL: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let n = rng.random_range(3..=6usize);
    let p1 = [0.3, 0.5, 0.7][rng.random_range(0..3usize)];
    let times: Vec<f64> = (0..n)
        .map(|_| TIME_POOL[rng.random_range(0..TIME_POOL.len())])
        .collect();
    let mechanism = StratumMechanism::new(
        p1,
        CensoringModel {
            treated: random_censoring(rng),
            control: random_censoring(rng),
        },
    )
    .expect("p1 is interior");
    FinitePopulation::homogeneous(times, mechanism).expect("times are valid")
}

fn spec_of(population: &FinitePopulation) -> MechanismSpec {
    let label = population.stratum_labels()[0];
    MechanismSpec::from_mechanism(population.mechanism(label).expect("label exists"))
}

#[test]
fn battery_populations_pass_every_oracle_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(BATTERY_SEED);
    for case in 0..BATTERY_SIZE {
        let population = random_population(&mut rng);
        let dist = enumerate(&population).expect("population is within the cap");
        assert!(
            (dist.total_probability() - 1.0).abs() < 1e-12,
            "case {case}: probabilities sum to {}",
            dist.total_probability()
        );
        let mech = spec_of(&population);
        for report in [
            dist.check_conditional_hypergeometric(),
            dist.check_martingale(),
            dist.check_marginal_laws(&mech),
        ] {
            assert!(
                report.pass,
                "case {case}: {} deviated by {:e} over {} comparisons",
                report.check, report.max_abs_deviation, report.comparisons
            );
        }
        let identity = dist.variance_identity(&mech);
        assert!(
            identity.pass,
            "case {case}: variance identity deviated by {:e} \
             (enumerated {}, mean denominator {}, closed form {})",
            identity.max_abs_deviation,
            identity.score_variance,
            identity.mean_total_variance,
            identity.closed_form
        );
    }
}

#[test]
fn battery_approximation_error_is_bounded_by_hazard_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(BATTERY_SEED);
    for case in 0..BATTERY_SIZE {
        let population = random_population(&mut rng);
        let mech = spec_of(&population);
        let grid = population.event_grid();
        let exact = exact_variance_l(&grid, &mech);
        let hazard_sum: f64 = grid.hazard().iter().sum();
        let approx = asymptotic_variance_approx(&EmpiricalSurvival::new(grid), &mech);
        assert!(
            (approx - exact).abs() <= hazard_sum + 1e-12,
            "case {case}: |{approx} - {exact}| exceeds hazard sum {hazard_sum}"
        );
    }
}

#[test]
fn battery_without_censoring_makes_approximation_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(BATTERY_SEED);
    for case in 0..BATTERY_SIZE {
        let base = random_population(&mut rng);
        let p1 = spec_of(&base).p1();
        let mechanism = StratumMechanism::new(
            p1,
            CensoringModel {
                treated: CensoringDist::None,
                control: CensoringDist::None,
            },
        )
        .expect("p1 is interior");
        let population = FinitePopulation::homogeneous(base.times().to_vec(), mechanism)
            .expect("times are valid");
        let mech = spec_of(&population);
        let grid = population.event_grid();
        let exact = exact_variance_l(&grid, &mech);
        let approx = asymptotic_variance_approx(&EmpiricalSurvival::new(grid), &mech);
        assert!(
            (approx - exact).abs() <= 1e-12 * exact.max(1.0),
            "case {case}: approx {approx} != exact {exact} despite full observability"
        );
    }
}
