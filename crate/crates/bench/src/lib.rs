//! Shared fixture builders for the criterion benchmarks.

use lrtest_core::{
    CensoringDist, CensoringModel, DiscreteDist, FinitePopulation, StratumMechanism, SurvivalRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds `n` deterministic survival records with quarter-unit tied times,
/// roughly 70% events, balanced groups, and `strata` stratum labels.
pub fn tied_survival_records(n: usize, strata: u32, seed: u64) -> Vec<SurvivalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let raw = -(1.0 - rng.random::<f64>()).ln() * 2.0;
            let time = ((raw * 4.0).ceil() / 4.0).max(0.25);
            let event = rng.random_bool(0.7);
            let group = u8::from(rng.random_bool(0.5));
            let stratum = rng.random_range(0..strata);
            SurvivalRecord::in_stratum(u32::try_from(i).unwrap(), time, event, group, stratum)
                .expect("generated record is valid")
        })
        .collect()
}

/// A five-unit population with one tie and discrete treated-arm censoring;
/// enumeration visits 1024 atoms.
pub fn five_unit_population() -> FinitePopulation {
    let treated = CensoringDist::Discrete(
        DiscreteDist::new(vec![(0.75, 0.25), (1.25, 0.25), (f64::INFINITY, 0.5)])
            .expect("atoms sum to one"),
    );
    let mechanism = StratumMechanism::new(
        0.5,
        CensoringModel {
            treated,
            control: CensoringDist::None,
        },
    )
    .expect("p1 is interior");
    FinitePopulation::homogeneous(vec![0.5, 1.0, 1.0, 1.5, 2.0], mechanism)
        .expect("times are valid")
}

/// `count` event times cycling through `distinct` values, so the grid has
/// heavy ties.
pub fn cycling_times(count: usize, distinct: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 0.5 + 0.25 * ((i % distinct) as f64))
        .collect()
}
