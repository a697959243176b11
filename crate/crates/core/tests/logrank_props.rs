//! Property tests pinning the streaming statistic to an independent naive
//! evaluation and to the symmetries the formulas imply.

use lrtest_core::{
    contingency_at, hypergeometric_mean_var, logrank_components, logrank_statistic,
    stratified_logrank, SurvivalRecord,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn records_strategy(max_len: usize) -> impl Strategy<Value = Vec<SurvivalRecord>> {
    prop::collection::vec(
        (1u8..=8, any::<bool>(), any::<bool>(), 0u32..3),
        1..=max_len,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (tick, event, treated, stratum))| SurvivalRecord {
                id: i as u32,
                time: f64::from(tick) / 4.0,
                event,
                group: u8::from(treated),
                stratum,
            })
            .collect()
    })
}

/// Recompute the score and its variance the slow way: one full scan of the
/// records per distinct event time.
fn naive_score_variance(records: &[SurvivalRecord]) -> (f64, f64) {
    let mut event_times: Vec<f64> = records.iter().filter(|r| r.event).map(|r| r.time).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut score = 0.0;
    let mut variance = 0.0;
    for &t in &event_times {
        let table = contingency_at(records, t);
        let (mean, var) =
            hypergeometric_mean_var(table.at_risk, table.events, table.treated_at_risk)
                .expect("tables from data are consistent");
        score += f64::from(table.treated_events) - mean;
        variance += var;
    }
    (score, variance)
}

proptest! {
    #[test]
    fn streaming_matches_naive_per_time_scan(records in records_strategy(12)) {
        let components = logrank_components(&records).unwrap();
        let (naive_score, naive_variance) = naive_score_variance(&records);
        prop_assert!((components.score() - naive_score).abs() <= 1e-12,
            "score {} vs naive {}", components.score(), naive_score);
        prop_assert!((components.total_variance() - naive_variance).abs() <= 1e-12,
            "variance {} vs naive {}", components.total_variance(), naive_variance);
    }

    #[test]
    fn stratified_matches_naive_per_stratum_scan(records in records_strategy(12)) {
        let result = stratified_logrank(&records).unwrap();
        let mut labels: Vec<u32> = records.iter().map(|r| r.stratum).collect();
        labels.sort_unstable();
        labels.dedup();
        let mut score = 0.0;
        let mut variance = 0.0;
        for label in labels {
            let subset: Vec<SurvivalRecord> = records
                .iter()
                .filter(|r| r.stratum == label)
                .copied()
                .collect();
            let (s, v) = naive_score_variance(&subset);
            score += s;
            variance += v;
        }
        prop_assert!((result.score - score).abs() <= 1e-12,
            "score {} vs naive {}", result.score, score);
        prop_assert!((result.variance - variance).abs() <= 1e-12,
            "variance {} vs naive {}", result.variance, variance);
    }

    #[test]
    fn relabeling_groups_negates_the_score(records in records_strategy(12)) {
        let flipped: Vec<SurvivalRecord> = records
            .iter()
            .map(|r| SurvivalRecord { group: 1 - r.group, ..*r })
            .collect();
        let original = logrank_statistic(&records).unwrap();
        let mirrored = logrank_statistic(&flipped).unwrap();
        prop_assert!((original.score + mirrored.score).abs() <= 1e-12,
            "scores {} and {} are not opposite", original.score, mirrored.score);
        let scale = original.variance.abs().max(1.0);
        prop_assert!((original.variance - mirrored.variance).abs() <= 1e-12 * scale,
            "variances {} and {} differ", original.variance, mirrored.variance);
    }

    #[test]
    fn shifting_every_time_changes_nothing(records in records_strategy(12), shift in 1u8..=8) {
        let offset = f64::from(shift) / 2.0;
        let shifted: Vec<SurvivalRecord> = records
            .iter()
            .map(|r| SurvivalRecord { time: r.time + offset, ..*r })
            .collect();
        let original = logrank_components(&records).unwrap();
        let moved = logrank_components(&shifted).unwrap();
        prop_assert_eq!(original.treated_events, moved.treated_events);
        prop_assert_eq!(original.expected, moved.expected);
        prop_assert_eq!(original.variance, moved.variance);
    }

    #[test]
    fn late_censoring_times_are_interchangeable(
        records in records_strategy(11),
        tail in 1u8..=4,
    ) {
        let last_event = records
            .iter()
            .filter(|r| r.event)
            .map(|r| r.time)
            .fold(0.0f64, f64::max);
        let mut first = records.clone();
        let mut second = records;
        let id = first.len() as u32;
        first.push(SurvivalRecord {
            id,
            time: last_event + f64::from(tail),
            event: false,
            group: 1,
            stratum: 0,
        });
        second.push(SurvivalRecord {
            id,
            time: last_event + f64::from(tail) + 10.0,
            event: false,
            group: 1,
            stratum: 0,
        });
        let a = logrank_components(&first).unwrap();
        let b = logrank_components(&second).unwrap();
        prop_assert_eq!(a.times, b.times);
        prop_assert_eq!(a.treated_events, b.treated_events);
        prop_assert_eq!(a.expected, b.expected);
        prop_assert_eq!(a.variance, b.variance);
    }

    #[test]
    fn record_order_is_irrelevant(records in records_strategy(12), seed in any::<u64>()) {
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let original = logrank_statistic(&records).unwrap();
        let reordered = logrank_statistic(&shuffled).unwrap();
        prop_assert_eq!(original.score, reordered.score);
        prop_assert_eq!(original.variance, reordered.variance);
        prop_assert_eq!(original.statistic, reordered.statistic);
        prop_assert_eq!(original.p_value, reordered.p_value);
    }

    #[test]
    fn p_values_shrink_as_the_statistic_grows(step in 0u32..400) {
        let x = f64::from(step) / 40.0;
        let p = lrtest_core::two_sided_p_value(x);
        let q = lrtest_core::two_sided_p_value(x + 0.025);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(q <= p, "p({}) = {} < p({}) = {}", x + 0.025, q, x, p);
    }
}
