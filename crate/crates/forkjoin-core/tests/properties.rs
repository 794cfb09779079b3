//! Property tests for the model arithmetic, profile serialization, and
//! engine accounting invariants.

use forkjoin_core::engine::{run_simulation, SimConfig};
use forkjoin_core::model::{
    exp_order_stat_mean, order_stat_mean, SlowdownModel, SystemParams, TaskSizeDistribution,
};
use forkjoin_core::model::OrderStatTable;
use forkjoin_core::optimizer::{capacity_bracket, dual_integrand, ReplicationProfile};
use forkjoin_core::policies::build_baseline;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // averaging all order statistics recovers the mean slowdown
    #[test]
    fn exp_order_stats_average_to_mean(r in 1u32..20, mu in 0.2f64..5.0) {
        let avg: f64 = (1..=r).map(|i| exp_order_stat_mean(i, r, mu).unwrap()).sum::<f64>() / r as f64;
        prop_assert!((avg - 1.0 / mu).abs() < 1e-12);
    }

    // order-statistic means are nondecreasing in i and nonincreasing in r
    #[test]
    fn exp_order_stats_monotone(i in 1u32..10, r in 10u32..20, mu in 0.2f64..5.0) {
        let a = exp_order_stat_mean(i, r, mu).unwrap();
        let b = exp_order_stat_mean(i + 1, r, mu).unwrap();
        let c = exp_order_stat_mean(i, r + 1, mu).unwrap();
        prop_assert!(a <= b);
        prop_assert!(c <= a);
    }

    // the same identities hold for the size-based model through quadrature
    #[test]
    fn gamma_order_stats_average_to_mean(x in 0.1f64..6.0, r in 1u32..6) {
        let model = SlowdownModel::gamma(1.0, 1.0, 1e-3).unwrap();
        let avg: f64 = (1..=r)
            .map(|i| order_stat_mean(&model, i, r, x).unwrap())
            .sum::<f64>() / r as f64;
        prop_assert!((avg - 1.0).abs() < 1e-6, "x={x} r={r}: {avg}");
    }

    // for k = 1 the general capacity integrand collapses to
    // r (1 + E[S_(1:r)|x]), and the dual integrand to
    // (1 + E[S_(1:r)|x])(1 + y lambda r) - y
    #[test]
    fn general_k_forms_match_simplified_k1_forms(
        r in 1u32..40,
        x in 0.05f64..8.0,
        y in 0.0f64..5.0,
        lambda in 0.01f64..0.45,
    ) {
        let table = OrderStatTable::new(SlowdownModel::gamma(1.0, 1.0, 1e-3).unwrap());
        let e = order_stat_mean(table.model(), 1, r, x).unwrap();
        let bracket = capacity_bracket(&table, 1, r, x).unwrap();
        prop_assert!((bracket - r as f64 * (1.0 + e)).abs() < 1e-10);
        let f = dual_integrand(&table, 1, lambda, x, y, r).unwrap();
        let simplified = (1.0 + e) * (1.0 + y * lambda * r as f64) - y;
        prop_assert!((f - simplified).abs() < 1e-10);
    }

    // profile CSV serialization round-trips
    #[test]
    fn profile_round_trip(
        xs in proptest::collection::vec(0.01f64..20.0, 1..6),
        splits in proptest::collection::vec((1u32..12, 0.0f64..1.0), 1..6),
    ) {
        let m = xs.len().min(splits.len());
        let w = 1.0 / m as f64;
        let mut grid: Vec<(f64, f64)> = xs[..m].iter().map(|&x| (x, w)).collect();
        grid.sort_by(|a, b| a.0.total_cmp(&b.0));
        grid.dedup_by(|a, b| a.0 == b.0);
        let k = grid.len() as f64;
        for g in grid.iter_mut() {
            g.1 = 1.0 / k;
        }
        let rows: Vec<Vec<(u32, f64)>> = grid
            .iter()
            .zip(&splits)
            .map(|(_, &(r, p))| {
                if p < 1e-3 {
                    vec![(r, 1.0)]
                } else {
                    vec![(r, 1.0 - p), (r + 1, p)]
                }
            })
            .collect();
        let profile = ReplicationProfile {
            k: 1,
            grid,
            rows,
            objective_value: 1.25,
            capacity_usage: 0.5,
            dual_y: 0.1,
            slack_target: 1.0,
            r_max: 13,
            capacity_strictly_below: false,
        };
        profile.validate().unwrap();
        let parsed = ReplicationProfile::from_csv(&profile.to_csv()).unwrap();
        prop_assert_eq!(profile, parsed);
    }

    // engine accounting on random small systems: conservation, exact delay
    // decomposition, work accounting
    #[test]
    fn engine_accounting_invariants(
        seed in 0u64..1000,
        n in 2u32..10,
        k in 1u32..3,
        lambda in 0.05f64..0.42,
    ) {
        prop_assume!(k <= n);
        let params = SystemParams::new(n, k, lambda, 1.0, 0.6).unwrap();
        let sizes = TaskSizeDistribution::exponential(1.0).unwrap();
        let model = SlowdownModel::exponential(1.0).unwrap();
        let policy = build_baseline(&params);
        let cfg = SimConfig::new(300.0, 10.0, seed);
        let res = run_simulation(&params, &sizes, &model, &policy, &cfg).unwrap();
        prop_assert_eq!(res.arrived, res.departed + res.censored);
        for j in &res.jobs {
            prop_assert!(j.queueing_delay >= 0.0);
            prop_assert_eq!(j.delay, j.service_time + j.queueing_delay);
            prop_assert!(j.service_time >= 0.0);
        }
        if res.busy_time_total > 0.0 {
            let rel = (res.busy_time_total - res.replica_service_total).abs() / res.busy_time_total;
            prop_assert!(rel < 1e-6);
        }
    }
}
