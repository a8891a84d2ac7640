mod common;

use common::{all_candidates, close, cross_suite, tiny_suite};
use hlctdp::analysis::{deviation, stats, validate_with};
use hlctdp::oracle::{brute_force, OracleLimits};
use hlctdp::{validate, Instance, Solution};

/// Profit recomputed directly from the instance data.
fn hand_profit(inst: &Instance, sol: &Solution) -> f64 {
    let mut total = 0.0;
    for (&c, s) in &sol.served {
        let com = inst.commodity(c);
        let lvl = com.levels[s.level];
        let route = inst.cost(com.origin, s.first)
            + inst.alpha() * inst.cost(s.first, s.second)
            + inst.cost(s.second, com.dest);
        total += lvl.demand * (lvl.revenue - route);
    }
    for (&k, &l) in &sol.hub_levels {
        total -= inst.hub(inst.hub_position(k).unwrap()).levels[l].setup_cost;
    }
    total
}

#[test]
fn stats_agree_with_objective_on_optima() {
    for inst in tiny_suite() {
        let best = brute_force(&inst, &OracleLimits::default()).unwrap();
        let st = stats(&inst, &best).unwrap();
        assert!(close(st.profit, best.objective, 1e-6));
        assert!(close(hand_profit(&inst, &best), best.objective, 1e-9));
        if st.num_hubs > 0 {
            assert!(close(st.pct_hubs_by_level.iter().sum::<f64>(), 100.0, 1e-9));
            assert!(st.occupancy > 0.0 && st.occupancy <= 100.0 + 1e-9);
        }
        if st.routing_cost + st.setup_cost > 0.0 {
            assert!(close(st.pct_travel_cost + st.pct_install_cost, 100.0, 1e-9));
        }
        if !best.served.is_empty() {
            assert!(close(st.pct_served_by_level.iter().sum::<f64>(), 100.0, 1e-9));
        }
    }
}

#[test]
fn validation_matches_independent_checks() {
    for inst in cross_suite() {
        for cand in all_candidates(&inst) {
            let report = validate_with(&inst, &cand, true);
            assert_eq!(report.ok, report.violations.is_empty());
            assert!(close(hand_profit(&inst, &cand), cand.objective, 1e-9));
            // Consistency only removes solutions.
            if report.ok {
                assert!(validate_with(&inst, &cand, false).ok);
            }
            assert_eq!(stats(&inst, &cand).is_ok(), validate(&inst, &cand).ok);
        }
    }
}

#[test]
fn deviation_examples() {
    assert_eq!(deviation(550.0, 550.0).unwrap(), 0.0);
    assert!((deviation(495.0, 550.0).unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(deviation(600.0, 550.0).unwrap(), 0.0);
    assert!(deviation(1.0, 0.0).is_err());
}
