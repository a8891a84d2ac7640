mod common;

use common::{close, tiny_suite};
use hlctdp::generator::{expand, make_base, synthetic_cab, DeltaTable, GenParams};
use hlctdp::instance::{Commodity, DemandLevel, Hub, ServiceLevel};
use hlctdp::oracle::{brute_force, OracleLimits};
use hlctdp::preprocess::{apply_assumptions, c1a_triples, preprocess, FixRule};
use hlctdp::{solve_exact, Instance, SolverConfig};
use proptest::prelude::*;

fn with_costs(n: usize, alpha: f64, cost: &[Vec<f64>]) -> Instance {
    let hubs = (0..n)
        .map(|node| Hub {
            node,
            levels: vec![ServiceLevel {
                capacity: 100.0,
                setup_cost: 1.0,
                transit: 0.0,
            }],
        })
        .collect();
    let coms = vec![Commodity {
        origin: 0,
        dest: 1,
        levels: vec![DemandLevel {
            demand: 1.0,
            revenue: 10.0,
            max_time: 100.0,
        }],
    }];
    Instance::new(n, alpha, alpha, cost, cost, hubs, coms).unwrap()
}

proptest! {
    #[test]
    fn c1a_triples_grow_with_alpha(
        raw in prop::collection::vec(0u32..40, 25),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let n = 5;
        let mut cost = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    cost[i][j] = raw[i * n + j] as f64;
                }
            }
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let small = c1a_triples(&with_costs(n, lo, &cost));
        let large = c1a_triples(&with_costs(n, hi, &cost));
        prop_assert!(small.is_subset(&large));
    }
}

#[test]
fn c1a_inclusion_across_sweep_alphas() {
    let (raw, costs) = synthetic_cab(25, 1);
    let params = GenParams {
        hub_cost_base: costs,
        ..GenParams::default()
    };
    for n in [8, 10, 12] {
        let sets: Vec<_> = [0.2, 0.5, 0.8]
            .iter()
            .map(|&alpha| {
                let base = make_base(&raw, n, alpha, &params).unwrap();
                c1a_triples(&expand(&base, 1, 1, &DeltaTable::default()).unwrap())
            })
            .collect();
        assert!(sets[0].is_subset(&sets[1]) && sets[1].is_subset(&sets[2]));
    }
}

#[test]
fn masked_optimum_equals_oracle_optimum() {
    let cfg = SolverConfig {
        gap_tol: 0.0,
        ..SolverConfig::default()
    };
    for (s, inst) in tiny_suite().iter().enumerate() {
        let oracle = brute_force(inst, &OracleLimits::default()).unwrap();
        let (mask, report) = preprocess(inst);
        let sol = solve_exact(inst, &mask, &cfg).unwrap();
        assert!(close(sol.objective, oracle.objective, 1e-12), "instance {s}");
        for (&c, served) in &sol.served {
            let p = inst.hub_position(served.first).unwrap();
            let q = inst.hub_position(served.second).unwrap();
            assert!(
                !mask.is_route_fixed(c, p, q, served.level),
                "instance {s} uses a fixed route"
            );
        }
        let by_rule: usize = FixRule::ALL.iter().map(|&r| mask.count_by_rule(r)).sum();
        assert_eq!(by_rule, mask.fixed_route_count());
        assert!(report.pct_c1 + report.pct_c2 + report.pct_c3 <= report.pct_eliminated + 1e-9);
    }
}

#[test]
fn undersized_hub_blocks_only_oversized_levels() {
    let n = 3;
    let cost = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    let hub = |node, cap| Hub {
        node,
        levels: vec![ServiceLevel {
            capacity: cap,
            setup_cost: 1.0,
            transit: 0.0,
        }],
    };
    let level = |demand, revenue, max_time| DemandLevel {
        demand,
        revenue,
        max_time,
    };
    let coms = vec![Commodity {
        origin: 0,
        dest: 1,
        levels: vec![level(8.0, 9.0, 10.0), level(3.0, 5.0, 20.0)],
    }];
    let inst = Instance::new(n, 0.5, 0.5, &cost, &cost, vec![hub(1, 5.0), hub(2, 10.0)], coms).unwrap();
    let mask = apply_assumptions(&inst);
    // Level 0 (demand 8) cannot pass hub 1 (capacity 5); level 1 can.
    assert!(mask.is_route_fixed(0, 0, 0, 0));
    assert!(mask.is_route_fixed(0, 0, 1, 0));
    assert!(mask.is_route_fixed(0, 1, 0, 0));
    assert!(!mask.is_route_fixed(0, 1, 1, 0));
    for p in 0..2 {
        for q in 0..2 {
            assert!(!mask.is_route_fixed(0, p, q, 1));
        }
    }
    assert_eq!(mask.beta_rule(0, 0), None);
}
