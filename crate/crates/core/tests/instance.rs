use hlctdp::generator::random_tiny;
use hlctdp::instance::{example_one, Commodity, DemandLevel};
use hlctdp::Instance;
use proptest::prelude::*;

fn tiny() -> impl Strategy<Value = Instance> {
    (any::<u64>(), 3usize..6, 1usize..3, 1usize..3, 1usize..7)
        .prop_map(|(seed, n, l, r, c)| random_tiny(seed, n, l, r, c))
}

proptest! {
    #[test]
    fn route_quantities_match_their_definitions(inst in tiny(), a in 0usize..5, b in 0usize..5, k in 0usize..5, m in 0usize..5) {
        let n = inst.n();
        let (a, b, k, m) = (a % n, b % n, k % n, m % n);
        let c = inst.cost(a, k) + inst.alpha() * inst.cost(k, m) + inst.cost(m, b);
        let t = inst.time(a, k) + inst.gamma() * inst.time(k, m) + inst.time(m, b);
        prop_assert!((inst.route_cost(a, b, k, m).unwrap() - c).abs() <= 1e-12);
        prop_assert!((inst.route_time(a, b, k, m).unwrap() - t).abs() <= 1e-12);
        if let Some(ci) = inst.commodity_index(a, b) {
            for r in 0..inst.demand_level_count() {
                let lvl = inst.commodity(ci).levels[r];
                let want = lvl.demand * (lvl.revenue - c);
                prop_assert!((inst.net_profit(a, b, k, m, r).unwrap() - want).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn json_round_trip_is_lossless(inst in tiny()) {
        let back = Instance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn generated_tiny_instances_break_only_capacity_assumptions(inst in tiny()) {
        prop_assert!(inst.validate().iter().all(|v| matches!(v.rule(), "A2" | "A3")));
    }
}

#[test]
fn out_of_range_queries_are_errors() {
    let inst = example_one();
    assert!(inst.route_cost(0, 1, 9, 0).is_err());
    assert!(inst.net_profit(0, 1, 1, 1, 5).is_err());
    assert!(inst.min_transit(inst.n()).is_err());
}

#[test]
fn zero_demand_is_reported_as_a1() {
    let inst = example_one();
    let mut coms: Vec<Commodity> = inst.commodities().to_vec();
    coms[0].levels[0] = DemandLevel {
        demand: 0.0,
        ..coms[0].levels[0]
    };
    let n = inst.n();
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| inst.cost(i, j)).collect()).collect();
    let time: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| inst.time(i, j)).collect()).collect();
    let bad = Instance::new(n, inst.alpha(), inst.gamma(), &cost, &time, inst.hubs().to_vec(), coms).unwrap();
    assert!(bad.validate().iter().any(|v| v.rule() == "A1"));
}
