use std::collections::BTreeSet;

use hlctdp::generator::{
    load_cab, make_base, sweep, synthetic_cab, write_cab, DeltaTable, GenParams, SweepCell, DESK_SIZES, SWEEP_ALPHAS,
};
use hlctdp::Instance;

fn desk_sweep() -> Vec<(SweepCell, Instance)> {
    let (raw, base) = synthetic_cab(25, 1);
    let params = GenParams {
        hub_cost_base: base,
        ..GenParams::default()
    };
    sweep(&raw, &params, &DeltaTable::default(), &SWEEP_ALPHAS, &DESK_SIZES).unwrap()
}

fn ratio_ok(a: f64, b: f64, delta: f64) -> bool {
    (a - delta * b).abs() <= 1e-12 * (delta * b).abs().max(1.0)
}

#[test]
fn sweep_has_54_distinct_valid_instances() {
    let cells = desk_sweep();
    assert_eq!(cells.len(), 54);
    let names: BTreeSet<String> = cells.iter().map(|(c, _)| c.file_name()).collect();
    assert_eq!(names.len(), 54);
    for (cell, inst) in &cells {
        assert!(inst.validate().is_empty(), "{cell:?}: {:?}", inst.validate());
        assert_eq!(SweepCell::parse_file_name(&cell.file_name()), Some(*cell));
        assert_eq!(inst.n(), cell.n);
        assert_eq!(inst.service_level_count(), cell.l);
        assert_eq!(inst.demand_level_count(), cell.r);
    }
}

#[test]
fn level_values_are_delta_multiples_of_the_base() {
    let d = DeltaTable::default();
    let cells = desk_sweep();
    for (cell, inst) in &cells {
        let (_, base) = cells
            .iter()
            .find(|(c, _)| c.alpha == cell.alpha && c.n == cell.n && c.l == 1 && c.r == 1)
            .unwrap();
        for (com, bcom) in inst.commodities().iter().zip(base.commodities()) {
            let b = bcom.levels[0];
            for (lvl, name) in com.levels.iter().zip(inst.demand_level_names()) {
                let delta = match name.as_str() {
                    "Low" => d.low,
                    "Med" => d.med,
                    "High" => d.high,
                    other => panic!("unexpected level {other}"),
                };
                assert!(ratio_ok(lvl.demand, b.demand, delta.w));
                assert!(ratio_ok(lvl.revenue, b.revenue, delta.q));
                assert!(ratio_ok(lvl.max_time, b.max_time, delta.h));
            }
        }
        for (hub, bhub) in inst.hubs().iter().zip(base.hubs()) {
            let b = bhub.levels[0];
            for (lvl, name) in hub.levels.iter().zip(inst.service_level_names()) {
                let delta = match name.as_str() {
                    "Med" => d.service_med,
                    "High" => d.service_high,
                    other => panic!("unexpected level {other}"),
                };
                assert!(ratio_ok(lvl.capacity, b.capacity, delta.w));
                assert!(ratio_ok(lvl.setup_cost, b.setup_cost, delta.g));
                assert!(ratio_ok(lvl.transit, b.transit, delta.h));
            }
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let a: Vec<String> = desk_sweep().iter().map(|(_, i)| i.to_json()).collect();
    let b: Vec<String> = desk_sweep().iter().map(|(_, i)| i.to_json()).collect();
    assert_eq!(a, b);
}

#[test]
fn base_capacity_is_share_of_total_demand() {
    let (raw, costs) = synthetic_cab(25, 3);
    let params = GenParams {
        hub_cost_base: costs,
        ..GenParams::default()
    };
    let base = make_base(&raw, 10, 0.5, &params).unwrap();
    let total: f64 = base.demand.iter().flatten().sum();
    for &w in &base.hub_cap {
        assert!((w - 0.15 * total).abs() <= 1e-9 * total);
    }
}

#[test]
fn cab_text_round_trips() {
    let (raw, _) = synthetic_cab(12, 7);
    let back = load_cab(&write_cab(&raw)).unwrap();
    assert_eq!(back, raw);
}

#[test]
fn oversize_request_is_refused() {
    let (raw, costs) = synthetic_cab(6, 0);
    let params = GenParams {
        hub_cost_base: costs,
        ..GenParams::default()
    };
    assert!(make_base(&raw, 7, 0.5, &params).is_err());
}
