//! Variable fixing from optimality conditions and data assumptions.
//!
//! Routing variables that some optimal solution leaves at zero are
//! collected in a [`FixMask`]. Each fixing is attributed to the first rule
//! that produces it, in the order A1, A2, A3, C1a, C1b, C2, C3.
//!
//! The routing-cost rules compare alternative routes by cost only. They
//! preserve the optimum when travel times equal costs with `gamma == alpha`
//! (the benchmark setting) and setup costs do not decrease with the service
//! level; outside that setting the mask is a heuristic reduction.

use std::collections::BTreeSet;
use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::instance::{Instance, RouteKey};
use crate::EPS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum FixRule {
    A1,
    A2,
    A3,
    C1a,
    C1b,
    C2,
    C3,
}

impl FixRule {
    pub const ALL: [FixRule; 7] = [
        FixRule::A1,
        FixRule::A2,
        FixRule::A3,
        FixRule::C1a,
        FixRule::C1b,
        FixRule::C2,
        FixRule::C3,
    ];
}

impl fmt::Display for FixRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Dense record of fixed route and demand-level variables. Routes are
/// addressed by commodity index, hub positions and demand level.
#[derive(Clone, Debug, PartialEq)]
pub struct FixMask {
    commodities: usize,
    hubs: usize,
    levels: usize,
    routes: Vec<Option<FixRule>>,
    beta: Vec<Option<FixRule>>,
}

impl FixMask {
    pub fn empty(inst: &Instance) -> Self {
        Self::with_dims(inst.commodities().len(), inst.hub_count(), inst.demand_level_count())
    }

    pub fn with_dims(commodities: usize, hubs: usize, levels: usize) -> Self {
        Self {
            commodities,
            hubs,
            levels,
            routes: vec![None; commodities * hubs * hubs * levels],
            beta: vec![None; commodities * levels],
        }
    }

    /// Whether the mask was made for an instance of this shape.
    pub fn fits(&self, inst: &Instance) -> bool {
        self.commodities == inst.commodities().len()
            && self.hubs == inst.hub_count()
            && self.levels == inst.demand_level_count()
    }

    #[inline]
    fn route_idx(&self, c: usize, p: usize, q: usize, r: usize) -> usize {
        ((c * self.hubs + p) * self.hubs + q) * self.levels + r
    }

    #[inline]
    pub fn route_rule(&self, c: usize, p: usize, q: usize, r: usize) -> Option<FixRule> {
        self.routes[self.route_idx(c, p, q, r)]
    }

    #[inline]
    pub fn is_route_fixed(&self, c: usize, p: usize, q: usize, r: usize) -> bool {
        self.route_rule(c, p, q, r).is_some()
    }

    /// True when the route is fixed at every demand level.
    pub fn is_path_fixed(&self, c: usize, p: usize, q: usize) -> bool {
        (0..self.levels).all(|r| self.is_route_fixed(c, p, q, r))
    }

    pub fn beta_rule(&self, c: usize, r: usize) -> Option<FixRule> {
        self.beta[c * self.levels + r]
    }

    /// Records a fixing unless the route is already fixed. Returns whether
    /// the route was newly fixed.
    pub fn fix_route(&mut self, c: usize, p: usize, q: usize, r: usize, rule: FixRule) -> bool {
        let idx = self.route_idx(c, p, q, r);
        if self.routes[idx].is_none() {
            self.routes[idx] = Some(rule);
            true
        } else {
            false
        }
    }

    /// Fixes a demand level and, with it, every route at that level.
    pub fn fix_beta(&mut self, c: usize, r: usize, rule: FixRule) {
        let b = &mut self.beta[c * self.levels + r];
        if b.is_none() {
            *b = Some(rule);
        }
        for p in 0..self.hubs {
            for q in 0..self.hubs {
                self.fix_route(c, p, q, r, rule);
            }
        }
    }

    pub fn total_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn fixed_route_count(&self) -> usize {
        self.routes.iter().filter(|r| r.is_some()).count()
    }

    pub fn count_by_rule(&self, rule: FixRule) -> usize {
        self.routes.iter().filter(|r| **r == Some(rule)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.iter().all(Option::is_none) && self.beta.iter().all(Option::is_none)
    }

    /// Fixed routes as node-id keys with their rule.
    pub fn fixed_routes(&self, inst: &Instance) -> Vec<(RouteKey, FixRule)> {
        let mut out = Vec::new();
        for c in 0..self.commodities {
            let com = inst.commodity(c);
            for p in 0..self.hubs {
                for q in 0..self.hubs {
                    for r in 0..self.levels {
                        if let Some(rule) = self.route_rule(c, p, q, r) {
                            out.push((
                                RouteKey {
                                    i: com.origin,
                                    j: com.dest,
                                    k: inst.hub(p).node,
                                    m: inst.hub(q).node,
                                    r,
                                },
                                rule,
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    /// Fixed demand levels as (origin, destination, level) with their rule.
    pub fn fixed_betas(&self, inst: &Instance) -> Vec<((usize, usize, usize), FixRule)> {
        let mut out = Vec::new();
        for c in 0..self.commodities {
            let com = inst.commodity(c);
            for r in 0..self.levels {
                if let Some(rule) = self.beta_rule(c, r) {
                    out.push(((com.origin, com.dest, r), rule));
                }
            }
        }
        out
    }
}

fn keys(inst: &Instance, fixes: impl FnOnce(&mut dyn FnMut(usize, usize, usize, usize))) -> BTreeSet<RouteKey> {
    let mut out = BTreeSet::new();
    fixes(&mut |c, p, q, r| {
        let com = inst.commodity(c);
        out.insert(RouteKey {
            i: com.origin,
            j: com.dest,
            k: inst.hub(p).node,
            m: inst.hub(q).node,
            r,
        });
    });
    out
}

/// (i, k, m) node triples with `c_im <= c_ik + alpha c_km`, `k != m` hubs.
pub fn c1a_triples(inst: &Instance) -> BTreeSet<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..inst.n() {
        for hk in inst.hubs() {
            for hm in inst.hubs() {
                let (k, m) = (hk.node, hm.node);
                if k != m && c1a_holds(inst, i, k, m) {
                    out.insert((i, k, m));
                }
            }
        }
    }
    out
}

fn c1a_holds(inst: &Instance, i: usize, k: usize, m: usize) -> bool {
    inst.cost(i, m) <= inst.cost(i, k) + inst.alpha() * inst.cost(k, m) + EPS
}

fn c1a(inst: &Instance, fix: &mut dyn FnMut(usize, usize, usize, usize)) {
    let levels = inst.demand_level_count();
    let hubs = inst.hubs();
    for (c, com) in inst.commodities().iter().enumerate() {
        let (i, j) = (com.origin, com.dest);
        for (p, hk) in hubs.iter().enumerate() {
            for (q, hm) in hubs.iter().enumerate() {
                if p == q {
                    continue;
                }
                // First leg dominated by going straight to m, or (mirrored)
                // last leg dominated by leaving straight from k.
                if c1a_holds(inst, i, hk.node, hm.node) || c1a_holds(inst, j, hm.node, hk.node) {
                    for r in 0..levels {
                        fix(c, p, q, r);
                    }
                }
            }
        }
    }
}

fn c1b(inst: &Instance, fix: &mut dyn FnMut(usize, usize, usize, usize)) {
    let levels = inst.demand_level_count();
    let hubs = inst.hubs();
    for (c, com) in inst.commodities().iter().enumerate() {
        let (i, j) = (com.origin, com.dest);
        for p in 0..hubs.len() {
            for q in p + 1..hubs.len() {
                let (k, m) = (hubs[p].node, hubs[q].node);
                // Ties fix the (m, k) orientation.
                let (a, b) = if inst.cost(i, k) + inst.cost(j, m) <= inst.cost(i, m) + inst.cost(j, k) + EPS {
                    (q, p)
                } else {
                    (p, q)
                };
                for r in 0..levels {
                    fix(c, a, b, r);
                }
            }
        }
    }
}

fn c2(inst: &Instance, fix: &mut dyn FnMut(usize, usize, usize, usize)) {
    let hubs = inst.hubs();
    for (c, com) in inst.commodities().iter().enumerate() {
        for (p, hk) in hubs.iter().enumerate() {
            for (q, hm) in hubs.iter().enumerate() {
                let cost = inst.route_cost_unchecked(com.origin, com.dest, hk.node, hm.node);
                for (r, lvl) in com.levels.iter().enumerate() {
                    if lvl.revenue - cost <= EPS {
                        fix(c, p, q, r);
                    }
                }
            }
        }
    }
}

fn c3(inst: &Instance, fix: &mut dyn FnMut(usize, usize, usize, usize)) {
    let hubs = inst.hubs();
    for (c, com) in inst.commodities().iter().enumerate() {
        for (p, hk) in hubs.iter().enumerate() {
            for (q, hm) in hubs.iter().enumerate() {
                let mut t = inst.route_time_unchecked(com.origin, com.dest, hk.node, hm.node) + hk.min_transit();
                if p != q {
                    t += hm.min_transit();
                }
                for (r, lvl) in com.levels.iter().enumerate() {
                    if t > lvl.max_time + EPS {
                        fix(c, p, q, r);
                    }
                }
            }
        }
    }
}

/// Routes fixed by either half of the routing-cost condition.
pub fn apply_c1(inst: &Instance) -> BTreeSet<RouteKey> {
    let mut out = keys(inst, |f| c1a(inst, f));
    out.extend(keys(inst, |f| c1b(inst, f)));
    out
}

pub fn apply_c1a(inst: &Instance) -> BTreeSet<RouteKey> {
    keys(inst, |f| c1a(inst, f))
}

pub fn apply_c1b(inst: &Instance) -> BTreeSet<RouteKey> {
    keys(inst, |f| c1b(inst, f))
}

/// Routes with no positive net profit.
pub fn apply_c2(inst: &Instance) -> BTreeSet<RouteKey> {
    keys(inst, |f| c2(inst, f))
}

/// Routes that miss the time limit even with the fastest hub levels.
pub fn apply_c3(inst: &Instance) -> BTreeSet<RouteKey> {
    keys(inst, |f| c3(inst, f))
}

/// Demand levels and routes excluded by the data assumptions, as a mask
/// whose entries are attributed to A1, A2 or A3.
pub fn apply_assumptions(inst: &Instance) -> FixMask {
    let mut mask = FixMask::empty(inst);
    assumptions_into(inst, &mut mask);
    mask
}

fn assumptions_into(inst: &Instance, mask: &mut FixMask) {
    let max_cap = inst
        .hubs()
        .iter()
        .map(|h| h.max_capacity())
        .fold(f64::NEG_INFINITY, f64::max);
    let hubs = inst.hubs();
    for (c, com) in inst.commodities().iter().enumerate() {
        for (r, lvl) in com.levels.iter().enumerate() {
            if lvl.demand <= 0.0 {
                mask.fix_beta(c, r, FixRule::A1);
            }
        }
    }
    for (c, com) in inst.commodities().iter().enumerate() {
        for (r, lvl) in com.levels.iter().enumerate() {
            for (p, hub) in hubs.iter().enumerate() {
                if lvl.demand > hub.max_capacity() + EPS {
                    for q in 0..hubs.len() {
                        mask.fix_route(c, p, q, r, FixRule::A2);
                        mask.fix_route(c, q, p, r, FixRule::A2);
                    }
                }
            }
        }
    }
    for (c, com) in inst.commodities().iter().enumerate() {
        for (r, lvl) in com.levels.iter().enumerate() {
            if lvl.demand > max_cap + EPS {
                mask.fix_beta(c, r, FixRule::A3);
            }
        }
    }
}

/// Outcome of a preprocessing run. Percentages are over all structural
/// route variables, diagonal (single-hub) routes included.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixReport {
    pub alpha: f64,
    pub n: usize,
    pub service_levels: usize,
    pub demand_levels: usize,
    pub total_routes: usize,
    pub fixed_routes: usize,
    pub pct_eliminated: f64,
    pub pct_assumptions: f64,
    pub pct_c1: f64,
    pub pct_c2: f64,
    pub pct_c3: f64,
    pub elapsed_ms: f64,
}

impl FixReport {
    pub const CSV_HEADER: &'static str = "alpha,n,L,R,pctE,pctC1,pctC2,pctC3,elapsed_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.3}",
            self.alpha,
            self.n,
            self.service_levels,
            self.demand_levels,
            self.pct_eliminated,
            self.pct_c1,
            self.pct_c2,
            self.pct_c3,
            self.elapsed_ms
        )
    }
}

/// Runs every rule in attribution order and reports elimination shares.
pub fn preprocess(inst: &Instance) -> (FixMask, FixReport) {
    let start = Instant::now();
    let mut mask = FixMask::empty(inst);
    assumptions_into(inst, &mut mask);
    type RuleFn = fn(&Instance, &mut dyn FnMut(usize, usize, usize, usize));
    let rules: [(FixRule, RuleFn); 4] = [
        (FixRule::C1a, c1a),
        (FixRule::C1b, c1b),
        (FixRule::C2, c2),
        (FixRule::C3, c3),
    ];
    for (rule, f) in rules {
        f(inst, &mut |c, p, q, r| {
            mask.fix_route(c, p, q, r, rule);
        });
    }
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;

    let total = mask.total_routes();
    let pct = |count: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        }
    };
    let fixed = mask.fixed_route_count();
    let report = FixReport {
        alpha: inst.alpha(),
        n: inst.n(),
        service_levels: inst.service_level_count(),
        demand_levels: inst.demand_level_count(),
        total_routes: total,
        fixed_routes: fixed,
        pct_eliminated: pct(fixed),
        pct_assumptions: pct(mask.count_by_rule(FixRule::A1)
            + mask.count_by_rule(FixRule::A2)
            + mask.count_by_rule(FixRule::A3)),
        pct_c1: pct(mask.count_by_rule(FixRule::C1a) + mask.count_by_rule(FixRule::C1b)),
        pct_c2: pct(mask.count_by_rule(FixRule::C2)),
        pct_c3: pct(mask.count_by_rule(FixRule::C3)),
        elapsed_ms,
    };
    log::debug!(
        "preprocess: {fixed}/{total} routes fixed ({:.2}%) in {elapsed_ms:.2} ms",
        report.pct_eliminated
    );
    (mask, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{example_one, Commodity, DemandLevel, Hub, ServiceLevel};

    fn square(n: usize, c: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { c }).collect())
            .collect()
    }

    fn uniform(n: usize, q: f64, h: f64, caps: &[f64]) -> Instance {
        let hubs = (0..n)
            .map(|node| Hub {
                node,
                levels: vec![ServiceLevel {
                    capacity: caps[node],
                    setup_cost: 1.0,
                    transit: 0.0,
                }],
            })
            .collect();
        let coms = vec![Commodity {
            origin: 0,
            dest: 1,
            levels: vec![DemandLevel {
                demand: 10.0,
                revenue: q,
                max_time: h,
            }],
        }];
        Instance::new(n, 0.5, 0.5, &square(n, 2.0), &square(n, 2.0), hubs, coms).unwrap()
    }

    #[test]
    fn c1_tie_fixes_reversed_orientation_only() {
        let inst = uniform(4, 100.0, 1e6, &[50.0; 4]);
        let fixed = apply_c1b(&inst);
        // One orientation per unordered pair: 6 pairs, one commodity, R = 1.
        assert_eq!(fixed.len(), 6);
        let key = |k, m| RouteKey { i: 0, j: 1, k, m, r: 0 };
        // Hubs 2 and 3 tie: only (3, 2) goes.
        assert!(fixed.contains(&key(3, 2)) && !fixed.contains(&key(2, 3)));
        // Hub 1 is the destination, so entering the network at 1 is worse.
        assert!(fixed.contains(&key(1, 2)) && !fixed.contains(&key(2, 1)));
    }

    #[test]
    fn zero_access_cost_fixes_all_two_hub_first_legs() {
        let mut cost = square(4, 2.0);
        cost[0][3] = 0.0;
        cost[3][0] = 0.0;
        let base = uniform(4, 100.0, 1e6, &[50.0; 4]);
        let inst = Instance::new(
            4,
            0.5,
            0.5,
            &cost,
            &cost,
            base.hubs().to_vec(),
            base.commodities().to_vec(),
        )
        .unwrap();
        let fixed = apply_c1a(&inst);
        for k in 0..4 {
            if k != 3 {
                assert!(fixed.contains(&RouteKey {
                    i: 0,
                    j: 1,
                    k,
                    m: 3,
                    r: 0
                }));
            }
        }
    }

    #[test]
    fn c2_zero_revenue_fixes_everything() {
        let inst = uniform(3, 0.0, 1e6, &[50.0; 3]);
        assert_eq!(apply_c2(&inst).len(), 9);
    }

    #[test]
    fn c2_expensive_arc_in_example() {
        let inst = example_one();
        let fixed = apply_c2(&inst);
        assert!(fixed.contains(&RouteKey {
            i: 1,
            j: 3,
            k: 1,
            m: 3,
            r: 0
        }));
        assert!(!fixed.contains(&RouteKey {
            i: 1,
            j: 3,
            k: 1,
            m: 2,
            r: 0
        }));
    }

    #[test]
    fn c3_boundary_is_kept() {
        // Single-hub route 0-2-1: time 2 + 2 = 4, limit exactly 4.
        let inst = uniform(3, 100.0, 4.0, &[50.0; 3]);
        let fixed = apply_c3(&inst);
        assert!(!fixed.contains(&RouteKey {
            i: 0,
            j: 1,
            k: 2,
            m: 2,
            r: 0
        }));
        assert!(fixed.contains(&RouteKey {
            i: 0,
            j: 1,
            k: 2,
            m: 0,
            r: 0
        }));
        let slack = uniform(3, 100.0, 1e9, &[50.0; 3]);
        assert!(apply_c3(&slack).is_empty());
    }

    #[test]
    fn assumptions() {
        let inst = example_one();
        assert!(apply_assumptions(&inst).is_empty());

        let oversized = uniform(3, 100.0, 1e6, &[5.0, 5.0, 5.0]);
        let mask = apply_assumptions(&oversized);
        assert_eq!(mask.beta_rule(0, 0), Some(FixRule::A3));
        assert_eq!(mask.fixed_route_count(), 9);

        let one_small = uniform(3, 100.0, 1e6, &[50.0, 5.0, 50.0]);
        let mask = apply_assumptions(&one_small);
        assert_eq!(mask.beta_rule(0, 0), None);
        let fixed: Vec<_> = mask.fixed_routes(&one_small);
        assert_eq!(fixed.len(), 5);
        assert!(fixed
            .iter()
            .all(|(k, rule)| (k.k == 1 || k.m == 1) && *rule == FixRule::A2));
    }

    #[test]
    fn attribution_is_a_partition() {
        let inst = example_one();
        let (mask, report) = preprocess(&inst);
        let by_rule: usize = FixRule::ALL.iter().map(|&r| mask.count_by_rule(r)).sum();
        assert_eq!(by_rule, mask.fixed_route_count());
        assert_eq!(report.total_routes, 2 * 16);
        let sum = report.pct_assumptions + report.pct_c1 + report.pct_c2 + report.pct_c3;
        assert!((sum - report.pct_eliminated).abs() < 1e-9);
        assert_eq!(report.csv_row().split(',').count(), 9);
    }
}
