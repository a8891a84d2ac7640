#![allow(dead_code)]

use hlctdp::generator::random_tiny;
use hlctdp::oracle::{configurations, enumerate_candidates, OracleLimits};
use hlctdp::{Instance, Solution};

/// Seeded tiny instances covering n in {3,4,5}, one or two service levels
/// and one or two demand levels.
pub fn tiny_suite() -> Vec<Instance> {
    (0..36u64)
        .map(|seed| {
            let n = 3 + (seed % 3) as usize;
            let l = 1 + (seed / 3 % 2) as usize;
            let r = 1 + (seed / 6 % 2) as usize;
            let coms = if n == 5 { 3 } else { 4 };
            random_tiny(seed, n, l, r, coms)
        })
        .collect()
}

/// Every candidate assignment of every hub configuration.
pub fn all_candidates(inst: &Instance) -> Vec<Solution> {
    let limits = OracleLimits::default();
    configurations(inst)
        .flat_map(|cfg| enumerate_candidates(inst, &cfg, &limits).unwrap().collect::<Vec<_>>())
        .collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Smaller instances for exhaustive per-candidate checks.
pub fn cross_suite() -> Vec<Instance> {
    (0..12u64)
        .map(|seed| {
            let n = 3 + (seed % 2) as usize;
            let l = 1 + (seed / 2 % 2) as usize;
            let r = 1 + (seed / 4 % 2) as usize;
            random_tiny(1000 + seed, n, l, r, if n == 3 { 3 } else { 2 })
        })
        .collect()
}
