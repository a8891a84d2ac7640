//! Brute-force enumeration of hub configurations and commodity assignments.
//!
//! Ground truth for the exact solver, the formulations and the fixing rules
//! on tiny instances. Refuses, rather than truncates, enumerations beyond
//! [`OracleLimits`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::analysis::flow_fits_level;
use crate::instance::{Instance, InstanceViolation};
use crate::solution::{Served, Solution, SolveStatus};
use crate::solver::HubConfig;
use crate::EPS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    /// Cap on `(|L|+1)^|K|` hub configurations.
    pub max_configs: u64,
    /// Cap on the assignment product of a single configuration.
    pub max_assignments: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_configs: 1_000_000,
            max_assignments: 10_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{count} hub configurations exceed the limit of {limit}")]
    TooManyConfigs { count: f64, limit: u64 },
    #[error("{count} assignments for one configuration exceed the limit of {limit}")]
    TooManyAssignments { count: f64, limit: u64 },
    #[error("hub configuration is invalid: {0}")]
    BadConfig(String),
    #[error("instance is not valid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidInstance(Vec<InstanceViolation>),
}

/// Every hub configuration: each potential hub closed or open at one level.
/// Configurations are produced in odometer order over hub positions.
pub fn configurations(inst: &Instance) -> impl Iterator<Item = HubConfig> + '_ {
    let nk = inst.hub_count();
    let nl = inst.service_level_count();
    let mut digits = vec![0usize; nk];
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let config: HubConfig = digits
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d > 0)
            .map(|(p, &d)| (inst.hub(p).node, d - 1))
            .collect();
        done = true;
        for d in digits.iter_mut() {
            if *d < nl {
                *d += 1;
                done = false;
                break;
            }
            *d = 0;
        }
        Some(config)
    })
}

fn config_count(inst: &Instance) -> f64 {
    (inst.service_level_count() as f64 + 1.0).powi(inst.hub_count() as i32)
}

fn check_config(inst: &Instance, config: &HubConfig) -> Result<(), OracleError> {
    for (&k, &l) in config {
        if inst.hub_position(k).is_none() || l >= inst.service_level_count() {
            return Err(OracleError::BadConfig(format!("hub {} at level {}", k + 1, l + 1)));
        }
    }
    Ok(())
}

/// Per commodity, every way to handle it under `config`: `None` (not
/// served) followed by each (level, first, second) over open hubs. With
/// `feasible_only`, routes that break the time limit or (when
/// `consistency`) the origin/destination rule are left out.
pub fn commodity_options(
    inst: &Instance,
    config: &HubConfig,
    feasible_only: bool,
    consistency: bool,
) -> Vec<Vec<Option<Served>>> {
    let open: Vec<(usize, f64)> = config
        .iter()
        .filter_map(|(&k, &l)| Some((k, inst.hub(inst.hub_position(k)?).levels.get(l)?.transit)))
        .collect();
    inst.commodities()
        .iter()
        .map(|com| {
            let mut opts = vec![None];
            for (r, lvl) in com.levels.iter().enumerate() {
                for &(k, hk) in &open {
                    for &(m, hm) in &open {
                        if feasible_only {
                            let mut t = inst.route_time_unchecked(com.origin, com.dest, k, m) + hk;
                            if m != k {
                                t += hm;
                            }
                            if t > lvl.max_time + EPS {
                                continue;
                            }
                            if consistency
                                && ((config.contains_key(&com.origin) && k != com.origin)
                                    || (config.contains_key(&com.dest) && m != com.dest))
                            {
                                continue;
                            }
                        }
                        opts.push(Some(Served {
                            level: r,
                            first: k,
                            second: m,
                        }));
                    }
                }
            }
            opts
        })
        .collect()
}

fn product(options: &[Vec<Option<Served>>]) -> f64 {
    options.iter().map(|o| o.len() as f64).product()
}

/// Every commodity assignment over the open hubs of `config`, with no
/// feasibility filtering: time limits, consistency and capacities are left
/// to the caller. Candidates come in odometer order, first commodity
/// fastest.
pub fn enumerate_candidates<'a>(
    inst: &'a Instance,
    config: &HubConfig,
    limits: &OracleLimits,
) -> Result<impl Iterator<Item = Solution> + 'a, OracleError> {
    check_config(inst, config)?;
    let options = commodity_options(inst, config, false, false);
    let count = product(&options);
    if count > limits.max_assignments as f64 {
        return Err(OracleError::TooManyAssignments {
            count,
            limit: limits.max_assignments,
        });
    }
    let config = config.clone();
    let mut digits = vec![0usize; options.len()];
    let mut done = false;
    Ok(std::iter::from_fn(move || {
        if done {
            return None;
        }
        let served: BTreeMap<usize, Served> = digits
            .iter()
            .enumerate()
            .filter_map(|(c, &d)| options[c][d].map(|s| (c, s)))
            .collect();
        done = true;
        for (c, d) in digits.iter_mut().enumerate() {
            if *d + 1 < options[c].len() {
                *d += 1;
                done = false;
                break;
            }
            *d = 0;
        }
        let status = SolveStatus::Feasible { gap: 0.0 };
        Some(Solution::from_decisions(inst, config.clone(), served, status))
    }))
}

/// Exact optimum by full enumeration, with the consistency rule enforced.
pub fn brute_force(inst: &Instance, limits: &OracleLimits) -> Result<Solution, OracleError> {
    brute_force_with(inst, limits, true)
}

/// As [`brute_force`]; `consistency = false` drops the origin/destination
/// rule, which only serves to exhibit the relaxed optimum.
pub fn brute_force_with(inst: &Instance, limits: &OracleLimits, consistency: bool) -> Result<Solution, OracleError> {
    let bad: Vec<InstanceViolation> = inst
        .validate()
        .into_iter()
        .filter(|v| !matches!(v.rule(), "A2" | "A3"))
        .collect();
    if !bad.is_empty() {
        return Err(OracleError::InvalidInstance(bad));
    }
    let count = config_count(inst);
    if count > limits.max_configs as f64 {
        return Err(OracleError::TooManyConfigs {
            count,
            limit: limits.max_configs,
        });
    }
    // Check every configuration's size before doing any work.
    let all: Vec<(HubConfig, Vec<Vec<Option<Served>>>)> = configurations(inst)
        .map(|cfg| {
            let opts = commodity_options(inst, &cfg, true, consistency);
            (cfg, opts)
        })
        .collect();
    if let Some(worst) = all.iter().map(|(_, o)| product(o)).reduce(f64::max) {
        if worst > limits.max_assignments as f64 {
            return Err(OracleError::TooManyAssignments {
                count: worst,
                limit: limits.max_assignments,
            });
        }
    }

    let mut best: Option<Solution> = None;
    for (config, options) in all {
        for sol in config_optima(inst, &config, &options) {
            let better = match &best {
                None => true,
                Some(b) => {
                    sol.objective > b.objective + EPS
                        || (sol.objective >= b.objective - EPS && sol.tie_key() < b.tie_key())
                }
            };
            if better {
                best = Some(sol);
            }
        }
    }
    let mut sol = best.unwrap_or_else(Solution::empty);
    sol.status = if inst.commodities().is_empty() || inst.hub_count() == 0 {
        SolveStatus::Empty
    } else {
        SolveStatus::Optimal
    };
    Ok(sol)
}

/// Best assignment for a fixed hub configuration, or `None` when no
/// assignment meets the capacity intervals. Ties are broken by
/// enumeration order.
pub fn best_for_config(
    inst: &Instance,
    config: &HubConfig,
    consistency: bool,
    limits: &OracleLimits,
) -> Result<Option<Solution>, OracleError> {
    check_config(inst, config)?;
    let options = commodity_options(inst, config, true, consistency);
    let count = product(&options);
    if count > limits.max_assignments as f64 {
        return Err(OracleError::TooManyAssignments {
            count,
            limit: limits.max_assignments,
        });
    }
    Ok(config_optima(inst, config, &options).into_iter().next())
}

fn config_optima(inst: &Instance, config: &HubConfig, options: &[Vec<Option<Served>>]) -> Vec<Solution> {
    let mut search = ConfigSearch::new(inst, config, options);
    search.run(0, 0.0);
    search
        .optima
        .into_iter()
        .map(|served| Solution::from_decisions(inst, config.clone(), served, SolveStatus::Optimal))
        .collect()
}

/// Depth-first enumeration of one configuration's assignments, pruning only
/// on exceeded upper capacities and on a trivially valid profit bound.
struct ConfigSearch<'a> {
    inst: &'a Instance,
    options: &'a [Vec<Option<Served>>],
    /// Open hub node -> (floor, capacity, level).
    hubs: BTreeMap<usize, (f64, f64, usize)>,
    flows: BTreeMap<usize, f64>,
    choice: Vec<usize>,
    /// Best profit still obtainable from commodities `c..`.
    suffix: Vec<f64>,
    best_profit: f64,
    optima: Vec<BTreeMap<usize, Served>>,
}

impl<'a> ConfigSearch<'a> {
    fn new(inst: &'a Instance, config: &HubConfig, options: &'a [Vec<Option<Served>>]) -> Self {
        let hubs = config
            .iter()
            .map(|(&k, &l)| {
                let hub = inst.hub(inst.hub_position(k).expect("checked config"));
                (k, (hub.capacity_floor(l), hub.levels[l].capacity, l))
            })
            .collect();
        let mut suffix = vec![0.0; options.len() + 1];
        for c in (0..options.len()).rev() {
            let best = options[c]
                .iter()
                .flatten()
                .map(|s| profit(inst, c, s))
                .fold(0.0, f64::max);
            suffix[c] = suffix[c + 1] + best;
        }
        Self {
            inst,
            options,
            hubs,
            flows: config.keys().map(|&k| (k, 0.0)).collect(),
            choice: vec![0; options.len()],
            suffix,
            best_profit: f64::NEG_INFINITY,
            optima: Vec::new(),
        }
    }

    fn run(&mut self, c: usize, profit_so_far: f64) {
        if profit_so_far + self.suffix[c] < self.best_profit - EPS {
            return;
        }
        if c == self.options.len() {
            let fits = self
                .hubs
                .iter()
                .all(|(k, &(floor, cap, l))| flow_fits_level(self.flows[k], floor, cap, l));
            if !fits {
                return;
            }
            let served: BTreeMap<usize, Served> = self
                .choice
                .iter()
                .enumerate()
                .filter_map(|(c, &d)| self.options[c][d].map(|s| (c, s)))
                .collect();
            if profit_so_far > self.best_profit + EPS {
                self.best_profit = profit_so_far;
                self.optima.clear();
            }
            // Ties within the tolerance are all kept; the caller picks.
            if profit_so_far >= self.best_profit - EPS {
                self.optima.push(served);
            }
            return;
        }
        for d in 0..self.options[c].len() {
            self.choice[c] = d;
            let Some(s) = self.options[c][d] else {
                self.run(c + 1, profit_so_far);
                continue;
            };
            let w = self.inst.commodity(c).levels[s.level].demand;
            let hubs: &[usize] = if s.first == s.second {
                &[s.first][..]
            } else {
                &[s.first, s.second][..]
            };
            let fits = hubs.iter().all(|k| self.flows[k] + w <= self.hubs[k].1 + EPS);
            if !fits {
                continue;
            }
            for k in hubs {
                *self.flows.get_mut(k).unwrap() += w;
            }
            self.run(c + 1, profit_so_far + profit(self.inst, c, &s));
            for k in hubs {
                *self.flows.get_mut(k).unwrap() -= w;
            }
        }
        self.choice[c] = 0;
    }
}

fn profit(inst: &Instance, c: usize, s: &Served) -> f64 {
    inst.net_profit_unchecked(c, s.first, s.second, s.level)
}
