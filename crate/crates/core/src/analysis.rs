//! First-principles feasibility checking and the solution statistics used in
//! experiment reports.
//!
//! [`validate`] is the semantic authority: the exact solver, the oracle and
//! solutions decoded from external MILP solvers are all checked against it.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::instance::Instance;
use crate::solution::{Served, Solution, SolveStatus};
use crate::EPS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Rule {
    OneLevelPerHub,
    OneLevelPerCommodity,
    OpenHubRouting,
    CapacityInterval,
    TimeLimit,
    Consistency,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{:?}: {}", v.rule, v.detail)?;
        }
        Ok(())
    }
}

/// Whether `flow` fits a hub operated at `level`: at most the level's
/// capacity and, above the first level, strictly more than the capacity of
/// the level below.
#[inline]
pub fn flow_fits_level(flow: f64, floor: f64, capacity: f64, level: usize) -> bool {
    flow <= capacity + EPS && (level == 0 || flow > floor + EPS)
}

/// Travel plus transit time of a route when its hubs run at the given
/// levels.
pub fn service_time(inst: &Instance, c: usize, s: &Served, first_transit: f64, second_transit: f64) -> f64 {
    let com = inst.commodity(c);
    let travel = inst.route_time_unchecked(com.origin, com.dest, s.first, s.second);
    if s.first == s.second {
        travel + first_transit
    } else {
        travel + first_transit + second_transit
    }
}

/// Checks a solution against the problem definition.
pub fn validate(inst: &Instance, sol: &Solution) -> ValidationReport {
    validate_with(inst, sol, true)
}

/// As [`validate`], optionally without the origin/destination consistency
/// rule.
pub fn validate_with(inst: &Instance, sol: &Solution, consistency: bool) -> ValidationReport {
    let mut v = Vec::new();
    let mut push = |rule, detail: String| v.push(Violation { rule, detail });
    let level_count = inst.service_level_count();

    let mut open_ok = std::collections::BTreeMap::new();
    for (&k, &l) in &sol.hub_levels {
        match inst.hub_position(k) {
            None => push(Rule::OneLevelPerHub, format!("node {} is not a potential hub", k + 1)),
            Some(_) if l >= level_count => push(
                Rule::OneLevelPerHub,
                format!("hub {} opened at unknown level {}", k + 1, l + 1),
            ),
            Some(p) => {
                open_ok.insert(k, (p, l));
            }
        }
    }

    let mut flows = vec![0.0; inst.hub_count()];
    for (&c, s) in &sol.served {
        if c >= inst.commodities().len() {
            push(Rule::OneLevelPerCommodity, format!("unknown commodity index {c}"));
            continue;
        }
        let com = inst.commodity(c);
        let (i, j) = (com.origin, com.dest);
        if s.level >= com.levels.len() {
            push(
                Rule::OneLevelPerCommodity,
                format!("({},{}) served at unknown level {}", i + 1, j + 1, s.level + 1),
            );
            continue;
        }
        let first = open_ok.get(&s.first).copied();
        let second = open_ok.get(&s.second).copied();
        let (Some((pf, lf)), Some((ps, ls))) = (first, second) else {
            push(
                Rule::OpenHubRouting,
                format!(
                    "({},{}) routed via {}-{} which is not open",
                    i + 1,
                    j + 1,
                    s.first + 1,
                    s.second + 1
                ),
            );
            continue;
        };
        let lvl = &com.levels[s.level];
        flows[pf] += lvl.demand;
        if pf != ps {
            flows[ps] += lvl.demand;
        }
        let t = service_time(
            inst,
            c,
            s,
            inst.hub(pf).levels[lf].transit,
            inst.hub(ps).levels[ls].transit,
        );
        if t > lvl.max_time + EPS {
            push(
                Rule::TimeLimit,
                format!(
                    "({},{}) takes {t} > H = {} at level {}",
                    i + 1,
                    j + 1,
                    lvl.max_time,
                    s.level + 1
                ),
            );
        }
        if consistency {
            if open_ok.contains_key(&i) && s.first != i {
                push(
                    Rule::Consistency,
                    format!(
                        "origin {} is an open hub but ({},{}) starts at hub {}",
                        i + 1,
                        i + 1,
                        j + 1,
                        s.first + 1
                    ),
                );
            }
            if open_ok.contains_key(&j) && s.second != j {
                push(
                    Rule::Consistency,
                    format!(
                        "destination {} is an open hub but ({},{}) ends at hub {}",
                        j + 1,
                        i + 1,
                        j + 1,
                        s.second + 1
                    ),
                );
            }
        }
    }

    for (&k, &(p, l)) in &open_ok {
        let hub = inst.hub(p);
        let flow = flows[p];
        if !flow_fits_level(flow, hub.capacity_floor(l), hub.levels[l].capacity, l) {
            push(
                Rule::CapacityInterval,
                format!(
                    "hub {} at level {} carries {flow}, outside ({}, {}]",
                    k + 1,
                    l + 1,
                    hub.capacity_floor(l),
                    hub.levels[l].capacity
                ),
            );
        }
    }

    ValidationReport {
        ok: v.is_empty(),
        violations: v,
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("solution is not feasible:\n{0}")]
    Invalid(ValidationReport),
    #[error("best-known objective is zero; deviation is undefined")]
    ZeroBestKnown,
}

/// Table-style summary of a solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionStats {
    pub num_hubs: usize,
    pub service_level_names: Vec<String>,
    /// Share of open hubs per service level, in percent.
    pub pct_hubs_by_level: Vec<f64>,
    /// Routed inbound flow over installed capacity of open hubs, percent.
    pub occupancy: f64,
    pub pct_served: f64,
    pub demand_level_names: Vec<String>,
    /// Share of served commodities per demand level, percent.
    pub pct_served_by_level: Vec<f64>,
    pub profit: f64,
    pub revenue: f64,
    pub routing_cost: f64,
    pub setup_cost: f64,
    pub pct_travel_cost: f64,
    pub pct_install_cost: f64,
    pub pct_two_hub_routes: f64,
}

/// Level names used when the instance carries none.
pub fn default_service_level_names(count: usize) -> Vec<String> {
    match count {
        1 => vec!["Med".into()],
        2 => vec!["Med".into(), "High".into()],
        _ => (1..=count).map(|l| format!("L{l}")).collect(),
    }
}

/// Demand level names when the instance carries none; levels are ordered
/// by increasing service time, so the highest revenue comes first.
pub fn default_demand_level_names(count: usize) -> Vec<String> {
    match count {
        1 => vec!["Med".into()],
        2 => vec!["High".into(), "Med".into()],
        3 => vec!["High".into(), "Med".into(), "Low".into()],
        _ => (1..=count).map(|r| format!("R{r}")).collect(),
    }
}

fn pct(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        100.0 * part / whole
    } else {
        0.0
    }
}

pub fn stats(inst: &Instance, sol: &Solution) -> Result<SolutionStats, AnalysisError> {
    let report = validate(inst, sol);
    if !report.ok {
        return Err(AnalysisError::Invalid(report));
    }
    let l_count = inst.service_level_count();
    let r_count = inst.demand_level_count();
    let service_level_names = if inst.service_level_names().len() == l_count {
        inst.service_level_names().to_vec()
    } else {
        default_service_level_names(l_count)
    };
    let demand_level_names = if inst.demand_level_names().len() == r_count {
        inst.demand_level_names().to_vec()
    } else {
        default_demand_level_names(r_count)
    };

    let num_hubs = sol.hub_levels.len();
    let mut by_level = vec![0usize; l_count];
    let mut installed = 0.0;
    for (&k, &l) in &sol.hub_levels {
        by_level[l] += 1;
        let p = inst.hub_position(k).expect("validated");
        installed += inst.hub(p).levels[l].capacity;
    }
    let flows = sol.hub_flows(inst);
    let used: f64 = flows.values().sum();

    let served = sol.served.len();
    let mut served_by_level = vec![0usize; r_count];
    let mut two_hub = 0usize;
    for s in sol.served.values() {
        served_by_level[s.level] += 1;
        if s.is_two_hub() {
            two_hub += 1;
        }
    }

    let (revenue, routing_cost, setup_cost) = crate::solution::objective_terms(inst, &sol.hub_levels, &sol.served);
    let total_cost = routing_cost + setup_cost;

    Ok(SolutionStats {
        num_hubs,
        service_level_names,
        pct_hubs_by_level: by_level.iter().map(|&c| pct(c as f64, num_hubs as f64)).collect(),
        occupancy: pct(used, installed),
        pct_served: pct(served as f64, inst.commodities().len() as f64),
        demand_level_names,
        pct_served_by_level: served_by_level.iter().map(|&c| pct(c as f64, served as f64)).collect(),
        profit: revenue - routing_cost - setup_cost,
        revenue,
        routing_cost,
        setup_cost,
        pct_travel_cost: pct(routing_cost, total_cost),
        pct_install_cost: pct(setup_cost, total_cost),
        pct_two_hub_routes: pct(two_hub as f64, served as f64),
    })
}

impl SolutionStats {
    fn by_name(names: &[String], values: &[f64], name: &str) -> Option<f64> {
        names.iter().position(|n| n == name).map(|p| values[p])
    }

    pub fn pct_hubs(&self, level_name: &str) -> Option<f64> {
        Self::by_name(&self.service_level_names, &self.pct_hubs_by_level, level_name)
    }

    pub fn pct_served_at(&self, level_name: &str) -> Option<f64> {
        Self::by_name(&self.demand_level_names, &self.pct_served_by_level, level_name)
    }

    pub const CSV_HEADER: &'static str =
        "num_hubs,pct_hubs_M,pct_hubs_H,pct_occupancy,pct_served,pct_served_H,pct_served_M,pct_served_L,profit,pct_travel,pct_install,pct_two_hub";

    /// One CSV row in [`Self::CSV_HEADER`] order; absent levels print `-`.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        format!(
            "{},{},{},{:.2},{:.2},{},{},{},{:.6},{:.2},{:.2},{:.2}",
            self.num_hubs,
            opt(self.pct_hubs("Med")),
            opt(self.pct_hubs("High")),
            self.occupancy,
            self.pct_served,
            opt(self.pct_served_at("High")),
            opt(self.pct_served_at("Med")),
            opt(self.pct_served_at("Low")),
            self.profit,
            self.pct_travel_cost,
            self.pct_install_cost,
            self.pct_two_hub_routes,
        )
    }
}

/// Header of one experiment-table row: the instance cell, solve outcome and
/// [`SolutionStats`] columns.
pub const RUN_CSV_HEADER: &str = "alpha,n,L,R,status,gap,time_s,num_hubs,pct_hubs_M,pct_hubs_H,pct_occupancy,pct_served,pct_served_H,pct_served_M,pct_served_L,profit,pct_travel,pct_install,pct_two_hub";

/// One row under [`RUN_CSV_HEADER`].
pub fn run_csv_row(inst: &Instance, sol: &Solution, stats: &SolutionStats, elapsed_s: f64) -> String {
    let (status, gap) = match sol.status {
        SolveStatus::Feasible { gap } => ("feasible", gap),
        SolveStatus::Optimal => ("optimal", 0.0),
        SolveStatus::Empty => ("empty", 0.0),
        SolveStatus::InfeasibleInput => ("infeasible_input", f64::NAN),
    };
    format!(
        "{},{},{},{},{},{:.6},{:.3},{}",
        inst.alpha(),
        inst.n(),
        inst.service_level_count(),
        inst.demand_level_count(),
        status,
        gap,
        elapsed_s,
        stats.csv_row()
    )
}

/// Percent deviation of `found` below `best_known`, relative to
/// `|best_known|`; zero when `found` is at least as good.
pub fn deviation(found: f64, best_known: f64) -> Result<f64, AnalysisError> {
    if best_known == 0.0 {
        return Err(AnalysisError::ZeroBestKnown);
    }
    Ok((100.0 * (best_known - found) / best_known.abs()).max(0.0))
}
