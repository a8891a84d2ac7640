//! Combinatorial solutions: open hubs with their levels and served
//! commodities with their demand level and route.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;

/// How a served commodity is handled: demand level and the two hubs of its
/// route (node ids, equal for a single-hub route).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Served {
    pub level: usize,
    pub first: usize,
    pub second: usize,
}

impl Served {
    pub fn is_two_hub(&self) -> bool {
        self.first != self.second
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SolveStatus {
    Optimal,
    Feasible { gap: f64 },
    InfeasibleInput,
    Empty,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Optimal => write!(f, "optimal"),
            Self::Feasible { gap } => write!(f, "feasible(gap={:.4}%)", gap * 100.0),
            Self::InfeasibleInput => write!(f, "infeasible_input"),
            Self::Empty => write!(f, "empty"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    /// Open hub node -> service level.
    pub hub_levels: BTreeMap<usize, usize>,
    /// Commodity index -> service decision.
    pub served: BTreeMap<usize, Served>,
    pub objective: f64,
    pub revenue_total: f64,
    pub routing_cost: f64,
    pub setup_cost: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Error)]
pub enum SolutionFileError {
    #[error("malformed solution JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("solution references commodity ({0},{1}) which is not in the instance")]
    UnknownCommodity(usize, usize),
    #[error("solution references node {0} outside the instance")]
    UnknownNode(usize),
    #[error("solution uses level 0; levels are numbered from 1")]
    ZeroLevel,
}

impl Solution {
    pub fn empty() -> Self {
        Self {
            hub_levels: BTreeMap::new(),
            served: BTreeMap::new(),
            objective: 0.0,
            revenue_total: 0.0,
            routing_cost: 0.0,
            setup_cost: 0.0,
            status: SolveStatus::Empty,
        }
    }

    /// Builds a solution and fills the objective terms from the instance
    /// data. Index validity is the caller's concern; use
    /// [`crate::analysis::validate`] to check feasibility.
    pub fn from_decisions(
        inst: &Instance,
        hub_levels: BTreeMap<usize, usize>,
        served: BTreeMap<usize, Served>,
        status: SolveStatus,
    ) -> Self {
        let mut sol = Self {
            hub_levels,
            served,
            objective: 0.0,
            revenue_total: 0.0,
            routing_cost: 0.0,
            setup_cost: 0.0,
            status,
        };
        sol.recompute(inst);
        sol
    }

    /// Recomputes revenue, routing cost, setup cost and objective.
    pub fn recompute(&mut self, inst: &Instance) {
        let (rev, route, setup) = objective_terms(inst, &self.hub_levels, &self.served);
        self.revenue_total = rev;
        self.routing_cost = route;
        self.setup_cost = setup;
        self.objective = rev - route - setup;
    }

    pub fn hub_count(&self) -> usize {
        self.hub_levels.len()
    }

    /// Inbound flow per open hub. A hub on a route receives the commodity's
    /// full demand once, whether it is the first, second or only hub.
    pub fn hub_flows(&self, inst: &Instance) -> BTreeMap<usize, f64> {
        let mut flows: BTreeMap<usize, f64> = self.hub_levels.keys().map(|&k| (k, 0.0)).collect();
        for (&c, s) in &self.served {
            let Some(w) = inst
                .commodities()
                .get(c)
                .and_then(|com| com.levels.get(s.level))
                .map(|l| l.demand)
            else {
                continue;
            };
            *flows.entry(s.first).or_insert(0.0) += w;
            if s.second != s.first {
                *flows.entry(s.second).or_insert(0.0) += w;
            }
        }
        flows
    }

    /// Ordering key for ties between equally good solutions: fewer hubs
    /// first, then lexicographically smaller hub sets.
    pub fn tie_key(&self) -> (usize, Vec<usize>) {
        (self.hub_levels.len(), self.hub_levels.keys().copied().collect())
    }

    pub fn to_json(&self, inst: &Instance) -> String {
        let file = SolutionFile {
            status: self.status,
            objective: self.objective,
            revenue_total: self.revenue_total,
            routing_cost: self.routing_cost,
            setup_cost: self.setup_cost,
            hubs: self
                .hub_levels
                .iter()
                .map(|(&k, &l)| HubEntry {
                    id: k + 1,
                    level: l + 1,
                })
                .collect(),
            served: self
                .served
                .iter()
                .map(|(&c, s)| {
                    let com = inst.commodity(c);
                    ServedEntry {
                        i: com.origin + 1,
                        j: com.dest + 1,
                        level: s.level + 1,
                        k: s.first + 1,
                        m: s.second + 1,
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("solution serialisation is infallible")
    }

    /// Reads a solution file; objective terms are recomputed from `inst`
    /// rather than trusted.
    pub fn from_json(text: &str, inst: &Instance) -> Result<Self, SolutionFileError> {
        let file: SolutionFile = serde_json::from_str(text)?;
        let node = |id: usize| {
            if id == 0 || id > inst.n() {
                Err(SolutionFileError::UnknownNode(id))
            } else {
                Ok(id - 1)
            }
        };
        let level = |l: usize| l.checked_sub(1).ok_or(SolutionFileError::ZeroLevel);
        let mut hub_levels = BTreeMap::new();
        for h in file.hubs {
            hub_levels.insert(node(h.id)?, level(h.level)?);
        }
        let mut served = BTreeMap::new();
        for s in file.served {
            let (i, j) = (node(s.i)?, node(s.j)?);
            let c = inst
                .commodity_index(i, j)
                .ok_or(SolutionFileError::UnknownCommodity(s.i, s.j))?;
            served.insert(
                c,
                Served {
                    level: level(s.level)?,
                    first: node(s.k)?,
                    second: node(s.m)?,
                },
            );
        }
        Ok(Self::from_decisions(inst, hub_levels, served, file.status))
    }
}

/// (revenue, routing cost, setup cost), summed in commodity then hub order.
pub(crate) fn objective_terms(
    inst: &Instance,
    hub_levels: &BTreeMap<usize, usize>,
    served: &BTreeMap<usize, Served>,
) -> (f64, f64, f64) {
    let mut revenue = 0.0;
    let mut routing = 0.0;
    for (&c, s) in served {
        let Some(com) = inst.commodities().get(c) else { continue };
        let Some(lvl) = com.levels.get(s.level) else { continue };
        if s.first >= inst.n() || s.second >= inst.n() {
            continue;
        }
        revenue += lvl.demand * lvl.revenue;
        routing += lvl.demand * inst.route_cost_unchecked(com.origin, com.dest, s.first, s.second);
    }
    let mut setup = 0.0;
    for (&k, &l) in hub_levels {
        if let Some(p) = inst.hub_position(k) {
            if let Some(level) = inst.hub(p).levels.get(l) {
                setup += level.setup_cost;
            }
        }
    }
    (revenue, routing, setup)
}

#[derive(Serialize, Deserialize)]
struct HubEntry {
    id: usize,
    level: usize,
}

#[derive(Serialize, Deserialize)]
struct ServedEntry {
    i: usize,
    j: usize,
    level: usize,
    k: usize,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    #[serde(flatten)]
    status: SolveStatus,
    objective: f64,
    revenue_total: f64,
    routing_cost: f64,
    setup_cost: f64,
    hubs: Vec<HubEntry>,
    served: Vec<ServedEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::example_one;

    pub(crate) fn example_optimum(inst: &Instance) -> Solution {
        let hubs = BTreeMap::from([(1, 1), (2, 0)]);
        let served = BTreeMap::from([
            (
                0,
                Served {
                    level: 0,
                    first: 1,
                    second: 1,
                },
            ),
            (
                1,
                Served {
                    level: 0,
                    first: 1,
                    second: 2,
                },
            ),
        ]);
        Solution::from_decisions(inst, hubs, served, SolveStatus::Optimal)
    }

    #[test]
    fn example_objective_terms() {
        let inst = example_one();
        let sol = example_optimum(&inst);
        assert_eq!(sol.revenue_total, 1000.0);
        assert_eq!(sol.routing_cost, 250.0);
        assert_eq!(sol.setup_cost, 200.0);
        assert_eq!(sol.objective, 550.0);
        assert_eq!(sol.hub_flows(&inst), BTreeMap::from([(1, 200.0), (2, 100.0)]));
    }

    #[test]
    fn json_round_trip() {
        let inst = example_one();
        let sol = example_optimum(&inst);
        let text = sol.to_json(&inst);
        assert!(text.contains("\"status\": \"optimal\""));
        let back = Solution::from_json(&text, &inst).unwrap();
        assert_eq!(back, sol);
    }
}
