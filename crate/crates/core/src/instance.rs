//! Problem data for the hub location problem and the route quantities derived
//! from it.
//!
//! Node, hub, level and commodity indices are 0-based in memory. Every file
//! format and report uses 1-based numbering, and the conversion happens in
//! [`InstanceFile`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::EPS;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("{what} matrix is ragged: row {row} has {len} entries, expected {n}")]
    Ragged {
        what: &'static str,
        row: usize,
        len: usize,
        n: usize,
    },
    #[error("{what} matrix has {rows} rows, expected {n}")]
    RowCount { what: &'static str, rows: usize, n: usize },
    #[error("node index {index} out of range (n = {n})")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("demand level {level} out of range (|R| = {count})")]
    LevelOutOfRange { level: usize, count: usize },
    #[error("node {0} is not a potential hub")]
    NotAHub(usize),
    #[error("hub {node} has {got} service levels, expected {expected}")]
    ServiceLevelCount { node: usize, got: usize, expected: usize },
    #[error("commodity ({i},{j}) has {got} demand levels, expected {expected}")]
    DemandLevelCount {
        i: usize,
        j: usize,
        got: usize,
        expected: usize,
    },
    #[error("commodity ({0},{0}) has identical endpoints")]
    SelfLoop(usize),
    #[error("duplicate commodity ({0},{1})")]
    DuplicateCommodity(usize, usize),
    #[error("duplicate hub at node {0}")]
    DuplicateHub(usize),
    #[error("instance has no service levels")]
    NoServiceLevels,
    #[error("instance has no demand levels")]
    NoDemandLevels,
    #[error("{0} must be finite")]
    NotFinite(&'static str),
    #[error("malformed instance JSON: {0}")]
    Json(String),
}

/// Capacity, setup cost and transit time of a hub operated at one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceLevel {
    pub capacity: f64,
    pub setup_cost: f64,
    pub transit: f64,
}

/// Volume, unit revenue and maximum service time of a commodity served at
/// one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandLevel {
    pub demand: f64,
    pub revenue: f64,
    pub max_time: f64,
}

/// A potential hub location with its service levels, ordered by capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct Hub {
    pub node: usize,
    pub levels: Vec<ServiceLevel>,
}

impl Hub {
    pub fn max_capacity(&self) -> f64 {
        self.levels.last().map_or(0.0, |l| l.capacity)
    }

    /// Capacity of the level below `level`; zero for the first level.
    pub fn capacity_floor(&self, level: usize) -> f64 {
        if level == 0 {
            0.0
        } else {
            self.levels[level - 1].capacity
        }
    }

    pub fn min_transit(&self) -> f64 {
        self.levels.iter().map(|l| l.transit).fold(f64::INFINITY, f64::min)
    }
}

/// An origin-destination pair with its demand levels, ordered by maximum
/// service time.
#[derive(Clone, Debug, PartialEq)]
pub struct Commodity {
    pub origin: usize,
    pub dest: usize,
    pub levels: Vec<DemandLevel>,
}

/// A route variable: commodity `(i, j)` at demand level `r` via first hub `k`
/// and second hub `m` (`k == m` for single-hub routes). All node ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RouteKey {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub m: usize,
    pub r: usize,
}

impl fmt::Display for RouteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "x[{},{},{},{}]^{}",
            self.i + 1,
            self.j + 1,
            self.k + 1,
            self.m + 1,
            self.r + 1
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    n: usize,
    alpha: f64,
    gamma: f64,
    cost: Vec<f64>,
    time: Vec<f64>,
    hubs: Vec<Hub>,
    commodities: Vec<Commodity>,
    hub_pos: Vec<Option<usize>>,
    service_level_names: Vec<String>,
    demand_level_names: Vec<String>,
}

fn flatten(what: &'static str, n: usize, m: &[Vec<f64>]) -> Result<Vec<f64>, InstanceError> {
    if m.len() != n {
        return Err(InstanceError::RowCount { what, rows: m.len(), n });
    }
    let mut out = Vec::with_capacity(n * n);
    for (row, r) in m.iter().enumerate() {
        if r.len() != n {
            return Err(InstanceError::Ragged {
                what,
                row,
                len: r.len(),
                n,
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::NotFinite(what));
        }
        out.extend_from_slice(r);
    }
    Ok(out)
}

impl Instance {
    /// Builds an instance, checking structural shape only. Semantic rules
    /// (level monotonicity, positive demand, capacity assumptions) are
    /// reported by [`Instance::validate`].
    pub fn new(
        n: usize,
        alpha: f64,
        gamma: f64,
        cost: &[Vec<f64>],
        time: &[Vec<f64>],
        hubs: Vec<Hub>,
        commodities: Vec<Commodity>,
    ) -> Result<Self, InstanceError> {
        if !alpha.is_finite() {
            return Err(InstanceError::NotFinite("alpha"));
        }
        if !gamma.is_finite() {
            return Err(InstanceError::NotFinite("gamma"));
        }
        let cost = flatten("cost", n, cost)?;
        let time = flatten("time", n, time)?;

        let mut hub_pos = vec![None; n];
        let level_count = hubs.first().map_or(0, |h| h.levels.len());
        for (p, h) in hubs.iter().enumerate() {
            if h.node >= n {
                return Err(InstanceError::NodeOutOfRange { index: h.node, n });
            }
            if hub_pos[h.node].is_some() {
                return Err(InstanceError::DuplicateHub(h.node));
            }
            if h.levels.len() != level_count {
                return Err(InstanceError::ServiceLevelCount {
                    node: h.node,
                    got: h.levels.len(),
                    expected: level_count,
                });
            }
            hub_pos[h.node] = Some(p);
        }
        if !hubs.is_empty() && level_count == 0 {
            return Err(InstanceError::NoServiceLevels);
        }

        let demand_count = commodities.first().map_or(0, |c| c.levels.len());
        let mut seen = std::collections::HashSet::new();
        for c in &commodities {
            for &x in &[c.origin, c.dest] {
                if x >= n {
                    return Err(InstanceError::NodeOutOfRange { index: x, n });
                }
            }
            if c.origin == c.dest {
                return Err(InstanceError::SelfLoop(c.origin));
            }
            if !seen.insert((c.origin, c.dest)) {
                return Err(InstanceError::DuplicateCommodity(c.origin, c.dest));
            }
            if c.levels.len() != demand_count {
                return Err(InstanceError::DemandLevelCount {
                    i: c.origin,
                    j: c.dest,
                    got: c.levels.len(),
                    expected: demand_count,
                });
            }
        }
        if !commodities.is_empty() && demand_count == 0 {
            return Err(InstanceError::NoDemandLevels);
        }

        Ok(Self {
            n,
            alpha,
            gamma,
            cost,
            time,
            hubs,
            commodities,
            hub_pos,
            service_level_names: Vec::new(),
            demand_level_names: Vec::new(),
        })
    }

    /// Attaches display names to service and demand levels ("Med", "High").
    pub fn with_level_names(mut self, service: Vec<String>, demand: Vec<String>) -> Self {
        self.service_level_names = service;
        self.demand_level_names = demand;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn hubs(&self) -> &[Hub] {
        &self.hubs
    }
    pub fn hub(&self, pos: usize) -> &Hub {
        &self.hubs[pos]
    }
    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }
    pub fn commodity(&self, c: usize) -> &Commodity {
        &self.commodities[c]
    }
    /// Position of `node` in the hub list, if it is a potential hub.
    pub fn hub_position(&self, node: usize) -> Option<usize> {
        self.hub_pos.get(node).copied().flatten()
    }
    pub fn commodity_index(&self, i: usize, j: usize) -> Option<usize> {
        self.commodities.iter().position(|c| c.origin == i && c.dest == j)
    }
    /// |K|
    pub fn hub_count(&self) -> usize {
        self.hubs.len()
    }
    /// |L|
    pub fn service_level_count(&self) -> usize {
        self.hubs.first().map_or(0, |h| h.levels.len())
    }
    /// |R|
    pub fn demand_level_count(&self) -> usize {
        self.commodities.first().map_or(0, |c| c.levels.len())
    }
    pub fn service_level_names(&self) -> &[String] {
        &self.service_level_names
    }
    pub fn demand_level_names(&self) -> &[String] {
        &self.demand_level_names
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.n + j]
    }
    #[inline]
    pub fn time(&self, i: usize, j: usize) -> f64 {
        self.time[i * self.n + j]
    }

    fn check_nodes(&self, nodes: &[usize]) -> Result<(), InstanceError> {
        match nodes.iter().find(|&&x| x >= self.n) {
            Some(&index) => Err(InstanceError::NodeOutOfRange { index, n: self.n }),
            None => Ok(()),
        }
    }

    /// Unit routing cost `c_ik + alpha c_km + c_mj`.
    pub fn route_cost(&self, i: usize, j: usize, k: usize, m: usize) -> Result<f64, InstanceError> {
        self.check_nodes(&[i, j, k, m])?;
        Ok(self.route_cost_unchecked(i, j, k, m))
    }

    #[inline]
    pub(crate) fn route_cost_unchecked(&self, i: usize, j: usize, k: usize, m: usize) -> f64 {
        self.cost(i, k) + self.alpha * self.cost(k, m) + self.cost(m, j)
    }

    /// Travel time `t_ik + gamma t_km + t_mj`, hub transit excluded.
    pub fn route_time(&self, i: usize, j: usize, k: usize, m: usize) -> Result<f64, InstanceError> {
        self.check_nodes(&[i, j, k, m])?;
        Ok(self.route_time_unchecked(i, j, k, m))
    }

    #[inline]
    pub(crate) fn route_time_unchecked(&self, i: usize, j: usize, k: usize, m: usize) -> f64 {
        self.time(i, k) + self.gamma * self.time(k, m) + self.time(m, j)
    }

    /// Net profit `w^r (q^r - C_ijkm)` of serving `(i, j)` at level `r` via
    /// `k`, `m`.
    pub fn net_profit(&self, i: usize, j: usize, k: usize, m: usize, r: usize) -> Result<f64, InstanceError> {
        self.check_nodes(&[i, j, k, m])?;
        let c = self.commodity_index(i, j).ok_or(InstanceError::NodeOutOfRange {
            index: i.max(j),
            n: self.n,
        })?;
        let count = self.demand_level_count();
        if r >= count {
            return Err(InstanceError::LevelOutOfRange { level: r, count });
        }
        Ok(self.net_profit_unchecked(c, k, m, r))
    }

    #[inline]
    pub(crate) fn net_profit_unchecked(&self, c: usize, k: usize, m: usize, r: usize) -> f64 {
        let com = &self.commodities[c];
        let lvl = &com.levels[r];
        lvl.demand * (lvl.revenue - self.route_cost_unchecked(com.origin, com.dest, k, m))
    }

    /// Smallest transit time over the service levels of hub node `k`.
    pub fn min_transit(&self, k: usize) -> Result<f64, InstanceError> {
        let p = self.hub_position(k).ok_or(InstanceError::NotAHub(k))?;
        Ok(self.hubs[p].min_transit())
    }

    /// Every rule violated by this instance; empty when the instance is
    /// usable by the formulations, the preprocessing and the solvers.
    pub fn validate(&self) -> Vec<InstanceViolation> {
        use InstanceViolation as V;
        let mut out = Vec::new();
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for (what, v) in [("cost", self.cost(i, j)), ("time", self.time(i, j))] {
                    if v < 0.0 {
                        out.push(V::Negative {
                            what: format!("{what}[{}][{}]", i + 1, j + 1),
                            value: v,
                        });
                    } else if i == j && v.abs() > EPS {
                        out.push(V::NonZeroDiagonal {
                            what: what.to_string(),
                            node: i,
                        });
                    }
                }
            }
        }

        for hub in &self.hubs {
            let mut prev = ServiceLevel {
                capacity: 0.0,
                setup_cost: 0.0,
                transit: f64::NEG_INFINITY,
            };
            for (l, lvl) in hub.levels.iter().enumerate() {
                if lvl.capacity <= prev.capacity + EPS {
                    out.push(V::CapacityNotIncreasing {
                        hub: hub.node,
                        level: l,
                    });
                }
                if lvl.transit < prev.transit - EPS {
                    out.push(V::TransitDecreasing {
                        hub: hub.node,
                        level: l,
                    });
                }
                if lvl.setup_cost < 0.0 || lvl.transit < 0.0 {
                    out.push(V::Negative {
                        what: format!("hub {} level {}", hub.node + 1, l + 1),
                        value: lvl.setup_cost.min(lvl.transit),
                    });
                }
                prev = *lvl;
            }
        }

        let max_cap = self
            .hubs
            .iter()
            .map(Hub::max_capacity)
            .fold(f64::NEG_INFINITY, f64::max);
        for com in &self.commodities {
            let (i, j) = (com.origin, com.dest);
            let mut prev_h = 0.0;
            let mut prev_q = f64::INFINITY;
            for (r, lvl) in com.levels.iter().enumerate() {
                if lvl.max_time <= prev_h + EPS {
                    out.push(V::TimeNotIncreasing { i, j, level: r });
                }
                if lvl.revenue > prev_q + EPS {
                    out.push(V::RevenueIncreasing { i, j, level: r });
                }
                if lvl.revenue < 0.0 {
                    out.push(V::Negative {
                        what: format!("q[{}][{}][{}]", i + 1, j + 1, r + 1),
                        value: lvl.revenue,
                    });
                }
                prev_h = lvl.max_time;
                prev_q = lvl.revenue;

                if lvl.demand <= 0.0 {
                    out.push(V::A1 { i, j, level: r });
                    continue;
                }
                for hub in &self.hubs {
                    if lvl.demand > hub.max_capacity() + EPS {
                        out.push(V::A2 {
                            i,
                            j,
                            level: r,
                            hub: hub.node,
                        });
                    }
                }
                if !self.hubs.is_empty() && lvl.demand > max_cap + EPS {
                    out.push(V::A3 { i, j, level: r });
                }
            }
        }
        out
    }

    /// Parses the JSON exchange format.
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| InstanceError::Json(e.to_string()))?;
        file.into_instance()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from_instance(self)).expect("instance serialisation is infallible")
    }
}

/// A broken instance rule. Indices are 0-based; `Display` prints them
/// 1-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum InstanceViolation {
    /// Zero or negative demand at a level.
    A1 {
        i: usize,
        j: usize,
        level: usize,
    },
    /// Demand at a level exceeds the largest capacity of one hub.
    A2 {
        i: usize,
        j: usize,
        level: usize,
        hub: usize,
    },
    /// Demand at a level exceeds the largest capacity of every hub.
    A3 {
        i: usize,
        j: usize,
        level: usize,
    },
    CapacityNotIncreasing {
        hub: usize,
        level: usize,
    },
    TransitDecreasing {
        hub: usize,
        level: usize,
    },
    TimeNotIncreasing {
        i: usize,
        j: usize,
        level: usize,
    },
    RevenueIncreasing {
        i: usize,
        j: usize,
        level: usize,
    },
    NonZeroDiagonal {
        what: String,
        node: usize,
    },
    Negative {
        what: String,
        value: f64,
    },
}

impl InstanceViolation {
    pub fn rule(&self) -> &'static str {
        match self {
            Self::A1 { .. } => "A1",
            Self::A2 { .. } => "A2",
            Self::A3 { .. } => "A3",
            Self::CapacityNotIncreasing { .. }
            | Self::TransitDecreasing { .. }
            | Self::TimeNotIncreasing { .. }
            | Self::RevenueIncreasing { .. } => "monotonicity",
            Self::NonZeroDiagonal { .. } => "diagonal",
            Self::Negative { .. } => "nonnegativity",
        }
    }
}

impl fmt::Display for InstanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::A1 { i, j, level } => {
                write!(f, "A1: w[{}][{}][{}] is not positive", i + 1, j + 1, level + 1)
            }
            Self::A2 { i, j, level, hub } => write!(
                f,
                "A2: w[{}][{}][{}] exceeds the top capacity of hub {}",
                i + 1,
                j + 1,
                level + 1,
                hub + 1
            ),
            Self::A3 { i, j, level } => write!(
                f,
                "A3: w[{}][{}][{}] exceeds the top capacity of every hub",
                i + 1,
                j + 1,
                level + 1
            ),
            Self::CapacityNotIncreasing { hub, level } => write!(
                f,
                "monotonicity: W[{}][{}] does not exceed the previous level",
                hub + 1,
                level + 1
            ),
            Self::TransitDecreasing { hub, level } => write!(
                f,
                "monotonicity: h[{}][{}] is below the previous level",
                hub + 1,
                level + 1
            ),
            Self::TimeNotIncreasing { i, j, level } => write!(
                f,
                "monotonicity: H[{}][{}][{}] does not exceed the previous level",
                i + 1,
                j + 1,
                level + 1
            ),
            Self::RevenueIncreasing { i, j, level } => write!(
                f,
                "monotonicity: q[{}][{}][{}] exceeds the previous level",
                i + 1,
                j + 1,
                level + 1
            ),
            Self::NonZeroDiagonal { what, node } => {
                write!(f, "diagonal: {what}[{0}][{0}] is not zero", node + 1)
            }
            Self::Negative { what, value } => write!(f, "nonnegativity: {what} = {value}"),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HubFile {
    id: usize,
    #[serde(rename = "W")]
    capacity: Vec<f64>,
    #[serde(rename = "G")]
    setup_cost: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LevelFile {
    w: f64,
    q: f64,
    #[serde(rename = "H")]
    max_time: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CommodityFile {
    i: usize,
    j: usize,
    levels: Vec<LevelFile>,
}

/// On-disk layout of an instance (1-based node ids).
#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    n: usize,
    alpha: f64,
    gamma: f64,
    cost: Vec<Vec<f64>>,
    time: Vec<Vec<f64>>,
    hubs: Vec<HubFile>,
    commodities: Vec<CommodityFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    service_levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    demand_levels: Vec<String>,
}

fn to_zero_based(id: usize, n: usize) -> Result<usize, InstanceError> {
    if id == 0 || id > n {
        Err(InstanceError::NodeOutOfRange { index: id, n })
    } else {
        Ok(id - 1)
    }
}

impl InstanceFile {
    fn into_instance(self) -> Result<Instance, InstanceError> {
        let n = self.n;
        let mut hubs = Vec::with_capacity(self.hubs.len());
        for h in self.hubs {
            let node = to_zero_based(h.id, n)?;
            let count = h.capacity.len();
            if h.setup_cost.len() != count || h.h.len() != count {
                return Err(InstanceError::Json(format!(
                    "hub {} has W/G/h arrays of different lengths",
                    h.id
                )));
            }
            let levels = (0..count)
                .map(|l| ServiceLevel {
                    capacity: h.capacity[l],
                    setup_cost: h.setup_cost[l],
                    transit: h.h[l],
                })
                .collect();
            hubs.push(Hub { node, levels });
        }
        let mut commodities = Vec::with_capacity(self.commodities.len());
        for c in self.commodities {
            commodities.push(Commodity {
                origin: to_zero_based(c.i, n)?,
                dest: to_zero_based(c.j, n)?,
                levels: c
                    .levels
                    .into_iter()
                    .map(|l| DemandLevel {
                        demand: l.w,
                        revenue: l.q,
                        max_time: l.max_time,
                    })
                    .collect(),
            });
        }
        Ok(
            Instance::new(n, self.alpha, self.gamma, &self.cost, &self.time, hubs, commodities)?
                .with_level_names(self.service_levels, self.demand_levels),
        )
    }

    fn from_instance(inst: &Instance) -> Self {
        let n = inst.n;
        let matrix = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect()
        };
        Self {
            n,
            alpha: inst.alpha,
            gamma: inst.gamma,
            cost: matrix(&|i, j| inst.cost(i, j)),
            time: matrix(&|i, j| inst.time(i, j)),
            hubs: inst
                .hubs
                .iter()
                .map(|h| HubFile {
                    id: h.node + 1,
                    capacity: h.levels.iter().map(|l| l.capacity).collect(),
                    setup_cost: h.levels.iter().map(|l| l.setup_cost).collect(),
                    h: h.levels.iter().map(|l| l.transit).collect(),
                })
                .collect(),
            commodities: inst
                .commodities
                .iter()
                .map(|c| CommodityFile {
                    i: c.origin + 1,
                    j: c.dest + 1,
                    levels: c
                        .levels
                        .iter()
                        .map(|l| LevelFile {
                            w: l.demand,
                            q: l.revenue,
                            max_time: l.max_time,
                        })
                        .collect(),
                })
                .collect(),
            service_levels: inst.service_level_names.clone(),
            demand_levels: inst.demand_level_names.clone(),
        }
    }
}

/// The four-node instance with two commodities used throughout the tests:
/// optimum 550 with consistency enforced, 600 without.
pub fn example_one() -> Instance {
    const BIG: f64 = 10.0;
    #[rustfmt::skip]
    let cost = vec![
        vec![0.0, 1.0, 2.0, 3.0],
        vec![1.0, 0.0, 1.0, BIG],
        vec![2.0, 1.0, 0.0, 1.0],
        vec![3.0, BIG, 1.0, 0.0],
    ];
    let level = |capacity, setup_cost| ServiceLevel {
        capacity,
        setup_cost,
        transit: 0.0,
    };
    let hubs = (0..4)
        .map(|node| {
            let (g1, g2) = if node == 0 || node == 3 {
                (150.0, 300.0)
            } else {
                (50.0, 150.0)
            };
            Hub {
                node,
                levels: vec![level(100.0, g1), level(200.0, g2)],
            }
        })
        .collect();
    let demand = DemandLevel {
        demand: 100.0,
        revenue: 5.0,
        max_time: 1e6,
    };
    let commodities = vec![
        Commodity {
            origin: 0,
            dest: 1,
            levels: vec![demand],
        },
        Commodity {
            origin: 1,
            dest: 3,
            levels: vec![demand],
        },
    ];
    Instance::new(4, 0.5, 0.5, &cost, &cost, hubs, commodities).expect("example instance is well formed")
}
