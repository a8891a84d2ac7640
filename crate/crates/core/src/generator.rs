//! Benchmark instances: CAB-style raw data, base instances and their
//! multi-level expansions, plus small random instances for exhaustive tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Commodity, DemandLevel, Hub, Instance, InstanceError, ServiceLevel};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("line {line}, column {col}: cannot parse {token:?} as a number")]
    Parse { line: usize, col: usize, token: String },
    #[error("{0}")]
    Dimension(String),
    #[error("{matrix}[{i}][{j}] = {value} is negative or not finite")]
    BadEntry {
        matrix: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },
    #[error("requested {n} nodes but only {available} cities are available")]
    TooManyNodes { n: usize, available: usize },
    #[error("hub cost base has {got} values, {needed} cities need one each")]
    MissingHubCost { needed: usize, got: usize },
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error("unsupported level count: {0}")]
    Levels(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Raw distance and flow matrices over all available cities.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCab {
    pub dist: Vec<Vec<f64>>,
    pub flow: Vec<Vec<f64>>,
}

impl RawCab {
    pub fn city_count(&self) -> usize {
        self.dist.len()
    }
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    col: usize,
}

fn tokens(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    for (l, line) in text.lines().enumerate() {
        let mut rest = line;
        let mut offset = 0;
        while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
            let tail = &rest[start..];
            let len = tail.find(char::is_whitespace).unwrap_or(tail.len());
            out.push(Token {
                text: &tail[..len],
                line: l + 1,
                col: offset + start + 1,
            });
            offset += start + len;
            rest = &tail[len..];
        }
    }
    out
}

fn number(t: &Token<'_>) -> Result<f64, GenError> {
    t.text.parse::<f64>().map_err(|_| GenError::Parse {
        line: t.line,
        col: t.col,
        token: t.text.chars().take(40).collect(),
    })
}

/// Parses a CAB-style file: an optional leading city count followed by the
/// distance matrix and then the flow matrix, both row-major and whitespace
/// separated. Without the count, the dimension is inferred from the number
/// of entries.
pub fn load_cab(text: &str) -> Result<RawCab, GenError> {
    let toks = tokens(text);
    let square = |len: usize| -> Option<usize> {
        if !len.is_multiple_of(2) {
            return None;
        }
        let n = ((len / 2) as f64).sqrt().round() as usize;
        (n * n * 2 == len).then_some(n)
    };
    let declared = toks
        .first()
        .and_then(|t| t.text.parse::<usize>().ok())
        .filter(|&n| n > 0 && toks.len() == 1 + 2 * n * n);
    let (n, body) = match declared {
        Some(n) => (n, &toks[1..]),
        None => match square(toks.len()) {
            Some(n) if n > 0 => (n, &toks[..]),
            _ => {
                let hint = match toks.first().and_then(|t| t.text.parse::<usize>().ok()) {
                    Some(d) => format!(
                        "declared {d} cities needs {} matrix entries, found {}",
                        2 * d * d,
                        toks.len() - 1
                    ),
                    None => format!("{} entries do not form two square matrices", toks.len()),
                };
                return Err(GenError::Dimension(hint));
            }
        },
    };
    let read = |offset: usize, name: &'static str| -> Result<Vec<Vec<f64>>, GenError> {
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let v = number(&body[offset + i * n + j])?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(GenError::BadEntry {
                        matrix: name,
                        i: i + 1,
                        j: j + 1,
                        value: v,
                    });
                }
                *cell = v;
            }
        }
        Ok(m)
    };
    let dist = read(0, "dist")?;
    let flow = read(n * n, "flow")?;
    Ok(RawCab { dist, flow })
}

/// Inverse of [`load_cab`], with the city count declared.
pub fn write_cab(raw: &RawCab) -> String {
    let mut s = format!("{}\n", raw.city_count());
    for m in [&raw.dist, &raw.flow] {
        for row in m {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
    }
    s
}

/// Whitespace-separated list of numbers, e.g. per-city hub setup costs.
pub fn load_values(text: &str) -> Result<Vec<f64>, GenError> {
    tokens(text).iter().map(number).collect()
}

/// A CAB-like data set: cities scattered over a 3000 x 1500 plane with
/// heavy-tailed populations, Euclidean distances and gravity-model flows
/// normalised to total 1. Also returns per-city hub cost bases.
pub fn synthetic_cab(cities: usize, seed: u64) -> (RawCab, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..cities)
        .map(|_| (rng.gen_range(0.0..3000.0), rng.gen_range(0.0..1500.0)))
        .collect();
    let pop: Vec<f64> = (0..cities).map(|_| 1.0 / (1.0 - rng.gen_range(0.0..0.95f64))).collect();
    let mut dist = vec![vec![0.0; cities]; cities];
    for i in 0..cities {
        for j in 0..i {
            let d = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
            let d = (d * 10.0).round() / 10.0;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut flow = vec![vec![0.0; cities]; cities];
    let mut total = 0.0;
    for i in 0..cities {
        for j in 0..cities {
            if i != j {
                flow[i][j] = pop[i] * pop[j] / (100.0 + dist[i][j]).sqrt();
                total += flow[i][j];
            }
        }
    }
    for row in &mut flow {
        for v in row.iter_mut() {
            *v /= total.max(f64::MIN_POSITIVE);
        }
    }
    let base = (0..cities).map(|_| rng.gen_range(0.004..0.012)).collect();
    (RawCab { dist, flow }, base)
}

fn d_beta_q() -> f64 {
    2.5
}
fn d_phi_low() -> f64 {
    0.25
}
fn d_phi_high() -> f64 {
    0.35
}
fn d_beta_time() -> f64 {
    0.4
}
fn d_beta_g() -> f64 {
    3000.0
}
fn d_beta_transit() -> f64 {
    0.04
}
fn d_beta_w() -> f64 {
    0.15
}

/// Scaling parameters of the base instances. Missing JSON fields take the
/// benchmark defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    #[serde(default = "d_beta_q")]
    pub beta_q: f64,
    #[serde(default = "d_phi_low")]
    pub phi_low: f64,
    #[serde(default = "d_phi_high")]
    pub phi_high: f64,
    #[serde(default = "d_beta_time")]
    pub beta_time: f64,
    #[serde(default = "d_beta_g")]
    pub beta_g: f64,
    #[serde(default = "d_beta_transit")]
    pub beta_transit: f64,
    #[serde(default = "d_beta_w")]
    pub beta_w: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-city setup costs before scaling by `beta_g`.
    #[serde(default)]
    pub hub_cost_base: Vec<f64>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            beta_q: d_beta_q(),
            phi_low: d_phi_low(),
            phi_high: d_phi_high(),
            beta_time: d_beta_time(),
            beta_g: d_beta_g(),
            beta_transit: d_beta_transit(),
            beta_w: d_beta_w(),
            seed: 0,
            hub_cost_base: Vec::new(),
        }
    }
}

impl GenParams {
    fn check(&self) -> Result<(), GenError> {
        let betas = [self.beta_q, self.beta_time, self.beta_g, self.beta_transit, self.beta_w];
        if betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(GenError::Params("all beta factors must be positive".into()));
        }
        // Equal bounds give a constant phi, which the tests rely on.
        if !(self.phi_low >= 0.0 && self.phi_low <= self.phi_high && self.phi_high.is_finite()) {
            return Err(GenError::Params("need 0 <= phi_low <= phi_high".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandDelta {
    pub w: f64,
    pub q: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceDelta {
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub h: f64,
}

/// Multipliers applied to base values for each demand and service level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub low: DemandDelta,
    pub med: DemandDelta,
    pub high: DemandDelta,
    pub service_med: ServiceDelta,
    pub service_high: ServiceDelta,
}

impl Default for DeltaTable {
    fn default() -> Self {
        Self {
            low: DemandDelta { w: 0.6, q: 0.8, h: 1.5 },
            med: DemandDelta { w: 1.0, q: 1.0, h: 1.0 },
            high: DemandDelta { w: 0.4, q: 3.0, h: 0.5 },
            service_med: ServiceDelta { w: 1.0, g: 1.0, h: 1.0 },
            service_high: ServiceDelta {
                w: 2.0,
                g: 1.7,
                h: 1.25,
            },
        }
    }
}

/// Single-level instance over the `n` selected cities.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseInstance {
    pub n: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// Selected city indices into the raw data, ascending.
    pub cities: Vec<usize>,
    pub dist: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
    pub time: Vec<Vec<f64>>,
    pub demand: Vec<Vec<f64>>,
    pub revenue: Vec<Vec<f64>>,
    pub max_time: Vec<Vec<f64>>,
    pub hub_cost: Vec<f64>,
    pub hub_transit: Vec<f64>,
    pub hub_cap: Vec<f64>,
}

/// Indices of the `n` cities with the largest outbound plus inbound flow,
/// ties broken by lower index, returned in ascending order.
pub fn top_cities(raw: &RawCab, n: usize) -> Vec<usize> {
    let cities = raw.city_count();
    let total: Vec<f64> = (0..cities)
        .map(|c| (0..cities).map(|o| raw.flow[c][o] + raw.flow[o][c]).sum())
        .collect();
    let mut order: Vec<usize> = (0..cities).collect();
    order.sort_by(|&a, &b| total[b].total_cmp(&total[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(n).collect();
    chosen.sort_unstable();
    chosen
}

pub fn make_base(raw: &RawCab, n: usize, alpha: f64, params: &GenParams) -> Result<BaseInstance, GenError> {
    params.check()?;
    let available = raw.city_count();
    if n > available {
        return Err(GenError::TooManyNodes { n, available });
    }
    if n < 2 {
        return Err(GenError::Params("need at least two nodes".into()));
    }
    if params.hub_cost_base.len() < available {
        return Err(GenError::MissingHubCost {
            needed: available,
            got: params.hub_cost_base.len(),
        });
    }
    let cities = top_cities(raw, n);
    let dist: Vec<Vec<f64>> = cities
        .iter()
        .map(|&a| cities.iter().map(|&b| raw.dist[a][b]).collect())
        .collect();
    let demand: Vec<Vec<f64>> = cities
        .iter()
        .map(|&a| {
            cities
                .iter()
                .map(|&b| if a == b { 0.0 } else { raw.flow[a][b] })
                .collect()
        })
        .collect();
    let gamma = alpha;
    let arcs = (n * n - n) as f64;
    let d = &dist;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut revenue = vec![vec![0.0; n]; n];
    let mut max_time = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let phi = rng.gen_range(params.phi_low..=params.phi_high);
            let mut sum_c = 0.0;
            let mut sum_t = 0.0;
            for k in 0..n {
                for m in 0..n {
                    sum_c += d[i][k] + alpha * d[k][m] + d[m][j];
                    sum_t += d[i][k] + gamma * d[k][m] + d[m][j];
                }
            }
            revenue[i][j] = phi * params.beta_q / arcs * sum_c;
            max_time[i][j] = params.beta_time / arcs * sum_t;
        }
    }

    let commodities = (n * (n - 1)) as f64;
    let mut transit_sum = 0.0;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    transit_sum += d[i][k] + d[k][j];
                }
            }
        }
    }
    let transit = params.beta_transit / (n as f64 * commodities) * transit_sum;
    let total_demand: f64 = demand.iter().flatten().sum();
    let cap = params.beta_w * total_demand;

    Ok(BaseInstance {
        n,
        alpha,
        gamma,
        hub_cost: cities
            .iter()
            .map(|&c| params.beta_g * params.hub_cost_base[c])
            .collect(),
        hub_transit: vec![transit; n],
        hub_cap: vec![cap; n],
        cities,
        cost: dist.clone(),
        time: dist.clone(),
        dist,
        demand,
        revenue,
        max_time,
    })
}

/// Demand levels for `r_count` in order of increasing maximum service time,
/// with their names.
pub fn demand_levels(r_count: usize, deltas: &DeltaTable) -> Result<Vec<(&'static str, DemandDelta)>, GenError> {
    let mut rows = match r_count {
        1 => vec![("Med", deltas.med)],
        2 => vec![("Med", deltas.med), ("High", deltas.high)],
        3 => vec![("Low", deltas.low), ("Med", deltas.med), ("High", deltas.high)],
        _ => return Err(GenError::Levels(format!("{r_count} demand levels (supported: 1-3)"))),
    };
    rows.sort_by(|a, b| a.1.h.total_cmp(&b.1.h));
    Ok(rows)
}

/// Service levels for `l_count` in order of increasing capacity.
pub fn service_levels(l_count: usize, deltas: &DeltaTable) -> Result<Vec<(&'static str, ServiceDelta)>, GenError> {
    let mut rows = match l_count {
        1 => vec![("Med", deltas.service_med)],
        2 => vec![("Med", deltas.service_med), ("High", deltas.service_high)],
        _ => return Err(GenError::Levels(format!("{l_count} service levels (supported: 1-2)"))),
    };
    rows.sort_by(|a, b| a.1.w.total_cmp(&b.1.w));
    Ok(rows)
}

pub fn expand(base: &BaseInstance, l_count: usize, r_count: usize, deltas: &DeltaTable) -> Result<Instance, GenError> {
    let dem = demand_levels(r_count, deltas)?;
    let svc = service_levels(l_count, deltas)?;
    let n = base.n;
    let hubs = (0..n)
        .map(|k| Hub {
            node: k,
            levels: svc
                .iter()
                .map(|(_, d)| ServiceLevel {
                    capacity: d.w * base.hub_cap[k],
                    setup_cost: d.g * base.hub_cost[k],
                    transit: d.h * base.hub_transit[k],
                })
                .collect(),
        })
        .collect();
    let mut commodities = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            commodities.push(Commodity {
                origin: i,
                dest: j,
                levels: dem
                    .iter()
                    .map(|(_, d)| DemandLevel {
                        demand: d.w * base.demand[i][j],
                        revenue: d.q * base.revenue[i][j],
                        max_time: d.h * base.max_time[i][j],
                    })
                    .collect(),
            });
        }
    }
    let inst = Instance::new(n, base.alpha, base.gamma, &base.cost, &base.time, hubs, commodities)?.with_level_names(
        svc.iter().map(|(s, _)| s.to_string()).collect(),
        dem.iter().map(|(s, _)| s.to_string()).collect(),
    );
    debug_assert!(
        inst.validate().iter().all(|v| !matches!(v.rule(), "monotonicity")),
        "expanded instance breaks level monotonicity"
    );
    Ok(inst)
}

/// One cell of the experiment grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub n: usize,
    pub l: usize,
    pub r: usize,
}

impl SweepCell {
    pub fn file_name(&self) -> String {
        format!("hlctdp_a{}_n{}_L{}_R{}.json", self.alpha, self.n, self.l, self.r)
    }

    /// Recovers the cell from a file name produced by [`SweepCell::file_name`].
    pub fn parse_file_name(name: &str) -> Option<Self> {
        let stem = name.strip_prefix("hlctdp_a")?.strip_suffix(".json")?;
        let mut parts = stem.split('_');
        let alpha = parts.next()?.parse().ok()?;
        let n = parts.next()?.strip_prefix('n')?.parse().ok()?;
        let l = parts.next()?.strip_prefix('L')?.parse().ok()?;
        let r = parts.next()?.strip_prefix('R')?.parse().ok()?;
        if parts.next().is_some() {
            return None;
        }
        Some(Self { alpha, n, l, r })
    }
}

pub const SWEEP_ALPHAS: [f64; 3] = [0.2, 0.5, 0.8];
pub const DESK_SIZES: [usize; 3] = [8, 10, 12];

/// alpha x n x L x R in that nesting order.
pub fn sweep_cells(alphas: &[f64], sizes: &[usize]) -> Vec<SweepCell> {
    let mut out = Vec::new();
    for &alpha in alphas {
        for &n in sizes {
            for l in 1..=2 {
                for r in 1..=3 {
                    out.push(SweepCell { alpha, n, l, r });
                }
            }
        }
    }
    out
}

/// Generates every instance of the grid; base instances are shared across
/// the level expansions of one (alpha, n) pair.
pub fn sweep(
    raw: &RawCab,
    params: &GenParams,
    deltas: &DeltaTable,
    alphas: &[f64],
    sizes: &[usize],
) -> Result<Vec<(SweepCell, Instance)>, GenError> {
    let mut out = Vec::new();
    for &alpha in alphas {
        for &n in sizes {
            let base = make_base(raw, n, alpha, params)?;
            for l in 1..=2 {
                for r in 1..=3 {
                    out.push((SweepCell { alpha, n, l, r }, expand(&base, l, r, deltas)?));
                }
            }
        }
    }
    Ok(out)
}

/// Small random instance for exhaustive cross-checks.
///
/// Costs are the shortest-path closure of random integer edge weights (so
/// they are metric), times equal costs and `gamma == alpha`. Demands are
/// even integers and capacities odd, so hub flows never sit exactly on a
/// capacity breakpoint; time limits are offset by 0.03 from the 0.05 grid
/// on which route times lie, so time limits are never met with equality.
/// Demands may exceed some or all hub capacities (A2/A3), which exercises
/// the corresponding fixings.
pub fn random_tiny(seed: u64, n: usize, l_count: usize, r_count: usize, commodities: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = [0.2, 0.5, 0.8][rng.gen_range(0..3)];
    let mut c = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..i {
            let w = rng.gen_range(1..=10) as f64;
            c[i][j] = w;
            c[j][i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if c[i][k] + c[k][j] < c[i][j] {
                    c[i][j] = c[i][k] + c[k][j];
                }
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let take = commodities.min(pairs.len());
    for t in 0..take {
        let pick = rng.gen_range(t..pairs.len());
        pairs.swap(t, pick);
    }
    pairs.truncate(take);
    pairs.sort_unstable();

    let coms: Vec<Commodity> = pairs
        .into_iter()
        .map(|(i, j)| {
            let mut h: Vec<f64> = (0..r_count).map(|_| rng.gen_range(4..=24) as f64).collect();
            h.sort_by(f64::total_cmp);
            h.dedup();
            while h.len() < r_count {
                let next = h.last().copied().unwrap_or(3.0) + 1.0;
                h.push(next);
            }
            let mut q: Vec<f64> = (0..r_count).map(|_| rng.gen_range(2..=16) as f64).collect();
            q.sort_by(|a, b| b.total_cmp(a));
            Commodity {
                origin: i,
                dest: j,
                levels: (0..r_count)
                    .map(|r| DemandLevel {
                        demand: 2.0 * rng.gen_range(1..=8) as f64,
                        revenue: q[r],
                        max_time: h[r] + 0.03,
                    })
                    .collect(),
            }
        })
        .collect();

    let hubs = (0..n)
        .map(|node| {
            let mut cap = 2.0 * rng.gen_range(3..=10) as f64 + 1.0;
            let mut g = rng.gen_range(5..=40) as f64;
            let mut h = 0.25 * rng.gen_range(0..=4) as f64;
            let levels = (0..l_count)
                .map(|_| {
                    let lvl = ServiceLevel {
                        capacity: cap,
                        setup_cost: g,
                        transit: h,
                    };
                    cap += 2.0 * rng.gen_range(2..=8) as f64;
                    g += rng.gen_range(5..=30) as f64;
                    h += 0.25 * rng.gen_range(0..=2) as f64;
                    lvl
                })
                .collect();
            Hub { node, levels }
        })
        .collect();
    Instance::new(n, alpha, alpha, &c, &c, hubs, coms).expect("random tiny instance is well formed")
}
