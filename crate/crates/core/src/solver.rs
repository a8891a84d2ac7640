//! Exact two-tier branch-and-bound for desk-scale instances.
//!
//! The outer search fixes hubs one at a time (closed, or open at one level)
//! in decreasing order of top capacity. Each node is bounded by the smaller
//! of a fractional knapsack over per-commodity best profits against the
//! capacity that is open or still purchasable, and a Lagrangian relaxation
//! of the hub capacities with subgradient-optimised multipliers. Complete
//! configurations are handed to an inner branch-and-bound over commodities
//! that uses the same relaxation plus reduced-cost pruning of options. A
//! greedy local search over configurations seeds the incumbent.
//!
//! The search is sequential, so results are deterministic for a given
//! instance, mask and configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{validate_with, ValidationReport};
use crate::formulations::{build, decode, BuildOptions, Formulation, FormulationError};
use crate::instance::{Instance, InstanceViolation};
use crate::milp::{import_solution, MilpError};
use crate::preprocess::FixMask;
use crate::solution::{Served, Solution, SolveStatus};
use crate::EPS;

/// Open hub node -> service level.
pub type HubConfig = BTreeMap<usize, usize>;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Seconds.
    pub time_limit: f64,
    /// Relative optimality tolerance.
    pub gap_tol: f64,
    /// Recorded for reproducibility; the search itself is deterministic.
    pub seed: u64,
    /// Heuristic cap on open hubs; when set the result is reported as
    /// feasible rather than optimal.
    pub max_hubs: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit: 7200.0,
            gap_tol: 1e-5,
            seed: 0,
            max_hubs: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("time limit must be positive, got {0}")]
    TimeLimit(f64),
    #[error("gap tolerance must be nonnegative, got {0}")]
    GapTol(f64),
    #[error("fix mask does not match the instance dimensions")]
    MaskShape,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogLine {
    pub nodes: u64,
    pub incumbent: f64,
    pub bound: f64,
    pub gap: f64,
    pub elapsed: f64,
}

/// Progress records: one per incumbent improvement plus a final line.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveLog {
    pub lines: Vec<LogLine>,
}

impl SolveLog {
    pub const CSV_HEADER: &'static str = "nodes,incumbent,bound,gap,elapsed_s";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for l in &self.lines {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                l.nodes, l.incumbent, l.bound, l.gap, l.elapsed
            );
        }
        out
    }
}

pub fn solve_exact(inst: &Instance, mask: &FixMask, cfg: &SolverConfig) -> Result<Solution, SolverError> {
    solve_exact_logged(inst, mask, cfg).map(|(s, _)| s)
}

/// As [`solve_exact`], also returning the progress log.
pub fn solve_exact_logged(
    inst: &Instance,
    mask: &FixMask,
    cfg: &SolverConfig,
) -> Result<(Solution, SolveLog), SolverError> {
    if cfg.time_limit.is_nan() || cfg.time_limit <= 0.0 {
        return Err(SolverError::TimeLimit(cfg.time_limit));
    }
    if cfg.gap_tol.is_nan() || cfg.gap_tol < 0.0 {
        return Err(SolverError::GapTol(cfg.gap_tol));
    }
    if !mask.fits(inst) {
        return Err(SolverError::MaskShape);
    }
    if !structural_violations(inst).is_empty() {
        let mut sol = Solution::empty();
        sol.status = SolveStatus::InfeasibleInput;
        return Ok((sol, SolveLog::default()));
    }
    if inst.commodities().is_empty() || inst.hub_count() == 0 {
        return Ok((Solution::empty(), SolveLog::default()));
    }
    let prep = Prepared::new(inst, Some(mask));
    let mut search = Search::new(&prep, cfg);
    search.run();
    Ok(search.finish())
}

/// Violations that make an instance unusable; oversize demand (A2, A3) is
/// merely unservable and allowed.
fn structural_violations(inst: &Instance) -> Vec<InstanceViolation> {
    inst.validate()
        .into_iter()
        .filter(|v| !matches!(v.rule(), "A2" | "A3"))
        .collect()
}

/// Greedy solution for a fixed configuration: commodities in decreasing
/// best net profit take their most profitable route that still fits. Hubs
/// left below their level's capacity floor are moved down to the level
/// their flow fits, and unused hubs are closed, so the result is always
/// feasible.
pub fn lower_bound_greedy(inst: &Instance, config: &HubConfig) -> Solution {
    if !structural_violations(inst).is_empty() {
        let mut sol = Solution::empty();
        sol.status = SolveStatus::InfeasibleInput;
        return sol;
    }
    let prep = Prepared::new(inst, None);
    let mut state = vec![None; inst.hub_count()];
    for (&k, &l) in config {
        match inst.hub_position(k) {
            Some(p) if l < inst.service_level_count() => state[p] = Some(l),
            _ => log::warn!("ignoring hub {} at level {}: not in the instance", k + 1, l + 1),
        }
    }
    prep.greedy(&state)
}

#[derive(Debug, Error)]
pub enum ExportSolveError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("decoded solution is infeasible:\n{0}")]
    Infeasible(ValidationReport),
    #[error("solution file objective {file} differs from the recomputed {recomputed}")]
    ObjectiveMismatch { file: f64, recomputed: f64 },
}

/// Reads variable values written by an external MILP solver for the model
/// built from `inst`, `which` and `opts`, then checks the decoded solution
/// from first principles.
pub fn solve_via_export(
    inst: &Instance,
    which: Formulation,
    opts: &BuildOptions,
    text: &str,
) -> Result<Solution, ExportSolveError> {
    let (model, index) = build(inst, which, opts)?;
    let imported = import_solution(text, &model, None)?;
    let sol = decode(inst, &index, &imported.values)?;
    let report = validate_with(inst, &sol, opts.include_consistency);
    if !report.ok {
        return Err(ExportSolveError::Infeasible(report));
    }
    if let Some(file) = imported.objective {
        if (file - sol.objective).abs() > 1e-4 * sol.objective.abs().max(1.0) {
            return Err(ExportSolveError::ObjectiveMismatch {
                file,
                recomputed: sol.objective,
            });
        }
    }
    Ok(sol)
}

/// A route option of one commodity.
#[derive(Clone, Copy, Debug)]
struct Opt {
    r: usize,
    p: usize,
    q: usize,
    w: f64,
    profit: f64,
    travel: f64,
}

/// Instance data in hub-position form, with unmasked route options.
struct Prepared<'a> {
    inst: &'a Instance,
    nk: usize,
    cap: Vec<Vec<f64>>,
    floor: Vec<Vec<f64>>,
    setup: Vec<Vec<f64>>,
    transit: Vec<Vec<f64>>,
    /// Cheapest setup cost per unit of capacity, per hub.
    unit_price: Vec<f64>,
    origin: Vec<Option<usize>>,
    dest: Vec<Option<usize>>,
    max_time: Vec<Vec<f64>>,
    /// Every unmasked option per commodity.
    options: Vec<Vec<Opt>>,
    /// Positive-profit options per commodity and level, most profitable
    /// first.
    positive: Vec<Vec<Vec<Opt>>>,
}

impl<'a> Prepared<'a> {
    fn new(inst: &'a Instance, mask: Option<&FixMask>) -> Self {
        let hubs = inst.hubs();
        let nk = hubs.len();
        let cap: Vec<Vec<f64>> = hubs
            .iter()
            .map(|h| h.levels.iter().map(|l| l.capacity).collect())
            .collect();
        let floor = hubs
            .iter()
            .map(|h| (0..h.levels.len()).map(|l| h.capacity_floor(l)).collect())
            .collect();
        let setup: Vec<Vec<f64>> = hubs
            .iter()
            .map(|h| h.levels.iter().map(|l| l.setup_cost).collect())
            .collect();
        let transit = hubs
            .iter()
            .map(|h| h.levels.iter().map(|l| l.transit).collect())
            .collect();
        let unit_price = (0..nk)
            .map(|p| {
                cap[p]
                    .iter()
                    .zip(&setup[p])
                    .filter(|(&w, _)| w > 0.0)
                    .map(|(&w, &g)| g / w)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let coms = inst.commodities();
        let mut options = Vec::with_capacity(coms.len());
        let mut positive = Vec::with_capacity(coms.len());
        for (c, com) in coms.iter().enumerate() {
            let mut all = Vec::new();
            let mut pos = vec![Vec::new(); com.levels.len()];
            for (r, lvl) in com.levels.iter().enumerate() {
                for (p, hp) in hubs.iter().enumerate() {
                    for (q, hq) in hubs.iter().enumerate() {
                        if mask.is_some_and(|m| m.is_route_fixed(c, p, q, r)) {
                            continue;
                        }
                        let o = Opt {
                            r,
                            p,
                            q,
                            w: lvl.demand,
                            profit: inst.net_profit_unchecked(c, hp.node, hq.node, r),
                            travel: inst.route_time_unchecked(com.origin, com.dest, hp.node, hq.node),
                        };
                        if o.profit > 0.0 {
                            pos[r].push(o);
                        }
                        all.push(o);
                    }
                }
                pos[r].sort_by(|a, b| b.profit.total_cmp(&a.profit));
            }
            options.push(all);
            positive.push(pos);
        }
        Self {
            inst,
            nk,
            cap,
            floor,
            setup,
            transit,
            unit_price,
            origin: coms.iter().map(|c| inst.hub_position(c.origin)).collect(),
            dest: coms.iter().map(|c| inst.hub_position(c.dest)).collect(),
            max_time: coms
                .iter()
                .map(|c| c.levels.iter().map(|l| l.max_time).collect())
                .collect(),
            options,
            positive,
        }
    }

    /// Whether `o` is usable when every hub is decided (`None` = closed).
    fn usable(&self, c: usize, o: &Opt, state: &[Option<usize>]) -> bool {
        let (Some(lp), Some(lq)) = (state[o.p], state[o.q]) else {
            return false;
        };
        if o.w > self.cap[o.p][lp] + EPS || o.w > self.cap[o.q][lq] + EPS {
            return false;
        }
        let mut t = o.travel + self.transit[o.p][lp];
        if o.q != o.p {
            t += self.transit[o.q][lq];
        }
        if t > self.max_time[c][o.r] + EPS {
            return false;
        }
        if let Some(i) = self.origin[c] {
            if state[i].is_some() && o.p != i {
                return false;
            }
        }
        if let Some(j) = self.dest[c] {
            if state[j].is_some() && o.q != j {
                return false;
            }
        }
        true
    }

    fn greedy(&self, state: &[Option<usize>]) -> Solution {
        let mut items: Vec<(usize, Vec<Opt>)> = (0..self.options.len())
            .filter_map(|c| {
                let mut opts: Vec<Opt> = self.options[c]
                    .iter()
                    .filter(|o| o.profit > 0.0 && self.usable(c, o, state))
                    .copied()
                    .collect();
                opts.sort_by(|a, b| b.profit.total_cmp(&a.profit));
                (!opts.is_empty()).then_some((c, opts))
            })
            .collect();
        items.sort_by(|a, b| b.1[0].profit.total_cmp(&a.1[0].profit).then(a.0.cmp(&b.0)));
        let mut load = vec![0.0; self.nk];
        let mut served = BTreeMap::new();
        for (c, opts) in &items {
            for o in opts {
                let fits = |p: usize| load[p] + o.w <= self.cap[p][state[p].expect("usable")] + EPS;
                if fits(o.p) && fits(o.q) {
                    load[o.p] += o.w;
                    if o.q != o.p {
                        load[o.q] += o.w;
                    }
                    served.insert(*c, self.served(o));
                    break;
                }
            }
        }
        let mut hubs = HubConfig::new();
        for (p, s) in state.iter().enumerate() {
            let Some(l) = *s else { continue };
            if load[p] <= EPS {
                continue;
            }
            // Intervals partition [0, W^l], so some level up to l fits.
            let fit = (0..=l)
                .find(|&m| load[p] <= self.cap[p][m] + EPS && (m == 0 || load[p] > self.floor[p][m] + EPS))
                .unwrap_or(l);
            hubs.insert(self.inst.hub(p).node, fit);
        }
        Solution::from_decisions(self.inst, hubs, served, SolveStatus::Feasible { gap: 1.0 })
    }

    fn served(&self, o: &Opt) -> Served {
        Served {
            level: o.r,
            first: self.inst.hub(o.p).node,
            second: self.inst.hub(o.q).node,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum HubState {
    Undecided,
    Closed,
    Open(usize),
}

/// Upper bound on `sum v x - sum price y` subject to `sum u x <= sum y`,
/// `0 <= x <= 1` and `0 <= y_s <= cap_s`. `items` are (value, weight) and
/// `segments` are (unit price, capacity).
fn fractional_knapsack(items: &mut [(f64, f64)], segments: &mut [(f64, f64)]) -> f64 {
    items.sort_by(|a, b| (b.0 / b.1).total_cmp(&(a.0 / a.1)));
    segments.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut value = 0.0;
    let mut s = 0;
    let mut left = segments.first().map_or(0.0, |x| x.1);
    for &(v, u) in items.iter() {
        let density = v / u;
        let mut need = u;
        while need > 0.0 && s < segments.len() {
            let price = segments[s].0;
            if price >= density {
                return value;
            }
            let take = need.min(left);
            value += take * (density - price);
            need -= take;
            left -= take;
            if left <= 0.0 {
                s += 1;
                left = segments.get(s).map_or(0.0, |x| x.1);
            }
        }
        if s >= segments.len() {
            break;
        }
    }
    value
}

/// Subgradient iterations for the capacity multipliers at the root, at
/// other outer nodes (warm-started from the parent) and at inner nodes.
const ROOT_ITERS: usize = 200;
const NODE_ITERS: usize = 30;
const INNER_ITERS: usize = 15;
/// Inner depths at which the multipliers are re-optimised.
const INNER_REOPT_EVERY: usize = 6;

/// Minimises a Lagrangian bound over nonnegative multipliers with Polyak
/// steps towards `target`, stopping early once the bound reaches it.
/// `eval` returns the bound and a subgradient (capacity minus load). On
/// return `lambda` holds the best multipliers found.
fn subgradient(lambda: &mut [f64], iters: usize, target: f64, mut eval: impl FnMut(&[f64], &mut [f64]) -> f64) -> f64 {
    let mut g = vec![0.0; lambda.len()];
    let mut best = f64::INFINITY;
    let mut best_lambda = lambda.to_vec();
    let mut theta = 1.0;
    let mut stall = 0;
    for _ in 0..iters {
        let v = eval(lambda, &mut g);
        if v < best - 1e-12 {
            best = v;
            best_lambda.copy_from_slice(lambda);
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                theta *= 0.5;
                stall = 0;
            }
        }
        if best <= target || theta < 1e-5 {
            break;
        }
        let norm2: f64 = g.iter().map(|x| x * x).sum();
        if norm2 < 1e-18 {
            break;
        }
        let step = theta * (v - target).max(1e-6 * v.abs().max(1.0)) / norm2;
        for (l, gi) in lambda.iter_mut().zip(&g) {
            *l = (*l - step * gi).max(0.0);
        }
    }
    lambda.copy_from_slice(&best_lambda);
    best
}

#[inline]
fn adjusted(o: &Opt, lambda: &[f64]) -> f64 {
    let price = if o.q == o.p {
        lambda[o.p]
    } else {
        lambda[o.p] + lambda[o.q]
    };
    o.profit - o.w * price
}

struct Search<'p, 'a> {
    prep: &'p Prepared<'a>,
    cfg: &'p SolverConfig,
    /// Hub positions in branching order.
    order: Vec<usize>,
    state: Vec<HubState>,
    incumbent: Solution,
    start: Instant,
    deadline: Duration,
    timed_out: bool,
    /// Largest bound of a node left unexplored because of the time limit.
    abandoned: f64,
    root_bound: f64,
    nodes: u64,
    log: SolveLog,
}

impl<'p, 'a> Search<'p, 'a> {
    fn new(prep: &'p Prepared<'a>, cfg: &'p SolverConfig) -> Self {
        let mut order: Vec<usize> = (0..prep.nk).collect();
        let total = |p: usize| prep.cap[p].iter().sum::<f64>();
        order.sort_by(|&a, &b| total(b).total_cmp(&total(a)).then(a.cmp(&b)));
        let mut incumbent = Solution::empty();
        incumbent.status = SolveStatus::Feasible { gap: 1.0 };
        Self {
            prep,
            cfg,
            order,
            state: vec![HubState::Undecided; prep.nk],
            incumbent,
            start: Instant::now(),
            deadline: Duration::from_secs_f64(cfg.time_limit.min(1e9)),
            timed_out: false,
            abandoned: f64::NEG_INFINITY,
            root_bound: f64::INFINITY,
            nodes: 0,
            log: SolveLog::default(),
        }
    }

    fn out_of_time(&mut self) -> bool {
        if !self.timed_out && self.start.elapsed() >= self.deadline {
            self.timed_out = true;
        }
        self.timed_out
    }

    /// Nodes whose bound does not exceed this are pruned.
    fn threshold(&self) -> f64 {
        let inc = self.incumbent.objective;
        inc + (self.cfg.gap_tol * inc.abs()).max(EPS)
    }

    fn offer(&mut self, sol: Solution) {
        let inc = &self.incumbent;
        let better = sol.objective > inc.objective + EPS
            || (sol.objective >= inc.objective - EPS && sol.tie_key() < inc.tie_key());
        if better {
            log::debug!("incumbent {} after {} nodes", sol.objective, self.nodes);
            self.incumbent = sol;
            self.push_log(self.root_bound);
        }
    }

    fn push_log(&mut self, bound: f64) {
        let inc = self.incumbent.objective;
        self.log.lines.push(LogLine {
            nodes: self.nodes,
            incumbent: inc,
            bound,
            gap: relative_gap(bound, inc),
            elapsed: self.start.elapsed().as_secs_f64(),
        });
    }

    fn decided(&self) -> Vec<Option<usize>> {
        self.state
            .iter()
            .map(|s| match s {
                HubState::Open(l) => Some(*l),
                _ => None,
            })
            .collect()
    }

    fn run(&mut self) {
        self.warm_start();
        let mut lambda = vec![0.0; self.prep.nk];
        self.root_bound = self.bound(&mut lambda, ROOT_ITERS);
        self.push_log(self.root_bound);
        self.outer(0, self.root_bound, lambda);
    }

    /// Greedy local search over configurations: repeatedly apply the
    /// single-hub change (close, open or relevel) that most improves the
    /// greedy objective.
    fn warm_start(&mut self) {
        let nl = self.prep.inst.service_level_count();
        let mut state: Vec<Option<usize>> = vec![None; self.prep.nk];
        let mut best = self.prep.greedy(&state);
        loop {
            if self.out_of_time() {
                break;
            }
            let mut step: Option<(Vec<Option<usize>>, Solution)> = None;
            for p in 0..self.prep.nk {
                for alt in std::iter::once(None).chain((0..nl).map(Some)) {
                    if alt == state[p] {
                        continue;
                    }
                    let mut trial = state.clone();
                    trial[p] = alt;
                    if let Some(cap) = self.cfg.max_hubs {
                        if trial.iter().flatten().count() > cap {
                            continue;
                        }
                    }
                    let sol = self.prep.greedy(&trial);
                    let target = step.as_ref().map_or(best.objective, |s| s.1.objective);
                    if sol.objective > target + EPS {
                        step = Some((trial, sol));
                    }
                }
            }
            let Some((next, sol)) = step else { break };
            state = next;
            best = sol;
        }
        self.offer(best);
    }

    /// Positive-profit options that may be usable in some completion of
    /// the current node, per commodity.
    fn candidates(&self) -> Vec<Vec<Opt>> {
        (0..self.prep.positive.len())
            .map(|c| {
                self.prep.positive[c]
                    .iter()
                    .flatten()
                    .filter(|o| self.optimistic(c, o))
                    .copied()
                    .collect()
            })
            .collect()
    }

    /// Bound on the objective of any completion of the current partial
    /// configuration: the smaller of a fractional knapsack against open and
    /// purchasable capacity, and a Lagrangian relaxation of the hub
    /// capacities optimised from `lambda` (updated in place).
    fn bound(&self, lambda: &mut [f64], iters: usize) -> f64 {
        let prep = self.prep;
        let cands = self.candidates();
        let mut committed = 0.0;
        let mut segments = Vec::new();
        let mut free = 0.0;
        for (p, s) in self.state.iter().enumerate() {
            match *s {
                HubState::Open(l) => {
                    committed += prep.setup[p][l];
                    free += prep.cap[p][l];
                }
                HubState::Undecided => {
                    let top = prep.cap[p].last().copied().unwrap_or(0.0);
                    if top > 0.0 {
                        segments.push((prep.unit_price[p].max(0.0), top));
                    }
                }
                HubState::Closed => {}
            }
        }
        if free > 0.0 {
            segments.push((0.0, free));
        }
        let mut items: Vec<(f64, f64)> = cands
            .iter()
            .filter_map(|opts| {
                let v = opts.iter().map(|o| o.profit).fold(0.0, f64::max);
                let u = opts.iter().map(|o| o.w).fold(f64::INFINITY, f64::min);
                (v > 0.0 && u > 0.0).then_some((v, u))
            })
            .collect();
        let knapsack = fractional_knapsack(&mut items, &mut segments) - committed;
        let target = self.threshold();
        if knapsack <= target {
            return knapsack;
        }
        let state = &self.state;
        let lagrangian = subgradient(lambda, iters, target, |lam, g| {
            let mut v = 0.0;
            for (p, s) in state.iter().enumerate() {
                g[p] = 0.0;
                match *s {
                    HubState::Open(l) => {
                        v += lam[p] * prep.cap[p][l] - prep.setup[p][l];
                        g[p] = prep.cap[p][l];
                    }
                    HubState::Undecided => {
                        let mut best = 0.0;
                        for l in 0..prep.cap[p].len() {
                            let t = lam[p] * prep.cap[p][l] - prep.setup[p][l];
                            if t > best {
                                best = t;
                                g[p] = prep.cap[p][l];
                            }
                        }
                        v += best;
                    }
                    HubState::Closed => {}
                }
            }
            for opts in &cands {
                let mut best = 0.0;
                let mut pick = None;
                for o in opts {
                    let a = adjusted(o, lam);
                    if a > best {
                        best = a;
                        pick = Some(o);
                    }
                }
                if let Some(o) = pick {
                    v += best;
                    g[o.p] -= o.w;
                    if o.q != o.p {
                        g[o.q] -= o.w;
                    }
                }
            }
            v
        });
        knapsack.min(lagrangian)
    }

    /// Whether `o` may be usable in some completion of the current node.
    fn optimistic(&self, c: usize, o: &Opt) -> bool {
        let prep = self.prep;
        let mut t = o.travel;
        for (idx, p) in [o.p, o.q].into_iter().enumerate() {
            if idx == 1 && p == o.p {
                break;
            }
            match self.state[p] {
                HubState::Closed => return false,
                HubState::Open(l) => {
                    if o.w > prep.cap[p][l] + EPS {
                        return false;
                    }
                    t += prep.transit[p][l];
                }
                HubState::Undecided => {
                    let fits = prep.cap[p].iter().position(|&w| o.w <= w + EPS);
                    let Some(l) = fits else { return false };
                    // Transit is nondecreasing in the level.
                    t += prep.transit[p][l];
                }
            }
        }
        if t > prep.max_time[c][o.r] + EPS {
            return false;
        }
        if let Some(i) = prep.origin[c] {
            if matches!(self.state[i], HubState::Open(_)) && o.p != i {
                return false;
            }
        }
        if let Some(j) = prep.dest[c] {
            if matches!(self.state[j], HubState::Open(_)) && o.q != j {
                return false;
            }
        }
        true
    }

    fn outer(&mut self, depth: usize, bound: f64, lambda: Vec<f64>) {
        if self.out_of_time() {
            self.abandoned = self.abandoned.max(bound);
            return;
        }
        self.nodes += 1;
        if bound <= self.threshold() {
            return;
        }
        if depth == self.order.len() {
            let state = self.decided();
            let complete = Inner::new(self, &state, lambda).run(self);
            if !complete {
                self.abandoned = self.abandoned.max(bound);
            }
            return;
        }
        let p = self.order[depth];
        let open_now = self.state.iter().filter(|s| matches!(s, HubState::Open(_))).count();
        let may_open = self.cfg.max_hubs.is_none_or(|m| open_now < m);
        let mut children = vec![HubState::Closed];
        if may_open {
            children.extend((0..self.prep.cap[p].len()).map(HubState::Open));
        }
        let mut scored: Vec<(HubState, f64, Vec<f64>)> = children
            .into_iter()
            .map(|s| {
                self.state[p] = s;
                let mut lam = lambda.clone();
                let b = self.bound(&mut lam, NODE_ITERS).min(bound);
                (s, b, lam)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (s, b, lam) in scored {
            self.state[p] = s;
            self.outer(depth + 1, b, lam);
        }
        self.state[p] = HubState::Undecided;
    }

    fn finish(mut self) -> (Solution, SolveLog) {
        let inc = self.incumbent.objective;
        let complete = !self.timed_out;
        let upper = if complete && self.cfg.max_hubs.is_none() {
            inc
        } else if complete {
            self.root_bound.max(inc)
        } else {
            self.abandoned.max(inc)
        };
        let gap = relative_gap(upper, inc);
        self.push_log(upper);
        let mut sol = self.incumbent;
        sol.status = if complete && self.cfg.max_hubs.is_none() {
            SolveStatus::Optimal
        } else {
            SolveStatus::Feasible { gap }
        };
        (sol, self.log)
    }
}

fn relative_gap(bound: f64, inc: f64) -> f64 {
    if !bound.is_finite() {
        return f64::INFINITY;
    }
    ((bound - inc) / inc.abs().max(1.0)).max(0.0)
}

/// One commodity's options under a complete configuration.
struct Item {
    c: usize,
    /// Positive profit, most profitable first.
    positive: Vec<Opt>,
    /// Nonpositive profit; only useful to lift a hub above its level's
    /// capacity floor.
    other: Vec<Opt>,
}

/// Branch-and-bound over commodities for a fixed configuration.
struct Inner {
    items: Vec<Item>,
    /// Open hub positions with (level, floor, capacity).
    level: Vec<Option<(usize, f64, f64)>>,
    setup: f64,
    load: Vec<f64>,
    /// Sum of best profits of items `t..`.
    suffix: Vec<f64>,
    /// Largest flow items `t..` can add to each hub, flattened `[t][p]`.
    reach: Vec<f64>,
    /// Hubs with a capacity floor to reach.
    floored: Vec<usize>,
    choice: Vec<Option<Opt>>,
    /// Capacity multipliers of the Lagrangian bound.
    lambda: Vec<f64>,
    nk: usize,
}

impl Inner {
    fn new(search: &Search, state: &[Option<usize>], lambda: Vec<f64>) -> Self {
        let prep = search.prep;
        let nk = prep.nk;
        let level: Vec<Option<(usize, f64, f64)>> = state
            .iter()
            .enumerate()
            .map(|(p, s)| s.map(|l| (l, prep.floor[p][l], prep.cap[p][l])))
            .collect();
        let floored: Vec<usize> = (0..nk)
            .filter(|&p| matches!(level[p], Some((l, _, _)) if l > 0))
            .collect();
        let items: Vec<Item> = (0..prep.options.len())
            .filter_map(|c| {
                let mut positive = Vec::new();
                let mut other = Vec::new();
                for o in &prep.options[c] {
                    if !prep.usable(c, o, state) {
                        continue;
                    }
                    if o.profit > 0.0 {
                        positive.push(*o);
                    } else if !floored.is_empty() && (floored.contains(&o.p) || floored.contains(&o.q)) {
                        other.push(*o);
                    }
                }
                (!positive.is_empty() || !other.is_empty()).then_some(Item { c, positive, other })
            })
            .collect();
        let setup = state
            .iter()
            .enumerate()
            .filter_map(|(p, s)| s.map(|l| prep.setup[p][l]))
            .sum();
        let n = items.len();
        Self {
            choice: vec![None; n],
            items,
            level,
            setup,
            load: vec![0.0; nk],
            suffix: Vec::new(),
            reach: Vec::new(),
            floored,
            lambda,
            nk,
        }
    }

    /// Optimises the multipliers at the root, drops options that cannot
    /// lead past `threshold` under them, and orders items by best profit and
    /// options by adjusted profit. Returns false when the root itself is pruned.
    fn prepare(&mut self, threshold: f64) -> bool {
        let mut lam = self.lambda.clone();
        let bound = subgradient(&mut lam, ROOT_ITERS, threshold, |l, g| self.dual(0, l, g));
        self.lambda = lam;
        if bound <= threshold {
            return false;
        }
        let lam = &self.lambda;
        let best_adj = |it: &Item| it.positive.iter().map(|o| adjusted(o, lam)).fold(0.0, f64::max);
        for it in &mut self.items {
            let top = best_adj(it);
            // Forcing `o` lowers the bound by at least `top - adjusted(o)`.
            let keep = |o: &Opt| bound - (top - adjusted(o, lam)) > threshold;
            it.positive.retain(keep);
            it.other.retain(keep);
            it.positive
                .sort_by(|a, b| adjusted(b, lam).total_cmp(&adjusted(a, lam)));
            it.other.sort_by(|a, b| b.profit.total_cmp(&a.profit));
        }
        self.items.retain(|it| !it.positive.is_empty() || !it.other.is_empty());
        let mut keyed: Vec<(f64, Item)> = std::mem::take(&mut self.items)
            .into_iter()
            .map(|it| (it.positive.iter().map(|o| o.profit).fold(0.0, f64::max), it))
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.c.cmp(&b.1.c)));
        self.items = keyed.into_iter().map(|(_, it)| it).collect();

        let (n, nk) = (self.items.len(), self.nk);
        self.choice = vec![None; n];
        self.suffix = vec![0.0; n + 1];
        self.reach = vec![0.0; (n + 1) * nk];
        for t in (0..n).rev() {
            let it = &self.items[t];
            let top = it.positive.iter().map(|o| o.profit).fold(0.0, f64::max);
            self.suffix[t] = self.suffix[t + 1] + top;
            let mut most = vec![0.0f64; nk];
            for o in it.positive.iter().chain(&it.other) {
                most[o.p] = most[o.p].max(o.w);
                most[o.q] = most[o.q].max(o.w);
            }
            for p in 0..nk {
                self.reach[t * nk + p] = self.reach[(t + 1) * nk + p] + most[p];
            }
        }
        true
    }

    /// Runs the search, offering improvements to `search`; returns whether
    /// it completed within the time limit.
    fn run(mut self, search: &mut Search) -> bool {
        if self.prepare(search.threshold() + self.setup) {
            self.dfs(search, 0, 0.0);
        }
        !search.timed_out
    }

    fn room(&self, p: usize) -> f64 {
        self.level[p].map_or(0.0, |x| x.2 - self.load[p])
    }

    fn fits(&self, o: &Opt) -> bool {
        o.w <= self.room(o.p) + EPS && (o.q == o.p || o.w <= self.room(o.q) + EPS)
    }

    fn apply(&mut self, o: &Opt, sign: f64) {
        self.load[o.p] += sign * o.w;
        if o.q != o.p {
            self.load[o.q] += sign * o.w;
        }
    }

    fn below_floor(&self, p: usize) -> bool {
        self.level[p].is_some_and(|(l, floor, _)| l > 0 && self.load[p] <= floor + EPS)
    }

    /// Best adjusted profit over item `t`'s fitting positive options, or
    /// zero for serving nothing.
    fn best_fitting(&self, t: usize, lam: &[f64]) -> (f64, Option<Opt>) {
        let mut best = 0.0;
        let mut pick = None;
        for o in &self.items[t].positive {
            let a = adjusted(o, lam);
            if a > best && self.fits(o) {
                best = a;
                pick = Some(*o);
            }
        }
        (best, pick)
    }

    /// Lagrangian bound on the profit of items `t..` under the residual
    /// capacities, with subgradient `g` (residual capacity minus load).
    fn dual(&self, t: usize, lam: &[f64], g: &mut [f64]) -> f64 {
        let mut v = 0.0;
        for p in 0..self.nk {
            let room = if self.level[p].is_some() {
                self.room(p).max(0.0)
            } else {
                0.0
            };
            v += lam[p] * room;
            g[p] = room;
        }
        for i in t..self.items.len() {
            let (best, pick) = self.best_fitting(i, lam);
            if let Some(o) = pick {
                v += best;
                g[o.p] -= o.w;
                if o.q != o.p {
                    g[o.q] -= o.w;
                }
            }
        }
        v
    }

    fn dfs(&mut self, search: &mut Search, t: usize, profit: f64) {
        if search.out_of_time() {
            return;
        }
        search.nodes += 1;
        let threshold = search.threshold() + self.setup;
        if profit + self.suffix[t] <= threshold {
            return;
        }
        for &p in &self.floored {
            let (_, floor, _) = self.level[p].expect("floored hubs are open");
            if self.load[p] + self.reach[t * self.nk + p] <= floor + EPS {
                return;
            }
        }
        if t == self.items.len() {
            self.leaf(search);
            return;
        }
        let mut g = vec![0.0; self.nk];
        let mut bound = self.dual(t, &self.lambda, &mut g);
        if profit + bound <= threshold {
            return;
        }
        let mut saved = None;
        if t > 0 && t.is_multiple_of(INNER_REOPT_EVERY) {
            let mut lam = self.lambda.clone();
            // The first evaluation is at the current multipliers, so this never
            // exceeds the bound above.
            bound = subgradient(&mut lam, INNER_ITERS, threshold - profit, |l, g| self.dual(t, l, g));
            if profit + bound <= threshold {
                return;
            }
            saved = Some(std::mem::replace(&mut self.lambda, lam));
        }
        // With the multipliers fixed, taking option `o` (or nothing) costs
        // the bound at least `top - adjusted(o)`.
        let (top, _) = self.best_fitting(t, &self.lambda);
        let slack = profit + bound - top - threshold;
        let n_pos = self.items[t].positive.len();
        for i in 0..n_pos {
            let o = self.items[t].positive[i];
            if slack + adjusted(&o, &self.lambda) <= 0.0 || !self.fits(&o) {
                continue;
            }
            self.apply(&o, 1.0);
            self.choice[t] = Some(o);
            self.dfs(search, t + 1, profit + o.profit);
            self.apply(&o, -1.0);
        }
        self.choice[t] = None;
        if slack > 0.0 {
            self.dfs(search, t + 1, profit);
        }
        let n_other = self.items[t].other.len();
        for i in 0..n_other {
            let o = self.items[t].other[i];
            if slack + adjusted(&o, &self.lambda) <= 0.0
                || !(self.below_floor(o.p) || self.below_floor(o.q))
                || !self.fits(&o)
            {
                continue;
            }
            self.apply(&o, 1.0);
            self.choice[t] = Some(o);
            self.dfs(search, t + 1, profit + o.profit);
            self.apply(&o, -1.0);
        }
        self.choice[t] = None;
        if let Some(old) = saved {
            self.lambda = old;
        }
    }

    fn leaf(&self, search: &mut Search) {
        if self.floored.iter().any(|&p| self.below_floor(p)) {
            return;
        }
        let prep = search.prep;
        let hubs: HubConfig = self
            .level
            .iter()
            .enumerate()
            .filter_map(|(p, s)| s.map(|(l, _, _)| (prep.inst.hub(p).node, l)))
            .collect();
        let served: BTreeMap<usize, Served> = self
            .items
            .iter()
            .zip(&self.choice)
            .filter_map(|(it, o)| o.map(|o| (it.c, prep.served(&o))))
            .collect();
        let sol = Solution::from_decisions(prep.inst, hubs, served, SolveStatus::Feasible { gap: 1.0 });
        search.offer(sol);
    }
}
