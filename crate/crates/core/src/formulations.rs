//! The two MILP formulations.
//!
//! F1 uses 4-index routing variables `x_ijkm` with leg-role variables
//! `f`, `s`, `o` and flows `g`; F2 uses 5-index routing variables `x_ijkm^r`
//! with per-hub transit times `t`. Variables are named with 1-based node
//! and level numbers (`Y_2_1`, `x_2_4_2_3_1`, ...).
//!
//! F1's objective also subtracts the routing cost `C_ijkm g_ijkm`, so that
//! both formulations value a solution as revenue minus routing cost minus
//! setup cost.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, InstanceViolation};
use crate::milp::{Direction, MilpError, Model, ModelBuilder, Sense, VarId, VarKey};
use crate::preprocess::FixMask;
use crate::solution::{Served, Solution, SolveStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    F1,
    F2,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F1 => "f1",
            Self::F2 => "f2",
        })
    }
}

impl std::str::FromStr for Formulation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Self::F1),
            "f2" => Ok(Self::F2),
            other => Err(format!("unknown formulation {other:?} (expected f1 or f2)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("instance is not valid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidInstance(Vec<InstanceViolation>),
    #[error("fix mask does not match the instance dimensions")]
    MaskShape,
    #[error("solution routes commodity ({i},{j}) through hub {hub}, which is not open")]
    ClosedHub { i: usize, j: usize, hub: usize },
    #[error("solution refers to {0}, which is not in the instance")]
    OutOfRange(String),
    #[error("assignment has conflicting values: {0}")]
    Conflict(String),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub include_consistency: bool,
    /// F2 only.
    pub include_valid_inequality: bool,
    /// Fixed variables get upper bound 0; they are not removed.
    pub fix_mask: Option<FixMask>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            include_consistency: true,
            include_valid_inequality: false,
            fix_mask: None,
        }
    }
}

/// Structural variable and constraint counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModelSize {
    pub binaries: usize,
    pub continuous: usize,
    pub constraints: usize,
}

/// Closed-form counts for a model with `c` commodities, `k` potential hubs,
/// `l` service levels and `r` demand levels, all constraint families
/// included and no valid inequalities.
pub fn size_formula(which: Formulation, c: usize, k: usize, l: usize, r: usize) -> ModelSize {
    match which {
        Formulation::F1 => ModelSize {
            binaries: c * k * k + 3 * c * k * l + k * l + c * r,
            continuous: c * k * k,
            constraints: 2 * k + c * (6 + 4 * k + k * l + k * k),
        },
        Formulation::F2 => ModelSize {
            binaries: c * k * k * r + k * l + c * r,
            continuous: c * k,
            constraints: 2 * k + c * (4 + 3 * k + r),
        },
    }
}

pub fn model_size(inst: &Instance, which: Formulation) -> ModelSize {
    size_formula(
        which,
        inst.commodities().len(),
        inst.hub_count(),
        inst.service_level_count(),
        inst.demand_level_count(),
    )
}

/// Variable ids of F1, addressed by commodity index, hub positions and
/// level indices.
#[derive(Clone, Debug)]
pub struct F1VarIndex {
    hubs: usize,
    service: usize,
    demand: usize,
    y: Vec<VarId>,
    beta: Vec<VarId>,
    x: Vec<VarId>,
    f: Vec<VarId>,
    s: Vec<VarId>,
    o: Vec<VarId>,
    g: Vec<VarId>,
}

impl F1VarIndex {
    pub fn y(&self, p: usize, l: usize) -> VarId {
        self.y[p * self.service + l]
    }
    pub fn beta(&self, c: usize, r: usize) -> VarId {
        self.beta[c * self.demand + r]
    }
    pub fn x(&self, c: usize, p: usize, q: usize) -> VarId {
        self.x[(c * self.hubs + p) * self.hubs + q]
    }
    pub fn f(&self, c: usize, p: usize, l: usize) -> VarId {
        self.f[(c * self.hubs + p) * self.service + l]
    }
    pub fn s(&self, c: usize, p: usize, l: usize) -> VarId {
        self.s[(c * self.hubs + p) * self.service + l]
    }
    pub fn o(&self, c: usize, p: usize, l: usize) -> VarId {
        self.o[(c * self.hubs + p) * self.service + l]
    }
    pub fn g(&self, c: usize, p: usize, q: usize) -> VarId {
        self.g[(c * self.hubs + p) * self.hubs + q]
    }
}

/// Variable ids of F2.
#[derive(Clone, Debug)]
pub struct F2VarIndex {
    hubs: usize,
    service: usize,
    demand: usize,
    y: Vec<VarId>,
    beta: Vec<VarId>,
    x: Vec<VarId>,
    t: Vec<VarId>,
}

impl F2VarIndex {
    pub fn y(&self, p: usize, l: usize) -> VarId {
        self.y[p * self.service + l]
    }
    pub fn beta(&self, c: usize, r: usize) -> VarId {
        self.beta[c * self.demand + r]
    }
    pub fn x(&self, c: usize, p: usize, q: usize, r: usize) -> VarId {
        self.x[((c * self.hubs + p) * self.hubs + q) * self.demand + r]
    }
    pub fn t(&self, c: usize, p: usize) -> VarId {
        self.t[c * self.hubs + p]
    }
}

#[derive(Clone, Debug)]
pub enum VarIndex {
    F1(F1VarIndex),
    F2(F2VarIndex),
}

impl VarIndex {
    pub fn formulation(&self) -> Formulation {
        match self {
            Self::F1(_) => Formulation::F1,
            Self::F2(_) => Formulation::F2,
        }
    }
}

fn check(inst: &Instance, opts: &BuildOptions) -> Result<(), FormulationError> {
    // Data assumptions (A1-A3) are handled by fixing, not rejected.
    let bad: Vec<InstanceViolation> = inst
        .validate()
        .into_iter()
        .filter(|v| !matches!(v.rule(), "A1" | "A2" | "A3"))
        .collect();
    if !bad.is_empty() {
        return Err(FormulationError::InvalidInstance(bad));
    }
    if let Some(mask) = &opts.fix_mask {
        if !mask.fits(inst) {
            return Err(FormulationError::MaskShape);
        }
    }
    Ok(())
}

/// Shared Y and beta variables.
fn location_vars(
    b: &mut ModelBuilder,
    inst: &Instance,
    mask: Option<&FixMask>,
) -> Result<(Vec<VarId>, Vec<VarId>), MilpError> {
    let mut y = Vec::new();
    for hub in inst.hubs() {
        for l in 0..inst.service_level_count() {
            y.push(b.binary(
                format!("Y_{}_{}", hub.node + 1, l + 1),
                VarKey::new("Y", &[hub.node, l]),
            )?);
        }
    }
    let mut beta = Vec::new();
    for (c, com) in inst.commodities().iter().enumerate() {
        for r in 0..inst.demand_level_count() {
            let id = b.binary(
                format!("beta_{}_{}_{}", com.origin + 1, com.dest + 1, r + 1),
                VarKey::new("beta", &[com.origin, com.dest, r]),
            )?;
            if mask.is_some_and(|m| m.beta_rule(c, r).is_some()) {
                b.set_upper(id, 0.0)?;
            }
            beta.push(id);
        }
    }
    Ok((y, beta))
}

fn hub_level_rows(b: &mut ModelBuilder, inst: &Instance, y: &[VarId]) -> Result<(), MilpError> {
    let nl = inst.service_level_count();
    for (p, hub) in inst.hubs().iter().enumerate() {
        b.add_constraint(
            format!("hub_level_{}", hub.node + 1),
            (0..nl).map(|l| (y[p * nl + l], 1.0)),
            Sense::Le,
            1.0,
        )?;
    }
    Ok(())
}

fn demand_level_rows(b: &mut ModelBuilder, inst: &Instance, beta: &[VarId]) -> Result<(), MilpError> {
    let nr = inst.demand_level_count();
    for (c, com) in inst.commodities().iter().enumerate() {
        b.add_constraint(
            format!("demand_level_{}_{}", com.origin + 1, com.dest + 1),
            (0..nr).map(|r| (beta[c * nr + r], 1.0)),
            Sense::Le,
            1.0,
        )?;
    }
    Ok(())
}

/// Terms of `sum_k route(k, m) (k != own)` and `sum_l Y_own^l` for the
/// consistency rows; `route` yields the ids of one (first, second) pair.
fn consistency_rows(
    b: &mut ModelBuilder,
    inst: &Instance,
    y: &[VarId],
    routes: &dyn Fn(usize, usize, usize) -> Vec<VarId>,
) -> Result<(), MilpError> {
    let nk = inst.hub_count();
    let nl = inst.service_level_count();
    for (c, com) in inst.commodities().iter().enumerate() {
        let tag = format!("{}_{}", com.origin + 1, com.dest + 1);
        for (end, node) in [("origin", com.origin), ("dest", com.dest)] {
            let own = inst.hub_position(node);
            let mut terms = Vec::new();
            for p in 0..nk {
                for q in 0..nk {
                    let leg = if end == "origin" { p } else { q };
                    if Some(leg) != own {
                        terms.extend(routes(c, p, q).into_iter().map(|v| (v, 1.0)));
                    }
                }
            }
            if let Some(o) = own {
                terms.extend((0..nl).map(|l| (y[o * nl + l], 1.0)));
            }
            b.add_constraint(format!("consistency_{end}_{tag}"), terms, Sense::Le, 1.0)?;
        }
    }
    Ok(())
}

pub fn build(inst: &Instance, which: Formulation, opts: &BuildOptions) -> Result<(Model, VarIndex), FormulationError> {
    Ok(match which {
        Formulation::F1 => {
            let (m, v) = build_f1(inst, opts)?;
            (m, VarIndex::F1(v))
        }
        Formulation::F2 => {
            let (m, v) = build_f2(inst, opts)?;
            (m, VarIndex::F2(v))
        }
    })
}

pub fn build_f1(inst: &Instance, opts: &BuildOptions) -> Result<(Model, F1VarIndex), FormulationError> {
    check(inst, opts)?;
    let mask = opts.fix_mask.as_ref();
    let (nk, nl, nr) = (inst.hub_count(), inst.service_level_count(), inst.demand_level_count());
    let hubs = inst.hubs();
    let coms = inst.commodities();
    let mut b = ModelBuilder::new("hlctdp_f1", Direction::Maximize);

    let (y, beta) = location_vars(&mut b, inst, mask)?;
    let mut x = Vec::with_capacity(coms.len() * nk * nk);
    for (c, com) in coms.iter().enumerate() {
        let (i, j) = (com.origin, com.dest);
        for hp in hubs {
            for (q, hq) in hubs.iter().enumerate() {
                let (k, m) = (hp.node, hq.node);
                let id = b.binary(
                    format!("x_{}_{}_{}_{}", i + 1, j + 1, k + 1, m + 1),
                    VarKey::new("x", &[i, j, k, m]),
                )?;
                let p = inst.hub_position(k).expect("hub node");
                if mask.is_some_and(|ms| ms.is_path_fixed(c, p, q)) {
                    b.set_upper(id, 0.0)?;
                }
                x.push(id);
            }
        }
    }
    let mut roles: [Vec<VarId>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (family, ids) in ["f", "s", "o"].into_iter().zip(roles.iter_mut()) {
        for com in coms {
            let (i, j) = (com.origin, com.dest);
            for hp in hubs {
                for l in 0..nl {
                    ids.push(b.binary(
                        format!("{family}_{}_{}_{}_{}", i + 1, j + 1, hp.node + 1, l + 1),
                        VarKey::new(family, &[i, j, hp.node, l]),
                    )?);
                }
            }
        }
    }
    let [f, s, o] = roles;
    let mut g = Vec::with_capacity(x.len());
    for com in coms {
        let (i, j) = (com.origin, com.dest);
        for hp in hubs {
            for hq in hubs {
                let (k, m) = (hp.node, hq.node);
                g.push(b.continuous(
                    format!("g_{}_{}_{}_{}", i + 1, j + 1, k + 1, m + 1),
                    0.0,
                    f64::INFINITY,
                    VarKey::new("g", &[i, j, k, m]),
                )?);
            }
        }
    }
    let idx = F1VarIndex {
        hubs: nk,
        service: nl,
        demand: nr,
        y,
        beta,
        x,
        f,
        s,
        o,
        g,
    };

    let mut obj = Vec::new();
    for (c, com) in coms.iter().enumerate() {
        for (r, lvl) in com.levels.iter().enumerate() {
            obj.push((idx.beta(c, r), lvl.revenue * lvl.demand));
        }
        for (p, hp) in hubs.iter().enumerate() {
            for (q, hq) in hubs.iter().enumerate() {
                let cost = inst.route_cost_unchecked(com.origin, com.dest, hp.node, hq.node);
                obj.push((idx.g(c, p, q), -cost));
            }
        }
    }
    for (p, hub) in hubs.iter().enumerate() {
        for (l, lvl) in hub.levels.iter().enumerate() {
            obj.push((idx.y(p, l), -lvl.setup_cost));
        }
    }
    b.set_objective(obj, 0.0);

    hub_level_rows(&mut b, inst, &idx.y)?;
    demand_level_rows(&mut b, inst, &idx.beta)?;
    let tag = |c: usize| format!("{}_{}", coms[c].origin + 1, coms[c].dest + 1);
    let node = |p: usize| hubs[p].node + 1;

    for c in 0..coms.len() {
        let mut terms: Vec<(VarId, f64)> = (0..nr).map(|r| (idx.beta(c, r), 1.0)).collect();
        for p in 0..nk {
            for q in 0..nk {
                terms.push((idx.x(c, p, q), -1.0));
            }
        }
        b.add_constraint(format!("route_{}", tag(c)), terms, Sense::Eq, 0.0)?;
    }
    for (role, name) in [(0, "first"), (1, "second"), (2, "only")] {
        for c in 0..coms.len() {
            for p in 0..nk {
                let mut terms: Vec<(VarId, f64)> = (0..nl)
                    .map(|l| {
                        let v = match role {
                            0 => idx.f(c, p, l),
                            1 => idx.s(c, p, l),
                            _ => idx.o(c, p, l),
                        };
                        (v, 1.0)
                    })
                    .collect();
                match role {
                    0 => terms.extend((0..nk).filter(|&q| q != p).map(|q| (idx.x(c, p, q), -1.0))),
                    1 => terms.extend((0..nk).filter(|&q| q != p).map(|q| (idx.x(c, q, p), -1.0))),
                    _ => terms.push((idx.x(c, p, p), -1.0)),
                }
                b.add_constraint(format!("{name}_{}_{}", tag(c), node(p)), terms, Sense::Eq, 0.0)?;
            }
        }
    }
    for c in 0..coms.len() {
        for p in 0..nk {
            let mut terms = vec![(idx.x(c, p, p), 1.0)];
            for q in (0..nk).filter(|&q| q != p) {
                terms.push((idx.x(c, p, q), 1.0));
                terms.push((idx.x(c, q, p), 1.0));
            }
            terms.extend((0..nl).map(|l| (idx.y(p, l), -1.0)));
            b.add_constraint(format!("open_{}_{}", tag(c), node(p)), terms, Sense::Le, 0.0)?;
        }
    }
    for c in 0..coms.len() {
        for p in 0..nk {
            for l in 0..nl {
                b.add_constraint(
                    format!("leg_level_{}_{}_{}", tag(c), node(p), l + 1),
                    [
                        (idx.f(c, p, l), 1.0),
                        (idx.s(c, p, l), 1.0),
                        (idx.o(c, p, l), 1.0),
                        (idx.y(p, l), -1.0),
                    ],
                    Sense::Le,
                    0.0,
                )?;
            }
        }
    }
    for (c, com) in coms.iter().enumerate() {
        let big_m = com.levels.iter().map(|l| l.demand).fold(0.0, f64::max);
        for p in 0..nk {
            for q in 0..nk {
                b.add_constraint(
                    format!("flow_route_{}_{}_{}", tag(c), node(p), node(q)),
                    [(idx.g(c, p, q), 1.0), (idx.x(c, p, q), -big_m)],
                    Sense::Le,
                    0.0,
                )?;
            }
        }
    }
    for (c, com) in coms.iter().enumerate() {
        let mut terms = Vec::new();
        for p in 0..nk {
            for q in 0..nk {
                terms.push((idx.g(c, p, q), 1.0));
            }
        }
        terms.extend(com.levels.iter().enumerate().map(|(r, l)| (idx.beta(c, r), -l.demand)));
        b.add_constraint(format!("flow_demand_{}", tag(c)), terms, Sense::Eq, 0.0)?;
    }
    for (p, hub) in hubs.iter().enumerate() {
        let mut inflow = Vec::new();
        for c in 0..coms.len() {
            inflow.push((idx.g(c, p, p), 1.0));
            for q in (0..nk).filter(|&q| q != p) {
                inflow.push((idx.g(c, p, q), 1.0));
                inflow.push((idx.g(c, q, p), 1.0));
            }
        }
        let lower: Vec<(VarId, f64)> = (0..nl).map(|l| (idx.y(p, l), hub.capacity_floor(l))).collect();
        let upper: Vec<(VarId, f64)> = hub
            .levels
            .iter()
            .enumerate()
            .map(|(l, lv)| (idx.y(p, l), lv.capacity))
            .collect();
        b.add_two_sided(&format!("capacity_{}", hub.node + 1), lower, &inflow, upper)?;
    }
    for (c, com) in coms.iter().enumerate() {
        let mut terms = Vec::new();
        for (p, hp) in hubs.iter().enumerate() {
            for (q, hq) in hubs.iter().enumerate() {
                terms.push((
                    idx.x(c, p, q),
                    inst.route_time_unchecked(com.origin, com.dest, hp.node, hq.node),
                ));
            }
            for (l, lvl) in hp.levels.iter().enumerate() {
                for v in [idx.f(c, p, l), idx.s(c, p, l), idx.o(c, p, l)] {
                    terms.push((v, lvl.transit));
                }
            }
        }
        terms.extend(
            com.levels
                .iter()
                .enumerate()
                .map(|(r, l)| (idx.beta(c, r), -l.max_time)),
        );
        b.add_constraint(format!("time_{}", tag(c)), terms, Sense::Le, 0.0)?;
    }
    if opts.include_consistency {
        consistency_rows(&mut b, inst, &idx.y, &|c, p, q| vec![idx.x(c, p, q)])?;
    }
    Ok((b.build(), idx))
}

pub fn build_f2(inst: &Instance, opts: &BuildOptions) -> Result<(Model, F2VarIndex), FormulationError> {
    check(inst, opts)?;
    let mask = opts.fix_mask.as_ref();
    let (nk, nl, nr) = (inst.hub_count(), inst.service_level_count(), inst.demand_level_count());
    let hubs = inst.hubs();
    let coms = inst.commodities();
    let mut b = ModelBuilder::new("hlctdp_f2", Direction::Maximize);

    let (y, beta) = location_vars(&mut b, inst, mask)?;
    let mut x = Vec::with_capacity(coms.len() * nk * nk * nr);
    for (c, com) in coms.iter().enumerate() {
        let (i, j) = (com.origin, com.dest);
        for (p, hp) in hubs.iter().enumerate() {
            for (q, hq) in hubs.iter().enumerate() {
                for r in 0..nr {
                    let (k, m) = (hp.node, hq.node);
                    let id = b.binary(
                        format!("x_{}_{}_{}_{}_{}", i + 1, j + 1, k + 1, m + 1, r + 1),
                        VarKey::new("x", &[i, j, k, m, r]),
                    )?;
                    if mask.is_some_and(|ms| ms.is_route_fixed(c, p, q, r)) {
                        b.set_upper(id, 0.0)?;
                    }
                    x.push(id);
                }
            }
        }
    }
    let mut t = Vec::with_capacity(coms.len() * nk);
    for com in coms {
        let (i, j) = (com.origin, com.dest);
        for hp in hubs {
            t.push(b.continuous(
                format!("t_{}_{}_{}", i + 1, j + 1, hp.node + 1),
                0.0,
                f64::INFINITY,
                VarKey::new("t", &[i, j, hp.node]),
            )?);
        }
    }
    let idx = F2VarIndex {
        hubs: nk,
        service: nl,
        demand: nr,
        y,
        beta,
        x,
        t,
    };

    let mut obj = Vec::new();
    for c in 0..coms.len() {
        for p in 0..nk {
            for q in 0..nk {
                for r in 0..nr {
                    obj.push((
                        idx.x(c, p, q, r),
                        inst.net_profit_unchecked(c, hubs[p].node, hubs[q].node, r),
                    ));
                }
            }
        }
    }
    for (p, hub) in hubs.iter().enumerate() {
        for (l, lvl) in hub.levels.iter().enumerate() {
            obj.push((idx.y(p, l), -lvl.setup_cost));
        }
    }
    b.set_objective(obj, 0.0);

    let tag = |c: usize| format!("{}_{}", coms[c].origin + 1, coms[c].dest + 1);
    let node = |p: usize| hubs[p].node + 1;
    // Routes of commodity c at level r that visit hub p, each once.
    let visits = |c: usize, p: usize, r: usize| {
        let mut v = vec![idx.x(c, p, p, r)];
        for q in (0..nk).filter(|&q| q != p) {
            v.push(idx.x(c, p, q, r));
            v.push(idx.x(c, q, p, r));
        }
        v
    };

    hub_level_rows(&mut b, inst, &idx.y)?;
    demand_level_rows(&mut b, inst, &idx.beta)?;
    for c in 0..coms.len() {
        for r in 0..nr {
            let mut terms = vec![(idx.beta(c, r), 1.0)];
            for p in 0..nk {
                for q in 0..nk {
                    terms.push((idx.x(c, p, q, r), -1.0));
                }
            }
            b.add_constraint(format!("route_{}_{}", tag(c), r + 1), terms, Sense::Eq, 0.0)?;
        }
    }
    for c in 0..coms.len() {
        for p in 0..nk {
            let mut terms: Vec<(VarId, f64)> = (0..nr).flat_map(|r| visits(c, p, r)).map(|v| (v, 1.0)).collect();
            terms.extend((0..nl).map(|l| (idx.y(p, l), -1.0)));
            b.add_constraint(format!("open_{}_{}", tag(c), node(p)), terms, Sense::Le, 0.0)?;
        }
    }
    for (p, hub) in hubs.iter().enumerate() {
        let mut inflow = Vec::new();
        for (c, com) in coms.iter().enumerate() {
            for (r, lvl) in com.levels.iter().enumerate() {
                inflow.extend(visits(c, p, r).into_iter().map(|v| (v, lvl.demand)));
            }
        }
        let lower: Vec<(VarId, f64)> = (1..nl)
            .map(|l| (idx.y(p, l), hub.levels[l - 1].capacity + 1.0))
            .collect();
        let upper: Vec<(VarId, f64)> = hub
            .levels
            .iter()
            .enumerate()
            .map(|(l, lv)| (idx.y(p, l), lv.capacity))
            .collect();
        b.add_two_sided(&format!("capacity_{}", hub.node + 1), lower, &inflow, upper)?;
    }
    for (c, com) in coms.iter().enumerate() {
        let mut terms = Vec::new();
        for (p, hp) in hubs.iter().enumerate() {
            for (q, hq) in hubs.iter().enumerate() {
                let time = inst.route_time_unchecked(com.origin, com.dest, hp.node, hq.node);
                for r in 0..nr {
                    terms.push((idx.x(c, p, q, r), time));
                }
            }
            terms.push((idx.t(c, p), 1.0));
        }
        terms.extend(
            com.levels
                .iter()
                .enumerate()
                .map(|(r, l)| (idx.beta(c, r), -l.max_time)),
        );
        b.add_constraint(format!("time_{}", tag(c)), terms, Sense::Le, 0.0)?;
    }
    for c in 0..coms.len() {
        for (p, hub) in hubs.iter().enumerate() {
            // t >= sum_l h^l Y^l - h^L (1 - uses), with uses the routes via p.
            let top = hub.levels.last().map_or(0.0, |l| l.transit);
            let mut terms = vec![(idx.t(c, p), 1.0)];
            terms.extend(hub.levels.iter().enumerate().map(|(l, lv)| (idx.y(p, l), -lv.transit)));
            terms.extend((0..nr).flat_map(|r| visits(c, p, r)).map(|v| (v, -top)));
            b.add_constraint(format!("transit_lb_{}_{}", tag(c), node(p)), terms, Sense::Ge, -top)?;
        }
    }
    for c in 0..coms.len() {
        for (p, hub) in hubs.iter().enumerate() {
            let mut terms = vec![(idx.t(c, p), 1.0)];
            terms.extend(hub.levels.iter().enumerate().map(|(l, lv)| (idx.y(p, l), -lv.transit)));
            b.add_constraint(format!("transit_ub_{}_{}", tag(c), node(p)), terms, Sense::Le, 0.0)?;
        }
    }
    if opts.include_consistency {
        consistency_rows(&mut b, inst, &idx.y, &|c, p, q| {
            (0..nr).map(|r| idx.x(c, p, q, r)).collect()
        })?;
    }
    if opts.include_valid_inequality {
        for c in 0..coms.len() {
            for (p, hub) in hubs.iter().enumerate() {
                let hmax = hub.levels.iter().map(|l| l.transit).fold(0.0, f64::max);
                let mut terms = vec![(idx.t(c, p), 1.0)];
                terms.extend((0..nr).flat_map(|r| visits(c, p, r)).map(|v| (v, -hmax)));
                b.add_constraint(format!("transit_vi_{}_{}", tag(c), node(p)), terms, Sense::Le, 0.0)?;
            }
        }
    }
    Ok((b.build(), idx))
}

struct Decisions {
    /// Hub position -> level.
    hub_levels: BTreeMap<usize, usize>,
}

fn hub_decisions(inst: &Instance, sol: &Solution) -> Result<Decisions, FormulationError> {
    let mut hub_levels = BTreeMap::new();
    for (&node, &l) in &sol.hub_levels {
        let p = inst
            .hub_position(node)
            .ok_or_else(|| FormulationError::OutOfRange(format!("hub {}", node + 1)))?;
        if l >= inst.service_level_count() {
            return Err(FormulationError::OutOfRange(format!(
                "level {} at hub {}",
                l + 1,
                node + 1
            )));
        }
        hub_levels.insert(p, l);
    }
    Ok(Decisions { hub_levels })
}

/// Route of a served commodity as (commodity, level, first, second) hub
/// positions, checked against open hubs.
fn served_positions(
    inst: &Instance,
    d: &Decisions,
    c: usize,
    s: &Served,
) -> Result<(usize, usize, usize), FormulationError> {
    let com = inst
        .commodities()
        .get(c)
        .ok_or_else(|| FormulationError::OutOfRange(format!("commodity index {c}")))?;
    if s.level >= com.levels.len() {
        return Err(FormulationError::OutOfRange(format!(
            "demand level {} of ({},{})",
            s.level + 1,
            com.origin + 1,
            com.dest + 1
        )));
    }
    let pos = |node: usize| -> Result<usize, FormulationError> {
        match inst.hub_position(node) {
            Some(p) if d.hub_levels.contains_key(&p) => Ok(p),
            _ => Err(FormulationError::ClosedHub {
                i: com.origin + 1,
                j: com.dest + 1,
                hub: node + 1,
            }),
        }
    };
    Ok((s.level, pos(s.first)?, pos(s.second)?))
}

/// Maps a combinatorial solution onto the variables of a built model.
pub fn encode_solution(
    inst: &Instance,
    sol: &Solution,
    index: &VarIndex,
    var_count: usize,
) -> Result<Vec<f64>, FormulationError> {
    let d = hub_decisions(inst, sol)?;
    let mut v = vec![0.0; var_count];
    match index {
        VarIndex::F1(ix) => {
            for (&p, &l) in &d.hub_levels {
                v[ix.y(p, l)] = 1.0;
            }
            for (&c, s) in &sol.served {
                let (r, p, q) = served_positions(inst, &d, c, s)?;
                v[ix.beta(c, r)] = 1.0;
                v[ix.x(c, p, q)] = 1.0;
                v[ix.g(c, p, q)] = inst.commodity(c).levels[r].demand;
                if p == q {
                    v[ix.o(c, p, d.hub_levels[&p])] = 1.0;
                } else {
                    v[ix.f(c, p, d.hub_levels[&p])] = 1.0;
                    v[ix.s(c, q, d.hub_levels[&q])] = 1.0;
                }
            }
        }
        VarIndex::F2(ix) => {
            for (&p, &l) in &d.hub_levels {
                v[ix.y(p, l)] = 1.0;
            }
            for (&c, s) in &sol.served {
                let (r, p, q) = served_positions(inst, &d, c, s)?;
                v[ix.beta(c, r)] = 1.0;
                v[ix.x(c, p, q, r)] = 1.0;
                for h in [p, q] {
                    v[ix.t(c, h)] = inst.hub(h).levels[d.hub_levels[&h]].transit;
                }
            }
        }
    }
    Ok(v)
}

fn on(x: f64) -> bool {
    x > 0.5
}

/// Reads hub levels and served commodities back from an assignment. Only
/// the structural decisions are used; objective terms are recomputed from
/// the instance.
pub fn decode(inst: &Instance, index: &VarIndex, values: &[f64]) -> Result<Solution, FormulationError> {
    let (nk, nl, nr) = (inst.hub_count(), inst.service_level_count(), inst.demand_level_count());
    let y = |p: usize, l: usize| match index {
        VarIndex::F1(ix) => values[ix.y(p, l)],
        VarIndex::F2(ix) => values[ix.y(p, l)],
    };
    let mut hub_levels = BTreeMap::new();
    for p in 0..nk {
        let open: Vec<usize> = (0..nl).filter(|&l| on(y(p, l))).collect();
        match open[..] {
            [] => {}
            [l] => {
                hub_levels.insert(inst.hub(p).node, l);
            }
            _ => {
                return Err(FormulationError::Conflict(format!(
                    "hub {} is open at several levels",
                    inst.hub(p).node + 1
                )))
            }
        }
    }
    let mut served = BTreeMap::new();
    for (c, com) in inst.commodities().iter().enumerate() {
        let mut picks = Vec::new();
        match index {
            VarIndex::F1(ix) => {
                let levels: Vec<usize> = (0..nr).filter(|&r| on(values[ix.beta(c, r)])).collect();
                for p in 0..nk {
                    for q in 0..nk {
                        if on(values[ix.x(c, p, q)]) {
                            let r = match levels[..] {
                                [r] => r,
                                _ => {
                                    return Err(FormulationError::Conflict(format!(
                                        "commodity ({},{}) is routed with {} demand levels selected",
                                        com.origin + 1,
                                        com.dest + 1,
                                        levels.len()
                                    )))
                                }
                            };
                            picks.push((r, p, q));
                        }
                    }
                }
            }
            VarIndex::F2(ix) => {
                for p in 0..nk {
                    for q in 0..nk {
                        for r in 0..nr {
                            if on(values[ix.x(c, p, q, r)]) {
                                picks.push((r, p, q));
                            }
                        }
                    }
                }
            }
        }
        match picks[..] {
            [] => {}
            [(r, p, q)] => {
                served.insert(
                    c,
                    Served {
                        level: r,
                        first: inst.hub(p).node,
                        second: inst.hub(q).node,
                    },
                );
            }
            _ => {
                return Err(FormulationError::Conflict(format!(
                    "commodity ({},{}) has {} routes",
                    com.origin + 1,
                    com.dest + 1,
                    picks.len()
                )))
            }
        }
    }
    let status = if inst.commodities().is_empty() || inst.hub_count() == 0 {
        SolveStatus::Empty
    } else {
        SolveStatus::Optimal
    };
    Ok(Solution::from_decisions(inst, hub_levels, served, status))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::example_one;

    fn example_optimum(inst: &Instance) -> Solution {
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

    fn example_relaxed(inst: &Instance) -> Solution {
        let hubs = BTreeMap::from([(1, 0), (2, 0)]);
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
                    first: 2,
                    second: 2,
                },
            ),
        ]);
        Solution::from_decisions(inst, hubs, served, SolveStatus::Feasible { gap: 0.0 })
    }

    #[test]
    fn closed_form_counts() {
        assert_eq!(size_formula(Formulation::F1, 12, 4, 2, 1).constraints, 560);
        assert_eq!(size_formula(Formulation::F2, 12, 4, 1, 2).constraints, 224);
        assert_eq!(size_formula(Formulation::F2, 870, 30, 1, 1).binaries, 783_900);
        assert_eq!(size_formula(Formulation::F2, 1560, 40, 1, 2).binaries, 4_995_160);
        assert_eq!(
            size_formula(Formulation::F1, 0, 5, 2, 3),
            ModelSize {
                binaries: 10,
                continuous: 0,
                constraints: 10
            }
        );
    }

    #[test]
    fn built_models_match_formulas() {
        let inst = example_one();
        for which in [Formulation::F1, Formulation::F2] {
            let (m, _) = build(&inst, which, &BuildOptions::default()).unwrap();
            let size = model_size(&inst, which);
            assert_eq!(m.logical_constraint_count(), size.constraints, "{which}");
            assert_eq!(m.binary_count(), size.binaries, "{which}");
            assert_eq!(m.continuous_count(), size.continuous, "{which}");
        }
    }

    #[test]
    fn example_optimum_scores_550_in_both() {
        let inst = example_one();
        let sol = example_optimum(&inst);
        for which in [Formulation::F1, Formulation::F2] {
            let (m, ix) = build(&inst, which, &BuildOptions::default()).unwrap();
            let a = encode_solution(&inst, &sol, &ix, m.variables().len()).unwrap();
            let e = m.evaluate(&a).unwrap();
            assert!(e.is_feasible(), "{which}: {:?}", e.violations);
            assert!((e.objective - 550.0).abs() < 1e-9, "{which}: {}", e.objective);
            let back = decode(&inst, &ix, &a).unwrap();
            assert_eq!(back.hub_levels, sol.hub_levels);
            assert_eq!(back.served, sol.served);
        }
    }

    #[test]
    fn relaxed_solution_needs_consistency_off() {
        let inst = example_one();
        let sol = example_relaxed(&inst);
        for which in [Formulation::F1, Formulation::F2] {
            let (m, ix) = build(&inst, which, &BuildOptions::default()).unwrap();
            let a = encode_solution(&inst, &sol, &ix, m.variables().len()).unwrap();
            let e = m.evaluate(&a).unwrap();
            assert!(e.row_violated("consistency_origin_2_4"), "{which}: {:?}", e.violations);
            assert_eq!(e.violations.len(), 1, "{which}: {:?}", e.violations);

            let opts = BuildOptions {
                include_consistency: false,
                ..BuildOptions::default()
            };
            let (m, ix) = build(&inst, which, &opts).unwrap();
            let a = encode_solution(&inst, &sol, &ix, m.variables().len()).unwrap();
            let e = m.evaluate(&a).unwrap();
            assert!(e.is_feasible(), "{which}: {:?}", e.violations);
            assert!((e.objective - 600.0).abs() < 1e-9);
            assert_eq!(m.logical_constraint_count(), model_size(&inst, which).constraints - 4);
        }
    }

    #[test]
    fn empty_solution_is_zero() {
        let inst = example_one();
        for which in [Formulation::F1, Formulation::F2] {
            let (m, ix) = build(&inst, which, &BuildOptions::default()).unwrap();
            let a = encode_solution(&inst, &Solution::empty(), &ix, m.variables().len()).unwrap();
            assert!(a.iter().all(|&v| v == 0.0));
            let e = m.evaluate(&a).unwrap();
            assert!(e.is_feasible());
            assert_eq!(e.objective, 0.0);
        }
    }

    #[test]
    fn closed_hub_is_rejected() {
        let inst = example_one();
        let mut sol = example_optimum(&inst);
        sol.hub_levels.remove(&2);
        let (m, ix) = build(&inst, Formulation::F2, &BuildOptions::default()).unwrap();
        assert!(matches!(
            encode_solution(&inst, &sol, &ix, m.variables().len()),
            Err(FormulationError::ClosedHub { hub: 3, .. })
        ));
    }

    #[test]
    fn names_and_keys() {
        let inst = example_one();
        let (m, ix) = build_f2(&inst, &BuildOptions::default()).unwrap();
        let id = m.var("x", &[1, 3, 1, 2, 0]).unwrap();
        assert_eq!(m.variables()[id].name, "x_2_4_2_3_1");
        assert_eq!(ix.x(1, 1, 2, 0), id);
        assert_eq!(m.variables()[ix.y(1, 1)].name, "Y_2_2");
        let opts = BuildOptions {
            include_valid_inequality: true,
            ..BuildOptions::default()
        };
        let (m2, _) = build_f2(&inst, &opts).unwrap();
        assert_eq!(m2.logical_constraint_count(), m.logical_constraint_count() + 2 * 4);
    }
}
