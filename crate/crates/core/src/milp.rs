//! Solver-agnostic mixed-integer linear models.
//!
//! A [`Model`] is assembled through a [`ModelBuilder`] and is immutable
//! afterwards. Besides evaluation of assignments, models can be written to
//! and read from MPS so that any external MILP solver can be used, and
//! plain-text solution files can be imported back.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VarId = usize;

/// Residual above which a row or bound counts as violated.
pub const FEAS_TOL: f64 = 1e-6;

const MAX_NAME: usize = 255;
const OBJ_ROW: &str = "OBJ";

#[derive(Debug, Error, PartialEq)]
pub enum MilpError {
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("unknown variable id {0}")]
    UnknownVariable(VarId),
    #[error("assignment has {got} values, model has {expected} variables")]
    AssignmentLength { expected: usize, got: usize },
    #[error("MPS line {line}: {msg}")]
    Mps { line: usize, msg: String },
    #[error("solution line {line}: cannot parse value {token:?}")]
    SolutionValue { line: usize, token: String },
    #[error("solution line {line}: expected `<name> <value>`, got {text:?}")]
    SolutionLine { line: usize, text: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Sorted by variable id, no duplicates, no zero coefficients.
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    /// Second row of a two-sided constraint `a <= expr <= b` whose bounds
    /// are themselves linear expressions. Counted together with the
    /// preceding row in [`Model::logical_constraint_count`].
    pub chained: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Maximize,
    Minimize,
}

/// Identifies a variable by its family and subscripts, e.g. `x` with
/// `(i, j, k, m, r)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarKey {
    pub family: &'static str,
    pub idx: Vec<usize>,
}

impl VarKey {
    pub fn new(family: &'static str, idx: &[usize]) -> Self {
        Self {
            family,
            idx: idx.to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    name: String,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
    objective_constant: f64,
    direction: Direction,
    keys: HashMap<VarKey, VarId>,
    by_name: HashMap<String, VarId>,
}

fn normalise(terms: impl IntoIterator<Item = (VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut v: Vec<(VarId, f64)> = terms.into_iter().collect();
    v.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(v.len());
    for (id, c) in v {
        match out.last_mut() {
            Some(last) if last.0 == id => last.1 += c,
            _ => out.push((id, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

pub struct ModelBuilder {
    model: Model,
    row_names: HashSet<String>,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        Self {
            model: Model {
                name: name.into(),
                variables: Vec::new(),
                constraints: Vec::new(),
                objective: Vec::new(),
                objective_constant: 0.0,
                direction,
                keys: HashMap::new(),
                by_name: HashMap::new(),
            },
            row_names: HashSet::new(),
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
        key: Option<VarKey>,
    ) -> Result<VarId, MilpError> {
        let name = name.into();
        if self.model.by_name.contains_key(&name) {
            return Err(MilpError::DuplicateName(name));
        }
        let id = self.model.variables.len();
        if let Some(key) = key {
            if self.model.keys.insert(key, id).is_some() {
                return Err(MilpError::DuplicateName(name));
            }
        }
        self.model.by_name.insert(name.clone(), id);
        self.model.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        Ok(id)
    }

    pub fn binary(&mut self, name: impl Into<String>, key: VarKey) -> Result<VarId, MilpError> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0, Some(key))
    }

    pub fn continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        key: VarKey,
    ) -> Result<VarId, MilpError> {
        self.add_var(name, VarKind::Continuous, lower, upper, Some(key))
    }

    pub fn set_upper(&mut self, id: VarId, upper: f64) -> Result<(), MilpError> {
        let v = self.model.variables.get_mut(id).ok_or(MilpError::UnknownVariable(id))?;
        v.upper = upper;
        Ok(())
    }

    fn push_row(
        &mut self,
        name: String,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        chained: bool,
    ) -> Result<usize, MilpError> {
        if let Some(&(id, _)) = terms.iter().find(|t| t.0 >= self.model.variables.len()) {
            return Err(MilpError::UnknownVariable(id));
        }
        if !self.row_names.insert(name.clone()) {
            return Err(MilpError::DuplicateName(name));
        }
        self.model.constraints.push(Constraint {
            name,
            terms,
            sense,
            rhs,
            chained,
        });
        Ok(self.model.constraints.len() - 1)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize, MilpError> {
        self.push_row(name.into(), normalise(terms), sense, rhs, false)
    }

    /// Adds `lower <= middle <= upper` where both bounds are linear
    /// expressions, as two rows forming one logical constraint.
    pub fn add_two_sided(
        &mut self,
        name: &str,
        lower: impl IntoIterator<Item = (VarId, f64)>,
        middle: &[(VarId, f64)],
        upper: impl IntoIterator<Item = (VarId, f64)>,
    ) -> Result<(), MilpError> {
        let lo = normalise(middle.iter().copied().chain(lower.into_iter().map(|(v, c)| (v, -c))));
        let hi = normalise(middle.iter().copied().chain(upper.into_iter().map(|(v, c)| (v, -c))));
        self.push_row(format!("{name}_lo"), lo, Sense::Ge, 0.0, false)?;
        self.push_row(format!("{name}_hi"), hi, Sense::Le, 0.0, true)?;
        Ok(())
    }

    pub fn set_objective(&mut self, terms: impl IntoIterator<Item = (VarId, f64)>, constant: f64) {
        self.model.objective = normalise(terms);
        self.model.objective_constant = constant;
    }

    pub fn var_count(&self) -> usize {
        self.model.variables.len()
    }

    pub fn build(self) -> Model {
        self.model
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    Row(String),
    Bound(String),
    Integrality(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelViolation {
    pub kind: ViolationKind,
    pub residual: f64,
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::Row(n) => write!(f, "row {n} violated by {}", self.residual),
            ViolationKind::Bound(n) => write!(f, "bound on {n} violated by {}", self.residual),
            ViolationKind::Integrality(n) => write!(f, "{n} is fractional by {}", self.residual),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub violations: Vec<ModelViolation>,
}

impl Evaluation {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn row_violated(&self, name: &str) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(&v.kind, ViolationKind::Row(n) if n == name))
    }
}

fn dot(terms: &[(VarId, f64)], x: &[f64]) -> f64 {
    terms.iter().map(|&(v, c)| c * x[v]).sum()
}

impl Model {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }
    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }
    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }
    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn var(&self, family: &'static str, idx: &[usize]) -> Option<VarId> {
        self.keys.get(&VarKey::new(family, idx)).copied()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn constraint_by_name(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    pub fn binary_count(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn continuous_count(&self) -> usize {
        self.variables.len() - self.binary_count()
    }

    /// Constraints as counted in the formulation: a two-sided constraint is
    /// one constraint even though it occupies two rows.
    pub fn logical_constraint_count(&self) -> usize {
        self.constraints.iter().filter(|c| !c.chained).count()
    }

    /// Objective value and every violated row, bound or integrality
    /// requirement at tolerance [`FEAS_TOL`].
    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation, MilpError> {
        if x.len() != self.variables.len() {
            return Err(MilpError::AssignmentLength {
                expected: self.variables.len(),
                got: x.len(),
            });
        }
        let objective = dot(&self.objective, x) + self.objective_constant;
        let mut violations = Vec::new();
        for (v, &val) in self.variables.iter().zip(x) {
            let out = (v.lower - val).max(val - v.upper);
            if out > FEAS_TOL || val.is_nan() {
                violations.push(ModelViolation {
                    kind: ViolationKind::Bound(v.name.clone()),
                    residual: out,
                });
            }
            if v.kind == VarKind::Binary {
                let frac = (val - val.round()).abs();
                if frac > FEAS_TOL {
                    violations.push(ModelViolation {
                        kind: ViolationKind::Integrality(v.name.clone()),
                        residual: frac,
                    });
                }
            }
        }
        for c in &self.constraints {
            let lhs = dot(&c.terms, x);
            let residual = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            if residual > FEAS_TOL || residual.is_nan() {
                violations.push(ModelViolation {
                    kind: ViolationKind::Row(c.name.clone()),
                    residual,
                });
            }
        }
        Ok(Evaluation { objective, violations })
    }
}

/// Original names of MPS columns and rows, plus the rows that close a
/// two-sided constraint. Written next to the MPS file as JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NameMap {
    pub columns: Vec<(String, String)>,
    pub rows: Vec<(String, String)>,
    pub chained_rows: Vec<String>,
}

impl NameMap {
    /// Original column name for an MPS column name.
    pub fn column(&self, mps: &str) -> Option<&str> {
        self.columns.iter().find(|(m, _)| m == mps).map(|(_, o)| o.as_str())
    }

    /// Restores original names and chained flags on a parsed model.
    pub fn restore(&self, model: &mut Model) {
        let cols: HashMap<&str, &str> = self.columns.iter().map(|(m, o)| (m.as_str(), o.as_str())).collect();
        let rows: HashMap<&str, &str> = self.rows.iter().map(|(m, o)| (m.as_str(), o.as_str())).collect();
        let chained: HashSet<&str> = self.chained_rows.iter().map(String::as_str).collect();
        model.by_name.clear();
        for (id, v) in model.variables.iter_mut().enumerate() {
            if let Some(o) = cols.get(v.name.as_str()) {
                v.name = (*o).to_string();
            }
            model.by_name.insert(v.name.clone(), id);
        }
        for c in &mut model.constraints {
            c.chained = chained.contains(c.name.as_str());
            if let Some(o) = rows.get(c.name.as_str()) {
                c.name = (*o).to_string();
            }
        }
    }
}

pub struct MpsExport {
    pub text: String,
    pub names: NameMap,
}

fn mps_names<'a>(names: impl Iterator<Item = &'a str>, reserved: &[&str]) -> Vec<String> {
    let mut used: HashSet<String> = reserved.iter().map(|s| s.to_string()).collect();
    names
        .map(|n| {
            let mut base: String = n
                .chars()
                .map(|c| if c.is_whitespace() || c.is_control() { '_' } else { c })
                .collect();
            if base.is_empty() {
                base.push('_');
            }
            if base.len() > MAX_NAME {
                let mut cut = MAX_NAME;
                while !base.is_char_boundary(cut) {
                    cut -= 1;
                }
                base.truncate(cut);
            }
            let mut cand = base.clone();
            let mut k = 1;
            while used.contains(&cand) {
                let suffix = format!("~{k}");
                let mut stem = base.clone();
                let mut cut = MAX_NAME.saturating_sub(suffix.len()).min(stem.len());
                while !stem.is_char_boundary(cut) {
                    cut -= 1;
                }
                stem.truncate(cut);
                cand = stem + &suffix;
                k += 1;
            }
            used.insert(cand.clone());
            cand
        })
        .collect()
}

/// Writes the model in MPS with integer markers around binary columns and
/// an `OBJSENSE` section. Rows and columns keep declaration order.
pub fn export_mps(model: &Model) -> MpsExport {
    let cols = mps_names(model.variables.iter().map(|v| v.name.as_str()), &[]);
    let rows = mps_names(model.constraints.iter().map(|c| c.name.as_str()), &[OBJ_ROW]);

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.variables.len()];
    for (r, c) in model.constraints.iter().enumerate() {
        for &(v, coef) in &c.terms {
            by_col[v].push((r, coef));
        }
    }
    let mut obj = vec![0.0; model.variables.len()];
    for &(v, c) in &model.objective {
        obj[v] = c;
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        "NAME          {}",
        mps_names([model.name.as_str()].into_iter(), &[])[0]
    );
    let _ = writeln!(s, "OBJSENSE");
    let _ = writeln!(
        s,
        "    {}",
        match model.direction {
            Direction::Maximize => "MAX",
            Direction::Minimize => "MIN",
        }
    );
    let _ = writeln!(s, "ROWS");
    let _ = writeln!(s, " N  {OBJ_ROW}");
    for (c, name) in model.constraints.iter().zip(&rows) {
        let t = match c.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        let _ = writeln!(s, " {t}  {name}");
    }

    let _ = writeln!(s, "COLUMNS");
    let mut in_int = false;
    let mut marker = 0;
    for (id, v) in model.variables.iter().enumerate() {
        let is_int = v.kind == VarKind::Binary;
        if is_int != in_int {
            let tag = if is_int { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(s, "    MARKER{marker:<8}  'MARKER'  {tag}");
            marker += 1;
            in_int = is_int;
        }
        let col = &cols[id];
        let mut wrote = false;
        if obj[id] != 0.0 {
            let _ = writeln!(s, "    {col:<8}  {OBJ_ROW:<8}  {}", obj[id]);
            wrote = true;
        }
        for &(r, coef) in &by_col[id] {
            let _ = writeln!(s, "    {col:<8}  {:<8}  {coef}", rows[r]);
            wrote = true;
        }
        if !wrote {
            let _ = writeln!(s, "    {col:<8}  {OBJ_ROW:<8}  0");
        }
    }
    if in_int {
        let _ = writeln!(s, "    MARKER{marker:<8}  'MARKER'  'INTEND'");
    }

    let _ = writeln!(s, "RHS");
    if model.objective_constant != 0.0 {
        let _ = writeln!(s, "    RHS       {OBJ_ROW:<8}  {}", -model.objective_constant);
    }
    for (c, name) in model.constraints.iter().zip(&rows) {
        if c.rhs != 0.0 {
            let _ = writeln!(s, "    RHS       {name:<8}  {}", c.rhs);
        }
    }

    let _ = writeln!(s, "BOUNDS");
    for (v, col) in model.variables.iter().zip(&cols) {
        let (lo, up) = (v.lower, v.upper);
        if lo == up {
            let _ = writeln!(s, " FX BND       {col:<8}  {lo}");
            continue;
        }
        match (lo.is_finite(), up.is_finite()) {
            (false, false) => {
                let _ = writeln!(s, " FR BND       {col}");
            }
            (false, true) => {
                let _ = writeln!(s, " MI BND       {col}");
                let _ = writeln!(s, " UP BND       {col:<8}  {up}");
            }
            (true, fin_up) => {
                if lo != 0.0 {
                    let _ = writeln!(s, " LO BND       {col:<8}  {lo}");
                }
                if fin_up {
                    let _ = writeln!(s, " UP BND       {col:<8}  {up}");
                } else if v.kind == VarKind::Binary {
                    let _ = writeln!(s, " PL BND       {col}");
                }
            }
        }
    }
    let _ = writeln!(s, "ENDATA");

    let names = NameMap {
        columns: cols
            .iter()
            .zip(&model.variables)
            .map(|(m, v)| (m.clone(), v.name.clone()))
            .collect(),
        rows: rows
            .iter()
            .zip(&model.constraints)
            .map(|(m, c)| (m.clone(), c.name.clone()))
            .collect(),
        chained_rows: rows
            .iter()
            .zip(&model.constraints)
            .filter(|(_, c)| c.chained)
            .map(|(m, _)| m.clone())
            .collect(),
    };
    MpsExport { text: s, names }
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Section {
    Start,
    Name,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Bounds,
    End,
}

fn num(tok: &str, line: usize) -> Result<f64, MilpError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| !v.is_nan())
        .ok_or_else(|| MilpError::Mps {
            line,
            msg: format!("bad number {tok:?}"),
        })
}

/// Reads MPS written by [`export_mps`]. Fields are whitespace separated, so
/// names longer than eight characters are accepted; `RANGES` and general
/// integer columns are not supported.
pub fn parse_mps(text: &str) -> Result<Model, MilpError> {
    let mut name = String::new();
    let mut direction = Direction::Minimize;
    let mut section = Section::Start;
    let mut objective_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut constraints: Vec<Constraint> = Vec::new();
    let mut variables: Vec<Variable> = Vec::new();
    let mut col_index: HashMap<String, VarId> = HashMap::new();
    let mut objective: Vec<(VarId, f64)> = Vec::new();
    let mut constant = 0.0;
    let mut in_int = false;
    let mut bounded_int: HashSet<VarId> = HashSet::new();

    let err = |line: usize, msg: String| MilpError::Mps { line, msg };

    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let header = !raw.starts_with(char::is_whitespace);
        if header {
            let next = match toks[0] {
                "NAME" => {
                    name = toks.get(1).unwrap_or(&"").to_string();
                    Section::Name
                }
                "OBJSENSE" => {
                    if let Some(d) = toks.get(1) {
                        direction = parse_sense(d).ok_or_else(|| err(line, format!("bad OBJSENSE {d:?}")))?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                "RANGES" => return Err(err(line, "RANGES section is not supported".into())),
                other => return Err(err(line, format!("unknown section {other:?}"))),
            };
            if next <= section && !(next == Section::ObjSense && section == Section::Name) || section == Section::End {
                return Err(err(line, format!("section {} out of order", toks[0])));
            }
            if next > Section::Rows && section < Section::Rows {
                return Err(err(line, format!("section {} before ROWS", toks[0])));
            }
            section = next;
            continue;
        }
        match section {
            Section::ObjSense => {
                direction = parse_sense(toks[0]).ok_or_else(|| err(line, format!("bad OBJSENSE {:?}", toks[0])))?;
            }
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(err(line, "ROWS entry needs a type and a name".into()));
                }
                let rname = toks[1].to_string();
                if row_index.contains_key(&rname) || objective_row.as_deref() == Some(toks[1]) {
                    return Err(err(line, format!("duplicate row {rname:?}")));
                }
                let sense = match toks[0] {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(rname);
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    t => return Err(err(line, format!("bad row type {t:?}"))),
                };
                row_index.insert(rname.clone(), constraints.len());
                constraints.push(Constraint {
                    name: rname,
                    terms: Vec::new(),
                    sense,
                    rhs: 0.0,
                    chained: false,
                });
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    match toks[2] {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        t => return Err(err(line, format!("bad marker {t:?}"))),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err(line, "COLUMNS entry needs 3 or 5 fields".into()));
                }
                let id = match col_index.get(toks[0]) {
                    Some(&id) => id,
                    None => {
                        let id = variables.len();
                        col_index.insert(toks[0].to_string(), id);
                        let (kind, upper) = if in_int {
                            (VarKind::Binary, 1.0)
                        } else {
                            (VarKind::Continuous, f64::INFINITY)
                        };
                        variables.push(Variable {
                            name: toks[0].to_string(),
                            kind,
                            lower: 0.0,
                            upper,
                        });
                        id
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let value = num(pair[1], line)?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        objective.push((id, value));
                    } else if let Some(&r) = row_index.get(pair[0]) {
                        constraints[r].terms.push((id, value));
                    } else {
                        return Err(err(line, format!("unknown row {:?}", pair[0])));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err(line, "RHS entry needs 3 or 5 fields".into()));
                }
                for pair in toks[1..].chunks(2) {
                    let value = num(pair[1], line)?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        constant = -value;
                    } else if let Some(&r) = row_index.get(pair[0]) {
                        constraints[r].rhs = value;
                    } else {
                        return Err(err(line, format!("unknown row {:?}", pair[0])));
                    }
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(err(line, "BOUNDS entry needs a type, set and column".into()));
                }
                let id = *col_index
                    .get(toks[2])
                    .ok_or_else(|| err(line, format!("unknown column {:?}", toks[2])))?;
                let value = || -> Result<f64, MilpError> {
                    toks.get(3)
                        .ok_or_else(|| err(line, "bound value missing".into()))
                        .and_then(|t| num(t, line))
                };
                let v = &mut variables[id];
                match toks[0] {
                    "UP" => v.upper = value()?,
                    "LO" => v.lower = value()?,
                    "FX" => {
                        let x = value()?;
                        v.lower = x;
                        v.upper = x;
                    }
                    "FR" => {
                        v.lower = f64::NEG_INFINITY;
                        v.upper = f64::INFINITY;
                    }
                    "MI" => v.lower = f64::NEG_INFINITY,
                    "PL" => v.upper = f64::INFINITY,
                    "BV" => {
                        v.kind = VarKind::Binary;
                        v.lower = 0.0;
                        v.upper = 1.0;
                    }
                    t => return Err(err(line, format!("unsupported bound type {t:?}"))),
                }
                if v.kind == VarKind::Binary {
                    bounded_int.insert(id);
                }
            }
            Section::Start | Section::Name => {
                return Err(err(line, "data before ROWS".into()));
            }
            Section::End => return Err(err(line, "data after ENDATA".into())),
        }
    }
    if section != Section::End {
        return Err(err(text.lines().count(), "missing ENDATA".into()));
    }
    for v in &variables {
        if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
            return Err(err(0, format!("general integer column {:?} is not supported", v.name)));
        }
    }

    let mut by_name = HashMap::new();
    for (id, v) in variables.iter().enumerate() {
        by_name.insert(v.name.clone(), id);
    }
    for c in &mut constraints {
        c.terms = normalise(std::mem::take(&mut c.terms));
    }
    Ok(Model {
        name,
        variables,
        constraints,
        objective: normalise(objective),
        objective_constant: constant,
        direction,
        keys: HashMap::new(),
        by_name,
    })
}

fn parse_sense(tok: &str) -> Option<Direction> {
    match tok.to_ascii_uppercase().as_str() {
        "MAX" | "MAXIMIZE" | "MAXIMISE" => Some(Direction::Maximize),
        "MIN" | "MINIMIZE" | "MINIMISE" => Some(Direction::Minimize),
        _ => None,
    }
}

/// Values read from an external solver's solution file.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportedSolution {
    /// One value per model variable; variables absent from the file are 0.
    pub values: Vec<f64>,
    /// Objective reported by the solver, if the file has an `objective` line.
    pub objective: Option<f64>,
    /// Names in the file that the model does not know.
    pub unknown: Vec<String>,
}

/// Reads `<name> <value>` lines. Blank lines and lines starting with `#` or
/// `*` are skipped; a line named `objective` carries the solver's objective.
/// Names are looked up in the model, or first translated through `names`
/// when the file uses MPS column names.
pub fn import_solution(text: &str, model: &Model, names: Option<&NameMap>) -> Result<ImportedSolution, MilpError> {
    let mut values = vec![0.0; model.variables.len()];
    let mut objective = None;
    let mut unknown = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(MilpError::SolutionLine {
                line,
                text: t.chars().take(80).collect(),
            });
        }
        let value = toks[1]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| MilpError::SolutionValue {
                line,
                token: toks[1].chars().take(80).collect(),
            })?;
        if toks[0].eq_ignore_ascii_case("objective") {
            objective = Some(value);
            continue;
        }
        let name = names.and_then(|m| m.column(toks[0])).unwrap_or(toks[0]);
        match model.var_by_name(name) {
            Some(id) => values[id] = value,
            None => {
                log::warn!("solution line {line}: unknown variable {name:?} ignored");
                unknown.push(name.to_string());
            }
        }
    }
    Ok(ImportedSolution {
        values,
        objective,
        unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Model {
        let mut b = ModelBuilder::new("small", Direction::Maximize);
        let x = b.binary("x", VarKey::new("x", &[0])).unwrap();
        let y = b.binary("y", VarKey::new("x", &[1])).unwrap();
        let t = b.continuous("t", 0.0, 5.0, VarKey::new("t", &[0])).unwrap();
        b.add_constraint("cap", [(x, 2.0), (y, 3.0), (x, 1.0)], Sense::Le, 4.0)
            .unwrap();
        b.add_constraint("link", [(t, 1.0), (x, -5.0)], Sense::Le, 0.0).unwrap();
        b.add_constraint("one", [(x, 1.0), (y, 1.0)], Sense::Eq, 1.0).unwrap();
        b.set_objective([(x, 3.0), (y, 2.0), (t, 0.5)], 1.0);
        b.build()
    }

    #[test]
    fn duplicate_terms_are_aggregated() {
        let m = small();
        assert_eq!(m.constraints()[0].terms, vec![(0, 3.0), (1, 3.0)]);
        assert_eq!(m.var("x", &[1]), Some(1));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut b = ModelBuilder::new("d", Direction::Maximize);
        b.binary("x", VarKey::new("x", &[0])).unwrap();
        assert!(b.binary("x", VarKey::new("x", &[1])).is_err());
        b.add_constraint("r", [], Sense::Le, 0.0).unwrap();
        assert!(b.add_constraint("r", [], Sense::Le, 0.0).is_err());
        assert_eq!(
            b.add_constraint("q", [(9, 1.0)], Sense::Le, 0.0),
            Err(MilpError::UnknownVariable(9))
        );
    }

    #[test]
    fn evaluate_all_zero() {
        let m = small();
        let e = m.evaluate(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(e.objective, 1.0);
        assert_eq!(e.violations.len(), 1);
        assert!(e.row_violated("one"));
    }

    #[test]
    fn evaluate_reports_bounds_and_fractionality() {
        let m = small();
        let e = m.evaluate(&[0.5, 0.5, 7.0]).unwrap();
        let kinds: Vec<_> = e.violations.iter().map(|v| v.kind.clone()).collect();
        assert!(kinds.contains(&ViolationKind::Integrality("x".into())));
        assert!(kinds.contains(&ViolationKind::Bound("t".into())));
        assert!(m.evaluate(&[0.0]).is_err());
    }

    #[test]
    fn one_variable_round_trip() {
        let mut b = ModelBuilder::new("one", Direction::Maximize);
        let x = b.binary("x", VarKey::new("x", &[0])).unwrap();
        b.set_objective([(x, 7.5)], 0.0);
        let m = b.build();
        let out = export_mps(&m);
        assert!(out.text.contains("OBJSENSE\n    MAX"));
        let back = parse_mps(&out.text).unwrap();
        assert_eq!(back.direction(), Direction::Maximize);
        assert_eq!(back.objective(), &[(0, 7.5)]);
        assert_eq!(back.variables()[0].kind, VarKind::Binary);
    }

    #[test]
    fn round_trip_small() {
        let m = small();
        let out = export_mps(&m);
        let mut back = parse_mps(&out.text).unwrap();
        out.names.restore(&mut back);
        assert_eq!(back.variables(), m.variables());
        assert_eq!(back.constraints(), m.constraints());
        assert_eq!(back.objective(), m.objective());
        assert_eq!(back.objective_constant(), 1.0);
    }

    #[test]
    fn two_sided_counts_once() {
        let mut b = ModelBuilder::new("ts", Direction::Maximize);
        let y = b.binary("y", VarKey::new("y", &[0])).unwrap();
        let f = b.continuous("f", 0.0, f64::INFINITY, VarKey::new("f", &[0])).unwrap();
        b.add_two_sided("cap", [(y, 10.0)], &[(f, 1.0)], [(y, 20.0)]).unwrap();
        let m = b.build();
        assert_eq!(m.constraints().len(), 2);
        assert_eq!(m.logical_constraint_count(), 1);
        assert!(m.evaluate(&[1.0, 15.0]).unwrap().is_feasible());
        assert!(!m.evaluate(&[1.0, 5.0]).unwrap().is_feasible());
        assert!(!m.evaluate(&[1.0, 25.0]).unwrap().is_feasible());
        let out = export_mps(&m);
        let mut back = parse_mps(&out.text).unwrap();
        out.names.restore(&mut back);
        assert_eq!(back.logical_constraint_count(), 1);
    }

    #[test]
    fn long_and_clashing_names_are_uniquified() {
        let long = "v".repeat(300);
        let names = mps_names([long.as_str(), long.as_str(), "a b"].into_iter(), &[]);
        assert_eq!(names[0].len(), 255);
        assert_ne!(names[0], names[1]);
        assert!(names[1].len() <= 255);
        assert_eq!(names[2], "a_b");
        let rows = mps_names(["OBJ"].into_iter(), &[OBJ_ROW]);
        assert_eq!(rows[0], "OBJ~1");
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_mps("COLUMNS\nROWS\nENDATA\n"),
            Err(MilpError::Mps { .. })
        ));
        let unknown_row = "ROWS\n N OBJ\nCOLUMNS\n    x  nope  1\nENDATA\n";
        let e = parse_mps(unknown_row).unwrap_err();
        assert!(e.to_string().contains("unknown row"), "{e}");
        assert!(parse_mps("ROWS\n N OBJ\n").is_err());
    }

    #[test]
    fn import_solution_lines() {
        let m = small();
        let s = import_solution("", &m, None).unwrap();
        assert_eq!(s.values, vec![0.0; 3]);
        let s = import_solution("# c\nx 1\nobjective 4.5\nzzz 3\n", &m, None).unwrap();
        assert_eq!(s.values, vec![1.0, 0.0, 0.0]);
        assert_eq!(s.objective, Some(4.5));
        assert_eq!(s.unknown, vec!["zzz".to_string()]);
        assert!(matches!(
            import_solution("x one\n", &m, None),
            Err(MilpError::SolutionValue { line: 1, .. })
        ));
        assert!(import_solution("x 1 2\n", &m, None).is_err());
    }
}
