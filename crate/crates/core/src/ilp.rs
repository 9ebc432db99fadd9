//! Integer program for one component and an exact 0/1 branch-and-bound.
//!
//! Variables are `p(v, a)` (adjacency `a` present at internal node `v`,
//! created only where `a` is annotated with `v`) and `c(v, a)` (the presence
//! of `a` differs between `v` and its parent), created on every branch where
//! at least one end carries a `p` variable. Presence at leaves, and at
//! internal nodes where `a` is not annotated, is a constant folded into the
//! rows. Objective coefficients are in the exact cost units of
//! [`crate::score`].
//!
//! Row families:
//! - `c1`/`c2`: `0 <= p(v,a) + p(w,a) - p(u,a) <= 1` for sibling pairs `v`,
//!   `w` below `u` (optional, see [`ModelOptions::parsimony_rows`]);
//! - `c3`..`c6`: force `c(v,a) = |p(v,a) - p(u,a)|` from below and above;
//! - `c7`: at each node, each extremity is used by at most one adjacency.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dp::ComponentSolution;
use crate::error::{Error, Result};
use crate::genome::{Adjacency, Extremity};
use crate::graph::Component;
use crate::score::{Alpha, Cost, WeightTable};
use crate::labeling::Objective;
use crate::tree::{NodeId, Phylogeny};
use crate::weights::max_weight_matching;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Family {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::C1 => "c1",
            Family::C2 => "c2",
            Family::C3 => "c3",
            Family::C4 => "c4",
            Family::C5 => "c5",
            Family::C6 => "c6",
            Family::C7 => "c7",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VarKind {
    Presence,
    Change,
}

/// A 0/1 variable. For `Change`, `node` is the child end of the branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Var {
    pub kind: VarKind,
    pub node: NodeId,
    /// Index of the adjacency among the component's edges.
    pub edge: usize,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Row {
    pub name: String,
    pub family: Family,
    /// `(variable index, coefficient)`.
    pub terms: Vec<(usize, i64)>,
    pub sense: Sense,
    pub rhs: i64,
}

impl Row {
    pub fn activity(&self, values: &[u8]) -> i64 {
        self.terms.iter().map(|&(v, c)| c * i64::from(values[v])).sum()
    }

    pub fn satisfied(&self, values: &[u8]) -> bool {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => a <= self.rhs,
            Sense::Ge => a >= self.rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ModelOptions {
    /// Emit the sibling rows `c1`/`c2`. They exclude labelings that keep an
    /// adjacency at a node while dropping it in both children (or the
    /// reverse), which can be optimal once weights are involved, so they are
    /// off unless requested.
    pub parsimony_rows: bool,
}

/// Presence of one adjacency at one node before optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Fixed(bool),
    Free(usize),
}

#[derive(Debug, Clone)]
pub struct IlpModel {
    component: Component,
    alpha: Alpha,
    vars: Vec<Var>,
    /// Objective coefficient per variable.
    cost: Vec<i64>,
    constant: i64,
    rows: Vec<Row>,
    // Tree structure, copied so the model is self-contained.
    postorder: Vec<NodeId>,
    children: Vec<Vec<NodeId>>,
    internal: Vec<bool>,
    /// `slots[edge][node]`.
    slots: Vec<Vec<Slot>>,
    /// `weight[edge][node]` in micro-units, annotated internal nodes only.
    weight: Vec<Vec<u64>>,
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn adjacency_token(a: &Adjacency) -> String {
    format!("{}_{}", a.a(), a.b())
}

/// Builds the integer program of one component.
pub fn build_model(
    component: &Component,
    phylo: &Phylogeny,
    weights: &WeightTable,
    alpha: Alpha,
    options: ModelOptions,
) -> IlpModel {
    let tree = phylo.tree();
    let n = tree.len();
    let names: Vec<String> = {
        let raw: Vec<String> = (0..n).map(|v| sanitize(tree.name(v))).collect();
        let unique: BTreeSet<&String> = raw.iter().collect();
        if unique.len() == n {
            raw
        } else {
            (0..n).map(|v| format!("n{v}")).collect()
        }
    };
    let edges = component.edges();
    let change = alpha.change_coef() as i64;
    let wcoef = alpha.weight_coef() as i64;

    let mut vars: Vec<Var> = Vec::new();
    let mut cost: Vec<i64> = Vec::new();
    let mut constant: i64 = 0;
    let mut slots = vec![vec![Slot::Fixed(false); n]; edges.len()];
    let mut weight = vec![vec![0u64; n]; edges.len()];

    // Presence variables, ordered by depth, adjacency, node.
    let mut order: Vec<(usize, usize, NodeId)> = Vec::new();
    for (e, (_, nodes)) in edges.iter().enumerate() {
        for &v in nodes {
            if !tree.is_leaf(v) {
                order.push((tree.depth(v), e, v));
            }
        }
    }
    order.sort_unstable();
    for &(_, e, v) in &order {
        let adj = &edges[e].0;
        let w = u64::from(weights.get(v, adj).micros());
        weight[e][v] = w;
        slots[e][v] = Slot::Free(vars.len());
        vars.push(Var {
            kind: VarKind::Presence,
            node: v,
            edge: e,
            name: format!("p_{}_{}", names[v], adjacency_token(adj)),
        });
        // alpha * w * (1 - p) = alpha * w - alpha * w * p
        constant += wcoef * w as i64;
        cost.push(-(wcoef * w as i64));
    }
    for leaf in tree.leaves() {
        let present = phylo.leaf_adjacencies(leaf);
        for (slot, (adj, _)) in slots.iter_mut().zip(edges) {
            slot[leaf] = Slot::Fixed(present.contains(adj));
        }
    }

    let mut rows: Vec<Row> = Vec::new();
    // Adds a row over slots, folding constants into the right-hand side.
    let push_row = |rows: &mut Vec<Row>, name: String, family: Family, parts: &[(Slot, i64)], extra: &[(usize, i64)], sense: Sense, rhs: i64| {
        let mut terms = Vec::new();
        let mut rhs = rhs;
        for &(slot, coef) in parts {
            match slot {
                Slot::Fixed(b) => rhs -= coef * i64::from(b),
                Slot::Free(v) => terms.push((v, coef)),
            }
        }
        terms.extend_from_slice(extra);
        rows.push(Row { name, family, terms, sense, rhs });
    };

    for (u, v) in tree.edges() {
        for (e, (adj, _)) in edges.iter().enumerate() {
            let (pu, pv) = (slots[e][u], slots[e][v]);
            if let (Slot::Fixed(a), Slot::Fixed(b)) = (pu, pv) {
                if a != b {
                    constant += change;
                }
                continue;
            }
            let c = vars.len();
            let tag = format!("{}_{}", names[v], adjacency_token(adj));
            vars.push(Var { kind: VarKind::Change, node: v, edge: e, name: format!("c_{tag}") });
            cost.push(change);
            push_row(&mut rows, format!("c3_{tag}"), Family::C3, &[(pv, 1), (pu, 1)], &[(c, 1)], Sense::Le, 2);
            push_row(&mut rows, format!("c4_{tag}"), Family::C4, &[(pv, 1), (pu, 1)], &[(c, -1)], Sense::Ge, 0);
            push_row(&mut rows, format!("c5_{tag}"), Family::C5, &[(pv, 1), (pu, -1)], &[(c, 1)], Sense::Ge, 0);
            push_row(&mut rows, format!("c6_{tag}"), Family::C6, &[(pv, -1), (pu, 1)], &[(c, 1)], Sense::Ge, 0);
        }
    }

    if options.parsimony_rows {
        for u in tree.internal_nodes() {
            let kids = tree.children(u);
            for i in 0..kids.len() {
                for j in i + 1..kids.len() {
                    let (v, w) = (kids[i], kids[j]);
                    for (e, (adj, _)) in edges.iter().enumerate() {
                        let parts = [(slots[e][v], 1), (slots[e][w], 1), (slots[e][u], -1)];
                        if parts.iter().all(|(s, _)| matches!(s, Slot::Fixed(_))) {
                            // Constant rows are kept so that a violated one
                            // makes the model infeasible rather than vanish.
                            let act: i64 = parts.iter().map(|(s, c)| if let Slot::Fixed(b) = s { c * i64::from(*b) } else { 0 }).sum();
                            if (0..=1).contains(&act) {
                                continue;
                            }
                        }
                        let tag = format!("{}_{}_{}_{}", names[u], names[v], names[w], adjacency_token(adj));
                        push_row(&mut rows, format!("c1_{tag}"), Family::C1, &parts, &[], Sense::Ge, 0);
                        push_row(&mut rows, format!("c2_{tag}"), Family::C2, &parts, &[], Sense::Le, 1);
                    }
                }
            }
        }
    }

    for v in tree.internal_nodes() {
        for &x in component.vertices() {
            let parts: Vec<(Slot, i64)> = edges
                .iter()
                .enumerate()
                .filter(|(e, (adj, _))| adj.contains(x) && matches!(slots[*e][v], Slot::Free(_)))
                .map(|(e, _)| (slots[e][v], 1))
                .collect();
            if parts.is_empty() {
                continue;
            }
            push_row(&mut rows, format!("c7_{}_{}", names[v], x), Family::C7, &parts, &[], Sense::Le, 1);
        }
    }

    IlpModel {
        component: component.clone(),
        alpha,
        vars,
        cost,
        constant,
        rows,
        postorder: tree.postorder().to_vec(),
        children: (0..n).map(|v| tree.children(v).to_vec()).collect(),
        internal: (0..n).map(|v| !tree.is_leaf(v)).collect(),
        slots,
        weight,
    }
}

impl IlpModel {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn objective_coefficients(&self) -> &[i64] {
        &self.cost
    }

    /// Constant part of the objective: the full discardable weight and the
    /// changes on branches whose two ends are both fixed.
    pub fn constant(&self) -> i64 {
        self.constant
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.vars.iter().filter(|v| v.kind == kind).count()
    }

    pub fn evaluate(&self, values: &[u8]) -> i64 {
        self.constant + self.cost.iter().zip(values).map(|(c, &x)| c * i64::from(x)).sum::<i64>()
    }

    pub fn is_feasible(&self, values: &[u8]) -> bool {
        values.len() == self.vars.len() && values.iter().all(|&x| x <= 1) && self.rows.iter().all(|r| r.satisfied(values))
    }

    /// Writes the model in CPLEX LP text format. The objective constant,
    /// which LP readers do not all accept, is written as a comment; add it to
    /// the solver's optimum to obtain the cost in the units stated there.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ weighted SCJ labeling, one component");
        let _ = writeln!(s, "\\ alpha = {}; objective unit = 1/{}", self.alpha, self.alpha.unit());
        let _ = writeln!(s, "\\ constant: {}", self.constant);
        let _ = writeln!(s, "Minimize");
        let mut obj = String::from(" obj:");
        let mut any = false;
        for (i, (&c, var)) in self.cost.iter().zip(&self.vars).enumerate() {
            if c == 0 {
                continue;
            }
            let sign = if c < 0 { '-' } else { '+' };
            let _ = write!(obj, " {sign} {} {}", c.abs(), var.name);
            any = true;
            if i % 4 == 3 {
                obj.push_str("\n  ");
            }
        }
        if !any {
            obj.push_str(" 0");
        }
        let _ = writeln!(s, "{}", obj.trim_end());
        let _ = writeln!(s, "Subject To");
        for row in &self.rows {
            let _ = writeln!(s, " {}: {}", row.name, self.row_text(row));
        }
        let _ = writeln!(s, "Binaries");
        for chunk in self.vars.chunks(8) {
            let names: Vec<&str> = chunk.iter().map(|v| v.name.as_str()).collect();
            let _ = writeln!(s, " {}", names.join(" "));
        }
        let _ = writeln!(s, "End");
        s
    }

    fn row_text(&self, row: &Row) -> String {
        let mut s = String::new();
        for (k, &(v, c)) in row.terms.iter().enumerate() {
            let name = &self.vars[v].name;
            let mag = if c.abs() == 1 { String::new() } else { format!("{} ", c.abs()) };
            match (k, c < 0) {
                (0, false) => { let _ = write!(s, "{mag}{name}"); }
                (0, true) => { let _ = write!(s, "- {mag}{name}"); }
                (_, false) => { let _ = write!(s, " + {mag}{name}"); }
                (_, true) => { let _ = write!(s, " - {mag}{name}"); }
            }
        }
        if row.terms.is_empty() {
            s.push('0');
        }
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
        };
        let _ = write!(s, " {op} {}", row.rhs);
        s
    }
}

pub fn export_lp(model: &IlpModel, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(model.to_lp_string().as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Rows and binaries read back from an LP file written by [`export_lp`].
#[derive(Debug, Clone, PartialEq)]
pub struct LpFile {
    pub constant: i64,
    pub objective: Vec<(String, i64)>,
    pub rows: Vec<(String, Vec<(String, i64)>, Sense, i64)>,
    pub binaries: Vec<String>,
}

impl LpFile {
    pub fn evaluate(&self, values: &HashMap<String, u8>) -> Option<i64> {
        let mut total = self.constant;
        for (name, c) in &self.objective {
            total += c * i64::from(*values.get(name)?);
        }
        Some(total)
    }

    /// Names of rows violated by `values`; unknown variables count as violations.
    pub fn violated(&self, values: &HashMap<String, u8>) -> Vec<String> {
        self.rows
            .iter()
            .filter(|(_, terms, sense, rhs)| {
                let mut act = 0i64;
                for (name, c) in terms {
                    match values.get(name) {
                        Some(&x) => act += c * i64::from(x),
                        None => return true,
                    }
                }
                match sense {
                    Sense::Le => act > *rhs,
                    Sense::Ge => act < *rhs,
                }
            })
            .map(|(n, ..)| n.clone())
            .collect()
    }
}

fn parse_terms(text: &str) -> Result<Vec<(String, i64)>> {
    let mut out = Vec::new();
    let mut sign = 1i64;
    let mut coef: Option<i64> = None;
    for tok in text.split_whitespace() {
        match tok {
            "+" => sign = 1,
            "-" => sign = -1,
            _ => {
                if let Ok(c) = tok.parse::<i64>() {
                    coef = Some(c);
                } else {
                    out.push((tok.to_string(), sign * coef.unwrap_or(1)));
                    sign = 1;
                    coef = None;
                }
            }
        }
    }
    if coef.is_some_and(|c| c != 0) {
        return Err(Error::input("constant term in LP expression"));
    }
    Ok(out)
}

/// Reads the LP subset produced by [`IlpModel::to_lp_string`].
pub fn parse_lp(text: &str) -> Result<LpFile> {
    #[derive(PartialEq)]
    enum Section {
        Head,
        Objective,
        Rows,
        Binaries,
        End,
    }
    let mut section = Section::Head;
    let mut constant = 0;
    let mut objective_text = String::new();
    let mut rows = Vec::new();
    let mut binaries = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("\\ constant:") {
            constant = rest.trim().parse().map_err(|_| Error::input("bad constant comment"))?;
            continue;
        }
        if t.starts_with('\\') || t.is_empty() {
            continue;
        }
        match t {
            "Minimize" => { section = Section::Objective; continue; }
            "Subject To" => { section = Section::Rows; continue; }
            "Binaries" => { section = Section::Binaries; continue; }
            "End" => { section = Section::End; continue; }
            _ => {}
        }
        match section {
            Section::Objective => {
                let body = t.strip_prefix("obj:").unwrap_or(t);
                objective_text.push(' ');
                objective_text.push_str(body);
            }
            Section::Rows => {
                let (name, body) = t.split_once(':').ok_or_else(|| Error::input(format!("row without name: {t}")))?;
                let (lhs, sense, rhs) = if let Some((l, r)) = body.split_once("<=") {
                    (l, Sense::Le, r)
                } else if let Some((l, r)) = body.split_once(">=") {
                    (l, Sense::Ge, r)
                } else {
                    return Err(Error::input(format!("row without sense: {t}")));
                };
                let rhs: i64 = rhs.trim().parse().map_err(|_| Error::input(format!("bad rhs: {t}")))?;
                rows.push((name.trim().to_string(), parse_terms(lhs)?, sense, rhs));
            }
            Section::Binaries => binaries.extend(t.split_whitespace().map(String::from)),
            Section::Head | Section::End => return Err(Error::input(format!("unexpected line: {t}"))),
        }
    }
    let objective = parse_terms(&objective_text)?;
    Ok(LpFile { constant, objective, rows, binaries })
}

/// Outcome of the branch-and-bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IlpSolution {
    /// Value of every variable, in model order.
    pub values: Vec<u8>,
    pub objective: Cost,
    /// Search nodes visited.
    pub nodes: u64,
}

impl IlpSolution {
    pub fn named_values(&self, model: &IlpModel) -> HashMap<String, u8> {
        model.vars.iter().zip(&self.values).map(|(v, &x)| (v.name.clone(), x)).collect()
    }
}

struct Search<'m> {
    model: &'m IlpModel,
    assigned: Vec<Option<bool>>,
    /// Rows over presence variables only (c1, c2, c7), with coefficients.
    rows_of: Vec<Vec<(usize, i64)>>,
    row_act: Vec<i64>,
    row_min: Vec<i64>,
    row_max: Vec<i64>,
    row_free: Vec<usize>,
    prop_rows: Vec<usize>,
    /// Lagrange multipliers of the c7 rows, zero elsewhere.
    lambda: Vec<i64>,
    /// Multiplier cost of each presence variable taking the value 1.
    penalty: Vec<i64>,
    /// `sum lambda * rhs` over all rows.
    lambda_rhs: i64,
    /// `sum lambda * (rhs - act)` over rows whose variables are all assigned.
    settled: i64,
    /// Cheapest penalized history of each adjacency on its own.
    cost_of: Vec<i64>,
    relax: Vec<Vec<bool>>,
    sum_cost: i64,
    trail: Vec<usize>,
    best: Option<(i64, Vec<bool>)>,
    nodes: u64,
}

impl<'m> Search<'m> {
    /// Cheapest penalized history of one adjacency that agrees with the fixed
    /// and assigned values, ignoring every other adjacency. Ties keep the
    /// parent state; at the root they go to absent.
    fn adjacency_eval(&self, e: usize) -> (i64, Vec<bool>) {
        let m = self.model;
        let change = m.alpha.change_coef() as i64;
        let wcoef = m.alpha.weight_coef() as i64;
        let inf = i64::MAX / 4;
        let mut best = vec![[inf; 2]; m.children.len()];
        for &v in &m.postorder {
            let (fixed, pen) = match m.slots[e][v] {
                Slot::Fixed(b) => (Some(b), 0),
                Slot::Free(x) => (self.assigned[x], self.penalty[x]),
            };
            for s in 0..2 {
                if fixed.is_some_and(|b| usize::from(b) != s) {
                    continue;
                }
                let mut total = match (s, m.internal[v]) {
                    (0, true) => wcoef * m.weight[e][v] as i64,
                    (1, _) => pen,
                    _ => 0,
                };
                for &c in &m.children[v] {
                    let [c0, c1] = best[c];
                    let via0 = c0 + if s == 0 { 0 } else { change };
                    let via1 = c1 + if s == 1 { 0 } else { change };
                    total += via0.min(via1);
                }
                best[v][s] = total.min(inf);
            }
        }
        let root = *m.postorder.last().expect("non-empty tree");
        let mut state = vec![false; m.children.len()];
        state[root] = best[root][1] < best[root][0];
        for &v in m.postorder.iter().rev() {
            let p = usize::from(state[v]);
            for &c in &m.children[v] {
                let stay = best[c][p];
                let flip = best[c][1 - p] + change;
                state[c] = if stay <= flip { p == 1 } else { p == 0 };
            }
        }
        (best[root][0].min(best[root][1]), state)
    }

    fn refresh(&mut self, e: usize) {
        let (c, state) = self.adjacency_eval(e);
        self.sum_cost += c - self.cost_of[e];
        self.cost_of[e] = c;
        self.relax[e] = state;
    }

    fn refresh_all(&mut self) {
        for e in 0..self.cost_of.len() {
            self.refresh(e);
        }
    }

    /// Lower bound on every completion of the current assignment.
    fn bound(&self) -> i64 {
        self.sum_cost - self.lambda_rhs + self.settled
    }

    fn slack(&self, r: usize) -> i64 {
        let row = &self.model.rows[r];
        match row.sense {
            Sense::Le => row.rhs - self.row_act[r] - self.row_min[r],
            Sense::Ge => self.row_act[r] + self.row_max[r] - row.rhs,
        }
    }

    fn set(&mut self, x: usize, value: bool) {
        self.assigned[x] = Some(value);
        self.trail.push(x);
        for &(r, coef) in &self.rows_of[x] {
            if coef < 0 {
                self.row_min[r] -= coef;
            } else {
                self.row_max[r] -= coef;
            }
            if value {
                self.row_act[r] += coef;
            }
            self.row_free[r] -= 1;
            if self.row_free[r] == 0 {
                self.settled += self.lambda[r] * (self.model.rows[r].rhs - self.row_act[r]);
            }
        }
    }

    /// Assigns `x = value` and everything the rows then force. Returns false
    /// on a conflict; the caller undoes to its trail mark either way.
    fn assign(&mut self, x: usize, value: bool) -> bool {
        let mut queue = vec![(x, value)];
        while let Some((y, val)) = queue.pop() {
            match self.assigned[y] {
                Some(b) if b == val => continue,
                Some(_) => return false,
                None => {}
            }
            self.set(y, val);
            for k in 0..self.rows_of[y].len() {
                let r = self.rows_of[y][k].0;
                let slack = self.slack(r);
                if slack < 0 {
                    return false;
                }
                let sense = self.model.rows[r].sense;
                for &(z, c) in &self.model.rows[r].terms {
                    if self.assigned[z].is_none() && c.abs() > slack {
                        // Setting z the wrong way would exceed the slack.
                        let forced = (c > 0) == (sense == Sense::Ge);
                        queue.push((z, forced));
                    }
                }
            }
        }
        true
    }

    fn undo(&mut self, mark: usize) {
        let mut edges = Vec::new();
        while self.trail.len() > mark {
            let x = self.trail.pop().expect("non-empty trail");
            let value = self.assigned[x].take().expect("assigned");
            for &(r, coef) in &self.rows_of[x] {
                if self.row_free[r] == 0 {
                    self.settled -= self.lambda[r] * (self.model.rows[r].rhs - self.row_act[r]);
                }
                self.row_free[r] += 1;
                if coef < 0 {
                    self.row_min[r] += coef;
                } else {
                    self.row_max[r] += coef;
                }
                if value {
                    self.row_act[r] -= coef;
                }
            }
            edges.push(self.model.vars[x].edge);
        }
        edges.sort_unstable();
        edges.dedup();
        for e in edges {
            self.refresh(e);
        }
    }

    fn refresh_since(&mut self, mark: usize) {
        let mut edges: Vec<usize> = self.trail[mark..].iter().map(|&x| self.model.vars[x].edge).collect();
        edges.sort_unstable();
        edges.dedup();
        for e in edges {
            self.refresh(e);
        }
    }

    fn relaxed(&self, x: usize) -> bool {
        let v = &self.model.vars[x];
        self.relax[v.edge][v.node]
    }

    fn relaxed_activity(&self, r: usize) -> i64 {
        self.model.rows[r].terms.iter().filter(|&&(x, _)| self.relaxed(x)).map(|&(_, c)| c).sum()
    }

    /// Subgradient steps on the multipliers, keeping the best bound found.
    fn tune(&mut self, rounds: usize) {
        let m = self.model;
        let scale = (m.alpha.change_coef().max(m.alpha.weight_coef() * 1_000_000) as i64).max(1);
        let mut step = scale / 2;
        let mut best = (self.bound(), self.lambda.clone());
        for _ in 0..rounds {
            if step == 0 {
                break;
            }
            let mut moved = false;
            for k in 0..self.prop_rows.len() {
                let r = self.prop_rows[k];
                if m.rows[r].family != Family::C7 {
                    continue;
                }
                let g = self.relaxed_activity(r) - m.rows[r].rhs;
                let next = (self.lambda[r] + step * g).max(0);
                if next != self.lambda[r] {
                    self.lambda[r] = next;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
            self.apply_lambda();
            if self.bound() > best.0 {
                best = (self.bound(), self.lambda.clone());
            } else {
                step = step * 3 / 4;
            }
        }
        self.lambda = best.1;
        self.apply_lambda();
    }

    fn apply_lambda(&mut self) {
        let m = self.model;
        for p in self.penalty.iter_mut() {
            *p = 0;
        }
        for (x, rows) in self.rows_of.iter().enumerate() {
            self.penalty[x] = rows.iter().map(|&(r, c)| self.lambda[r] * c).sum();
        }
        self.lambda_rhs = self.prop_rows.iter().map(|&r| self.lambda[r] * m.rows[r].rhs).sum();
        self.settled = self
            .prop_rows
            .iter()
            .filter(|&&r| self.row_free[r] == 0)
            .map(|&r| self.lambda[r] * (m.rows[r].rhs - self.row_act[r]))
            .sum();
        self.refresh_all();
    }

    fn pruned(&self) -> bool {
        self.best.as_ref().is_some_and(|(b, _)| self.bound() >= *b)
    }

    /// Next branching variable, or `None` when the node is solved or cannot
    /// improve on the incumbent.
    fn branch_variable(&mut self) -> Option<usize> {
        let mut slack_row = None;
        for &r in &self.prop_rows {
            let row = &self.model.rows[r];
            let act = self.relaxed_activity(r);
            let violated = match row.sense {
                Sense::Le => act > row.rhs,
                Sense::Ge => act < row.rhs,
            };
            if violated {
                let culprit = row.terms.iter().find(|&&(x, c)| {
                    self.assigned[x].is_none() && ((c > 0) == self.relaxed(x)) == (row.sense == Sense::Le)
                });
                return culprit.map(|&(x, _)| x);
            }
            if slack_row.is_none() && self.lambda[r] > 0 && self.row_free[r] > 0 && act != row.rhs {
                slack_row = Some(r);
            }
        }
        // The relaxed histories are consistent; their true cost drops the
        // multiplier terms.
        let rows_total: i64 = self.prop_rows.iter().map(|&r| self.lambda[r] * self.relaxed_activity(r)).sum();
        let cost = self.sum_cost - rows_total;
        if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
            let values = (0..self.model.vars.len())
                .map(|x| self.model.vars[x].kind == VarKind::Presence && self.relaxed(x))
                .collect();
            self.best = Some((cost, values));
        }
        if self.pruned() {
            return None;
        }
        let r = slack_row?;
        self.model.rows[r].terms.iter().find(|&&(x, _)| self.assigned[x].is_none()).map(|&(x, _)| x)
    }

    fn dive(&mut self) {
        self.nodes += 1;
        if self.nodes % 100_000 == 0 {
            log::debug!("{} search nodes, bound {}, incumbent {:?}", self.nodes, self.bound(), self.best.as_ref().map(|b| b.0));
        }
        if self.pruned() {
            return;
        }
        let Some(x) = self.branch_variable() else { return };
        // Explore the child with the smaller bound first; on a tie, the one
        // that departs from the relaxation.
        let mark = self.trail.len();
        let flip = !self.relaxed(x);
        let mut children = Vec::with_capacity(2);
        for value in [flip, !flip] {
            let ok = self.assign(x, value);
            self.refresh_since(mark);
            if ok {
                children.push((self.bound(), value));
            }
            self.undo(mark);
        }
        children.sort_by_key(|&(b, _)| b);
        for (_, value) in children {
            if self.assign(x, value) {
                self.refresh_since(mark);
                self.dive();
            }
            self.undo(mark);
        }
    }
}

/// Exact minimization by depth-first branch-and-bound over the presence
/// variables. Change variables take their smallest feasible values once the
/// presences are fixed.
///
/// The bound at a search node is a Lagrangian relaxation: the rows allowing
/// one adjacency per extremity move into the objective with multipliers
/// tuned by subgradient steps at the root, and every adjacency then gets its
/// cheapest history on its own. When those histories satisfy every row they
/// give a feasible point, which closes the node if it meets the bound.
pub fn solve_bb(model: &IlpModel) -> Result<IlpSolution> {
    let n = model.vars.len();
    let prop_rows: Vec<usize> = (0..model.rows.len())
        .filter(|&r| matches!(model.rows[r].family, Family::C1 | Family::C2 | Family::C7))
        .collect();
    let mut rows_of = vec![Vec::new(); n];
    let mut row_min = vec![0; model.rows.len()];
    let mut row_max = vec![0; model.rows.len()];
    let mut row_free = vec![0; model.rows.len()];
    for &r in &prop_rows {
        for &(x, c) in &model.rows[r].terms {
            rows_of[x].push((r, c));
            row_free[r] += 1;
            if c < 0 {
                row_min[r] += c;
            } else {
                row_max[r] += c;
            }
        }
    }
    let mut search = Search {
        model,
        assigned: vec![None; n],
        rows_of,
        row_act: vec![0; model.rows.len()],
        row_min,
        row_max,
        row_free,
        prop_rows,
        lambda: vec![0; model.rows.len()],
        penalty: vec![0; n],
        lambda_rhs: 0,
        settled: 0,
        cost_of: vec![0; model.slots.len()],
        relax: vec![Vec::new(); model.slots.len()],
        sum_cost: 0,
        trail: Vec::new(),
        best: None,
        nodes: 0,
    };
    if search.prop_rows.iter().any(|&r| search.slack(r) < 0) {
        return Err(Error::internal("integer program is infeasible"));
    }
    search.refresh_all();
    log::debug!(
        "integer program: {} variables, {} rows, root bound {}",
        n,
        model.rows.len(),
        search.bound()
    );
    let sibling_rows = model.rows.iter().any(|r| matches!(r.family, Family::C1 | Family::C2));
    if model.alpha.change_coef() == 0 && !sibling_rows {
        // Without change costs the nodes are independent and each one is a
        // maximum-weight matching.
        let adjacencies = model.component.edges();
        let mut at: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (x, var) in model.vars.iter().enumerate() {
            if var.kind == VarKind::Presence {
                at.entry(var.node).or_default().push(x);
            }
        }
        for xs in at.values() {
            let edges: Vec<(Adjacency, u32)> = xs
                .iter()
                .map(|&x| {
                    let var = &model.vars[x];
                    (adjacencies[var.edge].0, model.weight[var.edge][var.node] as u32)
                })
                .collect();
            let chosen = max_weight_matching(&edges);
            for (&x, (adj, _)) in xs.iter().zip(&edges) {
                if !search.assign(x, chosen.contains(adj)) {
                    return Err(Error::internal("matching violates a row"));
                }
            }
        }
        search.refresh_since(0);
    } else {
        search.tune(200);
        log::debug!("bound after tuning {}", search.bound());
    }
    search.dive();
    let nodes = search.nodes;
    let (objective, presence) = search.best.ok_or_else(|| Error::internal("integer program is infeasible"))?;
    let objective = objective as Cost;

    let mut values: Vec<u8> = presence.iter().map(|&b| u8::from(b)).collect();
    // Smallest change value satisfying the c3-c6 rows of each variable.
    let slot_value = |e: usize, v: NodeId| match model.slots[e][v] {
        Slot::Fixed(b) => b,
        Slot::Free(x) => values[x] == 1,
    };
    let parent: HashMap<NodeId, NodeId> =
        model.children.iter().enumerate().flat_map(|(u, cs)| cs.iter().map(move |&c| (c, u))).collect();
    let changes: Vec<(usize, u8)> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Change)
        .map(|(x, v)| (x, u8::from(slot_value(v.edge, v.node) != slot_value(v.edge, parent[&v.node]))))
        .collect();
    for (x, c) in changes {
        values[x] = c;
    }
    if !model.is_feasible(&values) {
        return Err(Error::internal("branch-and-bound returned an infeasible point"));
    }
    if model.evaluate(&values) != objective as i64 {
        return Err(Error::internal(format!(
            "model objective {} disagrees with search objective {objective}",
            model.evaluate(&values)
        )));
    }
    Ok(IlpSolution { values, objective, nodes })
}

/// Solves a component through the integer program and converts the result to
/// a labeling. The number of co-optimal labelings is not computed.
pub fn solve_component(
    component: &Component,
    phylo: &Phylogeny,
    weights: &WeightTable,
    alpha: Alpha,
    options: ModelOptions,
) -> Result<ComponentSolution> {
    let model = build_model(component, phylo, weights, alpha, options);
    let sol = solve_bb(&model)?;
    let tree = phylo.tree();
    let edges = component.edges();
    // present[v][e]
    let mut present = vec![vec![false; edges.len()]; tree.len()];
    for leaf in tree.leaves() {
        let set = phylo.leaf_adjacencies(leaf);
        for (e, (adj, _)) in edges.iter().enumerate() {
            present[leaf][e] = set.contains(adj);
        }
    }
    for (var, &x) in model.vars.iter().zip(&sol.values) {
        if var.kind == VarKind::Presence && x == 1 {
            present[var.node][var.edge] = true;
        }
    }
    let changes: u64 = tree
        .edges()
        .map(|(u, v)| present[u].iter().zip(&present[v]).filter(|(a, b)| a != b).count() as u64)
        .sum();
    let discarded: u64 = edges
        .iter()
        .enumerate()
        .flat_map(|(e, (adj, nodes))| nodes.iter().map(move |&v| (e, adj, v)))
        .filter(|&(e, _, v)| !tree.is_leaf(v) && !present[v][e])
        .map(|(_, adj, v)| u64::from(weights.get(v, adj).micros()))
        .sum();
    let objective = Objective::new(alpha, changes, discarded);
    if objective.cost != sol.objective {
        return Err(Error::internal("integer program objective differs from the labeling objective"));
    }
    let node_sets = tree
        .internal_nodes()
        .map(|v| {
            let set = edges.iter().enumerate().filter(|&(e, _)| present[v][e]).map(|(_, (a, _))| *a).collect();
            (v, set)
        })
        .collect();
    Ok(ComponentSolution { node_sets, objective, cooptimal: None, sample: None })
}

/// Every extremity is used at most once per node by the returned assignment.
pub fn presence_is_consistent(model: &IlpModel, values: &[u8]) -> bool {
    let mut used: HashMap<(NodeId, Extremity), usize> = HashMap::new();
    for (var, &x) in model.vars.iter().zip(values) {
        if var.kind == VarKind::Presence && x == 1 {
            for ext in model.component.edges()[var.edge].0.extremities() {
                *used.entry((var.node, ext)).or_default() += 1;
            }
        }
    }
    used.values().all(|&k| k <= 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{self, DpLimits};
    use crate::genome::Genome;
    use crate::graph::{build_global_graph, candidate_adjacencies, connected_components, GlobalAdjacencyGraph};
    use crate::score::{Threshold, Weight};
    use crate::tree::tests::tree_from;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn adj(x: &str, y: &str) -> Adjacency {
        Adjacency::new(x.parse().unwrap(), y.parse().unwrap()).unwrap()
    }

    fn phylo(layout: &[(&str, Option<&str>)], leaves: &[(&str, &[Adjacency])], n: u32) -> Phylogeny {
        let u = Arc::new((1..=n).collect::<BTreeSet<u32>>());
        let g: BTreeMap<String, Genome> = leaves
            .iter()
            .map(|(name, a)| (name.to_string(), Genome::new(a.iter().copied().collect(), u.clone()).unwrap()))
            .collect();
        Phylogeny::new(tree_from(layout), g).unwrap()
    }

    const THREE: &[(&str, Option<&str>)] =
        &[("R", None), ("X", Some("R")), ("A", Some("X")), ("B", Some("X")), ("C", Some("R"))];

    #[test]
    fn single_edge_model_shape() {
        let e = adj("1h", "2t");
        let p = phylo(THREE, &[("A", &[e]), ("B", &[e]), ("C", &[])], 2);
        let g = build_global_graph(&p, &candidate_adjacencies(&p), &WeightTable::new(), Threshold::default());
        let comp = &connected_components(&g)[0];
        let m = build_model(comp, &p, &WeightTable::new(), Alpha::new(1, 2).unwrap(), ModelOptions::default());
        assert_eq!(m.count(VarKind::Presence), 2);
        assert_eq!(m.count(VarKind::Change), 4);
        let sol = solve_bb(&m).unwrap();
        assert!(m.is_feasible(&sol.values));
    }

    #[test]
    fn alpha_zero_puts_weight_on_changes_only() {
        let e = adj("1h", "2t");
        let p = phylo(THREE, &[("A", &[e]), ("B", &[]), ("C", &[])], 2);
        let mut w = WeightTable::new();
        w.insert(0, e, Weight::quantize(0.5).unwrap());
        w.insert(1, e, Weight::quantize(0.5).unwrap());
        let g = build_global_graph(&p, &candidate_adjacencies(&p), &w, Threshold::default());
        let comp = &connected_components(&g)[0];
        let m = build_model(comp, &p, &w, Alpha::ZERO, ModelOptions::default());
        for (var, &c) in m.vars().iter().zip(m.objective_coefficients()) {
            match var.kind {
                VarKind::Presence => assert_eq!(c, 0),
                VarKind::Change => assert!(c > 0),
            }
        }
    }

    #[test]
    fn annotation_gates_variables_and_rows() {
        let e = adj("1h", "2t");
        let p = phylo(THREE, &[("A", &[e]), ("B", &[]), ("C", &[])], 2);
        let mut ann = BTreeMap::new();
        ann.insert(e, vec![1]);
        let comp = &connected_components(&GlobalAdjacencyGraph::from_edges(ann))[0];
        let m = build_model(comp, &p, &WeightTable::new(), Alpha::ZERO, ModelOptions::default());
        assert!(m.vars().iter().filter(|v| v.kind == VarKind::Presence).all(|v| v.node == 1));
        assert!(m.rows().iter().filter(|r| r.family == Family::C7).all(|r| r.name.starts_with("c7_X_")));
    }

    #[test]
    fn c3_row_text() {
        let e = adj("1h", "2t");
        let layout: &[(&str, Option<&str>)] =
            &[("u", None), ("v", Some("u")), ("A", Some("v")), ("B", Some("v")), ("C", Some("u"))];
        let p = phylo(layout, &[("A", &[e]), ("B", &[e]), ("C", &[])], 2);
        let g = build_global_graph(&p, &candidate_adjacencies(&p), &WeightTable::new(), Threshold::default());
        let comp = &connected_components(&g)[0];
        let m = build_model(comp, &p, &WeightTable::new(), Alpha::ZERO, ModelOptions::default());
        let lp = m.to_lp_string();
        assert!(lp.contains(" c3_v_1h_2t: p_v_1h_2t + p_u_1h_2t + c_v_1h_2t <= 2\n"), "{lp}");
        // a leaf end is folded into the right-hand side
        assert!(lp.contains(" c3_A_1h_2t: p_v_1h_2t + c_A_1h_2t <= 1\n"), "{lp}");
    }

    #[test]
    fn empty_component_exports_constant_objective() {
        let p = phylo(THREE, &[("A", &[]), ("B", &[]), ("C", &[])], 2);
        let comp = Component::new(vec![]);
        let m = build_model(&comp, &p, &WeightTable::new(), Alpha::ZERO, ModelOptions::default());
        let lp = m.to_lp_string();
        assert!(lp.contains("Subject To\nBinaries\nEnd\n"), "{lp}");
        assert!(lp.contains(" obj: 0\n"));
        let parsed = parse_lp(&lp).unwrap();
        assert!(parsed.rows.is_empty());
        assert_eq!(solve_bb(&m).unwrap().objective, 0);
    }

    #[test]
    fn exported_rows_hold_for_the_optimum() {
        let (a, b, c) = (adj("1h", "2t"), adj("1h", "3t"), adj("2h", "3t"));
        let p = phylo(THREE, &[("A", &[a]), ("B", &[b]), ("C", &[c, a])], 3);
        let mut w = WeightTable::new();
        for v in [0, 1] {
            w.insert(v, a, Weight::quantize(0.7).unwrap());
            w.insert(v, b, Weight::quantize(0.4).unwrap());
            w.insert(v, c, Weight::quantize(0.2).unwrap());
        }
        let g = build_global_graph(&p, &candidate_adjacencies(&p), &w, Threshold::default());
        let comp = &connected_components(&g)[0];
        let alpha = Alpha::new(1, 2).unwrap();
        let m = build_model(comp, &p, &w, alpha, ModelOptions::default());
        let sol = solve_bb(&m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lp");
        export_lp(&m, &path).unwrap();
        let lp = parse_lp(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let vals = sol.named_values(&m);
        assert!(lp.violated(&vals).is_empty());
        assert_eq!(lp.evaluate(&vals), Some(sol.objective as i64));
        assert_eq!(lp.binaries.len(), m.vars().len());
        assert!(presence_is_consistent(&m, &sol.values));

        let (dp_sol, _) = dp::solve_component(comp, &p, &w, alpha, DpLimits::default()).unwrap();
        assert_eq!(dp_sol.objective.cost, sol.objective);
    }

    #[test]
    fn sibling_rows_cut_off_weighted_optima() {
        // The adjacency is absent from every leaf but carries full weight at
        // the root only. At alpha = 1 keeping it at the root alone is free,
        // which the sibling rows forbid.
        let e = adj("1h", "2t");
        let p = phylo(THREE, &[("A", &[]), ("B", &[]), ("C", &[])], 2);
        let mut ann = BTreeMap::new();
        ann.insert(e, vec![0, 1]);
        let comp = &connected_components(&GlobalAdjacencyGraph::from_edges(ann))[0];
        let mut w = WeightTable::new();
        w.insert(0, e, Weight::ONE);
        let plain = solve_bb(&build_model(comp, &p, &w, Alpha::ONE, ModelOptions::default())).unwrap();
        assert_eq!(plain.objective, 0);
        let strict = solve_bb(&build_model(comp, &p, &w, Alpha::ONE, ModelOptions { parsimony_rows: true })).unwrap();
        assert_eq!(strict.objective, Alpha::ONE.cost(0, 1_000_000));
    }

    #[test]
    fn c_equals_presence_difference() {
        let (a, b) = (adj("1h", "2t"), adj("1h", "3t"));
        let p = phylo(THREE, &[("A", &[a]), ("B", &[b]), ("C", &[a])], 3);
        let g = build_global_graph(&p, &candidate_adjacencies(&p), &WeightTable::new(), Threshold::default());
        let comp = &connected_components(&g)[0];
        let m = build_model(comp, &p, &WeightTable::new(), Alpha::ZERO, ModelOptions::default());
        let sol = solve_bb(&m).unwrap();
        let ilp_sol = solve_component(comp, &p, &WeightTable::new(), Alpha::ZERO, ModelOptions::default()).unwrap();
        assert_eq!(ilp_sol.objective.cost, sol.objective);
        assert_eq!(ilp_sol.objective.changes, 2);
    }
}
