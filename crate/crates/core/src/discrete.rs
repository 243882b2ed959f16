//! Mixed-integer designs: fewest nonzero entries, shortest modeled run time,
//! and the sign-restricted linear variant of the latter. All three are solved
//! by a best-first branch and bound over convex relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::conic::{ConicProblem, LinExpr, SolveOptions, SolveStatus, Var};
use crate::design::{self, presets, Design};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::par;
use crate::sched::{self, Dependencies, Schedule, TimingModel};
use crate::sdpdesign::{self, build_design_sdp, ConstraintSet, Objective};

pub const DEFAULT_NODE_BUDGET: usize = 50_000;
const EDGE_THRESHOLD: f64 = 1e-6;
const LOG_EVERY: usize = 100;

#[derive(Debug, Clone)]
pub struct BnbOptions {
    pub node_budget: usize,
    pub integrality_tol: f64,
    /// The objective only takes integer values, so bounds round up.
    pub integral_objective: bool,
    /// Run the rounding heuristic on the first and every k-th fractional node.
    pub heuristic_every: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self { node_budget: DEFAULT_NODE_BUDGET, integrality_tol: 1e-5, integral_objective: false, heuristic_every: 10 }
    }
}

/// Relaxation optimum at a node: lower bound, binary values and extra data.
#[derive(Debug, Clone)]
pub struct NodeSolution<T> {
    pub bound: f64,
    pub values: Vec<f64>,
    pub payload: T,
}

#[derive(Debug, Clone)]
pub enum Relaxation<T> {
    Infeasible,
    Solved(NodeSolution<T>),
}

#[derive(Debug, Clone)]
pub struct Incumbent<U> {
    pub value: f64,
    pub solution: U,
    /// Node count when the incumbent was found.
    pub node: usize,
}

#[derive(Debug, Clone)]
pub struct BnbOutcome<U> {
    pub incumbent: Option<Incumbent<U>>,
    /// Relaxations solved.
    pub nodes: usize,
    pub best_bound: f64,
    /// `true` when the tree was closed, so the incumbent is optimal.
    pub complete: bool,
    pub log: Vec<String>,
}

impl<U> BnbOutcome<U> {
    pub fn suboptimal(&self) -> bool {
        !self.complete
    }

    pub fn gap(&self) -> f64 {
        match &self.incumbent {
            Some(inc) => (inc.value - self.best_bound).max(0.0),
            None => f64::INFINITY,
        }
    }
}

struct OpenNode {
    key: i64,
    depth: usize,
    id: usize,
    bound: f64,
    fixings: Vec<Option<bool>>,
    branch: usize,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    // Max-heap order: lowest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key).then(self.depth.cmp(&other.depth)).then(other.id.cmp(&self.id))
    }
}

fn bound_key(bound: f64) -> i64 {
    (bound * 1e7).round() as i64
}

/// Free binary closest to 1/2; lowest index on ties.
fn most_fractional(values: &[f64], fixings: &[Option<bool>], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        if fixings[k].is_some() || v.min(1.0 - v) <= tol {
            continue;
        }
        let dist = (v - 0.5).abs();
        if best.is_none_or(|(_, d)| dist < d) {
            best = Some((k, dist));
        }
    }
    best.map(|(k, _)| k)
}

fn prunable<U>(bound: f64, best: &Option<Incumbent<U>>, opts: &BnbOptions) -> bool {
    match best {
        None => false,
        Some(inc) if opts.integral_objective => (bound - 1e-6).ceil() >= inc.value - 1e-9,
        Some(inc) => bound >= inc.value - 1e-7 * inc.value.abs().max(1.0),
    }
}

/// Best-first branch and bound over binary variables.
///
/// `relax` solves the convex relaxation under partial fixings. `incumbent`
/// turns a node into a feasible solution: called with `integral = true` on
/// nodes whose relaxation is integral, and as a rounding heuristic otherwise.
/// `seeds` are complete fixings evaluated before the search.
pub fn branch_and_bound<T, U, R, H>(
    root: Vec<Option<bool>>,
    seeds: &[Vec<Option<bool>>],
    relax: R,
    mut incumbent: H,
    opts: &BnbOptions,
) -> Result<BnbOutcome<U>>
where
    T: Send,
    R: Fn(&[Option<bool>]) -> Result<Relaxation<T>> + Sync + Send,
    H: FnMut(&[Option<bool>], &NodeSolution<T>, bool) -> Result<Option<(f64, U)>>,
{
    let mut log = Vec::new();
    let mut best: Option<Incumbent<U>> = None;
    let mut nodes = 0usize;
    let mut next_id = 0usize;
    let mut fractional_seen = 0usize;
    let mut heap = BinaryHeap::new();

    let offer = |value: f64, solution: U, nodes: usize, best: &mut Option<Incumbent<U>>, log: &mut Vec<String>| {
        if best.as_ref().is_none_or(|b| value < b.value - 1e-9) {
            log.push(format!("node {nodes}: incumbent {value:.6}"));
            *best = Some(Incumbent { value, solution, node: nodes });
        }
    };

    for seed in seeds {
        nodes += 1;
        if let Relaxation::Solved(sol) = relax(seed)? {
            if let Some((v, u)) = incumbent(seed, &sol, true)? {
                offer(v, u, nodes, &mut best, &mut log);
            }
        }
    }

    nodes += 1;
    let mut pending = vec![(root.clone(), relax(&root)?, 0usize)];
    if matches!(pending[0].1, Relaxation::Infeasible) {
        log.push("root relaxation infeasible".into());
    }
    let complete;
    loop {
        for (fixings, rel, depth) in pending.drain(..) {
            let Relaxation::Solved(sol) = rel else { continue };
            if prunable(sol.bound, &best, opts) {
                continue;
            }
            match most_fractional(&sol.values, &fixings, opts.integrality_tol) {
                None => {
                    if let Some((v, u)) = incumbent(&fixings, &sol, true)? {
                        offer(v, u, nodes, &mut best, &mut log);
                    }
                }
                Some(branch) => {
                    fractional_seen += 1;
                    if fractional_seen == 1 || fractional_seen.is_multiple_of(opts.heuristic_every.max(1)) {
                        if let Some((v, u)) = incumbent(&fixings, &sol, false)? {
                            offer(v, u, nodes, &mut best, &mut log);
                        }
                    }
                    if !prunable(sol.bound, &best, opts) {
                        next_id += 1;
                        heap.push(OpenNode {
                            key: bound_key(sol.bound),
                            depth,
                            id: next_id,
                            bound: sol.bound,
                            fixings,
                            branch,
                        });
                    }
                }
            }
        }

        let node = match heap.pop() {
            None => None,
            Some(top) if prunable(top.bound, &best, opts) => {
                heap.clear();
                None
            }
            Some(top) => Some(top),
        };
        let Some(node) = node else {
            complete = true;
            break;
        };
        if nodes + 2 > opts.node_budget {
            heap.push(node);
            complete = false;
            log.push(format!("node budget {} exhausted", opts.node_budget));
            break;
        }
        let children: Vec<Vec<Option<bool>>> = [false, true]
            .iter()
            .map(|&v| {
                let mut f = node.fixings.clone();
                f[node.branch] = Some(v);
                f
            })
            .collect();
        let results = par::map_slice(&children, |f| relax(f));
        nodes += 2;
        for (f, r) in children.into_iter().zip(results) {
            pending.push((f, r?, node.depth + 1));
        }
        if nodes % LOG_EVERY < 2 {
            let inc = best.as_ref().map_or(f64::INFINITY, |b| b.value);
            log.push(format!(
                "node {nodes}: open {} bound {:.6} incumbent {inc:.6} gap {:.6}",
                heap.len() + 1,
                node.bound,
                inc - node.bound
            ));
        }
    }

    let inc_value = best.as_ref().map_or(f64::INFINITY, |b| b.value);
    let best_bound = if complete { inc_value } else { heap.iter().map(|o| o.bound).fold(inc_value, f64::min) };
    log.push(format!(
        "finished after {nodes} nodes: incumbent {inc_value:.6} bound {best_bound:.6} gap {:.6} {}",
        (inc_value - best_bound).max(0.0),
        if complete { "optimal" } else { "suboptimal" }
    ));
    Ok(BnbOutcome { incumbent: best, nodes, best_bound, complete, log })
}

/// Unordered index pairs `(i, j)`, `i < j`, in row-major order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

/// Nonzero off-diagonal pattern of `Z` and `W`, one flag per pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePattern {
    pub n: usize,
    pub z: Vec<bool>,
    pub w: Vec<bool>,
}

impl EdgePattern {
    pub fn from_design(design: &Design) -> Self {
        let ps = pairs(design.n);
        Self {
            n: design.n,
            z: ps.iter().map(|&(i, j)| design.z[(i, j)].abs() > EDGE_THRESHOLD).collect(),
            w: ps.iter().map(|&(i, j)| design.w[(i, j)].abs() > EDGE_THRESHOLD).collect(),
        }
    }

    pub fn z_edges(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }

    pub fn w_edges(&self) -> usize {
        self.w.iter().filter(|&&b| b).count()
    }

    fn fixings(&self) -> Vec<Option<bool>> {
        self.z.iter().chain(&self.w).map(|&b| Some(b)).collect()
    }

    /// Constraint set forcing every entry outside the pattern to zero.
    pub fn constraint_set(&self) -> ConstraintSet {
        let ps = pairs(self.n);
        let mut cs = ConstraintSet::new(self.n);
        cs.z_zero = ps.iter().zip(&self.z).filter(|(_, &b)| !b).map(|(&p, _)| p).collect();
        cs.w_zero = ps.iter().zip(&self.w).filter(|(_, &b)| !b).map(|(&p, _)| p).collect();
        cs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteKind {
    MinEdges,
    MinTimeMisdp,
    MinTimeMilp,
}

impl DiscreteKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MinEdges => "min-edges",
            Self::MinTimeMisdp => "min-time-misdp",
            Self::MinTimeMilp => "min-time-milp",
        }
    }
}

#[derive(Debug, Clone)]
struct TimeParams {
    timing: TimingModel,
    r: usize,
    big_m: f64,
    q: f64,
}

/// Relaxation payload: the matrices found at a node.
#[derive(Debug, Clone)]
struct NodeMatrices {
    z: Mat,
    w: Mat,
    status: SolveStatus,
}

struct Model<'a> {
    kind: DiscreteKind,
    n: usize,
    cs: &'a ConstraintSet,
    pairs: Vec<(usize, usize)>,
    time: Option<TimeParams>,
    min_row: usize,
    solver: SolveOptions,
}

impl Model<'_> {
    fn np(&self) -> usize {
        self.pairs.len()
    }

    fn root(&self) -> Vec<Option<bool>> {
        let zmask = self.cs.z_zero_mask();
        let wmask = self.cs.w_zero_mask();
        let milp = self.kind == DiscreteKind::MinTimeMilp;
        let x = self.pairs.iter().map(|&(i, j)| zmask[i][j].then_some(false));
        let y = self.pairs.iter().map(|&(i, j)| (wmask[i][j] || (milp && zmask[i][j])).then_some(false));
        x.chain(y).collect()
    }

    fn node_constraints(&self, fix: &[Option<bool>]) -> ConstraintSet {
        let np = self.np();
        let mut cs = self.cs.clone();
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            if fix[p] == Some(false) {
                cs.z_zero.push((i, j));
            }
            if fix[np + p] == Some(false) {
                cs.w_zero.push((i, j));
            }
        }
        cs
    }

    /// Cheap necessary conditions on the pattern still allowed at a node.
    fn pattern_possible(&self, fix: &[Option<bool>], node_cs: &ConstraintSet) -> bool {
        if !node_cs.structural_violations().is_empty() {
            return false;
        }
        let np = self.np();
        let milp = self.kind == DiscreteKind::MinTimeMilp;
        for node in 0..self.n {
            let allowed_w = self
                .pairs
                .iter()
                .enumerate()
                .filter(|(p, &(i, j))| {
                    (i == node || j == node) && fix[np + p] != Some(false) && !(milp && fix[*p] == Some(false))
                })
                .count();
            if allowed_w < self.min_row {
                return false;
            }
        }
        true
    }

    fn add_binaries(&self, p: &mut ConicProblem, fix: &[Option<bool>]) -> (Vec<Var>, Vec<Var>) {
        let np = self.np();
        let x = p.vector("x", np);
        let y = p.vector("y", np);
        for (k, &v) in x.iter().chain(&y).enumerate() {
            match fix[k] {
                Some(b) => p.add_eq("binary fixed", LinExpr::var(v).plus_const(-(b as u8 as f64))),
                None => {
                    p.add_geq("binary >= 0", LinExpr::var(v));
                    p.add_leq("binary <= 1", LinExpr::var(v).plus_const(-1.0));
                }
            }
        }
        (x, y)
    }

    fn add_cuts(&self, p: &mut ConicProblem, x: &[Var], y: &[Var]) {
        let n = self.n as f64;
        let total = |vars: &[Var]| vars.iter().fold(LinExpr::zero(), |e, &v| e.plus(v, 1.0));
        p.add_geq("sum x >= n", total(x).plus_const(-n));
        p.add_geq("sum y >= n - 1", total(y).plus_const(-(n - 1.0)));
        let w_deg = self.min_row.max(1) as f64;
        for node in 0..self.n {
            let mut dx = LinExpr::zero();
            let mut dy = LinExpr::zero();
            for (k, &(i, j)) in self.pairs.iter().enumerate() {
                if i == node || j == node {
                    dx.add_term(x[k], 1.0);
                    dy.add_term(y[k], 1.0);
                }
            }
            p.add_geq(&format!("deg_x({}) >= 2", node + 1), dx.plus_const(-2.0));
            p.add_geq(&format!("deg_y({}) >= {w_deg}", node + 1), dy.plus_const(-w_deg));
        }
    }

    /// Big-M precedence constraints over `r` iterations; returns the slack `b`.
    fn add_schedule(&self, p: &mut ConicProblem, x: &[Var], y: &[Var]) -> Var {
        let tp = self.time.as_ref().expect("schedule model needs timing");
        let (t, l, a, r, n) = (&tp.timing.t, &tp.timing.l, tp.big_m, tp.r, self.n);
        let s: Vec<Vec<Var>> = (0..r).map(|k| p.vector(&format!("s{}", k + 1), n)).collect();
        for row in &s {
            for &v in row {
                p.add_geq("s >= 0", LinExpr::var(v));
            }
        }
        for k in 0..r {
            for (e, &(i, j)) in self.pairs.iter().enumerate() {
                let within = LinExpr::var(s[k][j]).plus(s[k][i], -1.0).plus(x[e], -(t[i] + l[(i, j)] + a));
                p.add_geq("within", within.plus_const(a));
                if k + 1 < r {
                    let back = LinExpr::var(s[k + 1][i]).plus(s[k][j], -1.0).plus(y[e], -(t[j] + l[(j, i)] + a));
                    p.add_geq("between", back.plus_const(a));
                    let fwd = LinExpr::var(s[k + 1][j]).plus(s[k][i], -1.0).plus(y[e], -(t[i] + l[(i, j)] + a));
                    p.add_geq("between", fwd.plus_const(a));
                }
            }
            if k + 1 < r {
                for i in 0..n {
                    p.add_geq("self", LinExpr::var(s[k + 1][i]).plus(s[k][i], -1.0).plus_const(-t[i]));
                }
            }
        }
        let b = p.scalar("b");
        p.add_geq("b >= 0", LinExpr::var(b));
        let rq = r as f64 * tp.q;
        let last = &s[r - 1];
        for i in 0..n {
            p.add_geq("end", LinExpr::var(b).plus(last[i], -1.0).plus_const(rq - t[i]));
        }
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            for (u, v) in [(i, j), (j, i)] {
                let end = LinExpr::var(b).plus(last[u], -1.0).plus(y[e], -l[(u, v)]);
                p.add_geq("end", end.plus_const(rq - t[u]));
            }
        }
        b
    }

    /// Critical-path bound from the dependencies already fixed on.
    fn path_bound(&self, fix: &[Option<bool>]) -> f64 {
        let Some(tp) = &self.time else { return f64::NEG_INFINITY };
        let np = self.np();
        let n = self.n;
        let mut within = vec![vec![false; n]; n];
        let mut between = vec![vec![false; n]; n];
        for i in 0..n {
            between[i][i] = true;
        }
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            within[j][i] = fix[e] == Some(true);
            between[i][j] = fix[np + e] == Some(true);
            between[j][i] = between[i][j];
        }
        let deps = Dependencies { within, between };
        match sched::compute_schedule(&deps, &tp.timing, tp.r) {
            Ok(s) => (s.end[tp.r - 1] - tp.r as f64 * tp.q).max(0.0),
            Err(_) => 0.0,
        }
    }

    fn relax(&self, fix: &[Option<bool>]) -> Result<Relaxation<NodeMatrices>> {
        let node_cs = self.node_constraints(fix);
        if !self.pattern_possible(fix, &node_cs) {
            return Ok(Relaxation::Infeasible);
        }
        let np = self.np();
        let n = self.n;
        let (mut p, x, y, zw) = if self.kind == DiscreteKind::MinTimeMilp {
            let mut p = ConicProblem::new();
            let (x, y) = self.add_binaries(&mut p, fix);
            let z = self.add_linear_design(&mut p, &x, &y);
            (p, x, y, Err(z))
        } else {
            let prog = build_design_sdp(&Objective::Feasibility, &node_cs)?;
            let mut p = prog.problem;
            let (x, y) = self.add_binaries(&mut p, fix);
            let cap = 2.0 + self.cs.eps;
            for (e, &(i, j)) in self.pairs.iter().enumerate() {
                for (ind, var) in [(x[e], prog.z.at(i, j)), (y[e], prog.w.at(i, j))] {
                    p.add_geq("entry cap", LinExpr::term(ind, cap).plus(var, -1.0));
                    p.add_geq("entry cap", LinExpr::term(ind, cap).plus(var, 1.0));
                }
            }
            (p, x, y, Ok((prog.z, prog.w)))
        };
        self.add_cuts(&mut p, &x, &y);
        match self.kind {
            DiscreteKind::MinEdges => {
                let all = x.iter().chain(&y).fold(LinExpr::zero(), |e, &v| e.plus(v, 1.0));
                p.minimize(all);
            }
            _ => {
                let b = self.add_schedule(&mut p, &x, &y);
                p.minimize(LinExpr::var(b));
            }
        }
        let sol = p.solve_with(&self.solver)?;
        match sol.status {
            SolveStatus::Optimal => {}
            _ => return Ok(Relaxation::Infeasible),
        }
        let mut values = sol.values(&x);
        values.extend(sol.values(&y));
        for (k, v) in values.iter_mut().enumerate() {
            if let Some(b) = fix[k] {
                *v = b as u8 as f64;
            }
        }
        let (z, w) = match zw {
            Ok((zv, wv)) => (sol.matrix(&zv), sol.matrix(&wv)),
            Err(zoff) => {
                let mut z = Mat::zeros(n, n);
                let mut w = Mat::zeros(n, n);
                for (e, &(i, j)) in self.pairs.iter().enumerate() {
                    let zij = sol.value(zoff[e]).min(0.0);
                    z[(i, j)] = zij;
                    z[(j, i)] = zij;
                    if values[np + e] > 0.5 {
                        w[(i, j)] = zij;
                        w[(j, i)] = zij;
                    }
                }
                (z, w)
            }
        };
        let bound = sol.objective.max(self.path_bound(fix));
        Ok(Relaxation::Solved(NodeSolution { bound, values, payload: NodeMatrices { z, w, status: sol.status } }))
    }

    /// Variables and constraints of the sign-restricted linear design.
    fn add_linear_design(&self, p: &mut ConicProblem, x: &[Var], y: &[Var]) -> Vec<Var> {
        let n = self.n;
        let np = self.np();
        let eps = self.cs.eps;
        let z = p.vector("z", np);
        let diag = p.scalar("Z11");
        p.add_geq("Z11 >= 2 - eps", LinExpr::var(diag).plus_const(-(2.0 - eps)));
        p.add_leq("Z11 <= 2 + eps", LinExpr::var(diag).plus_const(-(2.0 + eps)));
        let inv = 1.0 / (n as f64 - 1.0);
        for e in 0..np {
            p.add_leq("Z_ij <= 0", LinExpr::var(z[e]));
            p.add_geq("-Z_ij <= (2+eps) x", LinExpr::term(x[e], 2.0 + eps).plus(z[e], 1.0));
            p.add_geq("-Z_ij >= x/(n-1)", LinExpr::term(z[e], -1.0).plus(x[e], -inv));
            p.add_leq("y <= x", LinExpr::var(y[e]).plus(x[e], -1.0));
        }
        for i in 0..n {
            let mut row = LinExpr::var(diag);
            for (e, &(a, b)) in self.pairs.iter().enumerate() {
                if a == i || b == i {
                    row.add_term(z[e], 1.0);
                }
            }
            p.add_eq(&format!("(Z1)_{}", i + 1), row);
        }
        // Flow of n - 1 units from resolvent 1 along edges of G(W).
        let mut out_flow = vec![LinExpr::zero(); n];
        let mut in_flow = vec![LinExpr::zero(); n];
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            for (u, v) in [(i, j), (j, i)] {
                let f = p.scalar(&format!("f_{}{}", u + 1, v + 1));
                p.add_geq("f >= 0", LinExpr::var(f));
                p.add_geq("f <= (n-1) y", LinExpr::term(y[e], n as f64 - 1.0).plus(f, -1.0));
                out_flow[u].add_term(f, 1.0);
                in_flow[v].add_term(f, 1.0);
            }
        }
        for i in 0..n {
            let supply = if i == 0 { n as f64 - 1.0 } else { -1.0 };
            let mut bal = out_flow[i].clone();
            bal.add_expr(&in_flow[i], -1.0);
            p.add_eq(&format!("flow balance {}", i + 1), bal.plus_const(-supply));
        }
        z
    }

    /// Completes a node's fixings into a full pattern satisfying the cuts.
    fn round(&self, values: &[f64], fix: &[Option<bool>]) -> Option<Vec<Option<bool>>> {
        let np = self.np();
        let milp = self.kind == DiscreteKind::MinTimeMilp;
        let no_force = vec![false; np];
        let y_allowed: Vec<bool> =
            (0..np).map(|e| fix[np + e] != Some(false) && !(milp && fix[e] == Some(false))).collect();
        let y = select_pattern(
            self.n,
            &self.pairs,
            &values[np..],
            &fix[np..],
            &y_allowed,
            &no_force,
            self.n - 1,
            self.min_row.max(1),
        )?;
        let x_allowed: Vec<bool> = (0..np).map(|e| fix[e] != Some(false)).collect();
        let force = if milp { y.clone() } else { no_force };
        let x = select_pattern(self.n, &self.pairs, &values[..np], &fix[..np], &x_allowed, &force, self.n, 2)?;
        Some(x.into_iter().chain(y).map(Some).collect())
    }

    fn build_design(&self, fix: &[Option<bool>], m: &NodeMatrices) -> Result<Design> {
        if self.kind != DiscreteKind::MinTimeMilp {
            let node_cs = self.node_constraints(fix);
            return sdpdesign::finish_design(&m.z, &m.w, &node_cs, self.kind.name(), m.status);
        }
        let n = self.n;
        let mut z = m.z.clone();
        let mut w = m.w.clone();
        for i in 0..n {
            z[(i, i)] = 0.0;
            z[(i, i)] = -z.row(i).sum();
            w[(i, i)] = 0.0;
            w[(i, i)] = -w.row(i).sum();
        }
        let diag = z[(0, 0)];
        let spread = (0..n).map(|i| (z[(i, i)] - diag).abs()).fold(0.0, f64::max);
        if spread > 1e-6 || (diag - 2.0).abs() > self.cs.eps + 1e-6 {
            return Err(Error::SolverFailure {
                status: "numerical_failure".into(),
                message: format!("linear design diagonal deviates by {spread:e}"),
            });
        }
        for i in 0..n {
            z[(i, i)] = diag;
        }
        let mut design = Design::new(z, w, sdpdesign::DEFAULT_DESIGN_GAMMA)?;
        let fiedler = linalg::sym_eigenvalues(&design.w)[1];
        design.meta.objective = self.kind.name().to_string();
        design.meta.c = Some(fiedler * (1.0 - 1e-9));
        design.meta.eps = self.cs.eps;
        design.meta.solver_status = Some(m.status.to_string());
        let report = design::validate(&design, 1e-6);
        if !report.passed {
            let names: Vec<String> = report.failures().map(|c| c.name.clone()).collect();
            return Err(Error::SolverFailure {
                status: "numerical_failure".into(),
                message: format!("linear design fails validation: {}", names.join(", ")),
            });
        }
        Ok(design)
    }

    /// Objective value of a finished design.
    fn evaluate(&self, design: &Design) -> Result<f64> {
        match &self.time {
            None => {
                let p = EdgePattern::from_design(design);
                Ok((p.z_edges() + p.w_edges()) as f64)
            }
            Some(tp) => {
                let s = sched::schedule_design(design, &tp.timing, tp.r)?;
                Ok((s.end[tp.r - 1] - tp.r as f64 * tp.q).max(0.0))
            }
        }
    }

    fn search(&self, bnb: &BnbOptions, seeds: &[EdgePattern]) -> Result<BnbOutcome<Design>> {
        let seeds: Vec<Vec<Option<bool>>> = seeds.iter().map(|s| s.fixings()).collect();
        branch_and_bound(
            self.root(),
            &seeds,
            |fix| self.relax(fix),
            |fix, sol, integral| {
                let full = if integral {
                    sol.values.iter().map(|&v| Some(v > 0.5)).collect()
                } else {
                    match self.round(&sol.values, fix) {
                        Some(f) => f,
                        None => return Ok(None),
                    }
                };
                let Relaxation::Solved(exact) = self.relax(&full)? else { return Ok(None) };
                match self.build_design(&full, &exact.payload) {
                    Ok(d) => Ok(Some((self.evaluate(&d)?, d))),
                    Err(Error::SolverFailure { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            },
            bnb,
        )
    }
}

/// Chooses a pattern containing the fixed and forced pairs and every pair
/// with value at least 1/2, then adds the highest-valued allowed pairs until
/// the graph is connected, every degree reaches `min_degree` and the total
/// reaches `min_total`.
#[allow(clippy::too_many_arguments)]
fn select_pattern(
    n: usize,
    pairs: &[(usize, usize)],
    values: &[f64],
    fix: &[Option<bool>],
    allowed: &[bool],
    force: &[bool],
    min_total: usize,
    min_degree: usize,
) -> Option<Vec<bool>> {
    let np = pairs.len();
    let mut sel: Vec<bool> =
        (0..np).map(|e| fix[e] == Some(true) || force[e] || (allowed[e] && values[e] >= 0.5)).collect();
    if (0..np).any(|e| sel[e] && !allowed[e]) {
        return None;
    }
    let mut order: Vec<usize> = (0..np).filter(|&e| allowed[e]).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for e in 0..np {
        if sel[e] {
            let (a, b) = (find(&mut parent, pairs[e].0), find(&mut parent, pairs[e].1));
            parent[a] = b;
        }
    }
    for &e in &order {
        let (a, b) = (find(&mut parent, pairs[e].0), find(&mut parent, pairs[e].1));
        if a != b {
            parent[a] = b;
            sel[e] = true;
        }
    }
    let root = find(&mut parent, 0);
    if (1..n).any(|i| find(&mut parent, i) != root) {
        return None;
    }
    for node in 0..n {
        let degree = |sel: &[bool]| (0..np).filter(|&e| sel[e] && (pairs[e].0 == node || pairs[e].1 == node)).count();
        while degree(&sel) < min_degree {
            let e = order.iter().find(|&&e| !sel[e] && (pairs[e].0 == node || pairs[e].1 == node))?;
            sel[*e] = true;
        }
    }
    while sel.iter().filter(|&&b| b).count() < min_total {
        let e = order.iter().find(|&&e| !sel[e])?;
        sel[*e] = true;
    }
    Some(sel)
}

#[derive(Debug, Clone)]
pub struct MinEdgesDesign {
    pub design: Design,
    pub z_edges: usize,
    pub w_edges: usize,
    pub nodes: usize,
    pub complete: bool,
    pub log: Vec<String>,
}

fn infeasible(what: &str, cs: &ConstraintSet) -> Error {
    let violated = cs.structural_violations();
    Error::InfeasibleDesign {
        reason: if violated.is_empty() {
            format!("no {what} design satisfies the constraints")
        } else {
            format!("necessary conditions fail: {}", violated.join("; "))
        },
        violated,
    }
}

/// Design with the fewest nonzero off-diagonal entries in `Z` and `W`.
pub fn min_edges_design(cs: &ConstraintSet, bnb: &BnbOptions) -> Result<MinEdgesDesign> {
    cs.check_consistency()?;
    if cs.n == 2 {
        return Ok(MinEdgesDesign {
            design: presets::dr(),
            z_edges: 1,
            w_edges: 1,
            nodes: 0,
            complete: true,
            log: vec!["n = 2: Douglas-Rachford".into()],
        });
    }
    if cs.n < 2 {
        return Err(Error::InvalidInput("a design needs at least two resolvents".into()));
    }
    let model = Model {
        kind: DiscreteKind::MinEdges,
        n: cs.n,
        cs,
        pairs: pairs(cs.n),
        time: None,
        min_row: cs.min_row_nonzeros_w.unwrap_or(0),
        solver: SolveOptions::default(),
    };
    let mut bnb = bnb.clone();
    bnb.integral_objective = true;
    let outcome = model.search(&bnb, &[])?;
    let Some(inc) = outcome.incumbent else {
        return Err(infeasible("minimum-edge", cs));
    };
    let pattern = EdgePattern::from_design(&inc.solution);
    Ok(MinEdgesDesign {
        design: inc.solution,
        z_edges: pattern.z_edges(),
        w_edges: pattern.w_edges(),
        nodes: outcome.nodes,
        complete: outcome.complete,
        log: outcome.log,
    })
}

#[derive(Debug, Clone, Default)]
pub struct MinTimeOptions {
    /// Modeled iterations; defaults to `n`.
    pub r: Option<usize>,
    /// Big-M constant; defaults to `r (Σ t_i + Σ_{i<j} l_ij)`.
    pub big_m: Option<f64>,
    /// Lower bound on one iteration; defaults to [`sched::lower_bound_q`].
    pub q: Option<f64>,
    pub bnb: BnbOptions,
    /// Spectral objective re-optimized over the pattern found by the MILP.
    pub second_stage: Option<Objective>,
    /// Patterns tried as starting incumbents.
    pub seeds: Vec<EdgePattern>,
    pub solver: SolveOptions,
}

#[derive(Debug, Clone)]
pub struct MinTimeDesign {
    pub design: Design,
    pub schedule: Schedule,
    /// End time of the last modeled iteration minus `r q`.
    pub objective: f64,
    pub end_time: f64,
    pub r: usize,
    pub q: f64,
    pub nodes: usize,
    pub complete: bool,
    pub log: Vec<String>,
}

fn time_params(timing: &TimingModel, n: usize, opts: &MinTimeOptions) -> Result<TimeParams> {
    if timing.n() != n {
        return Err(Error::DimensionMismatch(format!("timing model has {} resolvents, expected {n}", timing.n())));
    }
    let r = opts.r.unwrap_or(n);
    if r == 0 {
        return Err(Error::InvalidInput("at least one iteration must be modeled".into()));
    }
    let lat: f64 = pairs(n).iter().map(|&(i, j)| timing.l[(i, j)]).sum();
    let big_m = opts.big_m.unwrap_or(r as f64 * (timing.t.iter().sum::<f64>() + lat));
    let q = opts.q.unwrap_or_else(|| sched::lower_bound_q(timing, timing.constant_latency()));
    Ok(TimeParams { timing: timing.clone(), r, big_m, q })
}

fn finish_min_time(
    design: Design,
    tp: &TimeParams,
    outcome_nodes: usize,
    complete: bool,
    log: Vec<String>,
) -> Result<MinTimeDesign> {
    let schedule = sched::schedule_design(&design, &tp.timing, tp.r)?;
    let end_time = schedule.end[tp.r - 1];
    Ok(MinTimeDesign {
        design,
        objective: end_time - tp.r as f64 * tp.q,
        end_time,
        schedule,
        r: tp.r,
        q: tp.q,
        nodes: outcome_nodes,
        complete,
        log,
    })
}

/// Design minimizing the modeled end time of `r` iterations, with the full
/// semidefinite feasibility conditions at every node.
pub fn min_time_design_misdp(timing: &TimingModel, cs: &ConstraintSet, opts: &MinTimeOptions) -> Result<MinTimeDesign> {
    cs.check_consistency()?;
    let n = cs.n;
    if n < 3 {
        return Err(Error::InvalidInput("minimum-time designs need n >= 3".into()));
    }
    let tp = time_params(timing, n, opts)?;
    let model = Model {
        kind: DiscreteKind::MinTimeMisdp,
        n,
        cs,
        pairs: pairs(n),
        time: Some(tp.clone()),
        min_row: cs.min_row_nonzeros_w.unwrap_or(0),
        solver: opts.solver,
    };
    let outcome = model.search(&opts.bnb, &opts.seeds)?;
    let Some(inc) = outcome.incumbent else {
        return Err(infeasible("minimum-time", cs));
    };
    finish_min_time(inc.solution, &tp, outcome.nodes, outcome.complete, outcome.log)
}

/// Minimum-time design over the sign-restricted linear feasibility set
/// `Z_ij <= W_ij <= 0`, `W = y ∘ Z`, with `G(W)` connected through a flow.
pub fn min_time_design_milp(
    n: usize,
    timing: &TimingModel,
    min_row_nonzeros: Option<usize>,
    opts: &MinTimeOptions,
) -> Result<MinTimeDesign> {
    if n < 3 {
        return Err(Error::InvalidInput("minimum-time designs need n >= 3".into()));
    }
    if let Some(m) = min_row_nonzeros {
        if m > n - 1 {
            return Err(Error::InvalidInput(format!("at most {} off-diagonal entries fit in a row", n - 1)));
        }
    }
    let mut cs = ConstraintSet::new(n);
    cs.min_row_nonzeros_w = min_row_nonzeros;
    let tp = time_params(timing, n, opts)?;
    let model = Model {
        kind: DiscreteKind::MinTimeMilp,
        n,
        cs: &cs,
        pairs: pairs(n),
        time: Some(tp.clone()),
        min_row: min_row_nonzeros.unwrap_or(0),
        solver: opts.solver,
    };
    // W-edges of a seed must also be Z-edges in the linear model.
    let seeds: Vec<EdgePattern> = opts
        .seeds
        .iter()
        .map(|s| EdgePattern { n: s.n, z: s.z.iter().zip(&s.w).map(|(&a, &b)| a || b).collect(), w: s.w.clone() })
        .collect();
    let outcome = model.search(&opts.bnb, &seeds)?;
    let Some(inc) = outcome.incumbent else {
        return Err(infeasible("minimum-time", &cs));
    };
    let mut log = outcome.log;
    let mut design = inc.solution;
    if let Some(objective) = &opts.second_stage {
        let pattern_cs = EdgePattern::from_design(&design).constraint_set();
        let fiedler = linalg::sym_eigenvalues(&design.w)[1];
        let base_c = fiedler.min(design::default_c(n));
        let mut result = sdpdesign::solve_design_with(objective, &pattern_cs, &opts.solver);
        for scale in [1.0 - 1e-6, 0.9, 0.5] {
            if result.is_ok() {
                break;
            }
            let mut relaxed = pattern_cs.clone();
            relaxed.c = Some(base_c * scale);
            result = sdpdesign::solve_design_with(objective, &relaxed, &opts.solver);
        }
        match result {
            Ok(sol) => {
                log.push(format!("second stage {} over the fixed pattern", objective.name()));
                design = sol.design.with_objective(&format!("min-time-milp+{}", objective.name()));
            }
            Err(e) => log.push(format!("second stage skipped: {e}")),
        }
    }
    finish_min_time(design, &tp, outcome.nodes, outcome.complete, log)
}
