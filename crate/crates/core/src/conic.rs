//! A small modeling layer for linear conic programs over scalar, vector and
//! symmetric matrix variables with equality, nonnegativity and
//! semidefinite constraints. Problems are solved by the Clarabel interior
//! point solver.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: u32 = 200;
/// Environment variable overriding the default solver tolerance.
pub const TOL_ENV: &str = "SPLITFORGE_SOLVER_TOL";

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

/// Symmetric matrix variable stored by its upper triangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymVar {
    offset: usize,
    dim: usize,
}

impl SymVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, i: usize, j: usize) -> Var {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        Var(self.offset + c * (c + 1) / 2 + r)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: Var) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Self { terms: vec![(v, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(v, c) in &other.terms {
            self.add_term(v, c * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn plus(mut self, v: Var, coef: f64) -> Self {
        self.add_term(v, coef);
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// `Σ C_ij X_ij` over all entries of a symmetric variable.
    pub fn inner(c: &Mat, x: &SymVar) -> Self {
        let mut e = Self::zero();
        for i in 0..x.dim() {
            for j in 0..x.dim() {
                e.add_term(x.at(i, j), c[(i, j)]);
            }
        }
        e
    }

    pub fn trace(x: &SymVar) -> Self {
        let mut e = Self::zero();
        for i in 0..x.dim() {
            e.add_term(x.at(i, i), 1.0);
        }
        e
    }
}

/// Symmetric affine matrix expression.
///
/// Only entries with `row <= col` are stored; writes to the strictly lower
/// triangle are ignored, so a full symmetric matrix can be added entry by
/// entry and an off-diagonal block is placed by writing its upper copy.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    dim: usize,
    entries: Vec<LinExpr>,
}

impl MatExpr {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![LinExpr::zero(); dim * (dim + 1) / 2] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn idx(i: usize, j: usize) -> usize {
        j * (j + 1) / 2 + i
    }

    pub fn entry(&self, i: usize, j: usize) -> &LinExpr {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        &self.entries[Self::idx(r, c)]
    }

    pub fn add_term(&mut self, i: usize, j: usize, v: Var, coef: f64) {
        if i <= j {
            self.entries[Self::idx(i, j)].add_term(v, coef);
        }
    }

    pub fn add_const(&mut self, i: usize, j: usize, value: f64) {
        if i <= j {
            self.entries[Self::idx(i, j)].constant += value;
        }
    }

    pub fn add_expr(&mut self, i: usize, j: usize, e: &LinExpr, scale: f64) {
        if i <= j {
            self.entries[Self::idx(i, j)].add_expr(e, scale);
        }
    }

    /// Adds `scale * K` with `K` placed at `(row0, col0)`.
    pub fn add_const_block(&mut self, row0: usize, col0: usize, k: &Mat, scale: f64) {
        for a in 0..k.nrows() {
            for b in 0..k.ncols() {
                let v = k[(a, b)] * scale;
                if v != 0.0 {
                    self.add_const(row0 + a, col0 + b, v);
                }
            }
        }
    }

    /// Adds `coef * v * K` with `K` placed at `(row0, col0)`.
    pub fn add_var_block(&mut self, row0: usize, col0: usize, k: &Mat, v: Var, coef: f64) {
        for a in 0..k.nrows() {
            for b in 0..k.ncols() {
                let c = k[(a, b)] * coef;
                if c != 0.0 {
                    self.add_term(row0 + a, col0 + b, v, c);
                }
            }
        }
    }

    /// Adds `coef * X` on the diagonal block starting at `offset`.
    pub fn add_symvar(&mut self, offset: usize, x: &SymVar, coef: f64) {
        for j in 0..x.dim() {
            for i in 0..=j {
                self.add_term(offset + i, offset + j, x.at(i, j), coef);
            }
        }
    }

    /// `VᵀMV`, for a basis `V` of a subspace the expression should be restricted to.
    pub fn congruence(&self, v: &Mat) -> MatExpr {
        let mut out = MatExpr::zeros(v.ncols());
        for b in 0..v.ncols() {
            for a in 0..=b {
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        let c = v[(i, a)] * v[(j, b)];
                        if c != 0.0 {
                            out.add_expr(a, b, self.entry(i, j), c);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).eval(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `expr = 0`
    Zero(LinExpr),
    /// `expr >= 0`
    NonNeg(LinExpr),
    /// `expr ⪰ 0`
    Psd(MatExpr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockKind {
    Scalar,
    Vector(usize),
    Symmetric(usize),
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct ConicProblem {
    nvars: usize,
    pub blocks: Vec<Block>,
    pub constraints: Vec<(String, Constraint)>,
    pub objective: LinExpr,
    pub sense: Sense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    /// Tolerance 1e-8 unless overridden by the environment, 200 iterations.
    fn default() -> Self {
        let tol = std::env::var(TOL_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|t| t.is_finite() && *t > 0.0)
            .unwrap_or(DEFAULT_TOL);
        Self { tol, max_iter: DEFAULT_MAX_ITER, verbose: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DualValue {
    Scalar(f64),
    Matrix(Mat),
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Status string reported by the backend.
    pub backend_status: String,
    pub x: Vec<f64>,
    /// Objective in the problem's own sense.
    pub objective: f64,
    /// Dual objective in the problem's own sense, from the returned multipliers.
    pub dual_objective: f64,
    pub duals: Vec<DualValue>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn value(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    pub fn values(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.x[v.0]).collect()
    }

    pub fn matrix(&self, x: &SymVar) -> Mat {
        Mat::from_fn(x.dim(), x.dim(), |i, j| self.x[x.at(i, j).0])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Absolute difference between primal and dual objective values.
    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }

    pub fn require_optimal(self, what: &str) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::SolverFailure {
                status: self.status.to_string(),
                message: format!("{what} (backend status {})", self.backend_status),
            })
        }
    }
}

impl Default for ConicProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProblem {
    pub fn new() -> Self {
        Self {
            nvars: 0,
            blocks: Vec::new(),
            constraints: Vec::new(),
            objective: LinExpr::zero(),
            sense: Sense::Minimize,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    fn alloc(&mut self, name: &str, kind: BlockKind, size: usize) -> usize {
        let offset = self.nvars;
        self.blocks.push(Block { name: name.to_string(), kind, offset });
        self.nvars += size;
        offset
    }

    pub fn scalar(&mut self, name: &str) -> Var {
        Var(self.alloc(name, BlockKind::Scalar, 1))
    }

    pub fn vector(&mut self, name: &str, len: usize) -> Vec<Var> {
        let off = self.alloc(name, BlockKind::Vector(len), len);
        (off..off + len).map(Var).collect()
    }

    pub fn symmetric(&mut self, name: &str, dim: usize) -> SymVar {
        let offset = self.alloc(name, BlockKind::Symmetric(dim), dim * (dim + 1) / 2);
        SymVar { offset, dim }
    }

    pub fn add_eq(&mut self, name: &str, e: LinExpr) {
        self.constraints.push((name.to_string(), Constraint::Zero(e)));
    }

    pub fn add_geq(&mut self, name: &str, e: LinExpr) {
        self.constraints.push((name.to_string(), Constraint::NonNeg(e)));
    }

    /// `e <= 0`
    pub fn add_leq(&mut self, name: &str, e: LinExpr) {
        let mut neg = LinExpr::zero();
        neg.add_expr(&e, -1.0);
        self.add_geq(name, neg);
    }

    pub fn add_psd(&mut self, name: &str, m: MatExpr) {
        self.constraints.push((name.to_string(), Constraint::Psd(m)));
    }

    pub fn minimize(&mut self, e: LinExpr) {
        self.objective = e;
        self.sense = Sense::Minimize;
    }

    pub fn maximize(&mut self, e: LinExpr) {
        self.objective = e;
        self.sense = Sense::Maximize;
    }

    fn check_vars(&self, e: &LinExpr) -> Result<()> {
        match e.terms.iter().find(|(v, _)| v.0 >= self.nvars) {
            Some((v, _)) => Err(Error::InvalidInput(format!("variable index {} out of range", v.0))),
            None => Ok(()),
        }
    }

    /// Assembles `A x + s = b, s ∈ K` rows for the backend.
    fn assemble(&self) -> Result<Assembly> {
        let mut asm = Assembly::default();
        for (_, c) in &self.constraints {
            match c {
                Constraint::Zero(e) | Constraint::NonNeg(e) => {
                    self.check_vars(e)?;
                    let row = asm.b.len();
                    // s = b - A x must equal the expression value.
                    for &(v, coef) in &e.terms {
                        asm.push(row, v.0, -coef);
                    }
                    asm.b.push(e.constant);
                    let zero = matches!(c, Constraint::Zero(_));
                    asm.add_scalar_cone(zero);
                }
                Constraint::Psd(m) => {
                    let dim = m.dim();
                    for j in 0..dim {
                        for i in 0..=j {
                            let e = m.entry(i, j);
                            self.check_vars(e)?;
                            let scale = if i == j { 1.0 } else { SQRT2 };
                            let row = asm.b.len();
                            for &(v, coef) in &e.terms {
                                asm.push(row, v.0, -coef * scale);
                            }
                            asm.b.push(e.constant * scale);
                        }
                    }
                    asm.cones.push(SupportedConeT::PSDTriangleConeT(dim));
                }
            }
        }
        Ok(asm)
    }

    pub fn solve(&self) -> Result<ConicSolution> {
        self.solve_with(&SolveOptions::default())
    }

    pub fn solve_with(&self, opts: &SolveOptions) -> Result<ConicSolution> {
        self.check_vars(&self.objective)?;
        let asm = self.assemble()?;
        let n = self.nvars;
        let m = asm.b.len();
        let flip = if self.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut q = vec![0.0; n];
        for &(v, c) in &self.objective.terms {
            q[v.0] += flip * c;
        }
        let p = CscMatrix::zeros((n, n));
        let a = CscMatrix::new_from_triplets(m, n, asm.rows.clone(), asm.cols.clone(), asm.vals.clone());
        let settings = DefaultSettingsBuilder::default()
            .verbose(opts.verbose)
            .max_iter(opts.max_iter)
            .tol_gap_abs(opts.tol)
            .tol_gap_rel(opts.tol)
            .tol_feas(opts.tol)
            .max_threads(1)
            .build()
            .map_err(|e| Error::InvalidInput(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &asm.b, &asm.cones, settings)
            .map_err(|e| Error::InvalidInput(format!("solver setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::NumericalFailure,
        };
        let x = sol.x.clone();
        let z = &sol.z;

        // Residuals recomputed from the returned iterates.
        let mut ax = vec![0.0; m];
        let mut atz = vec![0.0; n];
        for k in 0..asm.vals.len() {
            ax[asm.rows[k]] += asm.vals[k] * x[asm.cols[k]];
            atz[asm.cols[k]] += asm.vals[k] * z[asm.rows[k]];
        }
        let primal_residual = (0..m).map(|i| (ax[i] + sol.s[i] - asm.b[i]).abs()).fold(0.0, f64::max);
        let dual_residual = (0..n).map(|j| (atz[j] + q[j]).abs()).fold(0.0, f64::max);
        let primal_min: f64 = q.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let dual_min: f64 = -asm.b.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        let objective = flip * primal_min + self.objective.constant;
        let dual_objective = flip * dual_min + self.objective.constant;

        let duals = self.unpack_duals(z);
        Ok(ConicSolution {
            status,
            backend_status: format!("{:?}", sol.status),
            x,
            objective,
            dual_objective,
            duals,
            primal_residual,
            dual_residual,
            iterations: sol.iterations,
        })
    }

    fn unpack_duals(&self, z: &[f64]) -> Vec<DualValue> {
        let mut out = Vec::with_capacity(self.constraints.len());
        let mut pos = 0;
        for (_, c) in &self.constraints {
            match c {
                Constraint::Zero(_) | Constraint::NonNeg(_) => {
                    out.push(DualValue::Scalar(z[pos]));
                    pos += 1;
                }
                Constraint::Psd(m) => {
                    let dim = m.dim();
                    let mut d = Mat::zeros(dim, dim);
                    for j in 0..dim {
                        for i in 0..=j {
                            let v = if i == j { z[pos] } else { z[pos] / SQRT2 };
                            d[(i, j)] = v;
                            d[(j, i)] = v;
                            pos += 1;
                        }
                    }
                    out.push(DualValue::Matrix(d));
                }
            }
        }
        out
    }

    /// Writes the problem in SDPA sparse format.
    ///
    /// SDPA solves `min cᵀx` subject to `Σ F_k x_k - F_0 ⪰ 0`. Scalar
    /// inequalities form one diagonal block; equalities are split into two
    /// inequalities; a maximization is negated.
    pub fn to_sdpa(&self) -> String {
        let mut lp_rows: Vec<(LinExpr, f64)> = Vec::new();
        let mut psd: Vec<&MatExpr> = Vec::new();
        for (_, c) in &self.constraints {
            match c {
                Constraint::Zero(e) => {
                    lp_rows.push((e.clone(), 1.0));
                    lp_rows.push((e.clone(), -1.0));
                }
                Constraint::NonNeg(e) => lp_rows.push((e.clone(), 1.0)),
                Constraint::Psd(m) => psd.push(m),
            }
        }
        let flip = if self.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut cvec = vec![0.0; self.nvars];
        for &(v, c) in &self.objective.terms {
            cvec[v.0] += flip * c;
        }
        let nblocks = psd.len() + usize::from(!lp_rows.is_empty());
        let mut out = String::new();
        let _ = writeln!(out, "\"splitforge conic problem\"");
        let _ = writeln!(out, "{}", self.nvars);
        let _ = writeln!(out, "{nblocks}");
        let mut sizes: Vec<String> = psd.iter().map(|m| m.dim().to_string()).collect();
        if !lp_rows.is_empty() {
            sizes.push(format!("-{}", lp_rows.len()));
        }
        let _ = writeln!(out, "{}", sizes.join(" "));
        let cs: Vec<String> = cvec.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", cs.join(" "));
        let mut line = |mat: usize, blk: usize, i: usize, j: usize, v: f64| {
            if v != 0.0 {
                let _ = writeln!(out, "{mat} {blk} {i} {j} {v}");
            }
        };
        for (b, m) in psd.iter().enumerate() {
            for j in 0..m.dim() {
                for i in 0..=j {
                    let e = m.entry(i, j);
                    line(0, b + 1, i + 1, j + 1, -e.constant);
                    let mut acc = std::collections::BTreeMap::new();
                    for &(v, c) in &e.terms {
                        *acc.entry(v.0).or_insert(0.0) += c;
                    }
                    for (v, c) in acc {
                        line(v + 1, b + 1, i + 1, j + 1, c);
                    }
                }
            }
        }
        let lp_block = psd.len() + 1;
        for (r, (e, sign)) in lp_rows.iter().enumerate() {
            line(0, lp_block, r + 1, r + 1, -sign * e.constant);
            let mut acc = std::collections::BTreeMap::new();
            for &(v, c) in &e.terms {
                *acc.entry(v.0).or_insert(0.0) += c;
            }
            for (v, c) in acc {
                line(v + 1, lp_block, r + 1, r + 1, sign * c);
            }
        }
        out
    }
}

#[derive(Default)]
struct Assembly {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Assembly {
    fn push(&mut self, row: usize, col: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(v);
        }
    }

    fn add_scalar_cone(&mut self, zero: bool) {
        match (self.cones.last_mut(), zero) {
            (Some(SupportedConeT::ZeroConeT(k)), true) => *k += 1,
            (Some(SupportedConeT::NonnegativeConeT(k)), false) => *k += 1,
            (_, true) => self.cones.push(SupportedConeT::ZeroConeT(1)),
            (_, false) => self.cones.push(SupportedConeT::NonnegativeConeT(1)),
        }
    }
}
