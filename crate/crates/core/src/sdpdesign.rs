//! Semidefinite programs that produce designs: feasibility constraints on
//! `(Z, W)`, user sparsity and sign constraints, and spectral objectives.

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProblem, LinExpr, MatExpr, SolveOptions, SolveStatus, SymVar, Var};
use crate::design::{self, default_c, Design, Graph};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Step size attached to designs produced here.
pub const DEFAULT_DESIGN_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Restrictions on the design beyond the basic feasibility conditions.
/// Index pairs are 0-based here and 1-based in JSON.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub n: usize,
    pub z_zero: Vec<(usize, usize)>,
    pub w_zero: Vec<(usize, usize)>,
    pub fixed_z: Vec<FixedEntry>,
    pub fixed_w: Vec<FixedEntry>,
    /// Sizes of consecutive blocks whose members share no `Z` or `W` entry.
    pub blocks: Option<Vec<usize>>,
    /// Lower bound on `λ1 + λ2` of `W`; defaults to `2(1 - cos(π/n))`.
    pub c: Option<f64>,
    /// Allowed deviation of the diagonal of `Z` from 2.
    pub eps: f64,
    /// Forces nonpositive off-diagonal entries in `W`.
    pub stieltjes: bool,
    /// Minimum number of nonzero off-diagonal entries per row of `W`.
    /// Only the discrete design routines can enforce it.
    pub min_row_nonzeros_w: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ConstraintFile {
    n: usize,
    #[serde(default)]
    z_zero: Vec<[usize; 2]>,
    #[serde(default)]
    w_zero: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    fixed_z: Vec<FixedEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    fixed_w: Vec<FixedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(default)]
    eps: f64,
    #[serde(default)]
    stieltjes: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_row_nonzeros_w: Option<usize>,
}

fn to_zero_based(pairs: &[[usize; 2]], n: usize, what: &str) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|&[i, j]| {
            if i == 0 || j == 0 || i > n || j > n || i == j {
                Err(Error::InvalidInput(format!("{what} pair ({i}, {j}) is not an off-diagonal 1-based index")))
            } else {
                Ok((i - 1, j - 1))
            }
        })
        .collect()
}

fn fixed_to_zero_based(entries: &[FixedEntry], n: usize, what: &str) -> Result<Vec<FixedEntry>> {
    entries
        .iter()
        .map(|e| {
            if e.i == 0 || e.j == 0 || e.i > n || e.j > n {
                Err(Error::InvalidInput(format!("{what} entry ({}, {}) out of range", e.i, e.j)))
            } else {
                Ok(FixedEntry { i: e.i - 1, j: e.j - 1, value: e.value })
            }
        })
        .collect()
}

impl ConstraintSet {
    pub fn new(n: usize) -> Self {
        Self { n, ..Default::default() }
    }

    pub fn with_blocks(mut self, sizes: &[usize]) -> Self {
        self.blocks = Some(sizes.to_vec());
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ConstraintFile = serde_json::from_str(text)?;
        let cs = Self {
            n: f.n,
            z_zero: to_zero_based(&f.z_zero, f.n, "zZero")?,
            w_zero: to_zero_based(&f.w_zero, f.n, "wZero")?,
            fixed_z: fixed_to_zero_based(&f.fixed_z, f.n, "fixedZ")?,
            fixed_w: fixed_to_zero_based(&f.fixed_w, f.n, "fixedW")?,
            blocks: f.blocks,
            c: f.c,
            eps: f.eps,
            stieltjes: f.stieltjes,
            min_row_nonzeros_w: f.min_row_nonzeros_w,
        };
        cs.check_shape()?;
        Ok(cs)
    }

    pub fn to_json(&self) -> Result<String> {
        let one = |v: &[(usize, usize)]| v.iter().map(|&(i, j)| [i + 1, j + 1]).collect();
        let fixed =
            |v: &[FixedEntry]| v.iter().map(|e| FixedEntry { i: e.i + 1, j: e.j + 1, value: e.value }).collect();
        let f = ConstraintFile {
            n: self.n,
            z_zero: one(&self.z_zero),
            w_zero: one(&self.w_zero),
            fixed_z: fixed(&self.fixed_z),
            fixed_w: fixed(&self.fixed_w),
            blocks: self.blocks.clone(),
            c: self.c,
            eps: self.eps,
            stieltjes: self.stieltjes,
            min_row_nonzeros_w: self.min_row_nonzeros_w,
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = self.to_json().unwrap_or_default();
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    fn check_shape(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput("a design needs at least two operators".into()));
        }
        if let Some(b) = &self.blocks {
            if b.iter().sum::<usize>() != self.n || b.contains(&0) {
                return Err(Error::InvalidInput(format!("block sizes {b:?} do not partition {} nodes", self.n)));
            }
        }
        if !(self.eps >= 0.0 && self.eps < 2.0) {
            return Err(Error::InvalidInput(format!("eps = {} must lie in [0, 2)", self.eps)));
        }
        Ok(())
    }

    pub fn c_value(&self) -> f64 {
        self.c.unwrap_or_else(|| default_c(self.n))
    }

    /// Block index of every node, when blocks are set.
    pub fn block_of(&self) -> Option<Vec<usize>> {
        self.blocks
            .as_ref()
            .map(|sizes| sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect())
    }

    fn pair_mask(&self, pairs: &[(usize, usize)], fixed: &[FixedEntry]) -> Vec<Vec<bool>> {
        let n = self.n;
        let mut zero = vec![vec![false; n]; n];
        for &(i, j) in pairs {
            zero[i][j] = true;
            zero[j][i] = true;
        }
        for e in fixed {
            if e.i != e.j && e.value == 0.0 {
                zero[e.i][e.j] = true;
                zero[e.j][e.i] = true;
            }
        }
        if let Some(block) = self.block_of() {
            for i in 0..n {
                for j in 0..n {
                    if i != j && block[i] == block[j] {
                        zero[i][j] = true;
                    }
                }
            }
        }
        zero
    }

    /// `true` where `Z_ij` is forced to zero.
    pub fn z_zero_mask(&self) -> Vec<Vec<bool>> {
        self.pair_mask(&self.z_zero, &self.fixed_z)
    }

    /// `true` where `W_ij` is forced to zero.
    pub fn w_zero_mask(&self) -> Vec<Vec<bool>> {
        self.pair_mask(&self.w_zero, &self.fixed_w)
    }

    /// Graph of entries that may be nonzero.
    pub fn allowed_graph(mask: &[Vec<bool>]) -> Graph {
        let n = mask.len();
        let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
        Graph::from_edges(n, edges.filter(|&(i, j)| !mask[i][j]).collect::<Vec<_>>())
    }

    /// Rejects constraint sets that contradict themselves.
    pub fn check_consistency(&self) -> Result<()> {
        self.check_shape()?;
        let zmask = self.z_zero_mask();
        let wmask = self.w_zero_mask();
        for (name, fixed, mask) in [("Z", &self.fixed_z, &zmask), ("W", &self.fixed_w, &wmask)] {
            for e in fixed.iter() {
                if e.i != e.j && e.value != 0.0 && mask[e.i][e.j] {
                    return Err(Error::ContradictoryConstraints(format!(
                        "{name}[{},{}] is fixed to {} but also forced to zero",
                        e.i + 1,
                        e.j + 1,
                        e.value
                    )));
                }
                for other in fixed.iter() {
                    let same = (other.i, other.j) == (e.i, e.j) || (other.i, other.j) == (e.j, e.i);
                    if same && other.value != e.value {
                        return Err(Error::ContradictoryConstraints(format!(
                            "{name}[{},{}] is fixed to two different values",
                            e.i + 1,
                            e.j + 1
                        )));
                    }
                }
            }
        }
        if self.stieltjes {
            if let Some(e) = self.fixed_w.iter().find(|e| e.i != e.j && e.value > 0.0) {
                return Err(Error::ContradictoryConstraints(format!(
                    "W[{},{}] is fixed positive but W must be a Stieltjes matrix",
                    e.i + 1,
                    e.j + 1
                )));
            }
        }
        if let Some(e) = self.fixed_z.iter().find(|e| e.i == e.j && (e.value - 2.0).abs() > self.eps) {
            return Err(Error::ContradictoryConstraints(format!(
                "Z[{0},{0}] is fixed to {1}, outside [2 - eps, 2 + eps]",
                e.i + 1,
                e.value
            )));
        }
        Ok(())
    }

    /// Structural necessary conditions evaluated on the graphs of entries
    /// allowed to be nonzero. Returns the violated conditions.
    pub fn structural_violations(&self) -> Vec<String> {
        let gz = Self::allowed_graph(&self.z_zero_mask());
        let gw = Self::allowed_graph(&self.w_zero_mask());
        let mut out: Vec<String> = design::structural_conditions(&gw, &gz)
            .into_iter()
            .filter(|(_, ok, _)| !ok)
            .map(|(name, _, detail)| if detail.is_empty() { name } else { format!("{name}: {detail}") })
            .collect();
        let bound = 2.0 + self.eps;
        for (name, fixed) in [("Z", &self.fixed_z), ("W", &self.fixed_w)] {
            if let Some(e) = fixed.iter().find(|e| e.value.abs() > bound) {
                out.push(format!("entries bounded by Z11: {name}[{},{}] = {}", e.i + 1, e.j + 1, e.value));
            }
        }
        out
    }
}

/// Constraint set for a block design with the given consecutive block sizes.
pub fn dblock_constraints(sizes: &[usize]) -> ConstraintSet {
    ConstraintSet::new(sizes.iter().sum()).with_blocks(sizes)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Feasibility,
    /// Maximize `β_z λ2(Z) + β_w λ2(W)`.
    MaxFiedler {
        beta_z: f64,
        beta_w: f64,
    },
    /// Minimize the weighted second largest eigenvalue magnitudes of the
    /// induced averaging matrices.
    MinSlem {
        beta_z: f64,
        beta_w: f64,
    },
    /// Minimize the weighted total effective resistances.
    MinResistance {
        beta_z: f64,
        beta_w: f64,
    },
    /// Minimize `‖Z - W‖`.
    MinZNorm,
    /// Minimize `⟨C_Z, Z⟩ + ⟨C_W, W⟩`.
    CustomLinear {
        cz: Mat,
        cw: Mat,
    },
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Feasibility => "feasibility",
            Objective::MaxFiedler { .. } => "max_fiedler",
            Objective::MinSlem { .. } => "min_slem",
            Objective::MinResistance { .. } => "min_resistance",
            Objective::MinZNorm => "min_znorm",
            Objective::CustomLinear { .. } => "custom_linear",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "feasibility" => Ok(Objective::Feasibility),
            "max_fiedler" => Ok(Objective::MaxFiedler { beta_z: 1.0, beta_w: 1.0 }),
            "min_slem" => Ok(Objective::MinSlem { beta_z: 1.0, beta_w: 1.0 }),
            "min_resistance" => Ok(Objective::MinResistance { beta_z: 1.0, beta_w: 1.0 }),
            "min_znorm" => Ok(Objective::MinZNorm),
            other => Err(Error::InvalidInput(format!("unknown objective {other:?}"))),
        }
    }
}

/// The assembled design program and handles to its matrix variables.
#[derive(Debug, Clone)]
pub struct DesignProgram {
    pub problem: ConicProblem,
    pub z: SymVar,
    pub w: SymVar,
}

fn sym_expr(x: &SymVar) -> MatExpr {
    let mut m = MatExpr::zeros(x.dim());
    m.add_symvar(0, x, 1.0);
    m
}

/// Adds `λ1(K) + λ2(K) >= level` through an auxiliary scalar and matrix.
fn add_low_pair_bound(p: &mut ConicProblem, tag: &str, k: &SymVar, level: LinExpr) {
    let n = k.dim();
    let s = p.scalar(&format!("s_{tag}"));
    let y = p.symmetric(&format!("Y_{tag}"), n);
    p.add_geq(&format!("s_{tag} >= 0"), LinExpr::var(s));
    p.add_psd(&format!("Y_{tag} psd"), sym_expr(&y));
    let mut shifted = sym_expr(k);
    shifted.add_symvar(0, &y, 1.0);
    shifted.add_var_block(0, 0, &Mat::identity(n, n), s, -1.0);
    p.add_psd(&format!("{tag} + Y - sI psd"), shifted);
    let mut e = LinExpr::term(s, 2.0);
    e.add_expr(&LinExpr::trace(&y), -1.0);
    e.add_expr(&level, -1.0);
    p.add_geq(&format!("2s - tr Y >= level ({tag})"), e);
}

/// `-t I ⪯ I - K/(2+ε) - 11ᵀ/n ⪯ t I`
fn add_slem_bound(p: &mut ConicProblem, tag: &str, k: &SymVar, eps: f64, t: Var) {
    let n = k.dim();
    let avg = Mat::identity(n, n) - linalg::ones_outer(n) / n as f64;
    for sign in [1.0, -1.0] {
        let mut m = MatExpr::zeros(n);
        m.add_var_block(0, 0, &Mat::identity(n, n), t, 1.0);
        m.add_const_block(0, 0, &avg, -sign);
        m.add_symvar(0, k, sign / (2.0 + eps));
        p.add_psd(&format!("slem {tag} {sign}"), m);
    }
}

/// `[[K + 11ᵀ/n, I], [I, Y]] ⪰ 0`, so `tr Y` bounds `tr (K + 11ᵀ/n)⁻¹`.
fn add_resistance_bound(p: &mut ConicProblem, tag: &str, k: &SymVar) -> SymVar {
    let n = k.dim();
    let y = p.symmetric(&format!("R_{tag}"), n);
    let mut m = MatExpr::zeros(2 * n);
    m.add_symvar(0, k, 1.0);
    m.add_const_block(0, 0, &(linalg::ones_outer(n) / n as f64), 1.0);
    m.add_const_block(0, n, &Mat::identity(n, n), 1.0);
    m.add_symvar(n, &y, 1.0);
    p.add_psd(&format!("resistance {tag}"), m);
    y
}

fn add_z_rows(p: &mut ConicProblem, z: &SymVar) {
    for i in 0..z.dim() {
        let mut row = LinExpr::zero();
        for j in 0..z.dim() {
            row.add_term(z.at(i, j), 1.0);
        }
        p.add_eq(&format!("(Z1)_{}", i + 1), row);
    }
}

/// `Vᵀ(K - tI)V`, which bounds `λ2(K) >= t` once `K1 = 0`.
fn shifted_on_complement(k: &SymVar, v: &Mat, t: Var) -> MatExpr {
    let mut m = sym_expr(k).congruence(v);
    m.add_var_block(0, 0, &Mat::identity(v.ncols(), v.ncols()), t, -1.0);
    m
}

/// Builds the design program for an objective and constraint set.
///
/// Row sums are explicit and the spectral conditions are posed on the
/// complement of the ones vector.
pub fn build_design_sdp(objective: &Objective, cs: &ConstraintSet) -> Result<DesignProgram> {
    build_program(objective, cs, true)
}

/// `reduced = false` poses the spectral conditions on the full space, with
/// `1ᵀZ1 = 0` and a Ky Fan bound for the Fiedler values.
fn build_program(objective: &Objective, cs: &ConstraintSet, reduced: bool) -> Result<DesignProgram> {
    cs.check_consistency()?;
    let n = cs.n;
    let mut p = ConicProblem::new();
    let z = p.symmetric("Z", n);
    let w = p.symmetric("W", n);

    for i in 0..n {
        let mut row = LinExpr::zero();
        for j in 0..n {
            row.add_term(w.at(i, j), 1.0);
        }
        p.add_eq(&format!("(W1)_{}", i + 1), row);
    }
    let g_w = p.scalar("fiedler_W");
    p.add_geq("fiedler_W >= c", LinExpr::var(g_w).plus_const(-cs.c_value()));
    let mut gap = sym_expr(&z);
    gap.add_symvar(0, &w, -1.0);
    if reduced {
        let v = linalg::mean_free_basis(n);
        add_z_rows(&mut p, &z);
        p.add_psd("Z - W psd", gap.congruence(&v));
        p.add_psd("W - fiedler_W I psd", shifted_on_complement(&w, &v, g_w));
        if cs.c_value() <= 0.0 {
            p.add_psd("W psd", sym_expr(&w).congruence(&v));
        }
    } else {
        add_low_pair_bound(&mut p, "W", &w, LinExpr::var(g_w));
        p.add_psd("Z - W psd", gap);
        p.add_eq("1'Z1 = 0", LinExpr::inner(&linalg::ones_outer(n), &z));
        p.add_psd("W psd", sym_expr(&w));
    }
    for i in 1..n {
        p.add_eq(&format!("Z_{0}{0} = Z_11", i + 1), LinExpr::var(z.at(i, i)).plus(z.at(0, 0), -1.0));
    }
    if cs.eps == 0.0 {
        p.add_eq("Z_11 = 2", LinExpr::var(z.at(0, 0)).plus_const(-2.0));
    } else {
        p.add_geq("Z_11 >= 2 - eps", LinExpr::var(z.at(0, 0)).plus_const(-(2.0 - cs.eps)));
        p.add_geq("Z_11 <= 2 + eps", LinExpr::term(z.at(0, 0), -1.0).plus_const(2.0 + cs.eps));
    }

    let zmask = cs.z_zero_mask();
    let wmask = cs.w_zero_mask();
    for i in 0..n {
        for j in (i + 1)..n {
            if zmask[i][j] {
                p.add_eq(&format!("Z_{}{} = 0", i + 1, j + 1), LinExpr::var(z.at(i, j)));
            }
            if wmask[i][j] {
                p.add_eq(&format!("W_{}{} = 0", i + 1, j + 1), LinExpr::var(w.at(i, j)));
            } else if cs.stieltjes {
                p.add_leq(&format!("W_{}{} <= 0", i + 1, j + 1), LinExpr::var(w.at(i, j)));
            }
        }
    }
    for (tag, fixed, var) in [("Z", &cs.fixed_z, &z), ("W", &cs.fixed_w, &w)] {
        for e in fixed.iter().filter(|e| e.value != 0.0 || e.i == e.j) {
            p.add_eq(
                &format!("{tag}_{}{} fixed", e.i + 1, e.j + 1),
                LinExpr::var(var.at(e.i, e.j)).plus_const(-e.value),
            );
        }
    }

    match objective {
        Objective::Feasibility => p.minimize(LinExpr::zero()),
        Objective::MaxFiedler { beta_z, beta_w } => {
            let mut obj = LinExpr::term(g_w, *beta_w);
            if *beta_z != 0.0 {
                let g_z = p.scalar("fiedler_Z");
                if reduced {
                    p.add_psd("Z - fiedler_Z I psd", shifted_on_complement(&z, &linalg::mean_free_basis(n), g_z));
                } else {
                    add_low_pair_bound(&mut p, "Z", &z, LinExpr::var(g_z));
                }
                obj.add_term(g_z, *beta_z);
            }
            p.maximize(obj);
        }
        Objective::MinSlem { beta_z, beta_w } => {
            let mut obj = LinExpr::zero();
            for (tag, beta, k) in [("Z", *beta_z, &z), ("W", *beta_w, &w)] {
                if beta != 0.0 {
                    let t = p.scalar(&format!("slem_{tag}"));
                    add_slem_bound(&mut p, tag, k, cs.eps, t);
                    obj.add_term(t, beta);
                }
            }
            p.minimize(obj);
        }
        Objective::MinResistance { beta_z, beta_w } => {
            let mut obj = LinExpr::zero();
            for (tag, beta, k) in [("Z", *beta_z, &z), ("W", *beta_w, &w)] {
                if beta != 0.0 {
                    let y = add_resistance_bound(&mut p, tag, k);
                    obj.add_expr(&LinExpr::trace(&y), beta);
                }
            }
            p.minimize(obj);
        }
        Objective::MinZNorm => {
            let t = p.scalar("znorm");
            let mut m = MatExpr::zeros(n);
            m.add_var_block(0, 0, &Mat::identity(n, n), t, 1.0);
            m.add_symvar(0, &z, -1.0);
            m.add_symvar(0, &w, 1.0);
            p.add_psd("Z - W <= tI", m);
            p.minimize(LinExpr::var(t));
        }
        Objective::CustomLinear { cz, cw } => {
            if cz.shape() != (n, n) || cw.shape() != (n, n) {
                return Err(Error::DimensionMismatch("custom objective matrices must be n x n".into()));
            }
            let mut obj = LinExpr::inner(cz, &z);
            obj.add_expr(&LinExpr::inner(cw, &w), 1.0);
            p.minimize(obj);
        }
    }
    Ok(DesignProgram { problem: p, z, w })
}

#[derive(Debug, Clone)]
pub struct DesignSolution {
    pub design: Design,
    pub objective_value: f64,
    pub status: SolveStatus,
}

/// Cleans a solver output into an exactly structured design: symmetric,
/// forced zeros exact, zero row sums in `W` and a constant diagonal in `Z`.
pub fn project_solution(z: &Mat, w: &Mat, cs: &ConstraintSet) -> (Mat, Mat) {
    let n = cs.n;
    let zmask = cs.z_zero_mask();
    let wmask = cs.w_zero_mask();
    let mut z = linalg::symmetrize(z);
    let mut w = linalg::symmetrize(w);
    let scale = 1e-10;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if zmask[i][j] || z[(i, j)].abs() < scale {
                z[(i, j)] = 0.0;
            }
            if wmask[i][j] || w[(i, j)].abs() < scale || (cs.stieltjes && w[(i, j)] > 0.0) {
                w[(i, j)] = 0.0;
            }
        }
    }
    let diag = (0..n).map(|i| z[(i, i)]).sum::<f64>() / n as f64;
    let diag = if cs.eps == 0.0 { 2.0 } else { diag };
    for i in 0..n {
        z[(i, i)] = diag;
        w[(i, i)] = -(0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum::<f64>();
    }
    repair_row_sums(&mut z);
    shrink_into_z(&z, &mut w, cs.c_value());
    (z, w)
}

/// Scales `w` down until `z - w` is positive semidefinite, provided the
/// Fiedler bound `c` still holds afterwards.
fn shrink_into_z(z: &Mat, w: &mut Mat, c: f64) {
    let deficit = -linalg::min_eigenvalue(&(z - &*w));
    if deficit <= 0.0 {
        return;
    }
    let ev = linalg::sym_eigenvalues(w);
    let low_pair = ev[0] + ev[1];
    if low_pair <= 0.0 {
        return;
    }
    let alpha = 1.0 - 2.0 * deficit / low_pair;
    if alpha > 0.0 && alpha * low_pair >= c {
        *w *= alpha;
    }
}

/// Shifts the off-diagonal support of `z` by `-(u_i + u_j)`, with `u` solving
/// the signless Laplacian system, so that every row sums to zero.
fn repair_row_sums(z: &mut Mat) {
    let n = z.nrows();
    let residual = &*z * linalg::ones(n);
    if residual.amax() == 0.0 {
        return;
    }
    let mut q = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && z[(i, j)] != 0.0 {
                q[(i, i)] += 1.0;
                q[(i, j)] = 1.0;
            }
        }
    }
    let u = linalg::pinv(&q) * residual;
    for i in 0..n {
        for j in 0..n {
            if i != j && z[(i, j)] != 0.0 {
                z[(i, j)] -= u[i] + u[j];
            }
        }
    }
}

/// Solves the design program and returns a validated design.
pub fn solve_design(objective: &Objective, cs: &ConstraintSet) -> Result<DesignSolution> {
    solve_design_with(objective, cs, &SolveOptions::default())
}

pub fn solve_design_with(objective: &Objective, cs: &ConstraintSet, opts: &SolveOptions) -> Result<DesignSolution> {
    cs.check_consistency()?;
    let violated = cs.structural_violations();
    if !violated.is_empty() {
        return Err(Error::InfeasibleDesign {
            reason: format!("necessary conditions fail: {}", violated.join("; ")),
            violated,
        });
    }
    let first = match solve_program(objective, cs, opts, true) {
        Err(e @ Error::SolverFailure { .. }) => e,
        other => return other,
    };
    match solve_program(objective, cs, opts, false) {
        Err(Error::SolverFailure { .. }) => {}
        other => return other,
    }
    if *objective != Objective::Feasibility {
        if let Err(e @ Error::InfeasibleDesign { .. }) = solve_program(&Objective::Feasibility, cs, opts, true) {
            return Err(e);
        }
    }
    Err(first)
}

fn solve_program(
    objective: &Objective,
    cs: &ConstraintSet,
    opts: &SolveOptions,
    reduced: bool,
) -> Result<DesignSolution> {
    let prog = build_program(objective, cs, reduced)?;
    let sol = prog.problem.solve_with(opts)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::InfeasibleDesign {
                reason: "the design program has no feasible point".into(),
                violated: Vec::new(),
            })
        }
        status => {
            return Err(Error::SolverFailure {
                status: status.to_string(),
                message: format!("design program ({})", sol.backend_status),
            })
        }
    }
    let design = finish_design(&sol.matrix(&prog.z), &sol.matrix(&prog.w), cs, objective.name(), sol.status)?;
    Ok(DesignSolution { design, objective_value: sol.objective, status: sol.status })
}

/// Projects raw solver matrices onto the constraint structure, attaches
/// metadata and validates the result.
pub fn finish_design(z: &Mat, w: &Mat, cs: &ConstraintSet, objective: &str, status: SolveStatus) -> Result<Design> {
    let (z, w) = project_solution(z, w, cs);
    let mut design = Design::new(z, w, DEFAULT_DESIGN_GAMMA)?;
    design.meta.objective = objective.to_string();
    design.meta.c = Some(cs.c_value());
    design.meta.eps = cs.eps;
    design.meta.constraints_digest = Some(cs.digest());
    design.meta.solver_status = Some(status.to_string());
    let report = design::validate(&design, 1e-6);
    if !report.passed {
        let names: Vec<String> = report.failures().map(|c| format!("{} ({:e})", c.name, c.residual)).collect();
        return Err(Error::SolverFailure {
            status: "numerical_failure".into(),
            message: format!("solution fails validation: {}", names.join(", ")),
        });
    }
    Ok(design)
}
