//! The design object: consensus matrix `W`, coupling matrix `Z`, its
//! strictly lower triangular part `L`, the step size and an optional
//! factor `M` with `MᵀM = W`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Default tolerance for structural checks on designs.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DesignMeta {
    #[serde(default)]
    pub objective: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default)]
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_status: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub n: usize,
    pub z: Mat,
    pub w: Mat,
    pub l: Mat,
    pub gamma: f64,
    pub m: Option<Mat>,
    pub meta: DesignMeta,
}

#[derive(Serialize, Deserialize)]
struct DesignFile {
    n: usize,
    gamma: f64,
    #[serde(rename = "Z")]
    z: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    l: Option<Vec<Vec<f64>>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    m: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    meta: DesignMeta,
}

impl Design {
    /// Builds a design from `Z`, `W` and a step size, deriving `L`.
    pub fn new(z: Mat, w: Mat, gamma: f64) -> Result<Self> {
        let n = z.nrows();
        if n == 0 || !z.is_square() || w.shape() != z.shape() {
            return Err(Error::DimensionMismatch(format!(
                "Z is {}x{}, W is {}x{}",
                z.nrows(),
                z.ncols(),
                w.nrows(),
                w.ncols()
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidDesign(format!("step size {gamma} must be positive")));
        }
        let l = extract_l(&z)?;
        Ok(Self { n, z, w, l, gamma, m: None, meta: DesignMeta::default() })
    }

    pub fn with_factor(mut self, m: Mat) -> Result<Self> {
        if m.ncols() != self.n {
            return Err(Error::DimensionMismatch(format!("M has {} columns, expected {}", m.ncols(), self.n)));
        }
        self.m = Some(m);
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_objective(mut self, name: &str) -> Self {
        self.meta.objective = name.to_string();
        self
    }

    /// Number of rows of `M`, when a factor is attached.
    pub fn d(&self) -> Option<usize> {
        self.m.as_ref().map(|m| m.nrows())
    }

    /// SHA-256 over `n`, `γ`, `Z` and `W` with entries rounded to 1e-9.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        let mut push = |v: f64| {
            let r = (v * 1e9).round() as i64;
            h.update(r.to_le_bytes());
        };
        push(self.gamma);
        self.z.iter().for_each(|&v| push(v));
        self.w.iter().for_each(|&v| push(v));
        format!("{:x}", h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DesignFile {
            n: self.n,
            gamma: self.gamma,
            z: linalg::mat_to_rows(&self.z),
            w: linalg::mat_to_rows(&self.w),
            l: Some(linalg::mat_to_rows(&self.l)),
            m: self.m.as_ref().map(linalg::mat_to_rows),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DesignFile = serde_json::from_str(text)?;
        let z =
            linalg::rows_to_mat(&file.z).ok_or_else(|| Error::InvalidDesign("Z rows have unequal length".into()))?;
        let w =
            linalg::rows_to_mat(&file.w).ok_or_else(|| Error::InvalidDesign("W rows have unequal length".into()))?;
        if z.nrows() != file.n {
            return Err(Error::DimensionMismatch(format!("n = {} but Z has {} rows", file.n, z.nrows())));
        }
        let mut design = Design::new(z, w, file.gamma)?;
        if let Some(rows) = file.l {
            let l =
                linalg::rows_to_mat(&rows).ok_or_else(|| Error::InvalidDesign("L rows have unequal length".into()))?;
            if l.shape() != design.l.shape() || linalg::max_abs(&(&l - &design.l)) > 1e-9 {
                return Err(Error::InvalidDesign("stored L does not match Z".into()));
            }
        }
        if let Some(rows) = file.m {
            let m =
                linalg::rows_to_mat(&rows).ok_or_else(|| Error::InvalidDesign("M rows have unequal length".into()))?;
            design = design.with_factor(m)?;
        }
        design.meta = file.meta;
        Ok(design)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Recovers the resolvent dependency matrix `L` from `Z = 2I - L - Lᵀ`.
///
/// `L` is lower triangular with `L_ij = -Z_ij` below the diagonal and the
/// constant diagonal `(2 - Z_11) / 2`.
pub fn extract_l(z: &Mat) -> Result<Mat> {
    extract_l_with_tol(z, DEFAULT_TOL)
}

pub fn extract_l_with_tol(z: &Mat, tol: f64) -> Result<Mat> {
    let n = z.nrows();
    if n == 0 || !z.is_square() {
        return Err(Error::DimensionMismatch("Z must be square and nonempty".into()));
    }
    let asym = linalg::max_abs(&(z - z.transpose()));
    if asym > tol {
        return Err(Error::InvalidDesign(format!("Z is not symmetric (deviation {asym:e})")));
    }
    let z11 = z[(0, 0)];
    if let Some(i) = (1..n).find(|&i| (z[(i, i)] - z11).abs() > tol) {
        return Err(Error::InvalidDesign(format!(
            "diagonal of Z is not constant: Z[{0},{0}] = {1} but Z[1,1] = {2}",
            i + 1,
            z[(i, i)],
            z11
        )));
    }
    if !(z11 > 0.0 && z11 < 4.0) {
        return Err(Error::InvalidDesign(format!(
            "Z[1,1] = {z11} is outside (0, 4), so the inner solves are not defined"
        )));
    }
    let diag = (2.0 - z11) / 2.0;
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            diag
        } else if i > j {
            -0.5 * (z[(i, j)] + z[(j, i)])
        } else {
            0.0
        }
    }))
}

/// `2(1 - cos(π/n))`, the algebraic connectivity of the path on `n` nodes.
pub fn default_c(n: usize) -> f64 {
    2.0 * (1.0 - (std::f64::consts::PI / n as f64).cos())
}

/// Upper end of the admissible step range `(0, 1 + 2μ/‖W‖)`.
pub fn max_gamma(w: &Mat, mu: f64) -> f64 {
    let norm = linalg::spectral_norm(w);
    if norm == 0.0 {
        return f64::INFINITY;
    }
    1.0 + 2.0 * mu / norm
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub skipped: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub passed: bool,
    pub tol: f64,
    pub checks: Vec<Check>,
}

impl ValidityReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed && !c.skipped)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Undirected graph on `n` nodes given by a boolean adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: Vec<Vec<bool>>,
}

impl Graph {
    pub fn from_matrix(k: &Mat, zero_threshold: f64) -> Self {
        let n = k.nrows();
        let adj = (0..n)
            .map(|i| (0..n).map(|j| i != j && k[(i, j)].abs().max(k[(j, i)].abs()) > zero_threshold).collect())
            .collect();
        Self { adj }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![vec![false; n]; n];
        for (i, j) in edges {
            if i != j {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
        Self { adj }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i][j]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].iter().filter(|&&b| b).count()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n()).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if self.adj[i][j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Searches for a node subset `S` with `||S| - |Sᶜ|| > 2(|E(S)| + |E(Sᶜ)|)`.
    /// Returns `None` when every partition satisfies the bound.
    pub fn partition_violation(&self) -> Option<Vec<usize>> {
        let n = self.n();
        if !(2..=24).contains(&n) {
            return None;
        }
        // Subsets containing node 0 cover every partition once.
        for mask in 0u32..(1u32 << (n - 1)) {
            let in_s = |i: usize| i == 0 || (mask >> (i - 1)) & 1 == 1;
            let size_s = (0..n).filter(|&i| in_s(i)).count();
            if size_s == n {
                continue;
            }
            let mut internal = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    if self.adj[i][j] && in_s(i) == in_s(j) {
                        internal += 1;
                    }
                }
            }
            let imbalance = (2 * size_s).abs_diff(n);
            if imbalance > 2 * internal {
                return Some((0..n).filter(|&i| in_s(i)).collect());
            }
        }
        None
    }
}

/// Largest `n` for which the exhaustive partition condition is checked.
pub const PARTITION_CHECK_MAX_N: usize = 12;

/// Structural necessary conditions on the sparsity graphs of `W` and `Z`.
/// Each entry is `(label, passed, detail)`; skipped checks are omitted.
pub fn structural_conditions(gw: &Graph, gz: &Graph) -> Vec<(String, bool, String)> {
    let n = gw.n();
    let mut out = Vec::new();
    out.push(("G(W) connected".to_string(), gw.is_connected(), String::new()));
    let isolated: Vec<usize> = (0..n).filter(|&i| gw.degree(i) == 0).collect();
    out.push(("every node has a W edge".to_string(), n < 2 || isolated.is_empty(), fmt_nodes(&isolated)));
    out.push((
        "G(W) has at least n-1 edges".to_string(),
        gw.edge_count() + 1 >= n,
        format!("{} edges", gw.edge_count()),
    ));
    out.push(("G(Z) connected".to_string(), gz.is_connected(), String::new()));
    if n > 2 {
        let thin: Vec<usize> = (0..n).filter(|&i| gz.degree(i) < 2).collect();
        out.push(("every node has at least 2 Z edges".to_string(), thin.is_empty(), fmt_nodes(&thin)));
        out.push(("G(Z) has at least n edges".to_string(), gz.edge_count() >= n, format!("{} edges", gz.edge_count())));
    }
    if n <= PARTITION_CHECK_MAX_N {
        let violation = gz.partition_violation();
        out.push((
            "partition bound on G(Z)".to_string(),
            violation.is_none(),
            violation.map(|s| format!("S = {}", fmt_nodes(&s))).unwrap_or_default(),
        ));
    }
    out
}

fn fmt_nodes(nodes: &[usize]) -> String {
    if nodes.is_empty() {
        return String::new();
    }
    let items: Vec<String> = nodes.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", items.join(","))
}

/// Checks a design against the feasibility conditions of the design SDP and
/// the structural necessary conditions on its sparsity graphs.
pub fn validate(design: &Design, tol: f64) -> ValidityReport {
    let n = design.n;
    let z = &design.z;
    let w = &design.w;
    let ones = linalg::ones(n);
    let c = design.meta.c.unwrap_or_else(|| default_c(n));
    let eps = design.meta.eps;
    let mut checks = Vec::new();
    let mut push = |name: &str, residual: f64, detail: String| {
        checks.push(Check { name: name.to_string(), passed: residual <= tol, residual, skipped: false, detail });
    };

    push("symmetric", linalg::max_abs(&(z - z.transpose())).max(linalg::max_abs(&(w - w.transpose()))), String::new());
    push("W1 = 0", (w * &ones).amax(), String::new());
    let wev = linalg::sym_eigenvalues(w);
    let low_pair = if n >= 2 { wev[0] + wev[1] } else { wev[0] };
    push("lambda1 + lambda2 of W >= c", (c - low_pair).max(0.0), format!("sum {low_pair:.6}, c {c:.6}"));
    push("Z - W psd", (-linalg::min_eigenvalue(&(z - w))).max(0.0), String::new());
    push("W psd", (-wev[0]).max(0.0), String::new());
    push("1'Z1 = 0", ones.dot(&(z * &ones)).abs(), String::new());
    push("Z1 = 0", (z * &ones).amax(), String::new());
    let z11 = z[(0, 0)];
    let diag_dev = (0..n).map(|i| (z[(i, i)] - z11).abs()).fold(0.0, f64::max);
    push("constant diagonal of Z", diag_dev, String::new());
    push("Z11 within [2-eps, 2+eps]", ((2.0 - eps) - z11).max(z11 - (2.0 + eps)).max(0.0), format!("Z11 = {z11}"));
    let entry_bound = linalg::max_abs(z).max(linalg::max_abs(w));
    push("entries bounded by Z11", (entry_bound - z11).max(0.0), String::new());
    if let Some(m) = &design.m {
        let fact = if m.ncols() == n { linalg::max_abs(&(m.transpose() * m - w)) } else { f64::INFINITY };
        push("M'M = W", fact, String::new());
    }

    let gw = Graph::from_matrix(w, tol);
    let gz = Graph::from_matrix(z, tol);
    for (name, ok, detail) in structural_conditions(&gw, &gz) {
        checks.push(Check { name, passed: ok, residual: if ok { 0.0 } else { 1.0 }, skipped: false, detail });
    }
    if n > PARTITION_CHECK_MAX_N {
        checks.push(Check {
            name: "partition bound on G(Z)".to_string(),
            passed: true,
            residual: 0.0,
            skipped: true,
            detail: format!("not checked for n > {PARTITION_CHECK_MAX_N}"),
        });
    }
    let passed = checks.iter().all(|c| c.passed || c.skipped);
    ValidityReport { passed, tol, checks }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphStats {
    pub fiedler: f64,
    pub slem: f64,
    pub total_resistance: f64,
    pub edge_count: usize,
}

/// Spectral summary of a Laplacian-like matrix `K`.
pub fn graph_stats(k: &Mat, eps: f64, zero_threshold: f64) -> GraphStats {
    let n = k.nrows();
    let ev = linalg::sym_eigenvalues(k);
    let fiedler = if n >= 2 { ev[1] } else { 0.0 };
    let p = Mat::identity(n, n) - k / (2.0 + eps) - linalg::ones_outer(n) / n as f64;
    let slem = linalg::sym_eigenvalues(&p).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let positive: Vec<f64> = ev.iter().cloned().filter(|&v| v > zero_threshold).collect();
    let total_resistance = if n < 2 {
        0.0
    } else if positive.len() + 1 < n {
        f64::INFINITY
    } else {
        positive[positive.len() + 1 - n..].iter().map(|v| 1.0 / v).sum::<f64>() / n as f64
    };
    GraphStats { fiedler, slem, total_resistance, edge_count: Graph::from_matrix(k, zero_threshold).edge_count() }
}

pub mod presets {
    //! Classical designs expressed as `(Z, W, γ)` triples.

    use super::*;

    pub const DEFAULT_GAMMA: f64 = 0.5;

    pub const NAMES: &[&str] = &["dr", "ryu", "ryu_ext", "mt", "fully_connected", "two_block_fiedler", "dblock_mt"];

    fn finish(z: Mat, w: Mat, m: Option<Mat>, name: &str) -> Design {
        let mut d = Design::new(z, w, DEFAULT_GAMMA).expect("preset matrices are well formed");
        d.m = m;
        d.meta.objective = format!("preset:{name}");
        d
    }

    fn laplacian_from_rows(m: &Mat) -> Mat {
        m.transpose() * m
    }

    /// Builds a preset by name. `d` is the block count for `dblock_mt`.
    pub fn by_name(name: &str, n: usize, d: Option<usize>) -> Result<Design> {
        match name {
            "dr" | "douglas_rachford" => {
                if n != 2 {
                    return Err(Error::InvalidInput("dr is defined for n = 2".into()));
                }
                Ok(dr())
            }
            "ryu" => {
                if n != 3 {
                    return Err(Error::InvalidInput("ryu is defined for n = 3".into()));
                }
                Ok(ryu())
            }
            "ryu_ext" => ryu_ext(n),
            "mt" => mt(n),
            "fully_connected" | "full" => fully_connected(n),
            "two_block_fiedler" | "two_block" => two_block_fiedler(n),
            "dblock_mt" => dblock_mt(n, d.ok_or_else(|| Error::InvalidInput("dblock_mt needs a block count".into()))?),
            other => Err(Error::InvalidInput(format!("unknown preset {other:?}"))),
        }
    }

    /// Douglas-Rachford.
    pub fn dr() -> Design {
        let m = Mat::from_row_slice(1, 2, &[-1.0, 1.0]);
        let z = Mat::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]);
        finish(z, laplacian_from_rows(&m), Some(m), "dr")
    }

    /// Three-operator splitting with a star consensus graph.
    pub fn ryu() -> Design {
        let m = Mat::from_row_slice(2, 3, &[-1.0, 0.0, 1.0, 0.0, -1.0, 1.0]);
        let z = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { -1.0 });
        finish(z, laplacian_from_rows(&m), Some(m), "ryu")
    }

    /// The `n`-operator extension of `ryu`: every resolvent feeds all later
    /// ones and the last operator gathers the lifted variables.
    pub fn ryu_ext(n: usize) -> Result<Design> {
        if n < 3 {
            return Err(Error::InvalidInput("ryu_ext needs n >= 3".into()));
        }
        let a = (2.0 / (n - 1) as f64).sqrt();
        let m = Mat::from_fn(n - 1, n, |k, j| {
            if j == k {
                -a
            } else if j == n - 1 {
                a
            } else {
                0.0
            }
        });
        let off = -2.0 / (n - 1) as f64;
        let z = Mat::from_fn(n, n, |i, j| if i == j { 2.0 } else { off });
        Ok(finish(z, laplacian_from_rows(&m), Some(m), "ryu_ext"))
    }

    /// Malitsky-Tam: path consensus graph, cycle coupling graph.
    pub fn mt(n: usize) -> Result<Design> {
        if n < 2 {
            return Err(Error::InvalidInput("mt needs n >= 2".into()));
        }
        if n == 2 {
            let mut d = dr();
            d.meta.objective = "preset:mt".into();
            return Ok(d);
        }
        let m = Mat::from_fn(n - 1, n, |k, j| {
            if j == k + 1 {
                1.0
            } else if j == k {
                -1.0
            } else {
                0.0
            }
        });
        let mut z = Mat::identity(n, n) * 2.0;
        for i in 0..n {
            let j = (i + 1) % n;
            z[(i, j)] -= 1.0;
            z[(j, i)] -= 1.0;
        }
        Ok(finish(z, laplacian_from_rows(&m), Some(m), "mt"))
    }

    /// `Z = W` with every off-diagonal entry equal to `-2/(n-1)`.
    pub fn fully_connected(n: usize) -> Result<Design> {
        if n < 2 {
            return Err(Error::InvalidInput("fully_connected needs n >= 2".into()));
        }
        let off = -2.0 / (n - 1) as f64;
        let k = Mat::from_fn(n, n, |i, j| if i == j { 2.0 } else { off });
        Ok(finish(k.clone(), k, None, "fully_connected"))
    }

    /// Two independent halves, complete bipartite coupling; `Z = W`.
    pub fn two_block_fiedler(n: usize) -> Result<Design> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidInput("two_block_fiedler needs an even n >= 2".into()));
        }
        let half = n / 2;
        let off = -2.0 / half as f64;
        let k = Mat::from_fn(n, n, |i, j| {
            if i == j {
                2.0
            } else if (i < half) != (j < half) {
                off
            } else {
                0.0
            }
        });
        Ok(finish(k.clone(), k, None, "two_block_fiedler"))
    }

    /// Block analogue of `mt` with `d` blocks of size `n/d`.
    pub fn dblock_mt(n: usize, d: usize) -> Result<Design> {
        if d < 2 || !n.is_multiple_of(d) {
            return Err(Error::InvalidInput(format!(
                "dblock_mt needs at least two blocks dividing n (n = {n}, d = {d})"
            )));
        }
        let size = n / d;
        let off = -1.0 / size as f64;
        let block = |i: usize| i / size;
        let mut z = Mat::identity(n, n) * 2.0;
        let mut w = Mat::zeros(n, n);
        for i in 0..n {
            let bi = block(i);
            w[(i, i)] = if bi == 0 || bi == d - 1 { 1.0 } else { 2.0 };
            for j in 0..n {
                let bj = block(j);
                if bi + 1 == bj || bj + 1 == bi {
                    w[(i, j)] = off;
                }
                if i != j {
                    let adjacent = bi + 1 == bj || bj + 1 == bi;
                    let wrap = (bi == 0 && bj == d - 1) || (bj == 0 && bi == d - 1);
                    let v = off * (adjacent as u8 + wrap as u8) as f64;
                    z[(i, j)] = v;
                }
            }
        }
        Ok(finish(z, w, None, "dblock_mt"))
    }

    /// The two-cluster design with a single inter-cluster link between
    /// machines 1 and 4.
    pub fn cluster_pair() -> Design {
        let w = Mat::from_row_slice(
            6,
            6,
            &[
                1.86, -0.52, -0.52, -0.83, 0.0, 0.0, //
                -0.52, 1.33, -0.81, 0.0, 0.0, 0.0, //
                -0.52, -0.81, 1.33, 0.0, 0.0, 0.0, //
                -0.83, 0.0, 0.0, 1.86, -0.52, -0.52, //
                0.0, 0.0, 0.0, -0.52, 1.33, -0.81, //
                0.0, 0.0, 0.0, -0.52, -0.81, 1.33,
            ],
        );
        let z = Mat::from_row_slice(
            6,
            6,
            &[
                2.0, -0.56, -0.56, -0.88, 0.0, 0.0, //
                -0.56, 2.0, -1.44, 0.0, 0.0, 0.0, //
                -0.56, -1.44, 2.0, 0.0, 0.0, 0.0, //
                -0.88, 0.0, 0.0, 2.0, -0.56, -0.56, //
                0.0, 0.0, 0.0, -0.56, 2.0, -1.44, //
                0.0, 0.0, 0.0, -0.56, -1.44, 2.0,
            ],
        );
        finish(z, w, None, "cluster_pair")
    }
}
