//! Execution of designed methods on concrete operators.
//!
//! Points in the lifted spaces are stored as matrices with one row per node
//! and one column per coordinate of the ambient space `ℝᵐ`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::par;

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_RESIDUAL_TARGET: f64 = 1e-10;
pub const DEFAULT_CONSENSUS_TOL: f64 = 1e-6;
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// A maximal monotone operator accessed through its resolvent.
pub trait ResolventOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Strong monotonicity constant.
    fn mu(&self) -> f64;

    /// Lipschitz constant, `f64::INFINITY` when unrestricted.
    fn lipschitz(&self) -> f64;

    /// `J_{αA}(y) = (I + αA)⁻¹ y`.
    fn resolvent(&self, alpha: f64, y: &Vector) -> Vector;

    /// `A(x)` for single-valued operators.
    fn forward(&self, _x: &Vector) -> Option<Vector> {
        None
    }

    /// Distance from `u` to `A(x)`, when computable.
    fn membership_residual(&self, x: &Vector, u: &Vector) -> Option<f64> {
        self.forward(x).map(|ax| (ax - u).norm())
    }
}

/// `A(x) = Qx + b`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    pub q: Mat,
    pub b: Vector,
    pub mu: f64,
    pub lip: f64,
}

impl AffineOperator {
    /// Computes the tight constants of `Q`.
    pub fn new(q: Mat, b: Vector) -> Self {
        let mu = linalg::min_eigenvalue(&linalg::symmetrize(&q));
        let lip = linalg::spectral_norm(&q);
        Self { q, b, mu, lip }
    }
}

impl ResolventOracle for AffineOperator {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn lipschitz(&self) -> f64 {
        self.lip
    }

    fn resolvent(&self, alpha: f64, y: &Vector) -> Vector {
        let m = self.dim();
        let a = Mat::identity(m, m) + &self.q * alpha;
        let rhs = y - &self.b * alpha;
        a.lu().solve(&rhs).expect("I + αQ is invertible for monotone Q")
    }

    fn forward(&self, x: &Vector) -> Option<Vector> {
        Some(&self.q * x + &self.b)
    }
}

/// Normal cone of the hyperplane `{x : aᵀx = β}`; its resolvent is the
/// projection onto the hyperplane.
#[derive(Debug, Clone)]
pub struct HyperplaneNormalCone {
    pub a: Vector,
    pub beta: f64,
}

impl ResolventOracle for HyperplaneNormalCone {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn mu(&self) -> f64 {
        0.0
    }

    fn lipschitz(&self) -> f64 {
        f64::INFINITY
    }

    fn resolvent(&self, _alpha: f64, y: &Vector) -> Vector {
        let t = (self.a.dot(y) - self.beta) / self.a.norm_squared();
        y - &self.a * t
    }

    fn membership_residual(&self, x: &Vector, u: &Vector) -> Option<f64> {
        let feas = (self.a.dot(x) - self.beta).abs();
        let along = &self.a * (self.a.dot(u) / self.a.norm_squared());
        Some(feas + (u - along).norm())
    }
}

/// Normal cone of the single point `{a}`; every resolvent returns `a`.
#[derive(Debug, Clone)]
pub struct PointIndicator {
    pub point: Vector,
}

impl ResolventOracle for PointIndicator {
    fn dim(&self) -> usize {
        self.point.len()
    }

    fn mu(&self) -> f64 {
        0.0
    }

    fn lipschitz(&self) -> f64 {
        f64::INFINITY
    }

    fn resolvent(&self, _alpha: f64, _y: &Vector) -> Vector {
        self.point.clone()
    }

    fn membership_residual(&self, x: &Vector, _u: &Vector) -> Option<f64> {
        Some((x - &self.point).norm())
    }
}

/// `A = 0`.
#[derive(Debug, Clone)]
pub struct ZeroOperator {
    pub dim: usize,
}

impl ResolventOracle for ZeroOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn mu(&self) -> f64 {
        0.0
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn resolvent(&self, _alpha: f64, y: &Vector) -> Vector {
        y.clone()
    }

    fn forward(&self, x: &Vector) -> Option<Vector> {
        Some(Vector::zeros(x.len()))
    }
}

pub type Operators = Vec<Box<dyn ResolventOracle>>;

/// Groups nodes into levels: every node depends through `L` only on nodes of
/// earlier levels.
pub fn dependency_levels(l: &Mat) -> Vec<Vec<usize>> {
    let n = l.nrows();
    let mut level = vec![0usize; n];
    for i in 0..n {
        level[i] = (0..i).filter(|&j| l[(i, j)] != 0.0).map(|j| level[j] + 1).max().unwrap_or(0);
    }
    let depth = level.iter().cloned().max().map_or(0, |d| d + 1);
    let mut out = vec![Vec::new(); depth];
    for (i, &lv) in level.iter().enumerate() {
        out[lv].push(i);
    }
    out
}

/// Solves `x_i = J_{A_i}(input_i + Σ_{j≤i} L_ij x_j)` for all `i` in
/// dependency order, through the scaled resolvent
/// `x_i = J_{A_i/(1-L_ii)}((input_i + Σ_{j<i} L_ij x_j)/(1 - L_ii))`.
pub fn solve_inner(l: &Mat, input: &Mat, ops: &[Box<dyn ResolventOracle>]) -> Result<Mat> {
    let n = l.nrows();
    if input.nrows() != n || ops.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "L is {n}x{n}, input has {} rows, {} operators",
            input.nrows(),
            ops.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| l[(i, i)] >= 1.0) {
        return Err(Error::InvalidDesign(format!(
            "L[{0},{0}] = {1} >= 1 makes the inner solve undefined",
            i + 1,
            l[(i, i)]
        )));
    }
    let m = input.ncols();
    let mut x = Mat::zeros(n, m);
    for group in dependency_levels(l) {
        let solve_one = |&i: &usize| {
            let mut y: Vector = input.row(i).transpose();
            for j in 0..i {
                let lij = l[(i, j)];
                if lij != 0.0 {
                    y += x.row(j).transpose() * lij;
                }
            }
            let scale = 1.0 / (1.0 - l[(i, i)]);
            ops[i].resolvent(scale, &(y * scale))
        };
        let rows: Vec<Vector> = if group.len() > 1 && m >= 64 {
            par::map_slice(&group, solve_one)
        } else {
            group.iter().map(solve_one).collect()
        };
        for (&i, r) in group.iter().zip(rows) {
            x.set_row(i, &r.transpose());
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_iter: usize,
    pub residual_target: f64,
    pub consensus_tol: f64,
    pub record_xbar: bool,
    pub record_x: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            residual_target: DEFAULT_RESIDUAL_TARGET,
            consensus_tol: DEFAULT_CONSENSUS_TOL,
            record_xbar: false,
            record_x: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub iterations: usize,
    /// `‖state_{k+1} - state_k‖_F` per iteration.
    pub residuals: Vec<f64>,
    /// `max_i ‖x_i - x̄‖` per iteration.
    pub consensus_gaps: Vec<f64>,
    pub xbar_history: Option<Vec<Vector>>,
    pub x_history: Option<Vec<Mat>>,
    /// Last resolvent outputs.
    pub x: Mat,
    /// Final lifted state (`z` or `v`).
    pub state: Mat,
    pub converged: bool,
}

impl RunTrace {
    pub fn xbar(&self) -> Vector {
        column_mean(&self.x)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().cloned().unwrap_or(f64::NAN)
    }

    pub fn final_consensus_gap(&self) -> f64 {
        self.consensus_gaps.last().cloned().unwrap_or(f64::NAN)
    }

    /// Writes `iter,residual,consensus_gap[,xbar_1..xbar_m]` with 1-based iterations.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.x.ncols();
        let mut header = vec!["iter".to_string(), "residual".into(), "consensus_gap".into()];
        if self.xbar_history.is_some() {
            header.extend((1..=m).map(|k| format!("xbar_{k}")));
        }
        w.write_record(&header)?;
        for k in 0..self.residuals.len() {
            let mut rec = vec![(k + 1).to_string(), self.residuals[k].to_string(), self.consensus_gaps[k].to_string()];
            if let Some(h) = &self.xbar_history {
                rec.extend(h[k].iter().map(|v| v.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn column_mean(x: &Mat) -> Vector {
    let n = x.nrows().max(1) as f64;
    Vector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn consensus_gap(x: &Mat) -> f64 {
    let mean = column_mean(x).transpose();
    x.row_iter().map(|r| (r - &mean).norm()).fold(0.0, f64::max)
}

/// One step of the lifted iteration: `x = J(-Mᵀz + Lx)`, `z⁺ = z + γMx`.
pub fn d_step(design: &Design, m: &Mat, ops: &[Box<dyn ResolventOracle>], z: &Mat) -> Result<(Mat, Mat)> {
    if m.ncols() != design.n || z.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "M is {}x{}, z has {} rows, n = {}",
            m.nrows(),
            m.ncols(),
            z.nrows(),
            design.n
        )));
    }
    let input = -(m.transpose() * z);
    let x = solve_inner(&design.l, &input, ops)?;
    let z_next = z + (m * &x) * design.gamma;
    Ok((z_next, x))
}

/// One step of the node-space iteration: `x = J(v + Lx)`, `v⁺ = v - γWx`.
pub fn n_step(design: &Design, ops: &[Box<dyn ResolventOracle>], v: &Mat) -> Result<(Mat, Mat)> {
    let x = solve_inner(&design.l, v, ops)?;
    let v_next = v - (&design.w * &x) * design.gamma;
    Ok((v_next, x))
}

fn iterate<F>(mut state: Mat, opts: &RunOptions, mut step: F) -> Result<RunTrace>
where
    F: FnMut(&Mat) -> Result<(Mat, Mat)>,
{
    let mut trace = RunTrace {
        iterations: 0,
        residuals: Vec::new(),
        consensus_gaps: Vec::new(),
        xbar_history: opts.record_xbar.then(Vec::new),
        x_history: opts.record_x.then(Vec::new),
        x: Mat::zeros(0, 0),
        state: state.clone(),
        converged: false,
    };
    for k in 1..=opts.max_iter {
        let (next, x) = step(&state)?;
        let residual = (&next - &state).norm();
        if !residual.is_finite() || residual > DIVERGENCE_GUARD || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: k, residual });
        }
        trace.residuals.push(residual);
        trace.consensus_gaps.push(consensus_gap(&x));
        if let Some(h) = trace.xbar_history.as_mut() {
            h.push(column_mean(&x));
        }
        if let Some(h) = trace.x_history.as_mut() {
            h.push(x.clone());
        }
        trace.iterations = k;
        trace.x = x;
        state = next;
        if residual <= opts.residual_target && consensus_gap(&trace.x) <= opts.consensus_tol {
            trace.converged = true;
            break;
        }
    }
    trace.state = state;
    Ok(trace)
}

/// Runs the lifted iteration from `z0` (`d × m`).
pub fn run_d_iteration(
    design: &Design,
    m: &Mat,
    ops: &[Box<dyn ResolventOracle>],
    z0: &Mat,
    opts: &RunOptions,
) -> Result<RunTrace> {
    iterate(z0.clone(), opts, |z| d_step(design, m, ops, z))
}

/// Runs the node-space iteration from `v0` (`n × m`), after projecting
/// `v0` so its rows sum to zero.
pub fn run_n_iteration(
    design: &Design,
    ops: &[Box<dyn ResolventOracle>],
    v0: &Mat,
    opts: &RunOptions,
) -> Result<RunTrace> {
    if v0.nrows() != design.n {
        return Err(Error::DimensionMismatch(format!("v0 has {} rows, n = {}", v0.nrows(), design.n)));
    }
    let mean = column_mean(v0).transpose();
    let mut v = v0.clone();
    for mut r in v.row_iter_mut() {
        r -= &mean;
    }
    iterate(v, opts, |v| n_step(design, ops, v))
}

/// `u = v + (L - I)x`; at a fixed point the rows solve the dual inclusion.
pub fn attouch_thera_dual(v: &Mat, x: &Mat, l: &Mat) -> Mat {
    let n = l.nrows();
    v + (l - Mat::identity(n, n)) * x
}

/// Node-space state that reproduces the primal-dual pair `(x, u)`.
pub fn warm_start_v(u: &Mat, x: &Mat, l: &Mat) -> Mat {
    let n = l.nrows();
    u + (Mat::identity(n, n) - l) * x
}

/// Multiplier of the consensus constraint `Mx = 0`:
/// `u = z - (Mᵀ)⁺(L - I)x`.
/// Requires a minimal factor with `n - 1` rows.
pub fn lagrangian_dual(z: &Mat, x: &Mat, m: &Mat, l: &Mat) -> Result<Mat> {
    let n = l.nrows();
    if m.nrows() + 1 != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Lagrangian dual needs M with {} rows and {n} columns, got {}x{}",
            n.saturating_sub(1),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(z - linalg::pinv(&m.transpose()) * ((l - Mat::identity(n, n)) * x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceClass {
    /// Every operator is affine, strongly monotone and Lipschitz.
    StronglyMonotoneLipschitz,
    /// As above except one operator is the normal cone of a hyperplane.
    WithUnrestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    First,
    Last,
}

/// Random affine operator with `λmin(sym Q) = μ` and `‖Q‖ = l` when
/// `dim >= 2` and `l > μ`.
pub fn random_affine<R: Rng>(rng: &mut R, dim: usize, mu: f64, lip: f64) -> AffineOperator {
    let gauss = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    let g = Mat::from_fn(dim, dim, |_, _| gauss(rng));
    let skew = &g - g.transpose();
    let b = Mat::from_fn(dim, dim.saturating_sub(1), |_, _| gauss(rng));
    let psd = &b * b.transpose();
    let offset = Vector::from_fn(dim, |_, _| gauss(rng));
    let dir = skew + psd;
    let base = Mat::identity(dim, dim) * mu;
    let q = if lip.is_finite() && lip > mu && linalg::max_abs(&dir) > 0.0 {
        let norm_at = |t: f64| linalg::spectral_norm(&(&base + &dir * t));
        let (mut lo, mut hi) = (0.0, 1.0);
        while norm_at(hi) < lip {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) < lip {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        &base + &dir * lo
    } else {
        base
    };
    let mut op = AffineOperator::new(q, offset);
    op.mu = mu;
    op.lip = if lip.is_finite() { lip } else { op.lip };
    op
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceSpec {
    pub class: InstanceClass,
    pub n: usize,
    pub mu: f64,
    pub lip: f64,
    pub dim: usize,
    pub seed: u64,
    pub placement: Placement,
}

/// Builds `n` operators of the requested class, seeded deterministically.
pub fn make_instance(spec: &InstanceSpec) -> Result<Operators> {
    if spec.n == 0 || spec.dim == 0 {
        return Err(Error::InvalidInput("instance needs n >= 1 and dim >= 1".into()));
    }
    if spec.mu < 0.0 || spec.lip <= spec.mu {
        return Err(Error::InvalidInput(format!("need 0 <= mu < lip, got mu = {}, lip = {}", spec.mu, spec.lip)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ops: Operators = (0..spec.n)
        .map(|_| Box::new(random_affine(&mut rng, spec.dim, spec.mu, spec.lip)) as Box<dyn ResolventOracle>)
        .collect();
    if spec.class == InstanceClass::WithUnrestricted {
        let a = Vector::from_fn(spec.dim, |_, _| rng.gen_range(-1.0..1.0));
        let a = if a.norm() > 1e-12 { a.normalize() } else { linalg::unit(spec.dim, 0) };
        let beta: f64 = rng.gen_range(-1.0..1.0);
        let idx = match spec.placement {
            Placement::First => 0,
            Placement::Last => spec.n - 1,
        };
        ops[idx] = Box::new(HyperplaneNormalCone { a, beta });
    }
    Ok(ops)
}

/// Gaussian random matrix from a seeded generator.
pub fn random_point(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_with_half_diagonal_doubles() {
        let l = Mat::from_row_slice(1, 1, &[0.5]);
        let ops: Operators = vec![Box::new(ZeroOperator { dim: 2 })];
        let input = Mat::from_row_slice(1, 2, &[1.0, -3.0]);
        let x = solve_inner(&l, &input, &ops).unwrap();
        assert_eq!(x, Mat::from_row_slice(1, 2, &[2.0, -6.0]));
    }

    #[test]
    fn diagonal_at_one_is_rejected() {
        let l = Mat::from_row_slice(1, 1, &[1.0]);
        let ops: Operators = vec![Box::new(ZeroOperator { dim: 1 })];
        assert!(solve_inner(&l, &Mat::zeros(1, 1), &ops).is_err());
    }

    #[test]
    fn random_affine_hits_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = random_affine(&mut rng, 4, 1.0, 2.0);
        let fresh = AffineOperator::new(op.q.clone(), op.b.clone());
        assert!((fresh.mu - 1.0).abs() < 1e-9);
        assert!((fresh.lip - 2.0).abs() < 1e-9);
    }

    #[test]
    fn levels_follow_dependencies() {
        let l = Mat::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(dependency_levels(&l), vec![vec![0], vec![1, 2]]);
    }
}
