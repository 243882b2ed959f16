//! Performance estimation: worst-case one-step contraction factors of a
//! design over classes of strongly monotone, Lipschitz operators, computed
//! by semidefinite programs over Gram matrices.
//!
//! Two coordinate systems are supported. The lifted form tracks `(z, x)`
//! with `z ∈ ℝᵈ` and the output map `z⁺ = z + γMx`; the node form tracks
//! `(v, x)` with `v ∈ ℝⁿ`, `Σ v_i = 0` and `v⁺ = v - W̃x` where `W̃ = γW`.
//! In both, the contraction factor `τ` bounds `‖Δ⁺‖² <= τ‖Δ‖²` for the
//! difference `Δ` of two runs.

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProblem, LinExpr, MatExpr, SolveOptions, SymVar, Var};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::factor;
use crate::linalg::{self, Mat, Vector};
use crate::runtime::Placement;

/// Smallest step size allowed when the step is optimized.
pub const GAMMA_MIN: f64 = 1e-3;
/// Below this `λ2(W̃)` the optimized consensus matrix is treated as disconnected.
pub const FIEDLER_FLOOR: f64 = 1e-8;

/// Strong monotonicity and Lipschitz constants of each operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorClass {
    pub mu: Vec<f64>,
    /// `f64::INFINITY` marks an operator without a Lipschitz bound.
    pub lip: Vec<f64>,
}

impl OperatorClass {
    pub fn uniform(n: usize, mu: f64, lip: f64) -> Self {
        Self { mu: vec![mu; n], lip: vec![lip; n] }
    }

    /// `n - 1` operators with `(μ, l)` and one maximal monotone operator.
    pub fn with_unrestricted(n: usize, mu: f64, lip: f64, placement: Placement) -> Self {
        let mut c = Self::uniform(n, mu, lip);
        let i = match placement {
            Placement::First => 0,
            Placement::Last => n - 1,
        };
        c.mu[i] = 0.0;
        c.lip[i] = f64::INFINITY;
        c
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.mu.len() != n || self.lip.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator class has {} entries, design has {n} operators",
                self.mu.len()
            )));
        }
        for i in 0..n {
            if self.mu[i].is_nan() || self.lip[i].is_nan() || self.mu[i] < 0.0 || self.lip[i] <= self.mu[i] {
                return Err(Error::InvalidInput(format!(
                    "operator {} has mu = {}, lip = {}",
                    i + 1,
                    self.mu[i],
                    self.lip[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Certificate {
    pub tau: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rows")]
    pub w_tilde: Option<Mat>,
    pub phi: Vec<f64>,
    /// Multipliers of the Lipschitz conditions; zero for unrestricted operators.
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primal_gap: Option<f64>,
}

mod opt_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(linalg::mat_to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Mat>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        match rows {
            None => Ok(None),
            Some(r) => linalg::rows_to_mat(&r).map(Some).ok_or_else(|| serde::de::Error::custom("ragged matrix")),
        }
    }
}

impl Certificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PepForm {
    Lifted,
    Node,
}

/// Minimal lifted factor of a design: its own `M` when that has `n - 1`
/// rows, otherwise a Cholesky factor of `W`.
pub fn minimal_factor(design: &Design) -> Result<Mat> {
    match &design.m {
        Some(m) if m.nrows() + 1 == design.n => Ok(m.clone()),
        _ => factor::factor_cholesky(&design.w),
    }
}

/// Certificate for a design; `gamma = None` optimizes the step size.
pub fn certify(design: &Design, form: PepForm, class: &OperatorClass, gamma: Option<f64>) -> Result<Certificate> {
    match (form, gamma) {
        (PepForm::Lifted, g) => {
            let m = minimal_factor(design)?;
            match g {
                Some(g) => pep_bound_d(&m, &design.l, g, class),
                None => pep_optimal_gamma_d(&m, &design.l, class, GAMMA_MIN),
            }
        }
        (PepForm::Node, Some(g)) => pep_bound_n(&design.w, &design.l, g, class),
        (PepForm::Node, None) => pep_optimal_gamma_n(&design.w, &design.l, class, GAMMA_MIN),
    }
}

/// Primal performance estimate for a design in either form.
pub fn pep_primal(form: PepForm, design: &Design, gamma: f64, class: &OperatorClass) -> Result<f64> {
    match form {
        PepForm::Lifted => pep_primal_d(&minimal_factor(design)?, &design.l, gamma, class),
        PepForm::Node => pep_primal_n(&design.w, &design.l, gamma, class),
    }
}

/// Interpolation data shared by both forms: for each operator the Gram
/// coordinates of its input-minus-output `a_i` and output `x_i`.
struct Interp {
    dim: usize,
    a: Vec<Vector>,
    xi: Vec<Vector>,
}

impl Interp {
    fn monotone(&self, i: usize, mu: f64) -> Mat {
        let (a, x) = (&self.a[i], &self.xi[i]);
        (a * x.transpose() + x * a.transpose()) * 0.5 - x * x.transpose() * mu
    }

    fn lipschitz(&self, i: usize, lip: f64) -> Mat {
        let (a, x) = (&self.a[i], &self.xi[i]);
        x * x.transpose() * (lip * lip) - a * a.transpose()
    }
}

fn lifted_interp(m: &Mat, l: &Mat) -> Interp {
    let d = m.nrows();
    let n = m.ncols();
    let dim = d + n;
    let mut a = Vec::with_capacity(n);
    let mut xi = Vec::with_capacity(n);
    for i in 0..n {
        let mut ai = Vector::zeros(dim);
        for k in 0..d {
            ai[k] = -m[(k, i)];
        }
        for j in 0..n {
            ai[d + j] = l[(i, j)];
        }
        ai[d + i] -= 1.0;
        a.push(ai);
        xi.push(linalg::unit(dim, d + i));
    }
    Interp { dim, a, xi }
}

pub use crate::linalg::mean_free_basis;

/// Node form in full coordinates `(v, x)`, used by the primal problem with
/// the explicit zero-mean constraint on `v`.
fn node_interp(l: &Mat) -> Interp {
    let n = l.nrows();
    node_interp_basis(l, &Mat::identity(n, n))
}

/// Node form with `v = Uṽ` for a basis `U` of the admissible `v`.
fn node_interp_basis(l: &Mat, u: &Mat) -> Interp {
    let n = l.nrows();
    let r = u.ncols();
    let dim = r + n;
    let mut a = Vec::with_capacity(n);
    let mut xi = Vec::with_capacity(n);
    for i in 0..n {
        let mut ai = Vector::zeros(dim);
        for k in 0..r {
            ai[k] = u[(i, k)];
        }
        for j in 0..n {
            ai[r + j] = l[(i, j)];
        }
        ai[r + i] -= 1.0;
        a.push(ai);
        xi.push(linalg::unit(dim, r + i));
    }
    Interp { dim, a, xi }
}

/// Normalization of each Lipschitz condition so large constants stay well scaled.
fn lip_scale(lip: f64) -> f64 {
    1.0 / (1.0 + lip * lip)
}

fn init_matrix(dim: usize, lead: usize) -> Mat {
    let mut k = Mat::zeros(dim, dim);
    for i in 0..lead {
        k[(i, i)] = 1.0;
    }
    k
}

fn ones_block(dim: usize, n: usize) -> Mat {
    let mut k = Mat::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).fill(1.0);
    k
}

/// How the rows of the output map depend on the decision variables.
enum OutputMap<'a> {
    /// `O` fixed.
    Fixed(Mat),
    /// `O = O₀ + γ O₁` with `γ` a variable.
    Gamma(Mat, Mat),
    /// Reduced node form with `O = [I, -UᵀW̃]`, `W̃` a symmetric variable.
    Consensus(&'a SymVar, &'a Mat),
}

struct DualHandles {
    psi: Var,
    phi: Vec<Var>,
    lambda: Vec<Option<Var>>,
}

/// Adds the dual certificate constraints to `p`:
/// `[[ψK_I - Σφ_i K_μi - Σλ_i K_li, Oᵀ], [O, I]] ⪰ 0`.
fn add_dual(
    p: &mut ConicProblem,
    interp: &Interp,
    class: &OperatorClass,
    lead: usize,
    out_rows: usize,
    output: &OutputMap<'_>,
    gamma: Option<Var>,
) -> DualHandles {
    let dim = interp.dim;
    let n = class.n();
    let psi = p.scalar("psi");
    let phi = p.vector("phi", n);
    let mut lambda = Vec::with_capacity(n);
    for (i, &v) in phi.iter().enumerate() {
        p.add_geq(&format!("phi_{} >= 0", i + 1), LinExpr::var(v));
        if class.lip[i].is_finite() {
            let lv = p.scalar(&format!("lambda_{}", i + 1));
            p.add_geq(&format!("lambda_{} >= 0", i + 1), LinExpr::var(lv));
            lambda.push(Some(lv));
        } else {
            lambda.push(None);
        }
    }

    let total = dim + out_rows;
    let mut s = MatExpr::zeros(total);
    s.add_var_block(0, 0, &init_matrix(dim, lead), psi, 1.0);
    for i in 0..n {
        s.add_var_block(0, 0, &interp.monotone(i, class.mu[i]), phi[i], -1.0);
        if let Some(lv) = lambda[i] {
            let k = interp.lipschitz(i, class.lip[i]) * lip_scale(class.lip[i]);
            s.add_var_block(0, 0, &k, lv, -1.0);
        }
    }
    // Off-diagonal block Oᵀ sits in rows 0..dim, columns dim..total.
    match output {
        OutputMap::Fixed(o) => s.add_const_block(0, dim, &o.transpose(), 1.0),
        OutputMap::Gamma(o0, o1) => {
            s.add_const_block(0, dim, &o0.transpose(), 1.0);
            s.add_var_block(0, dim, &o1.transpose(), gamma.expect("gamma variable"), 1.0);
        }
        OutputMap::Consensus(w, u) => {
            let nn = w.dim();
            let r = u.ncols();
            for k in 0..r {
                s.add_const(k, dim + k, 1.0);
                for c in 0..nn {
                    // Oᵀ[r + c, k] = -(W̃U)[c, k]
                    for j in 0..nn {
                        if u[(j, k)] != 0.0 {
                            s.add_term(r + c, dim + k, w.at(c, j), -u[(j, k)]);
                        }
                    }
                }
            }
        }
    }
    s.add_const_block(dim, dim, &Mat::identity(out_rows, out_rows), 1.0);
    p.add_psd("certificate", s);
    p.minimize(LinExpr::var(psi));
    DualHandles { psi, phi, lambda }
}

fn read_certificate(
    sol: &crate::conic::ConicSolution,
    h: &DualHandles,
    class: &OperatorClass,
    gamma: f64,
    w_tilde: Option<Mat>,
) -> Certificate {
    Certificate {
        tau: sol.value(h.psi),
        gamma,
        w_tilde,
        phi: sol.values(&h.phi),
        lambda: h
            .lambda
            .iter()
            .enumerate()
            .map(|(i, v)| v.map_or(0.0, |v| sol.value(v) * lip_scale(class.lip[i])))
            .collect(),
        omega: None,
        primal_gap: None,
    }
}

fn check_lifted(m: &Mat, l: &Mat, class: &OperatorClass) -> Result<()> {
    let n = l.nrows();
    if !l.is_square() || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "M is {}x{}, L is {}x{}",
            m.nrows(),
            m.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    class.check(n)
}

fn check_node(w: &Mat, l: &Mat, class: &OperatorClass) -> Result<()> {
    if !l.is_square() || w.shape() != l.shape() {
        return Err(Error::DimensionMismatch("W and L must be n x n".into()));
    }
    let n = l.nrows();
    if n < 2 {
        return Err(Error::InvalidInput("the node form needs n >= 2".into()));
    }
    let drift = (w * linalg::ones(n)).amax();
    if drift > 1e-8 * linalg::max_abs(w).max(1.0) {
        return Err(Error::InvalidInput(format!("W must have zero row sums (max |W1| = {drift:e})")));
    }
    class.check(n)
}

fn solve(p: &ConicProblem, what: &str) -> Result<crate::conic::ConicSolution> {
    p.solve_with(&SolveOptions::default())?.require_optimal(what)
}

fn lifted_output(m: &Mat) -> (Mat, Mat) {
    let d = m.nrows();
    let n = m.ncols();
    let mut o0 = Mat::zeros(d, d + n);
    o0.view_mut((0, 0), (d, d)).fill_with_identity();
    let mut o1 = Mat::zeros(d, d + n);
    o1.view_mut((0, d), (d, n)).copy_from(m);
    (o0, o1)
}

fn node_output(w_tilde: &Mat) -> Mat {
    let n = w_tilde.nrows();
    let mut o = Mat::zeros(n, 2 * n);
    o.view_mut((0, 0), (n, n)).fill_with_identity();
    o.view_mut((0, n), (n, n)).copy_from(&(-w_tilde));
    o
}

/// Contraction factor of the lifted iteration for a fixed step size.
pub fn pep_bound_d(m: &Mat, l: &Mat, gamma: f64, class: &OperatorClass) -> Result<Certificate> {
    check_lifted(m, l, class)?;
    let interp = lifted_interp(m, l);
    let (o0, o1) = lifted_output(m);
    let mut p = ConicProblem::new();
    let h = add_dual(&mut p, &interp, class, m.nrows(), m.nrows(), &OutputMap::Fixed(o0 + o1 * gamma), None);
    let sol = solve(&p, "lifted certificate")?;
    Ok(read_certificate(&sol, &h, class, gamma, None))
}

/// Lifted-form contraction factor minimized over steps `γ >= gamma_min`.
pub fn pep_optimal_gamma_d(m: &Mat, l: &Mat, class: &OperatorClass, gamma_min: f64) -> Result<Certificate> {
    check_lifted(m, l, class)?;
    let interp = lifted_interp(m, l);
    let (o0, o1) = lifted_output(m);
    let mut p = ConicProblem::new();
    let g = p.scalar("gamma");
    if gamma_min.is_nan() || gamma_min <= 0.0 {
        return Err(Error::InvalidInput(format!("gamma_min = {gamma_min} must be positive")));
    }
    p.add_geq("gamma >= gamma_min", LinExpr::var(g).plus_const(-gamma_min));
    let h = add_dual(&mut p, &interp, class, m.nrows(), m.nrows(), &OutputMap::Gamma(o0, o1), Some(g));
    let sol = solve(&p, "lifted certificate with step search")?;
    let gamma = sol.value(g);
    Ok(read_certificate(&sol, &h, class, gamma, None))
}

/// Reduced node-form output map `[I, -UᵀW̃]`.
fn reduced_node_output(u: &Mat, w_tilde: &Mat) -> Mat {
    let n = w_tilde.nrows();
    let r = u.ncols();
    let mut o = Mat::zeros(r, r + n);
    o.view_mut((0, 0), (r, r)).fill_with_identity();
    o.view_mut((0, r), (r, n)).copy_from(&(-(u.transpose() * w_tilde)));
    o
}

/// Contraction factor of the node-form iteration for a fixed step size.
///
/// The zero-mean subspace of `v` is parametrized by an orthonormal basis,
/// which removes the free multiplier of the zero-mean condition.
pub fn pep_bound_n(w: &Mat, l: &Mat, gamma: f64, class: &OperatorClass) -> Result<Certificate> {
    check_node(w, l, class)?;
    let n = l.nrows();
    let u = mean_free_basis(n);
    let interp = node_interp_basis(l, &u);
    let mut p = ConicProblem::new();
    let out = OutputMap::Fixed(reduced_node_output(&u, &(w * gamma)));
    let h = add_dual(&mut p, &interp, class, n - 1, n - 1, &out, None);
    let sol = solve(&p, "node certificate")?;
    Ok(read_certificate(&sol, &h, class, gamma, None))
}

/// Node-form contraction factor minimized over steps `γ >= gamma_min`.
pub fn pep_optimal_gamma_n(w: &Mat, l: &Mat, class: &OperatorClass, gamma_min: f64) -> Result<Certificate> {
    check_node(w, l, class)?;
    let n = l.nrows();
    let u = mean_free_basis(n);
    let interp = node_interp_basis(l, &u);
    let o0 = reduced_node_output(&u, &Mat::zeros(n, n));
    let o1 = reduced_node_output(&u, w) - &o0;
    let mut p = ConicProblem::new();
    let g = p.scalar("gamma");
    if gamma_min.is_nan() || gamma_min <= 0.0 {
        return Err(Error::InvalidInput(format!("gamma_min = {gamma_min} must be positive")));
    }
    p.add_geq("gamma >= gamma_min", LinExpr::var(g).plus_const(-gamma_min));
    let h = add_dual(&mut p, &interp, class, n - 1, n - 1, &OutputMap::Gamma(o0, o1), Some(g));
    let sol = solve(&p, "node certificate with step search")?;
    let gamma = sol.value(g);
    Ok(read_certificate(&sol, &h, class, gamma, None))
}

fn optimal_w_program(l: &Mat, class: &OperatorClass, fiedler_level: Option<f64>) -> Result<(Certificate, Mat)> {
    let n = l.nrows();
    let u = mean_free_basis(n);
    let interp = node_interp_basis(l, &u);
    let mut p = ConicProblem::new();
    let w = p.symmetric("W_tilde", n);
    let mut wexpr = MatExpr::zeros(n);
    wexpr.add_symvar(0, &w, 1.0);
    p.add_psd("W_tilde psd", wexpr);
    for i in 0..n {
        let mut row = LinExpr::zero();
        for j in 0..n {
            row.add_term(w.at(i, j), 1.0);
        }
        p.add_eq(&format!("(W_tilde 1)_{}", i + 1), row);
    }
    if let Some(c) = fiedler_level {
        let s = p.scalar("s");
        let y = p.symmetric("Y", n);
        p.add_geq("s >= 0", LinExpr::var(s));
        let mut ye = MatExpr::zeros(n);
        ye.add_symvar(0, &y, 1.0);
        p.add_psd("Y psd", ye);
        let mut shifted = MatExpr::zeros(n);
        shifted.add_symvar(0, &w, 1.0);
        shifted.add_symvar(0, &y, 1.0);
        shifted.add_var_block(0, 0, &Mat::identity(n, n), s, -1.0);
        p.add_psd("W_tilde + Y - sI psd", shifted);
        let mut e = LinExpr::term(s, 2.0);
        e.add_expr(&LinExpr::trace(&y), -1.0);
        p.add_geq("2s - tr Y >= c", e.plus_const(-c));
    }
    let h = add_dual(&mut p, &interp, class, n - 1, n - 1, &OutputMap::Consensus(&w, &u), None);
    let sol = solve(&p, "consensus matrix search")?;
    let wt = linalg::symmetrize(&sol.matrix(&w));
    Ok((read_certificate(&sol, &h, class, 1.0, Some(wt.clone())), wt))
}

/// Optimizes the scaled consensus matrix `W̃ = γW` for a fixed `L`. When the
/// unconstrained optimum is disconnected the search is repeated with
/// `λ1 + λ2(W̃) >= c`.
pub fn pep_optimal_w(l: &Mat, class: &OperatorClass, c: f64) -> Result<Certificate> {
    if !l.is_square() || l.nrows() < 2 {
        return Err(Error::DimensionMismatch("L must be n x n with n >= 2".into()));
    }
    class.check(l.nrows())?;
    let (cert, wt) = optimal_w_program(l, class, None)?;
    if linalg::sym_eigenvalues(&wt)[1.min(l.nrows() - 1)] >= FIEDLER_FLOOR {
        return Ok(cert);
    }
    Ok(optimal_w_program(l, class, Some(c))?.0)
}

/// Primal performance estimation: the largest `Tr(K_O G)` over Gram
/// matrices consistent with the operator class.
pub fn pep_primal_d(m: &Mat, l: &Mat, gamma: f64, class: &OperatorClass) -> Result<f64> {
    check_lifted(m, l, class)?;
    let interp = lifted_interp(m, l);
    let (o0, o1) = lifted_output(m);
    let o = o0 + o1 * gamma;
    primal(&interp, class, m.nrows(), false, &(o.transpose() * o))
}

pub fn pep_primal_n(w: &Mat, l: &Mat, gamma: f64, class: &OperatorClass) -> Result<f64> {
    check_node(w, l, class)?;
    let interp = node_interp(l);
    let o = node_output(&(w * gamma));
    primal(&interp, class, l.nrows(), true, &(o.transpose() * o))
}

fn primal(interp: &Interp, class: &OperatorClass, lead: usize, node_form: bool, k_out: &Mat) -> Result<f64> {
    let dim = interp.dim;
    let mut p = ConicProblem::new();
    let g = p.symmetric("G", dim);
    let mut ge = MatExpr::zeros(dim);
    ge.add_symvar(0, &g, 1.0);
    p.add_psd("G psd", ge);
    for i in 0..class.n() {
        p.add_geq(&format!("monotone {}", i + 1), LinExpr::inner(&interp.monotone(i, class.mu[i]), &g));
        if class.lip[i].is_finite() {
            let k = interp.lipschitz(i, class.lip[i]) * lip_scale(class.lip[i]);
            p.add_geq(&format!("lipschitz {}", i + 1), LinExpr::inner(&k, &g));
        }
    }
    p.add_eq("initial distance", LinExpr::inner(&init_matrix(dim, lead), &g).plus_const(-1.0));
    if node_form {
        p.add_eq("zero mean", LinExpr::inner(&ones_block(dim, lead), &g));
    }
    p.maximize(LinExpr::inner(k_out, &g));
    Ok(solve(&p, "primal performance estimation")?.objective)
}

/// Solves the primal problem for a design and records the gap to `cert`.
pub fn attach_primal_gap(cert: &mut Certificate, primal_value: f64) {
    cert.primal_gap = Some((primal_value - cert.tau).abs());
}
