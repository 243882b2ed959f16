//! Experiment harness: contraction-factor comparisons across designs,
//! operator orderings and block sizes, a sparsity sweep, and minimum-time
//! versus block designs under random timings. Every number comes from a
//! certificate or a computed schedule.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::{presets, Design};
use crate::discrete::{self, BnbOptions, EdgePattern, MinTimeOptions};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::par;
use crate::pep::{self, OperatorClass, PepForm};
use crate::runtime::Placement;
use crate::sched::{self, TimingModel};
use crate::sdpdesign::{self, ConstraintSet, Objective};

pub const NAMES: &[&str] =
    &["fixed-gamma", "opt-gamma", "ordering", "block-size", "sparsity-sweep", "min-time-vs-block"];

/// Largest `n` accepted unless the cap is raised.
pub const DEFAULT_N_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassKind {
    /// `n` identical strongly monotone Lipschitz operators.
    Uniform,
    /// One operator is only maximal monotone.
    Unrestricted(Placement),
}

impl ClassKind {
    pub fn class(&self, n: usize, mu: f64, lip: f64) -> OperatorClass {
        match self {
            Self::Uniform => OperatorClass::uniform(n, mu, lip),
            Self::Unrestricted(p) => OperatorClass::with_unrestricted(n, mu, lip, *p),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Uniform => "class1",
            Self::Unrestricted(Placement::Last) => "class2-last",
            Self::Unrestricted(Placement::First) => "class2-first",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub n_cap: usize,
    pub mu: f64,
    pub lip: f64,
    pub gamma: f64,
    pub class: ClassKind,
    pub form: PepForm,
    pub trials: usize,
    pub seed: u64,
    pub node_budget: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 8,
            n_cap: DEFAULT_N_CAP,
            mu: 1.0,
            lip: 2.0,
            gamma: 0.5,
            class: ClassKind::Uniform,
            form: PepForm::Lifted,
            trials: 10,
            seed: 0,
            node_budget: 2000,
        }
    }
}

impl ExperimentConfig {
    fn n_values(&self) -> Result<Vec<usize>> {
        if self.n_min < 2 || self.n_min > self.n_max {
            return Err(Error::InvalidInput(format!("bad n range {}..={}", self.n_min, self.n_max)));
        }
        if self.n_max > self.n_cap {
            return Err(Error::InvalidInput(format!("n = {} exceeds the cap of {}", self.n_max, self.n_cap)));
        }
        Ok((self.n_min..=self.n_max).collect())
    }
}

/// Designs compared by the contraction experiments.
pub const CATALOG: &[&str] =
    &["full", "2block-fiedler", "2block-slem", "2block-resistance", "2block-znorm", "mt", "ryu-ext"];

/// Builds a catalog design; `None` when it does not exist for this `n`.
pub fn catalog_design(name: &str, n: usize) -> Result<Option<Design>> {
    if let Some(obj) = name.strip_prefix("2block-") {
        if !n.is_multiple_of(2) || n < 4 {
            return Ok(None);
        }
        let objective = Objective::parse(match obj {
            "fiedler" => "max_fiedler",
            "slem" => "min_slem",
            "resistance" => "min_resistance",
            "znorm" => "min_znorm",
            other => return Err(Error::InvalidInput(format!("unknown block objective {other:?}"))),
        })?;
        let cs = sdpdesign::dblock_constraints(&[n / 2, n / 2]);
        return Ok(Some(sdpdesign::solve_design(&objective, &cs)?.design.with_objective(name)));
    }
    match name {
        "full" => presets::fully_connected(n).map(Some),
        "mt" => presets::mt(n).map(Some),
        "ryu-ext" if n >= 3 => presets::ryu_ext(n).map(Some),
        "ryu-ext" => Ok(None),
        other => Err(Error::InvalidInput(format!("unknown design {other:?}"))),
    }
}

/// Block design with the given sizes, minimizing total effective resistance.
pub fn block_design(sizes: &[usize]) -> Result<Design> {
    let cs = sdpdesign::dblock_constraints(sizes);
    let objective = Objective::MinResistance { beta_z: 1.0, beta_w: 1.0 };
    let label = sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("-");
    Ok(sdpdesign::solve_design(&objective, &cs)?.design.with_objective(&format!("block-{label}")))
}

/// Baseline of the minimum-time comparison: two equal blocks for even `n`,
/// blocks `((n-1)/2, (n-1)/2, 1)` for odd `n`.
pub fn baseline_blocks(n: usize) -> Vec<usize> {
    if n.is_multiple_of(2) {
        vec![n / 2, n / 2]
    } else {
        vec![(n - 1) / 2, (n - 1) / 2, 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauRecord {
    pub n: usize,
    pub design: String,
    pub class: String,
    pub gamma: f64,
    pub tau: f64,
}

fn certify(design: &Design, cfg: &ExperimentConfig, class: ClassKind, gamma: Option<f64>) -> Result<(f64, f64)> {
    let c = class.class(design.n, cfg.mu, cfg.lip);
    let cert = pep::certify(design, cfg.form, &c, gamma)?;
    Ok((cert.gamma, cert.tau))
}

/// Contraction factors of catalog designs over the configured `n` range.
/// `gamma = None` tunes the step for each design.
pub fn contraction_table(
    cfg: &ExperimentConfig,
    designs: &[&str],
    class: ClassKind,
    gamma: Option<f64>,
) -> Result<Vec<TauRecord>> {
    let cells: Vec<(usize, &str)> =
        cfg.n_values()?.into_iter().flat_map(|n| designs.iter().map(move |&d| (n, d))).collect();
    let results = par::map_slice(&cells, |&(n, name)| -> Result<Option<TauRecord>> {
        let Some(design) = catalog_design(name, n)? else { return Ok(None) };
        let (g, tau) = certify(&design, cfg, class, gamma)?;
        Ok(Some(TauRecord { n, design: name.to_string(), class: class.label().into(), gamma: g, tau }))
    });
    results.into_iter().filter_map(|r| r.transpose()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingRecord {
    pub n: usize,
    pub design: String,
    pub tau_last: f64,
    pub tau_first: f64,
}

/// Tuned contraction factors with the unrestricted operator last and first.
pub fn ordering_table(cfg: &ExperimentConfig, designs: &[&str]) -> Result<Vec<OrderingRecord>> {
    let last = contraction_table(cfg, designs, ClassKind::Unrestricted(Placement::Last), None)?;
    let first = contraction_table(cfg, designs, ClassKind::Unrestricted(Placement::First), None)?;
    Ok(last
        .iter()
        .zip(&first)
        .map(|(a, b)| OrderingRecord { n: a.n, design: a.design.clone(), tau_last: a.tau, tau_first: b.tau })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub n: usize,
    pub blocks: usize,
    pub tau_fixed: f64,
    pub gamma_opt: f64,
    pub tau_opt: f64,
}

/// Equal-size block designs for every block count dividing `n`.
pub fn block_size_table(cfg: &ExperimentConfig) -> Result<Vec<BlockRecord>> {
    let cells: Vec<(usize, usize)> =
        cfg.n_values()?.into_iter().flat_map(|n| (2..=n).filter(move |d| n % d == 0).map(move |d| (n, d))).collect();
    let results = par::map_slice(&cells, |&(n, d)| -> Result<BlockRecord> {
        let design = block_design(&vec![n / d; d])?;
        let (_, tau_fixed) = certify(&design, cfg, cfg.class, Some(cfg.gamma))?;
        let (gamma_opt, tau_opt) = certify(&design, cfg, cfg.class, None)?;
        Ok(BlockRecord { n, blocks: d, tau_fixed, gamma_opt, tau_opt })
    });
    results.into_iter().collect()
}

/// Modeled iterations used to estimate the asymptotic iteration time.
pub fn stats_iterations(n: usize) -> usize {
    4 * n
}

/// Time to shrink the squared distance by `target` at `c_inf` per iteration.
pub fn time_to_contraction(c_inf: f64, tau: f64, target: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if tau >= 1.0 {
        return f64::INFINITY;
    }
    c_inf * target.ln() / tau.ln()
}

fn asymptotic_time(design: &Design, timing: &TimingModel) -> Result<f64> {
    let r = stats_iterations(design.n);
    let s = sched::schedule_design(design, timing, r)?;
    Ok(sched::iteration_stats(&s).c_inf.unwrap_or(s.end[0]))
}

/// Off-diagonal pairs in removal order: alternately inside the first and
/// second block, each scanned row by row; then the cross-block pairs from
/// the diagonal outward.
pub fn sweep_order(n: usize) -> Vec<(usize, usize)> {
    let h = n / 2;
    let within = |lo: usize, hi: usize| -> Vec<(usize, usize)> {
        (lo..hi).flat_map(|i| ((i + 1)..hi).map(move |j| (i, j))).collect()
    };
    let (a, b) = (within(0, h), within(h, n));
    let mut order = Vec::new();
    for k in 0..a.len().max(b.len()) {
        order.extend(a.get(k));
        order.extend(b.get(k));
    }
    let mut cross: Vec<(usize, usize)> = (0..h).flat_map(|j| (h..n).map(move |i| (j, i))).collect();
    cross.sort_by_key(|&(j, i)| (i - j, j));
    order.extend(cross);
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub removed: usize,
    pub z_edges: usize,
    pub w_edges: usize,
    pub c_inf: f64,
    pub tau_fixed: f64,
    pub tau_opt: f64,
    pub time_fixed: f64,
    pub time_opt: f64,
}

/// Maximum-Fiedler designs with progressively fewer allowed edges. Pairs
/// whose removal violates a necessary condition are skipped.
pub fn sparsity_sweep(cfg: &ExperimentConfig, n: usize) -> Result<Vec<SweepRecord>> {
    if n < 4 || n > cfg.n_cap {
        return Err(Error::InvalidInput(format!("sweep needs 4 <= n <= {}", cfg.n_cap)));
    }
    let mut steps: Vec<ConstraintSet> = vec![ConstraintSet::new(n)];
    let mut cs = ConstraintSet::new(n);
    for pair in sweep_order(n) {
        let mut next = cs.clone();
        next.z_zero.push(pair);
        next.w_zero.push(pair);
        if next.structural_violations().is_empty() {
            cs = next;
            steps.push(cs.clone());
        }
    }
    let timing = TimingModel::constant(n, 1.0, 1.0);
    let objective = Objective::MaxFiedler { beta_z: 1.0, beta_w: 1.0 };
    let results = par::map_slice(&steps, |cs| -> Result<Option<SweepRecord>> {
        let design = match sdpdesign::solve_design(&objective, cs) {
            Ok(sol) => sol.design,
            Err(Error::InfeasibleDesign { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let pattern = EdgePattern::from_design(&design);
        let c_inf = asymptotic_time(&design, &timing)?;
        let (_, tau_fixed) = certify(&design, cfg, cfg.class, Some(cfg.gamma))?;
        let (_, tau_opt) = certify(&design, cfg, cfg.class, None)?;
        Ok(Some(SweepRecord {
            removed: cs.z_zero.len(),
            z_edges: pattern.z_edges(),
            w_edges: pattern.w_edges(),
            c_inf,
            tau_fixed,
            tau_opt,
            time_fixed: time_to_contraction(c_inf, tau_fixed, 0.5),
            time_opt: time_to_contraction(c_inf, tau_opt, 0.5),
        }))
    });
    results.into_iter().filter_map(|r| r.transpose()).collect()
}

/// Random timing: `t ~ U[0.5, 2]`, `l ~ U[1, 11]`.
pub fn random_timing(n: usize, seed: u64) -> TimingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..=2.0)).collect();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.gen_range(1.0..=11.0);
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    TimingModel::new(t, l).expect("sampled timing is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinTimeRecord {
    pub n: usize,
    pub trial: usize,
    pub design: String,
    pub c_inf: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Time to shrink the squared distance by 0.01.
    pub time: f64,
    pub nodes: usize,
    pub complete: bool,
}

/// Seed of trial `trial` at size `n`.
pub fn trial_seed(base: u64, n: usize, trial: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add((n * 10_007 + trial) as u64)
}

/// Minimum-time MILP designs against the block baseline. Step sizes are
/// tuned; the MILP pattern is re-weighted for minimum total resistance.
pub fn min_time_vs_block(cfg: &ExperimentConfig) -> Result<Vec<MinTimeRecord>> {
    let cells: Vec<(usize, usize)> =
        cfg.n_values()?.into_iter().flat_map(|n| (0..cfg.trials).map(move |k| (n, k))).collect();
    let baselines: Vec<Design> =
        par::map_slice(&cfg.n_values()?, |&n| block_design(&baseline_blocks(n))).into_iter().collect::<Result<_>>()?;
    let baseline_of = |n: usize| &baselines[n - cfg.n_min];
    let baseline_tau: Vec<(f64, f64)> =
        par::map_slice(&baselines, |d| certify(d, cfg, cfg.class, None)).into_iter().collect::<Result<_>>()?;
    let results = par::map_slice(&cells, |&(n, trial)| -> Result<[MinTimeRecord; 2]> {
        let timing = random_timing(n, trial_seed(cfg.seed, n, trial));
        let base = baseline_of(n);
        let opts = MinTimeOptions {
            bnb: BnbOptions { node_budget: cfg.node_budget, ..BnbOptions::default() },
            second_stage: Some(Objective::MinResistance { beta_z: 1.0, beta_w: 1.0 }),
            seeds: vec![EdgePattern::from_design(base)],
            ..MinTimeOptions::default()
        };
        let found = discrete::min_time_design_milp(n, &timing, Some(n / 2), &opts)?;
        let (gamma, tau) = certify(&found.design, cfg, cfg.class, None)?;
        let c_inf = asymptotic_time(&found.design, &timing)?;
        let (bg, btau) = baseline_tau[n - cfg.n_min];
        let bc = asymptotic_time(base, &timing)?;
        Ok([
            MinTimeRecord {
                n,
                trial,
                design: "min-time".into(),
                c_inf,
                gamma,
                tau,
                time: time_to_contraction(c_inf, tau, 0.01),
                nodes: found.nodes,
                complete: found.complete,
            },
            MinTimeRecord {
                n,
                trial,
                design: "block".into(),
                c_inf: bc,
                gamma: bg,
                tau: btau,
                time: time_to_contraction(bc, btau, 0.01),
                nodes: 0,
                complete: true,
            },
        ])
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Tabular result with a line plot.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 csv"))
    }

    pub fn to_svg(&self) -> Result<String> {
        Ok(line_chart(&self.name, &self.x_label, &self.y_label, &self.series, &self.to_csv()?))
    }

    /// Writes `<name>.csv` and `<name>.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.name));
        let svg_path = dir.join(format!("{}.svg", self.name));
        std::fs::write(&csv_path, self.to_csv()?)?;
        std::fs::write(&svg_path, self.to_svg()?)?;
        Ok(vec![csv_path, svg_path])
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.8}")
}

fn group_series<T>(records: &[T], key: impl Fn(&T) -> String, point: impl Fn(&T) -> (f64, f64)) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for r in records {
        let name = key(r);
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push(point(r)),
            None => series.push(Series { name, points: vec![point(r)] }),
        }
    }
    series
}

/// Runs a named experiment and renders its report.
pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = |columns: &[&str], rows: Vec<Vec<String>>, x: &str, y: &str, series: Vec<Series>| ExperimentReport {
        name: name.to_string(),
        columns: columns.iter().map(|s| s.to_string()).collect(),
        rows,
        x_label: x.into(),
        y_label: y.into(),
        series,
    };
    let designs = &["full", "2block-fiedler", "2block-slem", "2block-resistance", "2block-znorm", "mt"];
    match name {
        "fixed-gamma" => {
            let recs = contraction_table(cfg, designs, cfg.class, Some(cfg.gamma))?;
            let rows = recs
                .iter()
                .map(|r| vec![r.n.to_string(), r.design.clone(), r.class.clone(), fmt(r.gamma), fmt(r.tau)])
                .collect();
            let series = group_series(&recs, |r| r.design.clone(), |r| (r.n as f64, r.tau));
            Ok(report(&["n", "design", "class", "gamma", "tau"], rows, "n", "tau", series))
        }
        "opt-gamma" => {
            let tuned = contraction_table(cfg, designs, cfg.class, None)?;
            let fixed = contraction_table(cfg, designs, cfg.class, Some(cfg.gamma))?;
            let rows = tuned
                .iter()
                .zip(&fixed)
                .map(|(t, f)| {
                    vec![t.n.to_string(), t.design.clone(), t.class.clone(), fmt(t.gamma), fmt(t.tau), fmt(f.tau)]
                })
                .collect();
            let series = group_series(&tuned, |r| r.design.clone(), |r| (r.n as f64, r.tau));
            Ok(report(&["n", "design", "class", "gamma_opt", "tau_opt", "tau_fixed"], rows, "n", "tau", series))
        }
        "ordering" => {
            let recs = ordering_table(cfg, &["ryu-ext", "mt", "full", "2block-resistance"])?;
            let rows = recs
                .iter()
                .map(|r| vec![r.n.to_string(), r.design.clone(), fmt(r.tau_last), fmt(r.tau_first)])
                .collect();
            let mut series = group_series(&recs, |r| format!("{} last", r.design), |r| (r.n as f64, r.tau_last));
            series.extend(group_series(&recs, |r| format!("{} first", r.design), |r| (r.n as f64, r.tau_first)));
            Ok(report(&["n", "design", "tau_last", "tau_first"], rows, "n", "tau", series))
        }
        "block-size" => {
            let recs = block_size_table(cfg)?;
            let rows = recs
                .iter()
                .map(|r| {
                    vec![r.n.to_string(), r.blocks.to_string(), fmt(r.tau_fixed), fmt(r.gamma_opt), fmt(r.tau_opt)]
                })
                .collect();
            let series = group_series(&recs, |r| format!("{} blocks", r.blocks), |r| (r.n as f64, r.tau_opt));
            Ok(report(&["n", "blocks", "tau_fixed", "gamma_opt", "tau_opt"], rows, "n", "tau (tuned)", series))
        }
        "sparsity-sweep" => {
            let recs = sparsity_sweep(cfg, cfg.n_max - cfg.n_max % 2)?;
            let rows = recs
                .iter()
                .map(|r| {
                    vec![
                        r.removed.to_string(),
                        r.z_edges.to_string(),
                        r.w_edges.to_string(),
                        fmt(r.c_inf),
                        fmt(r.tau_fixed),
                        fmt(r.tau_opt),
                        fmt(r.time_fixed),
                        fmt(r.time_opt),
                    ]
                })
                .collect();
            let mut series = vec![
                Series {
                    name: "fixed step".into(),
                    points: recs.iter().map(|r| (r.removed as f64, r.time_fixed)).collect(),
                },
                Series {
                    name: "tuned step".into(),
                    points: recs.iter().map(|r| (r.removed as f64, r.time_opt)).collect(),
                },
            ];
            series.retain(|s| s.points.iter().all(|p| p.1.is_finite()));
            Ok(report(
                &["removed", "z_edges", "w_edges", "c_inf", "tau_fixed", "tau_opt", "time_fixed", "time_opt"],
                rows,
                "edges removed",
                "time to 0.5",
                series,
            ))
        }
        "min-time-vs-block" => {
            let recs = min_time_vs_block(cfg)?;
            let rows = recs
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.trial.to_string(),
                        r.design.clone(),
                        fmt(r.c_inf),
                        fmt(r.gamma),
                        fmt(r.tau),
                        fmt(r.time),
                        r.nodes.to_string(),
                        r.complete.to_string(),
                    ]
                })
                .collect();
            let mut series = Vec::new();
            for design in ["min-time", "block"] {
                let points = cfg
                    .n_values()?
                    .into_iter()
                    .map(|n| {
                        let times: Vec<f64> =
                            recs.iter().filter(|r| r.n == n && r.design == design).map(|r| r.time).collect();
                        (n as f64, times.iter().sum::<f64>() / times.len().max(1) as f64)
                    })
                    .collect();
                series.push(Series { name: design.into(), points });
            }
            Ok(report(
                &["n", "trial", "design", "c_inf", "gamma", "tau", "time_to_0.01", "nodes", "complete"],
                rows,
                "n",
                "mean time to 0.01",
                series,
            ))
        }
        other => {
            Err(Error::InvalidInput(format!("unknown experiment {other:?}; expected one of {}", NAMES.join(", "))))
        }
    }
}

const COLOURS: &[&str] = &["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], data: &str) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 440.0, 70.0, 170.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, "<!--\n{}-->", data.replace("--", "- -"));
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#, left + pw / 2.0);
    let _ = writeln!(svg, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ =
            writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.3}</text>"#, sx(fx), top + ph + 18.0);
        let _ =
            writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.4}</text>"#, left - 6.0, sy(fy) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{y_label}</text>"#,
        top + ph / 2.0
    );
    for (k, s) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("formatted pair");
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{colour}"/>"#);
        }
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, s.name);
    }
    svg.push_str("</svg>\n");
    svg
}
