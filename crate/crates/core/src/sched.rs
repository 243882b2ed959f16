//! Execution schedules of a design under a computation/communication
//! timing model, iteration-time statistics, and timeline exports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Magnitude above which a matrix entry counts as a dependency.
pub const DEPENDENCY_THRESHOLD: f64 = 1e-6;

/// Resolvent times `t` and symmetric pairwise latencies `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingModel {
    pub t: Vec<f64>,
    pub l: Mat,
}

#[derive(Serialize, Deserialize)]
struct TimingFile {
    t: Vec<f64>,
    l: Vec<Vec<f64>>,
}

impl TimingModel {
    pub fn new(t: Vec<f64>, l: Mat) -> Result<Self> {
        let n = t.len();
        if l.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "{n} computation times but a {}x{} latency matrix",
                l.nrows(),
                l.ncols()
            )));
        }
        if let Some(i) = t.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("t[{}] = {} must be positive", i + 1, t[i])));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !(l[(i, j)] > 0.0 && l[(i, j)].is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "latency l[{},{}] = {} must be positive",
                        i + 1,
                        j + 1,
                        l[(i, j)]
                    )));
                }
                if (l[(i, j)] - l[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "latencies must be symmetric, l[{0},{1}] != l[{1},{0}]",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let mut l = l;
        l.fill_diagonal(0.0);
        Ok(Self { t, l })
    }

    pub fn constant(n: usize, t: f64, l: f64) -> Self {
        let mut lat = Mat::from_element(n, n, l);
        lat.fill_diagonal(0.0);
        Self { t: vec![t; n], l: lat }
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    /// Common off-diagonal latency, if all latencies agree.
    pub fn constant_latency(&self) -> Option<f64> {
        let n = self.n();
        let first = if n > 1 { self.l[(0, 1)] } else { return None };
        let same = (0..n).all(|i| (0..n).all(|j| i == j || (self.l[(i, j)] - first).abs() <= 1e-12));
        same.then_some(first)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TimingFile = serde_json::from_str(text)?;
        let l = linalg::rows_to_mat(&f.l).ok_or_else(|| Error::InvalidInput("ragged latency matrix".into()))?;
        Self::new(f.t, l)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TimingFile { t: self.t.clone(), l: linalg::mat_to_rows(&self.l) })?)
    }
}

/// Dependency structure of a design: `within[j][i]` when resolvent `j`
/// needs resolvent `i` of the same iteration (`L_ji != 0`, `i < j`), and
/// `between[i][j]` when iteration `k + 1` of `i` needs iteration `k` of `j`
/// (`W_ij != 0`, including `i = j`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dependencies {
    pub within: Vec<Vec<bool>>,
    pub between: Vec<Vec<bool>>,
}

impl Dependencies {
    pub fn from_design(design: &Design) -> Self {
        Self::from_matrices(&design.l, &design.w)
    }

    pub fn from_matrices(l: &Mat, w: &Mat) -> Self {
        let n = l.nrows();
        let within =
            (0..n).map(|j| (0..n).map(|i| i < j && l[(j, i)].abs() > DEPENDENCY_THRESHOLD).collect()).collect();
        let between =
            (0..n).map(|i| (0..n).map(|j| i == j || w[(i, j)].abs() > DEPENDENCY_THRESHOLD).collect()).collect();
        Self { within, between }
    }

    pub fn n(&self) -> usize {
        self.within.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `start[(k, i)]`: start time of resolvent `i` in iteration `k` (0-based).
    pub start: Mat,
    /// End time of each iteration.
    pub end: Vec<f64>,
    pub deps: Dependencies,
}

impl Schedule {
    pub fn iterations(&self) -> usize {
        self.end.len()
    }
}

/// Earliest start times under the within-iteration (`L`) and
/// between-iteration (`W`) dependencies. Iteration 1 only waits on `L`.
pub fn compute_schedule(deps: &Dependencies, timing: &TimingModel, r: usize) -> Result<Schedule> {
    let n = deps.n();
    if timing.n() != n {
        return Err(Error::DimensionMismatch(format!("design has {n} resolvents, timing model has {}", timing.n())));
    }
    let t = &timing.t;
    let l = &timing.l;
    let mut start = Mat::zeros(r, n);
    let mut end = Vec::with_capacity(r);
    for k in 0..r {
        for j in 0..n {
            let mut s: f64 = 0.0;
            for i in 0..j {
                if deps.within[j][i] {
                    s = s.max(start[(k, i)] + t[i] + l[(i, j)]);
                }
            }
            if k > 0 {
                for i in 0..n {
                    if deps.between[j][i] {
                        s = s.max(start[(k - 1, i)] + t[i] + l[(i, j)]);
                    }
                }
            }
            start[(k, j)] = s;
        }
        let e = (0..n)
            .map(|i| {
                let comm = (0..n).filter(|&j| deps.between[i][j]).map(|j| l[(i, j)]).fold(0.0, f64::max);
                start[(k, i)] + t[i] + comm
            })
            .fold(0.0, f64::max);
        end.push(e);
    }
    Ok(Schedule { start, end, deps: deps.clone() })
}

pub fn schedule_design(design: &Design, timing: &TimingModel, r: usize) -> Result<Schedule> {
    compute_schedule(&Dependencies::from_design(design), timing, r)
}

/// Lower bound on a single iteration time: `max t + min t + 2l` for a
/// constant latency `l`, otherwise
/// `max_i (t_i + min_j l_ij) + min_i (t_i + min_j l_ij)`.
pub fn lower_bound_q(timing: &TimingModel, constant_l: Option<f64>) -> f64 {
    let t = &timing.t;
    let tmax = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tmin = t.iter().cloned().fold(f64::INFINITY, f64::min);
    if let Some(l) = constant_l {
        return tmax + tmin + 2.0 * l;
    }
    let n = timing.n();
    let reach: Vec<f64> = (0..n)
        .map(|i| {
            let lmin = (0..n).filter(|&j| j != i).map(|j| timing.l[(i, j)]).fold(f64::INFINITY, f64::min);
            t[i] + if lmin.is_finite() { lmin } else { 0.0 }
        })
        .collect();
    reach.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + reach.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationStats {
    pub c1: f64,
    /// `c^k = e_k / k`.
    pub ck: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_inf: Option<f64>,
}

/// Average iteration times and the asymptotic slope estimate, fitted by
/// least squares on the last `max(⌈r/2⌉, 2)` end times.
pub fn iteration_stats(schedule: &Schedule) -> IterationStats {
    let r = schedule.end.len();
    let ck: Vec<f64> = schedule.end.iter().enumerate().map(|(k, e)| e / (k + 1) as f64).collect();
    let c1 = ck.first().cloned().unwrap_or(0.0);
    let c_inf = (r >= 2).then(|| {
        let m = r.div_ceil(2).max(2);
        let pts: Vec<(f64, f64)> = (r - m..r).map(|k| ((k + 1) as f64, schedule.end[k])).collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    IterationStats { c1, ck, c_inf }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanttFormat {
    Svg,
    Csv,
}

/// Timeline of resolvent computations. CSV rows are
/// `iter,resolvent,start,end` with 1-based indices.
pub fn export_gantt(schedule: &Schedule, timing: &TimingModel, format: GanttFormat) -> String {
    match format {
        GanttFormat::Csv => gantt_csv(schedule, timing),
        GanttFormat::Svg => gantt_svg(schedule, timing),
    }
}

fn gantt_csv(schedule: &Schedule, timing: &TimingModel) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "resolvent", "start", "end"]).expect("in-memory write");
    let n = schedule.deps.n();
    for k in 0..schedule.iterations() {
        for i in 0..n {
            let s = schedule.start[(k, i)];
            w.write_record(&[(k + 1).to_string(), (i + 1).to_string(), s.to_string(), (s + timing.t[i]).to_string()])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

const PALETTE: &[&str] = &["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f"];

fn gantt_svg(schedule: &Schedule, timing: &TimingModel) -> String {
    let n = schedule.deps.n();
    let r = schedule.iterations();
    let horizon = schedule.end.last().cloned().unwrap_or(1.0).max(1e-9);
    let (left, top, band, width) = (70.0, 30.0, 28.0, 900.0);
    let scale = width / horizon;
    let height = top + band * n as f64 + 40.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="11">"#,
        left + width + 20.0
    );
    let _ = writeln!(svg, "<!-- iter,resolvent,start,end");
    for line in gantt_csv(schedule, timing).lines().skip(1) {
        let _ = writeln!(svg, "{line}");
    }
    let _ = writeln!(svg, "-->");
    let _ = writeln!(
        svg,
        r##"<defs><marker id="arrow" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#555"/></marker></defs>"##
    );
    for i in 0..n {
        let y = top + band * i as f64;
        let _ = writeln!(svg, r#"<text x="5" y="{}">resolvent {}</text>"#, y + band * 0.6, i + 1);
        let _ =
            writeln!(svg, r##"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="#ddd"/>"##, y + band, left + width);
    }
    let bar = |k: usize, i: usize| {
        let x = left + schedule.start[(k, i)] * scale;
        let y = top + band * i as f64 + 4.0;
        (x, y, timing.t[i] * scale)
    };
    for k in 0..r {
        let colour = PALETTE[k % PALETTE.len()];
        for i in 0..n {
            let (x, y, w) = bar(k, i);
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{}" fill="{colour}" opacity="0.85"><title>iteration {} resolvent {}</title></rect>"#,
                band - 8.0,
                k + 1,
                i + 1
            );
        }
    }
    let mut arrow = |k_from: usize, i: usize, k_to: usize, j: usize, colour: &str| {
        let (x0, y0, w0) = bar(k_from, i);
        let (x1, y1, _) = bar(k_to, j);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{x1:.3}" y2="{:.3}" stroke="{colour}" stroke-width="0.8" marker-end="url(#arrow)"/>"#,
            x0 + w0,
            y0 + band * 0.3,
            y1 + band * 0.3
        );
    };
    for k in 0..r {
        for j in 0..n {
            for i in 0..j {
                if schedule.deps.within[j][i] {
                    arrow(k, i, k, j, "#1f77b4");
                }
            }
            if k + 1 < r {
                for i in 0..n {
                    if i != j && schedule.deps.between[j][i] {
                        arrow(k, i, k + 1, j, "#ff7f0e");
                    }
                }
            }
        }
    }
    let _ = writeln!(svg, r#"<text x="{left}" y="{}">time 0 to {horizon:.3}</text>"#, top + band * n as f64 + 25.0);
    svg.push_str("</svg>\n");
    svg
}

/// Resolvent dependency graph with typed edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActivityNetwork {
    pub nodes: usize,
    /// `(i, j)`: resolvent `j` uses the output of `i` in the same iteration.
    pub within: Vec<(usize, usize)>,
    /// `{i, j}` with `i < j`: the pair exchanges outputs between iterations.
    pub between: Vec<(usize, usize)>,
}

impl ActivityNetwork {
    /// Graphviz description; within-iteration edges blue, between-iteration orange.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph activity {\n  rankdir=LR;\n");
        for i in 0..self.nodes {
            let _ = writeln!(out, "  r{0} [label=\"{0}\"];", i + 1);
        }
        for &(i, j) in &self.within {
            let _ = writeln!(out, "  r{} -> r{} [color=blue];", i + 1, j + 1);
        }
        for &(i, j) in &self.between {
            let _ = writeln!(out, "  r{} -> r{} [color=orange, dir=both];", i + 1, j + 1);
        }
        out.push_str("}\n");
        out
    }
}

pub fn export_activity_network(deps: &Dependencies) -> ActivityNetwork {
    let n = deps.n();
    let mut within = Vec::new();
    let mut between = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if deps.within[j][i] {
                within.push((i, j));
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if deps.between[i][j] || deps.between[j][i] {
                between.push((i, j));
            }
        }
    }
    within.sort();
    ActivityNetwork { nodes: n, within, between }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::presets;

    #[test]
    fn dr_single_iteration_is_a_serial_chain() {
        let timing = TimingModel::new(vec![16.0, 16.0], Mat::from_row_slice(2, 2, &[0.0, 0.25, 0.25, 0.0])).unwrap();
        let s = schedule_design(&presets::dr(), &timing, 1).unwrap();
        assert_eq!(s.end, vec![32.5]);
        assert!(iteration_stats(&s).c_inf.is_none());
    }

    #[test]
    fn lower_bound_examples() {
        let t = TimingModel::constant(4, 16.0, 0.25);
        assert_eq!(lower_bound_q(&t, Some(0.25)), 32.5);
        let t2 = TimingModel::new(vec![1.0, 2.0], Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(lower_bound_q(&t2, Some(1.0)), 5.0);
        let t3 = TimingModel::new(
            vec![0.5, 2.0, 1.0],
            Mat::from_row_slice(3, 3, &[0.0, 1.0, 3.0, 1.0, 0.0, 2.0, 3.0, 2.0, 0.0]),
        )
        .unwrap();
        assert_eq!(lower_bound_q(&t3, None), 4.5);
    }

    #[test]
    fn empty_schedule_csv_is_header_only() {
        let t = TimingModel::constant(2, 1.0, 1.0);
        let s = schedule_design(&presets::dr(), &t, 0).unwrap();
        assert_eq!(export_gantt(&s, &t, GanttFormat::Csv).trim(), "iter,resolvent,start,end");
    }

    #[test]
    fn activity_network_edge_counts() {
        let dr = export_activity_network(&Dependencies::from_design(&presets::dr()));
        assert_eq!((dr.within.len(), dr.between.len()), (1, 1));
        let mt = export_activity_network(&Dependencies::from_design(&presets::mt(3).unwrap()));
        assert_eq!((mt.within.len(), mt.between.len()), (3, 2));
        assert!(mt.within.contains(&(0, 2)));
    }
}
