//! Acceptance gate: one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitforge::design::{self, presets, Design};
use splitforge::discrete::{self, BnbOptions};
use splitforge::error::Error;
use splitforge::experiments::{self, ClassKind, ExperimentConfig};
use splitforge::factor::{factor_eigen, factor_stieltjes, reduce_initial_point};
use splitforge::linalg::{self, Mat, Vector};
use splitforge::pep::{self, OperatorClass, PepForm};
use splitforge::runtime::{self, InstanceClass, InstanceSpec, Operators, Placement, RunOptions};
use splitforge::sched::{self, TimingModel};
use splitforge::sdpdesign::{self, ConstraintSet, Objective};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn class1(n: usize, dim: usize, seed: u64) -> Operators {
    runtime::make_instance(&InstanceSpec {
        class: InstanceClass::StronglyMonotoneLipschitz,
        n,
        mu: 1.0,
        lip: 2.0,
        dim,
        seed,
        placement: Placement::Last,
    })
    .expect("valid instance")
}

fn presets_under_test() -> Vec<Design> {
    let mut out = vec![presets::dr(), presets::ryu()];
    out.extend((4..=8).map(|n| presets::ryu_ext(n).unwrap()));
    out.extend((3..=10).map(|n| presets::mt(n).unwrap()));
    out.extend((3..=10).map(|n| presets::fully_connected(n).unwrap()));
    out.extend([4, 6, 8].map(|n| presets::two_block_fiedler(n).unwrap()));
    out.push(presets::dblock_mt(6, 3).unwrap());
    out
}

fn preset_feasibility() -> Check {
    let all = presets_under_test();
    for d in &all {
        let report = design::validate(d, 1e-8);
        let failed: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
        ensure(report.passed, || format!("{} n={} fails {failed:?}", d.meta.objective, d.n))?;
    }
    Ok(format!("{} presets valid", all.len()))
}

fn cluster_matrices() -> Check {
    let d = presets::cluster_pair();
    ensure(design::validate(&d, 0.05).passed, || "validation at 0.05 failed".into())?;
    ensure(d.w[(0, 3)] != 0.0 && d.z[(0, 3)] != 0.0, || "bridge entry is zero".into())?;
    Ok(format!("W14 = {}, Z14 = {}", d.w[(0, 3)], d.z[(0, 3)]))
}

fn two_block_fiedler() -> Check {
    let mut notes = Vec::new();
    for n in [4, 6] {
        let cs = sdpdesign::dblock_constraints(&[n / 2, n / 2]);
        let d = sdpdesign::solve_design(&Objective::MaxFiedler { beta_z: 1.0, beta_w: 1.0 }, &cs)
            .map_err(|e| e.to_string())?
            .design;
        let fz = linalg::sym_eigenvalues(&d.z)[1];
        let fw = linalg::sym_eigenvalues(&d.w)[1];
        ensure((fz - 2.0).abs() <= 1e-4 && (fw - 2.0).abs() <= 1e-4, || format!("n={n}: {fz} {fw}"))?;
        notes.push(format!("n={n} λ2(Z)={fz:.6} λ2(W)={fw:.6}"));
    }
    Ok(notes.join(", "))
}

fn min_edges() -> Check {
    let mut notes = Vec::new();
    for n in 3..=5 {
        let start = Instant::now();
        let out =
            discrete::min_edges_design(&ConstraintSet::new(n), &BnbOptions::default()).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let edges = out.z_edges + out.w_edges;
        ensure(edges == 2 * n - 1 && out.complete, || format!("n={n}: {edges} edges, complete={}", out.complete))?;
        ensure(elapsed < Duration::from_secs(60), || format!("n={n} took {elapsed:?}"))?;
        notes.push(format!("n={n}: {edges}"));
    }
    Ok(notes.join(", "))
}

fn strong_duality() -> Check {
    let mut worst = 0.0f64;
    for d in [presets::dr(), presets::ryu(), presets::mt(3).unwrap(), presets::fully_connected(4).unwrap()] {
        let class = OperatorClass::uniform(d.n, 1.0, 2.0);
        for form in [PepForm::Lifted, PepForm::Node] {
            let dual = pep::certify(&d, form, &class, Some(0.5)).map_err(|e| e.to_string())?.tau;
            let primal = pep::pep_primal(form, &d, 0.5, &class).map_err(|e| e.to_string())?;
            worst = worst.max((primal - dual).abs());
        }
    }
    ensure(worst <= 1e-5, || format!("gap {worst:e}"))?;
    Ok(format!("max gap {worst:.1e}"))
}

fn dominance() -> Check {
    let mut worst = f64::NEG_INFINITY;
    let designs = [
        presets::dr(),
        presets::ryu(),
        presets::mt(4).unwrap(),
        presets::fully_connected(4).unwrap(),
        presets::two_block_fiedler(4).unwrap(),
    ];
    for d in &designs {
        let class = OperatorClass::uniform(d.n, 1.0, 2.0);
        let m = pep::minimal_factor(d).map_err(|e| e.to_string())?;
        let tau = pep::pep_bound_d(&m, &d.l, d.gamma, &class).map_err(|e| e.to_string())?.tau;
        let dim = 2 * d.n;
        for seed in 0..100 {
            let ops = class1(d.n, dim, seed);
            let z1 = runtime::random_point(m.nrows(), dim, 10_000 + seed);
            let z2 = runtime::random_point(m.nrows(), dim, 20_000 + seed);
            let (a, _) = runtime::d_step(d, &m, &ops, &z1).map_err(|e| e.to_string())?;
            let (b, _) = runtime::d_step(d, &m, &ops, &z2).map_err(|e| e.to_string())?;
            let ratio = (a - b).norm_squared() / (z1 - z2).norm_squared();
            worst = worst.max(ratio - tau);
        }
    }
    ensure(worst <= 1e-6, || format!("ratio exceeds tau by {worst:e}"))?;
    Ok(format!("{} designs x 100 instances, max ratio - tau = {worst:.3e}", designs.len()))
}

fn fixed_and_tuned_ordering() -> Check {
    let cfg = ExperimentConfig { n_min: 3, n_max: 8, ..ExperimentConfig::default() };
    let names = ["full", "2block-resistance", "mt"];
    let fixed =
        experiments::contraction_table(&cfg, &names, ClassKind::Uniform, Some(0.5)).map_err(|e| e.to_string())?;
    let tuned = experiments::contraction_table(&cfg, &names, ClassKind::Uniform, None).map_err(|e| e.to_string())?;
    let tau = |recs: &[experiments::TauRecord], n: usize, name: &str| {
        recs.iter().find(|r| r.n == n && r.design == name).map(|r| r.tau)
    };
    let mut compared = 0;
    for n in 3..=8 {
        let full = tau(&fixed, n, "full").ok_or("missing full")?;
        let mt = tau(&fixed, n, "mt").ok_or("missing mt")?;
        ensure(full <= mt + 1e-6, || format!("n={n}: full {full} > mt {mt}"))?;
        if let Some(block) = tau(&fixed, n, "2block-resistance") {
            ensure(full <= block + 1e-6 && block <= mt + 1e-6, || format!("n={n}: {full} {block} {mt}"))?;
            compared += 1;
        }
    }
    for name in names {
        let best_gain = (3..=8)
            .filter_map(|n| Some(tau(&fixed, n, name)? - tau(&tuned, n, name)?))
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(best_gain >= 1e-3, || format!("{name}: tuned gain {best_gain:e}"))?;
    }
    Ok(format!("ordering holds for n=3..8 ({compared} sizes with a 2-Block), tuning gains >= 1e-3"))
}

fn ordering_swap() -> Check {
    let cfg = ExperimentConfig { n_min: 4, n_max: 6, ..ExperimentConfig::default() };
    let recs = experiments::ordering_table(&cfg, &["ryu-ext", "mt", "full", "2block-resistance"])
        .map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for r in recs.iter().filter(|r| r.n == 4 || r.n == 6) {
        if r.design == "ryu-ext" {
            ensure(r.tau_first >= r.tau_last + 1e-3, || format!("n={}: {} vs {}", r.n, r.tau_first, r.tau_last))?;
            notes.push(format!("ryu-ext n={} {:.4} vs {:.4}", r.n, r.tau_first, r.tau_last));
        } else {
            ensure((r.tau_first - r.tau_last).abs() <= 1e-6, || {
                format!("{} n={}: {} vs {}", r.design, r.n, r.tau_first, r.tau_last)
            })?;
        }
    }
    Ok(notes.join(", "))
}

fn extended_step_range() -> Check {
    let max_gamma = design::max_gamma(&presets::dr().w, 1.0);
    let opts = RunOptions { max_iter: 2000, residual_target: 1e-9, ..RunOptions::default() };
    for seed in 0..5 {
        let ops = class1(2, 4, seed);
        let v0 = runtime::random_point(2, 4, 100 + seed);
        let trace =
            runtime::run_n_iteration(&presets::dr().with_gamma(1.9), &ops, &v0, &opts).map_err(|e| e.to_string())?;
        ensure(trace.converged && trace.final_residual() < 1e-8, || format!("seed {seed} did not converge at 1.9"))?;
    }
    // Smallest step above 2.1 at which some instance diverges or stalls.
    for gamma in [2.2, 2.5, 3.0, 3.5, 4.0, 4.5] {
        for seed in 0..5 {
            let ops = class1(2, 4, seed);
            let v0 = runtime::random_point(2, 4, 100 + seed);
            match runtime::run_n_iteration(&presets::dr().with_gamma(gamma), &ops, &v0, &opts) {
                Err(Error::Diverged { .. }) => {
                    return Ok(format!("max_gamma = {max_gamma}, converged at 1.9, diverged at {gamma} (seed {seed})"))
                }
                Ok(t) if !t.converged => {
                    return Ok(format!("max_gamma = {max_gamma}, converged at 1.9, stalled at {gamma} (seed {seed})"))
                }
                Ok(_) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    Err("no instance diverged or stalled".into())
}

fn random_design(rng: &mut ChaCha8Rng, n: usize) -> Design {
    loop {
        let mut w = Mat::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = rng.gen_range(0.2..1.0);
                w[(i, j)] = -v;
                w[(j, i)] = -v;
                w[(i, i)] += v;
                w[(j, j)] += v;
            }
        }
        let z = presets::fully_connected(n).unwrap().z;
        let zmax = linalg::sym_eigenvalues(&z)[n - 1];
        let wmax = linalg::sym_eigenvalues(&w)[n - 1];
        w *= rng.gen_range(0.6..1.0) * zmax / wmax;
        let d = Design::new(z, w, 0.5).unwrap();
        if design::validate(&d, 1e-8).passed {
            return d;
        }
    }
}

fn factor_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = RunOptions { max_iter: 50, residual_target: 0.0, record_x: true, ..RunOptions::default() };
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let d = random_design(&mut rng, 4);
        let ops = class1(4, 3, trial);
        let edge = factor_stieltjes(&d.w).map_err(|e| e.to_string())?;
        let eig = factor_eigen(&d.w).map_err(|e| e.to_string())?;
        ensure(edge.nrows() > 3, || "edge factor is minimal".into())?;
        let z0 = runtime::random_point(edge.nrows(), 3, 500 + trial);
        let zr = reduce_initial_point(&edge, &eig, &z0).map_err(|e| e.to_string())?;
        let a = runtime::run_d_iteration(&d, &edge, &ops, &z0, &opts).map_err(|e| e.to_string())?;
        let b = runtime::run_d_iteration(&d, &eig, &ops, &zr, &opts).map_err(|e| e.to_string())?;
        let (xs, ys) = (a.x_history.unwrap(), b.x_history.unwrap());
        ensure(xs.len() == 50, || format!("{} iterates", xs.len()))?;
        for (x, y) in xs.iter().zip(&ys) {
            worst = worst.max(linalg::max_abs(&(x - y)));
        }
    }
    ensure(worst <= 1e-8, || format!("deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn attouch_thera() -> Check {
    let opts = RunOptions { max_iter: 5000, residual_target: 1e-11, ..RunOptions::default() };
    let mut worst_sum = 0.0f64;
    let mut worst_member = 0.0f64;
    let mut worst_warm = 0;
    for d in [presets::dr(), presets::ryu(), presets::mt(4).unwrap(), presets::two_block_fiedler(4).unwrap()] {
        for seed in 0..3 {
            let ops = class1(d.n, 3, seed);
            let v0 = runtime::random_point(d.n, 3, 300 + seed);
            let trace = runtime::run_n_iteration(&d, &ops, &v0, &opts).map_err(|e| e.to_string())?;
            ensure(trace.converged, || format!("n={} seed {seed} did not converge", d.n))?;
            let u = runtime::attouch_thera_dual(&trace.state, &trace.x, &d.l);
            worst_sum = worst_sum.max(u.row_sum().norm());
            let xbar = trace.xbar();
            for (i, op) in ops.iter().enumerate() {
                let ui: Vector = u.row(i).transpose();
                worst_member = worst_member.max((op.forward(&xbar).ok_or("operator has no forward map")? - ui).norm());
            }
            let warm = runtime::warm_start_v(&u, &trace.x, &d.l);
            let again = runtime::run_n_iteration(&d, &ops, &warm, &RunOptions { residual_target: 1e-8, ..opts })
                .map_err(|e| e.to_string())?;
            ensure(again.final_residual() <= 1e-8, || format!("warm start residual {}", again.final_residual()))?;
            worst_warm = worst_warm.max(again.iterations);
        }
    }
    ensure(worst_sum <= 1e-6, || format!("Σu = {worst_sum:e}"))?;
    ensure(worst_member <= 1e-6, || format!("membership {worst_member:e}"))?;
    ensure(worst_warm <= 2, || format!("warm start took {worst_warm} iterations"))?;
    Ok(format!("|Σu| {worst_sum:.1e}, membership {worst_member:.1e}, warm start {worst_warm} iterations"))
}

fn scheduling() -> Check {
    for n in [4, 6] {
        let timing = TimingModel::constant(n, 1.0, 0.25);
        let s = sched::schedule_design(&presets::two_block_fiedler(n).unwrap(), &timing, 4 * n)
            .map_err(|e| e.to_string())?;
        let stats = sched::iteration_stats(&s);
        ensure(stats.c1 == 2.5 && stats.c_inf == Some(2.5), || format!("n={n}: {stats:?}"))?;
        ensure(sched::lower_bound_q(&timing, Some(0.25)) == 2.5, || "lower bound".into())?;
    }
    let timing = TimingModel::constant(3, 1.0, 1.0);
    let s = sched::schedule_design(&presets::mt(3).unwrap(), &timing, 1).map_err(|e| e.to_string())?;
    let c1 = sched::iteration_stats(&s).c1;
    ensure(c1 == 6.0, || format!("MT c1 = {c1}"))?;
    Ok("2-Block c1 = c_inf = 2.5 for n = 4, 6; MT n=3 c1 = 6".into())
}

fn min_time_vs_block() -> Check {
    let cfg = ExperimentConfig {
        n_min: 6,
        n_max: 7,
        trials: 10,
        class: ClassKind::Unrestricted(Placement::Last),
        node_budget: 2000,
        ..ExperimentConfig::default()
    };
    let recs = experiments::min_time_vs_block(&cfg).map_err(|e| e.to_string())?;
    let mean = |n: usize, design: &str| {
        let v: Vec<f64> = recs.iter().filter(|r| r.n == n && r.design == design).map(|r| r.time).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (m6, b6, m7, b7) = (mean(6, "min-time"), mean(6, "block"), mean(7, "min-time"), mean(7, "block"));
    let summary = format!("n=6 {m6:.1} vs {b6:.1}, n=7 {m7:.1} vs {b7:.1}");
    ensure(m7 <= b7, || format!("n=7 mean worse than block: {summary}"))?;
    ensure(m6 <= 1.05 * b6, || format!("n=6 mean more than 5% worse: {summary}"))?;
    Ok(summary)
}

fn check_design(d: &Design, what: &str) -> Result<(), String> {
    let report = design::validate(d, 1e-6);
    let failed: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
    ensure(report.passed, || format!("{what} fails {failed:?}"))?;
    let rows = d.z.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
    ensure(rows <= 1e-6, || format!("{what} row sums {rows:e}"))
}

fn property_suite() -> Check {
    let objectives = [
        Objective::Feasibility,
        Objective::MaxFiedler { beta_z: 1.0, beta_w: 1.0 },
        Objective::MinSlem { beta_z: 1.0, beta_w: 1.0 },
        Objective::MinResistance { beta_z: 1.0, beta_w: 1.0 },
        Objective::MinZNorm,
    ];
    let mut sets = vec![ConstraintSet::new(3), ConstraintSet::new(5), sdpdesign::dblock_constraints(&[2, 2])];
    sets.push(sdpdesign::dblock_constraints(&[3, 3]));
    sets.push(sdpdesign::dblock_constraints(&[2, 2, 2]));
    let mut checked = 0;
    for cs in &sets {
        for obj in &objectives {
            let sol = sdpdesign::solve_design(obj, cs).map_err(|e| format!("{} n={}: {e}", obj.name(), cs.n))?;
            check_design(&sol.design, obj.name())?;
            checked += 1;
        }
    }
    for n in 3..=4 {
        let out =
            discrete::min_edges_design(&ConstraintSet::new(n), &BnbOptions::default()).map_err(|e| e.to_string())?;
        check_design(&out.design, "min-edges")?;
        let timing = experiments::random_timing(n + 1, n as u64);
        let out =
            discrete::min_time_design_milp(n + 1, &timing, Some(1), &Default::default()).map_err(|e| e.to_string())?;
        check_design(&out.design, "min-time")?;
        checked += 2;
    }
    let mut worst = 0.0f64;
    for d in [presets::dr(), presets::ryu(), presets::mt(4).unwrap(), presets::fully_connected(5).unwrap()] {
        let class = OperatorClass::uniform(d.n, 1.0, 2.0);
        for gamma in [0.3, 0.5, 1.0] {
            let a = pep::pep_bound_n(&d.w, &d.l, gamma, &class).map_err(|e| e.to_string())?.tau;
            let b = pep::pep_bound_n(&(&d.w * 2.0), &d.l, gamma / 2.0, &class).map_err(|e| e.to_string())?.tau;
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("scale identity off by {worst:e}"))?;
    Ok(format!("{checked} designs valid, scale identity within {worst:.1e}"))
}

struct Criterion {
    id: usize,
    budget: Option<Duration>,
    check: fn() -> Check,
}

fn main() -> ExitCode {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { id: 1, budget: secs(1), check: preset_feasibility },
        Criterion { id: 2, budget: secs(1), check: cluster_matrices },
        Criterion { id: 3, budget: secs(10), check: two_block_fiedler },
        Criterion { id: 4, budget: secs(180), check: min_edges },
        Criterion { id: 5, budget: secs(30), check: strong_duality },
        Criterion { id: 6, budget: secs(60), check: dominance },
        Criterion { id: 7, budget: None, check: fixed_and_tuned_ordering },
        Criterion { id: 8, budget: None, check: ordering_swap },
        Criterion { id: 9, budget: secs(10), check: extended_step_range },
        Criterion { id: 10, budget: None, check: factor_equivalence },
        Criterion { id: 11, budget: None, check: attouch_thera },
        Criterion { id: 12, budget: None, check: scheduling },
        Criterion { id: 13, budget: secs(1800), check: min_time_vs_block },
        Criterion { id: 14, budget: None, check: property_suite },
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("criterion {:2}: PASS  {detail} [{:.2}s]", c.id, elapsed.as_secs_f64()),
            Err(detail) => {
                failures += 1;
                println!("criterion {:2}: FAIL  {detail} [{:.2}s]", c.id, elapsed.as_secs_f64());
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
