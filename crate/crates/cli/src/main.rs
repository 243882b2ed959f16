//! `splitforge` command line: build, check, certify, time and run designs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use splitforge::design::{self, Design};
use splitforge::discrete::{self, BnbOptions, MinTimeOptions};
use splitforge::experiments::{self, ClassKind, ExperimentConfig};
use splitforge::pep::{self, OperatorClass, PepForm};
use splitforge::runtime::{self, InstanceClass, InstanceSpec, Placement, RunOptions};
use splitforge::sched::{self, GanttFormat, TimingModel};
use splitforge::sdpdesign::{self, ConstraintSet, Objective};
use splitforge::Error;

#[derive(Parser)]
#[command(name = "splitforge", version, about = "Design and analysis of frugal resolvent splitting methods")]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a design by convex or discrete optimization.
    Design(DesignArgs),
    /// Validate a design and print spectral statistics.
    Analyze(AnalyzeArgs),
    /// Certify the worst-case contraction factor of a design.
    Pep(PepArgs),
    /// Compute the execution schedule of a design under a timing model.
    Schedule(ScheduleArgs),
    /// Run a design on a synthetic operator instance.
    Run(RunArgs),
    /// Run a named experiment and write CSV and SVG output.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignObjective {
    Feasibility,
    Fiedler,
    Slem,
    Resistance,
    Znorm,
    MinEdges,
    MinTime,
}

#[derive(Clone, Copy, ValueEnum)]
enum MinTimeSolver {
    Milp,
    Misdp,
}

#[derive(Args)]
struct DesignArgs {
    /// Number of operators.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "fiedler")]
    objective: DesignObjective,
    /// Consecutive block sizes, e.g. `2,2`.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Constraint set JSON (1-based indices).
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Timing model JSON for `min-time`; random when absent.
    #[arg(long)]
    timing: Option<PathBuf>,
    /// Step size stored in the design.
    #[arg(long)]
    gamma: Option<f64>,
    /// Modeled iterations for `min-time` (default n).
    #[arg(long)]
    iters: Option<usize>,
    /// Minimum off-diagonal nonzeros per row of W for `min-time`.
    #[arg(long)]
    min_row: Option<usize>,
    #[arg(long, value_enum, default_value = "milp")]
    solver: MinTimeSolver,
    /// Branch-and-bound node budget.
    #[arg(long, default_value_t = discrete::DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    /// Print the branch-and-bound log to stderr.
    #[arg(long)]
    log: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    design: PathBuf,
    #[arg(long, default_value_t = design::DEFAULT_TOL)]
    tol: f64,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tune {
    Gamma,
    W,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    D,
    N,
}

impl From<FormArg> for PepForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::D => PepForm::Lifted,
            FormArg::N => PepForm::Node,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    First,
    Last,
}

impl From<PlacementArg> for Placement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::First => Placement::First,
            PlacementArg::Last => Placement::Last,
        }
    }
}

#[derive(Args)]
struct PepArgs {
    design: PathBuf,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    lip: f64,
    /// Optimize the step size or the whole scaled consensus matrix.
    #[arg(long, value_enum)]
    tune: Option<Tune>,
    /// Step size; defaults to the one stored in the design.
    #[arg(long)]
    gamma: Option<f64>,
    /// Lower bound on the step when tuning it.
    #[arg(long, default_value_t = pep::GAMMA_MIN)]
    gamma_min: f64,
    #[arg(long, value_enum, default_value = "d")]
    form: FormArg,
    /// Make one operator merely maximal monotone.
    #[arg(long, value_enum)]
    unrestricted: Option<PlacementArg>,
    /// Also solve the primal program and report the duality gap.
    #[arg(long)]
    primal: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleArgs {
    design: PathBuf,
    #[arg(long)]
    timing: PathBuf,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Gantt chart SVG.
    #[arg(long)]
    gantt: Option<PathBuf>,
    /// Start and end times as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Activity network in DOT format.
    #[arg(long)]
    network: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    design: PathBuf,
    /// Problem JSON: {"class", "mu", "lip", "dim", "seed", "placement"}.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = runtime::DEFAULT_RESIDUAL_TARGET)]
    target: f64,
    #[arg(long, value_enum, default_value = "n")]
    form: FormArg,
    /// Per-iteration residuals and consensus gaps as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of fixed-gamma, opt-gamma, ordering, block-size, sparsity-sweep, min-time-vs-block.
    name: String,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Largest n accepted.
    #[arg(long, default_value_t = experiments::DEFAULT_N_CAP)]
    n_cap: usize,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 2.0)]
    lip: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, value_enum)]
    unrestricted: Option<PlacementArg>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    node_budget: Option<usize>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ProblemFile {
    #[serde(default = "default_class")]
    class: String,
    mu: f64,
    lip: f64,
    dim: usize,
    seed: Option<u64>,
    #[serde(default = "default_placement")]
    placement: String,
}

fn default_class() -> String {
    "class1".into()
}

fn default_placement() -> String {
    "last".into()
}

enum Failure {
    Infeasible(String),
    Input(String),
    Diverged(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Input(_) => 3,
            Failure::Diverged(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
            Failure::Input(m) | Failure::Diverged(m) | Failure::Other(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InfeasibleDesign { ref violated, .. } => {
                let mut msg = e.to_string();
                for v in violated {
                    msg.push_str(&format!("\n  violated: {v}"));
                }
                Failure::Infeasible(msg)
            }
            Error::Diverged { .. } => Failure::Diverged(e.to_string()),
            Error::Io(_) | Error::Json(_) => Failure::Input(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn read_input(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_with<T>(path: &Path, parse: impl FnOnce(&str) -> splitforge::Result<T>) -> std::result::Result<T, Failure> {
    let text = read_input(path)?;
    parse(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_design(path: &Path) -> std::result::Result<Design, Failure> {
    load_with(path, Design::from_json)
}

fn write_output(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn constraint_set(args: &DesignArgs) -> std::result::Result<ConstraintSet, Failure> {
    let mut cs = match &args.constraints {
        Some(p) => load_with(p, ConstraintSet::from_json)?,
        None => ConstraintSet::new(args.n),
    };
    if cs.n != args.n {
        return Err(Failure::Input(format!("constraint file has n = {}, expected {}", cs.n, args.n)));
    }
    if let Some(b) = &args.blocks {
        if b.iter().sum::<usize>() != args.n || b.contains(&0) {
            return Err(Failure::Input(format!("block sizes {b:?} do not partition {} nodes", args.n)));
        }
        cs.blocks = Some(b.clone());
    }
    if args.min_row.is_some() {
        cs.min_row_nonzeros_w = args.min_row;
    }
    Ok(cs)
}

fn command_design(args: &DesignArgs, seed: u64) -> Outcome {
    let cs = constraint_set(args)?;
    let bnb = BnbOptions { node_budget: args.node_budget, ..BnbOptions::default() };
    let spectral = |name: &str| -> Outcome {
        let objective = Objective::parse(name)?;
        let sol = sdpdesign::solve_design(&objective, &cs)?;
        finish(sol.design, args)
    };
    match args.objective {
        DesignObjective::Feasibility => spectral("feasibility"),
        DesignObjective::Fiedler => spectral("max_fiedler"),
        DesignObjective::Slem => spectral("min_slem"),
        DesignObjective::Resistance => spectral("min_resistance"),
        DesignObjective::Znorm => spectral("min_znorm"),
        DesignObjective::MinEdges => {
            let out = discrete::min_edges_design(&cs, &bnb)?;
            if args.log {
                out.log.iter().for_each(|l| eprintln!("{l}"));
            }
            println!(
                "edges {} (Z {}, W {}) nodes {} complete {}",
                out.z_edges + out.w_edges,
                out.z_edges,
                out.w_edges,
                out.nodes,
                out.complete
            );
            finish(out.design, args)
        }
        DesignObjective::MinTime => {
            let timing = match &args.timing {
                Some(p) => load_with(p, TimingModel::from_json)?,
                None => experiments::random_timing(args.n, seed),
            };
            if timing.n() != args.n {
                return Err(Failure::Input(format!("timing model has n = {}, expected {}", timing.n(), args.n)));
            }
            let opts = MinTimeOptions { r: args.iters, bnb, ..MinTimeOptions::default() };
            let out = match args.solver {
                MinTimeSolver::Milp => discrete::min_time_design_milp(args.n, &timing, cs.min_row_nonzeros_w, &opts)?,
                MinTimeSolver::Misdp => discrete::min_time_design_misdp(&timing, &cs, &opts)?,
            };
            if args.log {
                out.log.iter().for_each(|l| eprintln!("{l}"));
            }
            println!(
                "end time {:.6} over {} iterations (q = {:.6}) nodes {} complete {}",
                out.end_time, out.r, out.q, out.nodes, out.complete
            );
            finish(out.design, args)
        }
    }
}

fn finish(mut design: Design, args: &DesignArgs) -> Outcome {
    if let Some(g) = args.gamma {
        if g.is_nan() || g <= 0.0 {
            return Err(Failure::Input(format!("gamma must be positive, got {g}")));
        }
        design = design.with_gamma(g);
    }
    design.save(&args.out)?;
    let stats = design::graph_stats(&design.w, design.meta.eps, 1e-6);
    println!(
        "wrote {} (n = {}, objective {}, lambda2(W) = {:.6})",
        args.out.display(),
        design.n,
        design.meta.objective,
        stats.fiedler
    );
    Ok(())
}

fn command_analyze(args: &AnalyzeArgs) -> Outcome {
    let design = load_design(&args.design)?;
    let report = design::validate(&design, args.tol);
    let zero = args.tol.max(1e-9);
    let w_stats = design::graph_stats(&design.w, design.meta.eps, zero);
    let z_stats = design::graph_stats(&design.z, design.meta.eps, zero);
    if args.json {
        let value = serde_json::json!({ "report": report, "w": w_stats, "z": z_stats });
        println!("{}", serde_json::to_string_pretty(&value).map_err(|e| Failure::Other(e.to_string()))?);
    } else {
        println!("design n = {}, gamma = {}, tol = {:e}", design.n, design.gamma, args.tol);
        for c in &report.checks {
            let status = if c.skipped {
                "skip"
            } else if c.passed {
                "pass"
            } else {
                "FAIL"
            };
            let detail = if c.detail.is_empty() { String::new() } else { format!("  [{}]", c.detail) };
            println!("  {status:4}  {:<48} {:.3e}{detail}", c.name, c.residual);
        }
        for (name, s) in [("W", w_stats), ("Z", z_stats)] {
            println!(
                "  {name}: fiedler {:.6}  slem {:.6}  resistance {:.6}  edges {}",
                s.fiedler, s.slem, s.total_resistance, s.edge_count
            );
        }
        println!("{}", if report.passed { "valid" } else { "invalid" });
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Other("design fails validation".into()))
    }
}

fn operator_class(n: usize, mu: f64, lip: f64, unrestricted: Option<PlacementArg>) -> OperatorClass {
    match unrestricted {
        Some(p) => OperatorClass::with_unrestricted(n, mu, lip, p.into()),
        None => OperatorClass::uniform(n, mu, lip),
    }
}

fn command_pep(args: &PepArgs) -> Outcome {
    let design = load_design(&args.design)?;
    let class = operator_class(design.n, args.mu, args.lip, args.unrestricted);
    let form: PepForm = args.form.into();
    let mut cert = match args.tune {
        None => pep::certify(&design, form, &class, Some(args.gamma.unwrap_or(design.gamma)))?,
        Some(Tune::Gamma) => match form {
            PepForm::Lifted => {
                pep::pep_optimal_gamma_d(&pep::minimal_factor(&design)?, &design.l, &class, args.gamma_min)?
            }
            PepForm::Node => pep::pep_optimal_gamma_n(&design.w, &design.l, &class, args.gamma_min)?,
        },
        Some(Tune::W) => {
            let c = design.meta.c.unwrap_or_else(|| design::default_c(design.n));
            pep::pep_optimal_w(&design.l, &class, c)?
        }
    };
    if args.primal && !matches!(args.tune, Some(Tune::W)) {
        let primal = pep::pep_primal(form, &design, cert.gamma, &class)?;
        pep::attach_primal_gap(&mut cert, primal);
    }
    let json = cert.to_json()?;
    match &args.out {
        Some(p) => write_output(p, &json)?,
        None => println!("{json}"),
    }
    eprintln!("tau = {:.8} at gamma = {:.6}", cert.tau, cert.gamma);
    Ok(())
}

fn command_schedule(args: &ScheduleArgs) -> Outcome {
    let design = load_design(&args.design)?;
    let timing = load_with(&args.timing, TimingModel::from_json)?;
    if timing.n() != design.n {
        return Err(Failure::Input(format!("timing model has n = {}, design has n = {}", timing.n(), design.n)));
    }
    let schedule = sched::schedule_design(&design, &timing, args.iters)?;
    let stats = sched::iteration_stats(&schedule);
    let q = sched::lower_bound_q(&timing, timing.constant_latency());
    println!("c1 = {}", fmt_num(stats.c1));
    match stats.c_inf {
        Some(c) => println!("c_inf = {}", fmt_num(c)),
        None => println!("c_inf = n/a"),
    }
    if let Some(end) = schedule.end.last() {
        println!("end time after {} iterations = {}", args.iters, fmt_num(*end));
    }
    println!("lower bound q = {}", fmt_num(q));
    if let Some(p) = &args.gantt {
        write_output(p, &sched::export_gantt(&schedule, &timing, GanttFormat::Svg))?;
    }
    if let Some(p) = &args.csv {
        write_output(p, &sched::export_gantt(&schedule, &timing, GanttFormat::Csv))?;
    }
    if let Some(p) = &args.network {
        write_output(p, &sched::export_activity_network(&schedule.deps).to_dot())?;
    }
    Ok(())
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn command_run(args: &RunArgs, seed: u64) -> Outcome {
    let design = load_design(&args.design)?;
    let text = read_input(&args.problem)?;
    let problem: ProblemFile =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", args.problem.display())))?;
    let class = match problem.class.as_str() {
        "class1" => InstanceClass::StronglyMonotoneLipschitz,
        "class2" => InstanceClass::WithUnrestricted,
        other => return Err(Failure::Input(format!("unknown problem class {other:?}"))),
    };
    let placement = match problem.placement.as_str() {
        "first" => Placement::First,
        "last" => Placement::Last,
        other => return Err(Failure::Input(format!("unknown placement {other:?}"))),
    };
    let spec = InstanceSpec {
        class,
        n: design.n,
        mu: problem.mu,
        lip: problem.lip,
        dim: problem.dim,
        seed: problem.seed.unwrap_or(seed),
        placement,
    };
    let ops = runtime::make_instance(&spec)?;
    let opts =
        RunOptions { max_iter: args.iters, residual_target: args.target, record_xbar: true, ..RunOptions::default() };
    let trace = match args.form {
        FormArg::N => {
            let v0 = runtime::random_point(design.n, problem.dim, seed);
            runtime::run_n_iteration(&design, &ops, &v0, &opts)?
        }
        FormArg::D => {
            let m = match &design.m {
                Some(m) => m.clone(),
                None => pep::minimal_factor(&design)?,
            };
            let z0 = runtime::random_point(m.nrows(), problem.dim, seed);
            runtime::run_d_iteration(&design, &m, &ops, &z0, &opts)?
        }
    };
    if let Some(p) = &args.trace {
        trace.save_csv(p)?;
    }
    println!(
        "iterations {}  residual {:.3e}  consensus gap {:.3e}  converged {}",
        trace.iterations,
        trace.final_residual(),
        trace.final_consensus_gap(),
        trace.converged
    );
    let xbar: Vec<String> = trace.xbar().iter().map(|v| format!("{v:.8}")).collect();
    println!("xbar [{}]", xbar.join(", "));
    Ok(())
}

fn command_experiment(args: &ExperimentArgs, seed: u64) -> Outcome {
    if !experiments::NAMES.contains(&args.name.as_str()) {
        return Err(Failure::Input(format!(
            "unknown experiment {:?}; expected one of {}",
            args.name,
            experiments::NAMES.join(", ")
        )));
    }
    let mut cfg = ExperimentConfig {
        n_cap: args.n_cap,
        mu: args.mu,
        lip: args.lip,
        gamma: args.gamma,
        seed,
        ..ExperimentConfig::default()
    };
    if args.name == "min-time-vs-block" {
        cfg.n_min = 6;
        cfg.n_max = 7;
        cfg.class = ClassKind::Unrestricted(Placement::Last);
    }
    if args.name == "ordering" {
        cfg.n_min = 4;
    }
    if let Some(p) = args.unrestricted {
        cfg.class = ClassKind::Unrestricted(p.into());
    }
    if let Some(v) = args.n_min {
        cfg.n_min = v;
    }
    if let Some(v) = args.n_max {
        cfg.n_max = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.node_budget {
        cfg.node_budget = v;
    }
    let report = experiments::run(&args.name, &cfg)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::Other(format!("{}: {e}", args.out.display())))?;
    for path in report.write(&args.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(a) => command_design(a, cli.seed),
        Command::Analyze(a) => command_analyze(a),
        Command::Pep(a) => command_pep(a),
        Command::Schedule(a) => command_schedule(a),
        Command::Run(a) => command_run(a, cli.seed),
        Command::Experiment(a) => command_experiment(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
