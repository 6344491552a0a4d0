use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pvm::bench::{self, ExperimentGrid};
use pvm::mpc::{self, MpcSpec};
use pvm::solver::OuterRecord;
use pvm::{Error, ProblemData, SolveStatus, Solver, SolverSettings};

#[derive(Debug, Parser)]
#[command(name = "pvm", version, about = "Duality-free convex QP/LP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a problem file (JSON).
    Solve(SolveArgs),
    /// Run a benchmark experiment on the MPC family.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Write benchmark instances as problem files.
    #[command(subcommand)]
    Emit(EmitCommand),
}

#[derive(Debug, Args)]
struct SettingsArgs {
    /// Lower bound on the optimal cost to start from.
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    #[arg(long)]
    eps_opt: Option<f64>,
    #[arg(long)]
    eps_con: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
}

impl SettingsArgs {
    fn settings(&self) -> SolverSettings {
        let mut s = SolverSettings::default();
        s.t0 = self.t0.or(s.t0);
        s.eps_opt = self.eps_opt.unwrap_or(s.eps_opt);
        s.eps_con = self.eps_con.unwrap_or(s.eps_con);
        s.sigma0 = self.sigma0.unwrap_or(s.sigma0);
        s.delta0 = self.delta0.unwrap_or(s.delta0);
        s.max_outer = self.max_outer.unwrap_or(s.max_outer);
        s
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Problem file.
    problem: PathBuf,
    #[command(flatten)]
    settings: SettingsArgs,
    /// Write per-outer-iteration records as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the full report as JSON instead of the summary line.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    settings: SettingsArgs,
    #[arg(long, default_value_t = bench::DEFAULT_SEED)]
    seed: u64,
    /// Trials per grid cell (odd).
    #[arg(long, default_value_t = 11)]
    trials: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Warm starts from perturbed optimal points over a (t0, ε) grid.
    Warmstart(BenchArgs),
    /// Feasibility recovery at levels above the optimal cost.
    Recover(BenchArgs),
    /// Cold solves of the 72-member infeasible family.
    Infeasible(BenchArgs),
}

#[derive(Debug, Subcommand)]
enum EmitCommand {
    /// The benchmark MPC instance.
    Mpc {
        /// Output file.
        out: PathBuf,
        /// Scale the objective so the optimal cost is 0.1819.
        #[arg(long)]
        scaled: bool,
        #[arg(long, allow_hyphen_values = true)]
        u_max: Option<f64>,
        #[arg(long)]
        z_max: Option<f64>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// All 72 infeasible instances, one file each.
    InfeasibleFamily {
        #[arg(long)]
        emit_dir: PathBuf,
        /// Objective scale applied to every member; defaults to the scale of
        /// the benchmark instance.
        #[arg(long)]
        objective_scale: Option<f64>,
    },
}

/// Failure classes mapped to exit codes.
enum CliError {
    /// Unreadable or malformed input, bad arguments: exit 1.
    Input(String),
    /// The solver could not finish: exit 3.
    Solver(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::SolverFailure(_) | Error::Infeasible { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    // Usage errors share exit code 1 with other input errors; 2 is reserved
    // for an infeasibility verdict.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Bench(cmd) => cmd_bench(&cmd).map(|_| 0),
        Command::Emit(cmd) => cmd_emit(&cmd).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, CliError> {
    let prob = ProblemData::load(&args.problem)?;
    let settings = args.settings.settings();
    let report = Solver::new(&prob, settings)?.solve(None)?;
    if let Some(path) = &args.trace {
        write_file(path, &trace_csv(&report.trace))?;
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        match report.status {
            SolveStatus::Infeasible => println!(
                "Infeasible M={:.6e} newton={} outer={}",
                report.m_estimate.unwrap_or(report.r_final),
                report.cumulative_newton,
                report.outer_iterations
            ),
            status => println!(
                "{} t={:.4} objective={:.10e} r={:.3e} newton={} outer={}",
                status.as_str(),
                report.t_final,
                report.objective,
                report.r_final,
                report.cumulative_newton,
                report.outer_iterations
            ),
        }
    }
    Ok(match report.status {
        SolveStatus::Optimal | SolveStatus::SuboptimalFeasible => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::IterLimit | SolveStatus::LineSearchFailure => 3,
    })
}

fn trace_csv(trace: &[OuterRecord]) -> String {
    let mut out = String::from("k,t,r,rq,sigma,delta,pa_iters,pb_iters,pa_grad,pb_grad,t_next\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            bench::fmt_num(r.t),
            bench::fmt_num(r.r),
            bench::fmt_num(r.rq),
            bench::fmt_num(r.sigma),
            bench::fmt_num(r.delta),
            r.pa_iters,
            r.pb_iters,
            bench::fmt_num(r.pa_grad),
            bench::fmt_num(r.pb_grad),
            bench::fmt_num(r.t_next)
        );
    }
    out
}

fn cmd_bench(cmd: &BenchCommand) -> Result<(), CliError> {
    let (args, kind) = match cmd {
        BenchCommand::Warmstart(a) => (a, "warmstart"),
        BenchCommand::Recover(a) => (a, "recover"),
        BenchCommand::Infeasible(a) => (a, "infeasible"),
    };
    let settings = args.settings.settings();
    settings.validate()?;
    let base = bench::baseline()?;
    eprintln!("baseline: t*={:.10} objective scale={:.6e}", base.t_star, base.spec.objective_scale);

    let csv = match cmd {
        BenchCommand::Warmstart(_) | BenchCommand::Recover(_) => {
            let mut grid =
                if kind == "warmstart" { ExperimentGrid::default() } else { ExperimentGrid::recovery(base.t_star) };
            grid.rng_seed = args.seed;
            grid.trials_per_cell = args.trials;
            grid.validate()?;
            let cells = if kind == "warmstart" {
                bench::run_warmstart(&base.prob, &base.x_star, &grid, &settings)?
            } else {
                bench::run_recover(&base.prob, &base.x_star, &grid, &settings)?
            };
            if kind == "warmstart" {
                eprint!("{}", bench::median_table(&cells, &grid));
                if let Some(cold) = cells.iter().find(|c| c.epsilon.is_none() && c.t0 == 0.0) {
                    let peers: Vec<String> =
                        bench::PEER_COLD_COUNTS.iter().map(|(n, c)| format!("{n} {c}")).collect();
                    eprintln!("cold start from t0=0: {} (reported peers: {})", cold.median_newton(), peers.join(", "));
                }
            }
            bench::cells_csv(kind, &cells, &grid, &settings, base.t_star)
        }
        BenchCommand::Infeasible(_) => {
            let summary = bench::run_infeasible(base.spec.objective_scale, &settings)?;
            let (min, max, med) = summary.stats();
            println!(
                "infeasible family: {} instances, {} misclassified, newton min={min} max={max} median={med}",
                summary.rows.len(),
                summary.misclassified()
            );
            bench::infeasible_csv(&summary, &settings)
        }
    };
    match &args.csv {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_emit(cmd: &EmitCommand) -> Result<(), CliError> {
    match cmd {
        EmitCommand::Mpc { out, scaled, u_max, z_max, horizon } => {
            let defaults = MpcSpec::default();
            let spec = MpcSpec {
                u_max: u_max.unwrap_or(defaults.u_max),
                z_max: z_max.unwrap_or(defaults.z_max),
                horizon: horizon.unwrap_or(defaults.horizon),
                ..defaults
            };
            spec.validate()?;
            let prob = if *scaled { mpc::scaled(spec)?.1 } else { mpc::build_mpc(&spec) };
            prob.save(out)?;
            println!("wrote {} (n={}, m={})", out.display(), prob.n(), prob.m());
        }
        EmitCommand::InfeasibleFamily { emit_dir, objective_scale } => {
            std::fs::create_dir_all(emit_dir).map_err(|e| CliError::Input(e.to_string()))?;
            let scale = match objective_scale {
                Some(v) => *v,
                None => mpc::scaled_default()?.0.objective_scale,
            };
            let family = mpc::build_infeasible_family(scale);
            for (spec, prob) in &family {
                let name = format!("infeasible_umax{:+.2}_zmax{:.2}.json", spec.u_max, spec.z_max);
                prob.save(emit_dir.join(name))?;
            }
            println!("wrote {} instances to {}", family.len(), emit_dir.display());
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
