//! `momopt` — polynomial optimization through moment relaxations.
//!
//! Exit codes: 0 exact/optimal, 2 infeasible, 3 order cap reached,
//! 4 input error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use momopt_core::{
    finite_minimizers, minimize, parse_polynomial, polar_minimize, write_report, OrderTrace,
    PolarCaps, PolarMode, PopInstance, RelaxationMode, RunConfig, RunReport, RunStatus,
    SolverOptions, VariableTable,
};

#[derive(Parser)]
#[command(
    name = "momopt",
    about = "Global polynomial optimization via moment-matrix relaxations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the relaxation of one order and report the bound.
    Minimize(ProblemArgs),
    /// Deepen the hierarchy until the minimizers are extracted.
    FiniteMin(ProblemArgs),
    /// Augment with polar/KKT constraints, then run the hierarchy.
    PolarMin(ProblemArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Qm,
    Preorder,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarModeArg {
    Product,
    Branch,
    Kkt,
}

#[derive(Args)]
struct ProblemArgs {
    /// Comma-separated variable names, e.g. `x,y,z`.
    #[arg(long, value_delimiter = ',')]
    vars: Vec<String>,
    /// Objective polynomial.
    #[arg(long)]
    objective: Option<String>,
    /// Inequality constraint `g >= 0` (repeatable).
    #[arg(long = "ineq")]
    inequalities: Vec<String>,
    /// Equality constraint `h = 0` (repeatable).
    #[arg(long = "eq")]
    equalities: Vec<String>,
    /// Problem file (JSON: vars, objective, inequalities, equalities);
    /// alternative to the flags above.
    #[arg(long, conflicts_with_all = ["vars", "objective", "inequalities", "equalities"])]
    problem: Option<String>,
    /// Relaxation order (defaults to the half-degree of the input).
    #[arg(long)]
    order: Option<u32>,
    /// Largest order the hierarchy may reach (default: order + 4).
    #[arg(long)]
    max_order: Option<u32>,
    /// Relaxation mode.
    #[arg(long, value_enum, default_value = "qm")]
    mode: ModeArg,
    /// Polar construction for `polar-min`.
    #[arg(long, value_enum, default_value = "product")]
    polar_mode: PolarModeArg,
    /// Solver duality-gap tolerance.
    #[arg(long, default_value_t = 1e-8)]
    solver_tol: f64,
    /// Extraction residual threshold.
    #[arg(long, default_value_t = 1e-2)]
    extract_tol: f64,
    /// Seed of the extraction eigen-combination.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output path for the report JSON (`-` for stdout, the default).
    #[arg(long)]
    output: Option<String>,
    /// Mirror the solver iteration log to stderr.
    #[arg(long)]
    trace: bool,
}

fn input_error(msg: impl std::fmt::Display) -> ! {
    eprintln!("momopt: {msg}");
    std::process::exit(4);
}

fn load_problem(args: &ProblemArgs) -> PopInstance {
    if let Some(path) = &args.problem {
        let text = std::fs::read_to_string(path)
            .unwrap_or_else(|e| input_error(format!("cannot read {path}: {e}")));
        return momopt_core::parse_problem_file(&text)
            .unwrap_or_else(|e| input_error(format!("{path}: {e}")));
    }
    if args.vars.is_empty() {
        input_error("no variables given (use --vars or --problem)");
    }
    let Some(objective) = &args.objective else {
        input_error("no objective given (use --objective or --problem)");
    };
    let vars = VariableTable::new(&args.vars).unwrap_or_else(|e| input_error(e));
    let parse = |text: &String| {
        parse_polynomial(text, &vars).unwrap_or_else(|e| input_error(format!("`{text}`: {e}")))
    };
    let objective = parse(objective);
    let inequalities = args.inequalities.iter().map(parse).collect();
    let equalities = args.equalities.iter().map(parse).collect();
    PopInstance::new(objective, inequalities, equalities, vars)
}

fn run_config(args: &ProblemArgs) -> RunConfig {
    RunConfig {
        initial_order: args.order,
        max_order: args.max_order,
        mode: match args.mode {
            ModeArg::Qm => RelaxationMode::QuadraticModule,
            ModeArg::Preorder => RelaxationMode::Preordering,
        },
        solver: SolverOptions {
            gap_tol: args.solver_tol,
            ..SolverOptions::default()
        },
        residual_tol: args.extract_tol,
        seed: args.seed,
        trace: args.trace,
        ..RunConfig::default()
    }
}

fn exit_code(status: RunStatus) -> i32 {
    match status {
        RunStatus::Exact => 0,
        RunStatus::Infeasible => 2,
        RunStatus::MaxOrderReached => 3,
    }
}

fn emit(report: &RunReport, output: Option<&str>) {
    if let Err(e) = write_report(report, output) {
        eprintln!("momopt: cannot write report: {e}");
        std::process::exit(4);
    }
}

fn main() {
    let cli = Cli::parse();
    match cli.command {
        Command::Minimize(args) => {
            let pop = load_problem(&args);
            let cfg = run_config(&args);
            let order = args
                .order
                .unwrap_or_else(|| pop.min_order())
                .max(pop.min_order());
            match minimize(&pop, order, &cfg) {
                Ok(outcome) => {
                    let report = RunReport {
                        status: RunStatus::Exact,
                        f_star: Some(outcome.v),
                        minimizers: None,
                        residual: None,
                        trace: vec![OrderTrace {
                            order,
                            v_mom: Some(outcome.v),
                            v_sos: Some(outcome.v_sos),
                            gap: Some(outcome.gap),
                            note: format!("{:?}", outcome.status),
                        }],
                        timings_ms: 0,
                        vars: pop.vars.clone(),
                    };
                    emit(&report, args.output.as_deref());
                    std::process::exit(0);
                }
                Err(momopt_core::DriverError::Sdp(momopt_core::SdpError::Infeasible {
                    ..
                })) => {
                    let report = RunReport {
                        status: RunStatus::Infeasible,
                        f_star: None,
                        minimizers: None,
                        residual: None,
                        trace: vec![],
                        timings_ms: 0,
                        vars: pop.vars.clone(),
                    };
                    emit(&report, args.output.as_deref());
                    std::process::exit(2);
                }
                Err(e) => input_error(e),
            }
        }
        Command::FiniteMin(args) => {
            let pop = load_problem(&args);
            let cfg = run_config(&args);
            let report = finite_minimizers(&pop, &cfg);
            emit(&report, args.output.as_deref());
            std::process::exit(exit_code(report.status));
        }
        Command::PolarMin(args) => {
            let pop = load_problem(&args);
            let cfg = run_config(&args);
            let mode = match args.polar_mode {
                PolarModeArg::Product => PolarMode::PolarProduct,
                PolarModeArg::Branch => PolarMode::PolarBranch,
                PolarModeArg::Kkt => PolarMode::Kkt,
            };
            match polar_minimize(&pop, mode, &PolarCaps::default(), &cfg) {
                Ok(report) => {
                    emit(&report, args.output.as_deref());
                    std::process::exit(exit_code(report.status));
                }
                Err(e) => input_error(e),
            }
        }
    }
}
