use clap::{Parser, Subcommand, ValueEnum};
use mmteb::export::{fmt_sig, write_csv, write_json, write_step_costs_csv, write_trace_csv};
use mmteb::planner::{plan, PlanError, PlanResult};
use mmteb::scenario::{load_scenario, ScenarioError};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mmteb", version, about = "Multi-modal minimum-time trajectory planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a trajectory for a scenario file.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        /// Output trajectory file; a `<stem>.cost.csv` trace is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Overrides the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the number of outer iterations.
        #[arg(long)]
        iterations: Option<usize>,
        /// Directory for per-step cost logs and the feasibility report.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(String),
    Init(String),
    Divergence(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Init(_) => 2,
            Failure::Divergence(_) => 3,
            Failure::Config(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Init(m) | Failure::Divergence(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Config(_) => Failure::Config(e.to_string()),
            PlanError::Init(_) => Failure::Init(e.to_string()),
            PlanError::Divergence { .. } => Failure::Divergence(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Other(format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn trace_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    out.with_file_name(format!("{stem}.cost.csv"))
}

fn write_outputs(result: &PlanResult, out: &Path, format: Format, diagnostics: Option<&Path>) -> Result<(), Failure> {
    match format {
        Format::Csv => write_csv(&result.samples, create(out)?),
        Format::Json => write_json(result, create(out)?),
    }
    .map_err(|e| io_failure(out, e))?;
    let trace = trace_path(out);
    write_trace_csv(&result.trace, create(&trace)?).map_err(|e| io_failure(&trace, e))?;
    if let Some(dir) = diagnostics {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        let steps = dir.join("lm_steps.csv");
        write_step_costs_csv(&result.accepted_costs, create(&steps)?).map_err(|e| io_failure(&steps, e))?;
        let report = dir.join("feasibility.json");
        serde_json::to_writer_pretty(create(&report)?, &result.feasibility)
            .map_err(|e| io_failure(&report, std::io::Error::other(e)))?;
    }
    Ok(())
}

fn print_summary(result: &PlanResult) {
    let f = &result.feasibility;
    println!("mode sequence: {}", result.mode_sequence.join(" -> "));
    for t in &result.transitions {
        println!("transition {} -> {} at t = {} s", t.from, t.to, fmt_sig(t.t));
    }
    println!("total time: {} s", fmt_sig(result.total_time));
    println!("final cost: {}", fmt_sig(result.final_cost));
    println!("max dynamics residual: {}", fmt_sig(f.max_dynamics_residual));
    println!("max bound violation: {}", fmt_sig(f.max_bound_violation));
    println!("max bound penalty: {}", fmt_sig(f.max_bound_penalty));
    println!("max obstacle penalty: {}", fmt_sig(f.max_obstacle_penalty));
    println!("min clearance: {} m", fmt_sig(f.min_clearance));
    if !result.transitions.is_empty() {
        println!(
            "max transition position gap: {} m",
            fmt_sig(f.max_transition_position_gap)
        );
        println!(
            "max transition velocity gap: {} m/s",
            fmt_sig(f.max_transition_velocity_gap)
        );
    }
    println!("feasible: {}", f.feasible);
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let Command::Plan {
        scenario,
        out,
        format,
        seed,
        iterations,
        diagnostics,
    } = cli.command;
    let sc = load_scenario(&scenario)?;
    let mut config = sc.planner;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(n) = iterations {
        config.n_outer_iterations = n;
    }
    let problem = sc.problem()?;
    let result = plan(&problem, &config)?;
    write_outputs(&result, &out, format, diagnostics.as_deref())?;
    print_summary(&result);
    Ok(result.feasibility.feasible)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: trajectory does not meet the feasibility tolerances");
            ExitCode::from(1)
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
