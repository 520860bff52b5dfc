//! Command-line front end: generate task sets, solve static schedules,
//! verify them, simulate runtime behaviour, and run full ACS-vs-WCS
//! sweeps.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 usage error,
//! 3 infeasible (solve or verification), 4 schedule/task-set mismatch.

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use voltsched::benchgen::{generate_taskset, GenSpec};
use voltsched::experiment::{self, ExperimentPlan};
use voltsched::files;
use voltsched::fps::{build_fps_with_cap, FpSchedule};
use voltsched::optimizer::{
    build_nlp, evaluate_residuals, solve_acs, solve_wcs, verify_worst_case, Policy, SolveOptions,
    StaticSchedule,
};
use voltsched::power::PowerModel;
use voltsched::simulator::{
    fixed_cycles, run_monte_carlo, run_trial, write_aggregate_csv_header,
    write_aggregate_csv_row, write_trace_csv, write_trace_csv_header, MonteCarloResult,
};
use voltsched::taskmodel::TaskSet;

const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "voltsched", version, about = "Offline voltage scheduling for preemptive real-time task sets", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random task-set files
    Gen(GenArgs),
    /// Solve a static schedule for a task-set file
    Solve(SolveArgs),
    /// Check a schedule against the worst case and the constraint system
    Verify(VerifyArgs),
    /// Simulate a schedule under sampled or fixed workloads
    Simulate(SimulateArgs),
    /// Run an ACS-vs-WCS sweep from a plan file
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of tasks per set
    #[arg(long)]
    tasks: usize,
    /// BCEC/WCEC ratio in (0, 1]
    #[arg(long)]
    ratio: f64,
    /// Number of task sets to generate
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target utilization with every task at V_max
    #[arg(long, default_value_t = 0.7)]
    utilization: f64,
    /// Output directory (defaults to $VOLTSCHED_OUT_DIR or ".")
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Task-set file
    taskset: PathBuf,
    #[arg(long, value_enum)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multi-start points for the solver
    #[arg(long, default_value_t = 16)]
    starts: usize,
    /// Output schedule file (defaults next to the task set)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    schedule: PathBuf,
    taskset: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    schedule: PathBuf,
    taskset: PathBuf,
    /// Monte Carlo trials
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace sampling by a fixed scenario
    #[arg(long, value_enum)]
    fixed: Option<FixedArg>,
    /// Write a per-segment trace CSV here
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the aggregate CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Plan file (JSON)
    plan: PathBuf,
    /// Output directory (defaults to $VOLTSCHED_OUT_DIR or ".")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail on any deadline miss
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Acs,
    Wcs,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixedArg {
    Acec,
    Wcec,
}

enum CliError {
    Usage(String),
    Infeasible(String),
    Mismatch(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

impl From<files::FileError> for CliError {
    fn from(e: files::FileError) -> Self {
        CliError::Other(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Mismatch(msg)) => {
            eprintln!("mismatch: {msg}");
            ExitCode::from(4)
        }
        Err(CliError::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("VOLTSCHED_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_inputs(path: &Path) -> Result<(TaskSet, PowerModel, FpSchedule), CliError> {
    let (ts, model) = files::load_taskset(path)?;
    let fps = build_fps_with_cap(&ts, usize::MAX)
        .map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))?;
    Ok((ts, model, fps))
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(CliError::Usage(format!(
            "--ratio must lie in (0, 1], got {}",
            args.ratio
        )));
    }
    if args.tasks == 0 || args.count == 0 {
        return Err(CliError::Usage(
            "--tasks and --count must be at least 1".into(),
        ));
    }
    let dir = out_dir(args.out);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::Other)?;

    let mut entries = Vec::new();
    for i in 0..args.count {
        let mut spec = GenSpec::new(args.tasks, args.ratio, args.seed.wrapping_add(i as u64));
        spec.utilization = args.utilization;
        let ts = generate_taskset(&spec)
            .map_err(|e| CliError::Other(anyhow::anyhow!("set {i}: {e}")))?;
        let name = format!(
            "taskset_n{}_r{}_s{}_{:03}.json",
            args.tasks, args.ratio, args.seed, i
        );
        let path = dir.join(&name);
        files::save_taskset(&ts, &spec.model, Some(spec.seed), &path)?;
        let hash = files::taskset_hash(&ts, &spec.model);
        println!("{} {}", path.display(), hash);
        entries.push(serde_json::json!({ "file": name, "hash": hash, "spec": spec }));
    }

    let manifest = serde_json::json!({
        "version": files::TOOL_VERSION,
        "seed": args.seed,
        "files": entries,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)
        .context("writing manifest")
        .map_err(CliError::Other)?;
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let (ts, model, fps) = load_inputs(&args.taskset)?;
    let opts = SolveOptions {
        starts: args.starts,
        seed: args.seed,
        ..SolveOptions::default()
    };
    let policy = match args.policy {
        PolicyArg::Acs => Policy::Acs,
        PolicyArg::Wcs => Policy::Wcs,
    };
    let solved = match policy {
        Policy::Acs => {
            let problem = build_nlp(&fps, &ts, &model);
            solve_acs(&problem, &opts)
        }
        Policy::Wcs => solve_wcs(&fps, &ts, &model, &opts),
    };
    let schedule = solved.map_err(|e| CliError::Infeasible(e.to_string()))?;

    let report = verify_worst_case(&schedule, &fps, &ts, &model)
        .map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))?;
    if !report.feasible {
        let detail: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Infeasible(format!(
            "schedule failed worst-case verification: {}",
            detail.join("; ")
        )));
    }

    let out = args.out.unwrap_or_else(|| {
        let mut p = args.taskset.clone();
        p.set_extension(format!("{}.schedule.json", policy.as_str()));
        p
    });
    files::save_schedule(&schedule, &files::taskset_hash(&ts, &model), &out)?;
    println!(
        "{} policy={} objective={:.6} status={} residual={:.3e} worst_case_energy={:.6}",
        out.display(),
        schedule.policy,
        schedule.objective,
        schedule.status,
        schedule.residual_max,
        report.energy
    );
    Ok(())
}

fn load_matched(
    schedule_path: &Path,
    taskset_path: &Path,
) -> Result<(StaticSchedule, TaskSet, PowerModel, FpSchedule), CliError> {
    let (schedule, embedded_hash) = files::load_schedule(schedule_path)?;
    let (ts, model, fps) = load_inputs(taskset_path)?;
    let actual = files::taskset_hash(&ts, &model);
    if actual != embedded_hash {
        return Err(CliError::Mismatch(format!(
            "schedule was solved for task set {embedded_hash}, but {} hashes to {actual}",
            taskset_path.display()
        )));
    }
    Ok((schedule, ts, model, fps))
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let (schedule, ts, model, fps) = load_matched(&args.schedule, &args.taskset)?;
    let wc = verify_worst_case(&schedule, &fps, &ts, &model)
        .map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))?;
    let check_ts = match schedule.policy {
        Policy::Acs => ts.clone(),
        Policy::Wcs => voltsched::optimizer::wcs_taskset(&ts),
    };
    let residuals = evaluate_residuals(&schedule.rows, &fps, &check_ts, &model);
    println!(
        "worst_case={} energy={:.6} residual_max={:.3e}",
        if wc.feasible { "ok" } else { "violated" },
        wc.energy,
        residuals.max_relative
    );
    for v in wc.violations.iter().take(10) {
        println!("violation: {v}");
    }
    if !wc.feasible || !residuals.satisfied(RESIDUAL_TOL) {
        return Err(CliError::Infeasible(format!(
            "verification failed ({})",
            residuals
        )));
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (schedule, ts, model, fps) = load_matched(&args.schedule, &args.taskset)?;
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }

    let result = match args.fixed {
        Some(fixed) => {
            let cycles = fixed_cycles(&fps, &ts, matches!(fixed, FixedArg::Wcec));
            let trace = run_trial(&schedule, &fps, &ts, &model, &cycles)
                .map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))?;
            if let Some(path) = &args.trace {
                let mut f = std::fs::File::create(path)
                    .with_context(|| format!("creating {}", path.display()))
                    .map_err(CliError::Other)?;
                write_trace_csv_header(&mut f)
                    .and_then(|_| write_trace_csv(&mut f, 0, &trace))
                    .context("writing trace")
                    .map_err(CliError::Other)?;
            }
            MonteCarloResult {
                trials: 1,
                mean_energy: trace.total_energy,
                std_energy: 0.0,
                min_energy: trace.total_energy,
                max_energy: trace.total_energy,
                deadline_misses: trace.deadline_misses,
                seed: args.seed,
            }
        }
        None => {
            if let Some(path) = &args.trace {
                // trace of the first trial alongside the aggregate
                let sampler = voltsched::simulator::WorkloadSampler::new(&ts);
                use voltsched::simulator::sample_cycles_for_trial;
                let cycles = sample_cycles_for_trial(&sampler, &fps, args.seed, 0);
                let trace = run_trial(&schedule, &fps, &ts, &model, &cycles)
                    .map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))?;
                let mut f = std::fs::File::create(path)
                    .with_context(|| format!("creating {}", path.display()))
                    .map_err(CliError::Other)?;
                write_trace_csv_header(&mut f)
                    .and_then(|_| write_trace_csv(&mut f, 0, &trace))
                    .context("writing trace")
                    .map_err(CliError::Other)?;
            }
            run_monte_carlo(&schedule, &fps, &ts, &model, args.trials, args.seed)
                .map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))?
        }
    };

    let mut buf = Vec::new();
    write_aggregate_csv_header(&mut buf)
        .and_then(|_| write_aggregate_csv_row(&mut buf, schedule.policy.as_str(), &result))
        .context("formatting aggregate")
        .map_err(CliError::Other)?;
    match args.out {
        Some(path) => std::fs::write(&path, &buf)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::Other)?,
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let plan: ExperimentPlan = experiment::load_plan(&args.plan)
        .map_err(|e| CliError::Usage(format!("{e}")))?;
    let dir = out_dir(args.out);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::Other)?;

    let report = experiment::run_experiment(&plan)
        .map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))?;

    let mut buf = Vec::new();
    experiment::write_report_csv(&report, &mut buf)
        .context("formatting report")
        .map_err(CliError::Other)?;
    std::fs::write(dir.join("report.csv"), &buf)
        .context("writing report.csv")
        .map_err(CliError::Other)?;
    experiment::write_plot_data(&report, &dir)
        .context("writing plot data")
        .map_err(CliError::Other)?;
    print!("{}", String::from_utf8_lossy(&buf));

    let misses: usize = report.cells.iter().map(|c| c.misses).sum();
    if args.strict && misses > 0 {
        return Err(CliError::Other(anyhow::anyhow!(
            "{misses} deadline misses under --strict"
        )));
    }
    Ok(())
}
