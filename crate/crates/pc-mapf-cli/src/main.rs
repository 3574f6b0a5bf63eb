//! Command line front end: solve single instances, generate random ones,
//! run benchmarks, check solutions, and query the brute-force oracle.
//!
//! Exit codes: 0 ok, 1 unsolved or timed out, 2 invalid input, 3 validator
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pc_mapf::bench::{self, Algorithm, BenchInstance, GenerateError, GeneratorConfig, Mode};
use pc_mapf::gridworld::{DistanceTable, GridMap, MotionGraph};
use pc_mapf::hcbs;
use pc_mapf::pccbs::{self, format_solution, parse_solution, SolverConfig};
use pc_mapf::taskgraph::{build_task_graph, format_problem, parse_problem, Problem, TaskGraph};
use pc_mapf::verify::{oracle_makespan, validate_solution, OracleConfig, OracleOutcome};

#[derive(Parser)]
#[command(
    name = "pc-mapf",
    version,
    about = "Precedence-constrained multi-agent pickup and delivery on grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and emit the solution file.
    Solve(SolveArgs),
    /// Generate seeded random instances into a directory.
    Generate(GenerateArgs),
    /// Run solvers over an instance directory and report metrics.
    Bench(BenchArgs),
    /// Check a solution file against its instance.
    Verify(VerifyArgs),
    /// Brute-force the optimal makespan by joint-state search.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    /// pc-cbs or h-cbs.
    #[arg(long)]
    algorithm: String,
    #[arg(long)]
    timeout_seconds: Option<u64>,
    /// Solution file path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    map: PathBuf,
    /// assembly (singleton coalitions, random explicit edges) or cmapd
    /// (coalitions of `coalition-degree`, no explicit edges).
    #[arg(long)]
    mode: String,
    #[arg(long)]
    agents: usize,
    #[arg(long)]
    mean_tasks: u32,
    #[arg(long, default_value_t = 1)]
    coalition_degree: usize,
    /// Probability of an explicit edge between each lower-to-higher task
    /// pair (assembly mode).
    #[arg(long, default_value_t = bench::DEFAULT_EDGE_PROBABILITY)]
    edge_probability: f64,
    #[arg(long)]
    seed: u64,
    /// Instances to draw; instance i uses seed + i.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of paired NAME.problem / NAME.map files.
    #[arg(long)]
    instances: PathBuf,
    /// Comma-separated list, e.g. pc-cbs,h-cbs.
    #[arg(long, default_value = "pc-cbs,h-cbs")]
    algorithms: String,
    #[arg(long, default_value_t = 300)]
    timeout_seconds: u64,
    /// Per-run CSV output path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    /// Joint states expanded before giving up.
    #[arg(long)]
    budget: Option<u64>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Oracle(args) => cmd_oracle(args),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_map(path: &Path) -> Result<GridMap> {
    GridMap::parse(&read(path)?).with_context(|| format!("parsing map {}", path.display()))
}

fn load_problem(path: &Path) -> Result<Problem> {
    parse_problem(&read(path)?).with_context(|| format!("parsing problem {}", path.display()))
}

fn build(map: &GridMap, problem: &Problem) -> Result<(MotionGraph, DistanceTable, TaskGraph)> {
    let graph = MotionGraph::new(map.clone());
    let dist = DistanceTable::build(&graph);
    let tasks = build_task_graph(&graph.map, &dist, problem).context("building the task graph")?;
    Ok((graph, dist, tasks))
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let algorithm = Algorithm::from_str(&args.algorithm).map_err(anyhow::Error::msg)?;
    let map = load_map(&args.map)?;
    let problem = load_problem(&args.problem)?;
    let (graph, dist, tasks) = build(&map, &problem)?;
    let timeout = args.timeout_seconds.map(Duration::from_secs);
    let outcome = match algorithm {
        Algorithm::PcCbs => pccbs::solve(
            &graph,
            &dist,
            &problem,
            &tasks,
            &SolverConfig {
                timeout,
                ..SolverConfig::default()
            },
        ),
        Algorithm::HCbs => hcbs::solve(&graph, &dist, &problem, &tasks, timeout),
    };
    match outcome {
        Ok(solution) => {
            let text = format_solution(&solution);
            match &args.out {
                Some(path) => {
                    fs::write(path, &text)
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!("makespan {}", solution.makespan);
                }
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(unsolved) => {
            eprintln!("{}: {unsolved}", algorithm.name());
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let mode = Mode::from_str(&args.mode).map_err(anyhow::Error::msg)?;
    let map = load_map(&args.map)?;
    let dist = DistanceTable::build(&MotionGraph::new(map.clone()));
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    for index in 0..args.count {
        let cfg = GeneratorConfig {
            mode,
            agents: args.agents,
            mean_tasks: args.mean_tasks,
            coalition_degree: args.coalition_degree,
            edge_probability: args.edge_probability,
            seed: args.seed + index as u64,
        };
        let problem = match bench::generate_instance(&map, &dist, &cfg) {
            Ok(problem) => problem,
            Err(err @ GenerateError::Stuck(_)) => {
                eprintln!("instance {index}: {err}");
                return Ok(ExitCode::from(1));
            }
            Err(err) => return Err(err.into()),
        };
        let name = bench::instance_name(&cfg, index);
        let problem_path = args.out_dir.join(format!("{name}.problem"));
        let map_path = args.out_dir.join(format!("{name}.map"));
        fs::write(&problem_path, format_problem(&problem))
            .with_context(|| format!("writing {}", problem_path.display()))?;
        fs::write(&map_path, map.format())
            .with_context(|| format!("writing {}", map_path.display()))?;
        println!("wrote {}", problem_path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn load_instance_dir(dir: &Path) -> Result<Vec<BenchInstance>> {
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "problem") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    let mut instances = Vec::with_capacity(names.len());
    for name in names {
        let map_path = dir.join(format!("{name}.map"));
        if !map_path.exists() {
            bail!("instance {name} has no matching {}", map_path.display());
        }
        instances.push(BenchInstance {
            map: load_map(&map_path)?,
            problem: load_problem(&dir.join(format!("{name}.problem")))?,
            name,
        });
    }
    Ok(instances)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let algorithms = Algorithm::parse_list(&args.algorithms).map_err(anyhow::Error::msg)?;
    let instances = load_instance_dir(&args.instances)?;
    if instances.is_empty() {
        bail!("no .problem files under {}", args.instances.display());
    }
    let timeout = Some(Duration::from_secs(args.timeout_seconds));
    let report = match bench::run_benchmark(&instances, &algorithms, timeout) {
        Ok(report) => report,
        Err(err @ bench::BenchError::InvalidSolution { .. }) => {
            eprintln!("{err}");
            return Ok(ExitCode::from(3));
        }
        Err(err) => return Err(err.into()),
    };
    if let Some(path) = &args.csv {
        fs::write(path, bench::to_csv(&report.rows))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("instances {}", instances.len());
    println!("solved pc-cbs {:.3}", report.metrics.solved_pc);
    println!("solved h-cbs {:.3}", report.metrics.solved_h);
    println!("pct_subopt {:.2}", report.metrics.pct_subopt);
    println!("avg_regret {:.3}", report.metrics.avg_regret);
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let map = load_map(&args.map)?;
    let problem = load_problem(&args.problem)?;
    let text = parse_solution(&read(&args.solution)?)
        .with_context(|| format!("parsing solution {}", args.solution.display()))?;
    let plan = text.checked_plan(&problem).with_context(|| {
        format!(
            "solution {} does not fit the problem",
            args.solution.display()
        )
    })?;
    let report = validate_solution(&map, &problem, &plan);
    if report.ok() {
        println!("valid");
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &report.violations {
            match v.time {
                Some(t) => println!("{:?} at t={}: {}", v.kind, t, v.detail),
                None => println!("{:?}: {}", v.kind, v.detail),
            }
        }
        Ok(ExitCode::from(3))
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode> {
    let map = load_map(&args.map)?;
    let problem = load_problem(&args.problem)?;
    let mut cfg = OracleConfig::default();
    if let Some(budget) = args.budget {
        cfg.budget = budget;
    }
    match oracle_makespan(&map, &problem, cfg) {
        Ok(OracleOutcome::Solved { makespan }) => {
            println!("makespan {makespan}");
            Ok(ExitCode::SUCCESS)
        }
        Ok(OracleOutcome::Infeasible) => {
            eprintln!("infeasible");
            Ok(ExitCode::from(1))
        }
        Err(err) => {
            eprintln!("{err}");
            Ok(ExitCode::from(1))
        }
    }
}
