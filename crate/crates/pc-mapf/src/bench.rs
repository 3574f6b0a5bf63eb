//! Seeded random instance generation with greedy earliest-start task
//! assignment, plus a benchmark runner whose metrics count only
//! validator-clean solutions.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::gridworld::{DistanceTable, GridMap, MotionGraph, Vertex, INF};
use crate::hcbs;
use crate::pccbs::{self, SolverConfig};
use crate::taskgraph::{
    build_task_graph, initialize_intervals, AgentId, AgentSpec, BuildError, Problem, Task, TaskId,
};
use crate::verify::validate_solution;

pub const DEFAULT_EDGE_PROBABILITY: f64 = 0.3;

const GENERATE_ATTEMPTS: u32 = 64;

/// The two benchmark domains: `Assembly` has singleton coalitions and
/// random explicit precedence edges; `Cmapd` has no explicit edges, so all
/// precedence arises from coalitions of two or more agents sharing tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Assembly,
    Cmapd,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Assembly => "assembly",
            Mode::Cmapd => "cmapd",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        match s {
            "assembly" => Ok(Mode::Assembly),
            "cmapd" => Ok(Mode::Cmapd),
            other => Err(format!(
                "unknown mode `{other}` (expected assembly or cmapd)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub mode: Mode,
    pub agents: usize,
    pub mean_tasks: u32,
    pub coalition_degree: usize,
    pub edge_probability: f64,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("bad generator config: {0}")]
    BadConfig(String),
    #[error("map has {free} free cells, need at least {needed}")]
    MapTooSmall { free: usize, needed: usize },
    #[error("no feasible instance found in {0} attempts")]
    Stuck(u32),
}

impl GeneratorConfig {
    fn validate(&self) -> Result<(), GenerateError> {
        let bad = |what: &str| Err(GenerateError::BadConfig(what.to_string()));
        if self.coalition_degree < 1 || self.agents < self.coalition_degree {
            return bad("need agents >= coalition degree >= 1");
        }
        if self.mean_tasks < 1 {
            return bad("need mean tasks >= 1");
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return bad("edge probability must be within [0, 1]");
        }
        match self.mode {
            Mode::Assembly if self.coalition_degree != 1 => {
                bad("assembly mode requires coalition degree 1")
            }
            Mode::Cmapd if self.coalition_degree < 2 => {
                bad("cmapd mode requires coalition degree >= 2")
            }
            _ => Ok(()),
        }
    }
}

/// File stem for the `index`-th instance drawn from `cfg`.
pub fn instance_name(cfg: &GeneratorConfig, index: usize) -> String {
    format!(
        "{}-a{}-t{}-d{}-s{}-i{:03}",
        cfg.mode.as_str(),
        cfg.agents,
        cfg.mean_tasks,
        cfg.coalition_degree,
        cfg.seed,
        index
    )
}

/// Draws one instance: distinct random starts, random task endpoints,
/// explicit edges sampled low-to-high index (assembly mode), greedy
/// earliest-start assignment, and parking at each agent's final delivery
/// (start if idle; displaced to the nearest unclaimed cell when shared).
/// Redraws until the instance passes a static feasibility screen. Output
/// is a pure function of the config, including its seed.
pub fn generate_instance(
    map: &GridMap,
    dist: &DistanceTable,
    cfg: &GeneratorConfig,
) -> Result<Problem, GenerateError> {
    cfg.validate()?;
    let free = map.free_vertices();
    let needed = cfg.agents.max(2);
    if free.len() < needed {
        return Err(GenerateError::MapTooSmall {
            free: free.len(),
            needed,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..GENERATE_ATTEMPTS {
        if let Some(problem) = try_generate(map, dist, cfg, &free, &mut rng) {
            return Ok(problem);
        }
    }
    Err(GenerateError::Stuck(GENERATE_ATTEMPTS))
}

fn try_generate(
    map: &GridMap,
    dist: &DistanceTable,
    cfg: &GeneratorConfig,
    free: &[Vertex],
    rng: &mut ChaCha8Rng,
) -> Option<Problem> {
    let starts: Vec<Vertex> = sample(rng, free.len(), cfg.agents)
        .iter()
        .map(|i| free[i])
        .collect();

    let mut wanted: u64 = 0;
    for _ in 0..cfg.agents {
        let delta: i64 = rng.gen_range(-1..=1);
        wanted += (cfg.mean_tasks as i64 + delta).max(1) as u64;
    }
    let task_count = ((wanted as f64 / cfg.coalition_degree as f64).round() as usize).max(1);

    let mut endpoints = Vec::with_capacity(task_count);
    for _ in 0..task_count {
        let pickup = free[rng.gen_range(0..free.len())];
        let delivery = loop {
            let v = free[rng.gen_range(0..free.len())];
            if v != pickup {
                break v;
            }
        };
        endpoints.push((pickup, delivery));
    }

    let mut edges: Vec<(TaskId, TaskId)> = Vec::new();
    if cfg.mode == Mode::Assembly {
        for i in 0..task_count {
            for j in (i + 1)..task_count {
                if rng.gen_bool(cfg.edge_probability) {
                    edges.push((i, j));
                }
            }
        }
    }

    let assignment =
        greedy_assignment(map, dist, &starts, &endpoints, &edges, cfg.coalition_degree)?;
    let parks = assign_parks(map, dist, &starts, &endpoints, &assignment)?;

    let problem = Problem {
        agents: starts
            .iter()
            .zip(&parks)
            .enumerate()
            .map(|(id, (&start, &parking))| AgentSpec { id, start, parking })
            .collect(),
        tasks: endpoints
            .iter()
            .enumerate()
            .map(|(id, &(pickup, delivery))| Task {
                id,
                pickup,
                delivery,
                coalition: assignment.coalitions[id].clone(),
            })
            .collect(),
        edges,
        allotments: assignment.allotments.clone(),
    };
    passes_screen(map, dist, &problem).then_some(problem)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Sorted member ids per task.
    pub coalitions: Vec<Vec<AgentId>>,
    /// Ordered task ids per agent.
    pub allotments: Vec<Vec<TaskId>>,
    /// Collision-free completion estimate per task.
    pub completion: Vec<u32>,
}

/// Greedy allocation: repeatedly pick, among tasks whose explicit
/// predecessors are all scheduled, the one that can begin soonest given
/// each agent's position and free time; its crew is the `degree` agents
/// reaching the pickup first. Times ignore collisions. Returns None when
/// some task can never be crewed or the edges are cyclic.
pub fn greedy_assignment(
    map: &GridMap,
    dist: &DistanceTable,
    starts: &[Vertex],
    endpoints: &[(Vertex, Vertex)],
    edges: &[(TaskId, TaskId)],
    degree: usize,
) -> Option<Assignment> {
    let mut avail: Vec<(Vertex, u32)> = starts.iter().map(|&s| (s, 0)).collect();
    let mut completion: Vec<Option<u32>> = vec![None; endpoints.len()];
    let mut coalitions: Vec<Vec<AgentId>> = vec![Vec::new(); endpoints.len()];
    let mut allotments: Vec<Vec<TaskId>> = vec![Vec::new(); starts.len()];

    for _ in 0..endpoints.len() {
        let mut best: Option<(u32, TaskId, Vec<AgentId>)> = None;
        for task in 0..endpoints.len() {
            if completion[task].is_some() {
                continue;
            }
            let mut floor = 0;
            let mut ready = true;
            for &(a, b) in edges {
                if b == task {
                    match completion[a] {
                        Some(end) => floor = floor.max(end),
                        None => {
                            ready = false;
                            break;
                        }
                    }
                }
            }
            if !ready {
                continue;
            }
            let mut arrivals: Vec<(u32, AgentId)> = (0..starts.len())
                .filter_map(|agent| {
                    let (pos, at) = avail[agent];
                    let d = dist.get(map, pos, endpoints[task].0);
                    (d != INF).then(|| (at.saturating_add(d), agent))
                })
                .collect();
            if arrivals.len() < degree {
                return None;
            }
            arrivals.sort_unstable();
            arrivals.truncate(degree);
            let begin = floor.max(arrivals.iter().map(|&(t, _)| t).max().unwrap());
            if best
                .as_ref()
                .is_none_or(|&(b, t, _)| (begin, task) < (b, t))
            {
                best = Some((begin, task, arrivals.into_iter().map(|(_, a)| a).collect()));
            }
        }
        let (begin, task, mut members) = best?;
        let carry = dist.get(map, endpoints[task].0, endpoints[task].1);
        if carry == INF {
            return None;
        }
        let end = begin + carry;
        completion[task] = Some(end);
        members.sort_unstable();
        for &m in &members {
            avail[m] = (endpoints[task].1, end);
            allotments[m].push(task);
        }
        coalitions[task] = members;
    }

    Some(Assignment {
        coalitions,
        allotments,
        completion: completion.into_iter().map(Option::unwrap).collect(),
    })
}

/// Idle agents park where they stand; every other agent parks at its final
/// delivery, displaced to the nearest unclaimed reachable cell (ties by
/// row, column) when another agent already claimed it. Parks come out
/// pairwise distinct or not at all.
fn assign_parks(
    map: &GridMap,
    dist: &DistanceTable,
    starts: &[Vertex],
    endpoints: &[(Vertex, Vertex)],
    assignment: &Assignment,
) -> Option<Vec<Vertex>> {
    let mut parks: Vec<Option<Vertex>> = vec![None; starts.len()];
    let mut claimed: HashSet<Vertex> = HashSet::new();
    for (agent, &start) in starts.iter().enumerate() {
        if assignment.allotments[agent].is_empty() {
            claimed.insert(start);
            parks[agent] = Some(start);
        }
    }
    for (agent, park) in parks.iter_mut().enumerate() {
        if park.is_some() {
            continue;
        }
        let last = *assignment.allotments[agent].last().unwrap();
        let want = endpoints[last].1;
        let pick = map
            .free_vertices()
            .into_iter()
            .filter(|v| !claimed.contains(v))
            .filter_map(|v| {
                let d = dist.get(map, want, v);
                (d != INF).then_some((d, v))
            })
            .min()?
            .1;
        claimed.insert(pick);
        *park = Some(pick);
    }
    parks.into_iter().collect()
}

/// Static feasibility screen: every referenced cell mutually reachable and
/// the task graph builds with non-empty intervals.
fn passes_screen(map: &GridMap, dist: &DistanceTable, problem: &Problem) -> bool {
    let mut cells: Vec<Vertex> = Vec::new();
    for a in &problem.agents {
        cells.push(a.start);
        cells.push(a.parking);
    }
    for t in &problem.tasks {
        cells.push(t.pickup);
        cells.push(t.delivery);
    }
    let anchor = cells[0];
    if cells.iter().any(|&v| dist.get(map, anchor, v) == INF) {
        return false;
    }
    match build_task_graph(map, dist, problem) {
        Ok(tasks) => initialize_intervals(&tasks).is_ok(),
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    PcCbs,
    HCbs,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PcCbs => "pc-cbs",
            Algorithm::HCbs => "h-cbs",
        }
    }

    /// Parses a comma-separated list such as `pc-cbs,h-cbs`.
    pub fn parse_list(text: &str) -> Result<Vec<Algorithm>, String> {
        text.split(',').map(|s| s.trim().parse()).collect()
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Algorithm, String> {
        match s {
            "pc-cbs" => Ok(Algorithm::PcCbs),
            "h-cbs" => Ok(Algorithm::HCbs),
            other => Err(format!(
                "unknown algorithm `{other}` (expected pc-cbs or h-cbs)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub name: String,
    pub map: GridMap,
    pub problem: Problem,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    pub instance: String,
    pub algorithm: &'static str,
    pub solved: bool,
    /// True only for solved runs that passed the validator.
    pub valid: bool,
    pub makespan: Option<u32>,
    pub ct_nodes: u64,
    pub ll_expansions: u64,
    pub runtime_ms: u64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("instance {instance}: {source}")]
    BadInstance {
        instance: String,
        source: BuildError,
    },
    #[error("{algorithm} produced an invalid solution on {instance}: {details}")]
    InvalidSolution {
        instance: String,
        algorithm: &'static str,
        details: String,
    },
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<RunRecord>,
    pub metrics: MetricsReport,
}

/// Runs every algorithm on every instance under the timeout, validating
/// each claimed solution before it counts. An invalid solution aborts the
/// whole benchmark. Instances run concurrently; rows keep input order.
pub fn run_benchmark(
    instances: &[BenchInstance],
    algorithms: &[Algorithm],
    timeout: Option<Duration>,
) -> Result<BenchReport, BenchError> {
    let per_instance: Result<Vec<Vec<RunRecord>>, BenchError> = instances
        .par_iter()
        .map(|inst| run_instance(inst, algorithms, timeout))
        .collect();
    let rows: Vec<RunRecord> = per_instance?.into_iter().flatten().collect();
    let metrics = compute_metrics(&rows);
    Ok(BenchReport { rows, metrics })
}

fn run_instance(
    inst: &BenchInstance,
    algorithms: &[Algorithm],
    timeout: Option<Duration>,
) -> Result<Vec<RunRecord>, BenchError> {
    let graph = MotionGraph::new(inst.map.clone());
    let dist = DistanceTable::build(&graph);
    let tasks = build_task_graph(&graph.map, &dist, &inst.problem).map_err(|source| {
        BenchError::BadInstance {
            instance: inst.name.clone(),
            source,
        }
    })?;
    let mut rows = Vec::with_capacity(algorithms.len());
    for &alg in algorithms {
        let outcome = match alg {
            Algorithm::PcCbs => pccbs::solve(
                &graph,
                &dist,
                &inst.problem,
                &tasks,
                &SolverConfig {
                    timeout,
                    ..SolverConfig::default()
                },
            ),
            Algorithm::HCbs => hcbs::solve(&graph, &dist, &inst.problem, &tasks, timeout),
        };
        let row = match outcome {
            Ok(solution) => {
                let report = validate_solution(&graph.map, &inst.problem, &solution.checked_plan());
                if !report.ok() {
                    return Err(BenchError::InvalidSolution {
                        instance: inst.name.clone(),
                        algorithm: alg.name(),
                        details: format!("{:?}", report.violations),
                    });
                }
                RunRecord {
                    instance: inst.name.clone(),
                    algorithm: alg.name(),
                    solved: true,
                    valid: true,
                    makespan: Some(solution.makespan),
                    ct_nodes: solution.stats.ct_nodes,
                    ll_expansions: solution.stats.ll_expansions,
                    runtime_ms: solution.stats.runtime_ms,
                }
            }
            Err(_) => RunRecord {
                instance: inst.name.clone(),
                algorithm: alg.name(),
                solved: false,
                valid: false,
                makespan: None,
                ct_nodes: 0,
                ll_expansions: 0,
                runtime_ms: 0,
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Fraction of instances solved by each algorithm.
    pub solved_pc: f64,
    pub solved_h: f64,
    /// Percentage of jointly solved instances where the baseline makespan
    /// strictly exceeds the optimal one.
    pub pct_subopt: f64,
    /// Mean baseline surplus makespan over jointly solved instances.
    pub avg_regret: f64,
}

pub fn compute_metrics(rows: &[RunRecord]) -> MetricsReport {
    let mut instances: HashSet<&str> = HashSet::new();
    let mut pc: HashMap<&str, u32> = HashMap::new();
    let mut h: HashMap<&str, u32> = HashMap::new();
    for row in rows {
        instances.insert(&row.instance);
        if let (true, true, Some(makespan)) = (row.solved, row.valid, row.makespan) {
            match row.algorithm {
                "pc-cbs" => pc.insert(&row.instance, makespan),
                "h-cbs" => h.insert(&row.instance, makespan),
                _ => None,
            };
        }
    }
    let total = instances.len();
    let fraction = |n: usize| {
        if total == 0 {
            0.0
        } else {
            n as f64 / total as f64
        }
    };
    let joint: Vec<(u32, u32)> = instances
        .iter()
        .filter_map(|name| pc.get(name).copied().zip(h.get(name).copied()))
        .collect();
    let (pct_subopt, avg_regret) = if joint.is_empty() {
        (0.0, 0.0)
    } else {
        let worse = joint.iter().filter(|&&(p, q)| q > p).count();
        let surplus: f64 = joint.iter().map(|&(p, q)| q as f64 - p as f64).sum();
        (
            100.0 * worse as f64 / joint.len() as f64,
            surplus / joint.len() as f64,
        )
    };
    MetricsReport {
        solved_pc: fraction(pc.len()),
        solved_h: fraction(h.len()),
        pct_subopt,
        avg_regret,
    }
}

pub fn to_csv(rows: &[RunRecord]) -> String {
    let mut out = String::from(
        "instance,algorithm,solved,valid,makespan,ct_nodes,ll_expansions,runtime_ms\n",
    );
    for r in rows {
        let makespan = r.makespan.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.instance,
            r.algorithm,
            r.solved,
            r.valid,
            makespan,
            r.ct_nodes,
            r.ll_expansions,
            r.runtime_ms
        );
    }
    out
}
