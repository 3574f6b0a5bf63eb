//! End-to-end acceptance checks. Each test covers one promise of the crate
//! and prints a single PASS/FAIL line: optimality against the brute-force
//! oracle (including coalition instances), interval-split and precedence
//! propagation on known inputs, the corridor instance separating the
//! optimal solver from the baseline, regret accounting, rejection of
//! twenty hand-corrupted plans, seeded determinism, and the distance
//! preprocessing cross-check on the shipped maps.

use std::path::PathBuf;
use std::time::Duration;

use pc_mapf::bench::{
    compute_metrics, generate_instance, instance_name, run_benchmark, Algorithm, BenchInstance,
    GeneratorConfig, Mode, RunRecord,
};
use pc_mapf::gridworld::{bfs_distances, DistanceTable, GridMap, MotionGraph, Vertex, INF};
use pc_mapf::hcbs;
use pc_mapf::pccbs::{
    self, format_solution, precedence_split_time, split_interval, SolverConfig, SplitRule,
};
use pc_mapf::taskgraph::{
    build_task_graph, format_problem, initialize_intervals, parse_problem, Interval, Problem,
};
use pc_mapf::verify::{
    oracle_makespan, validate_solution, CheckedPlan, OracleConfig, OracleOutcome, ViolationKind,
};

fn asset(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn load_map(rel: &str) -> GridMap {
    let text = std::fs::read_to_string(asset(rel)).expect("map asset readable");
    GridMap::parse(&text).expect("map asset parses")
}

fn verdict(index: usize, label: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("{word} [{index:>2}] {label} — {detail}");
    assert!(pass, "[{index}] {label}: {detail}");
}

const SMALL_MAPS: [&str; 3] = [
    "height 4\nwidth 4\n....\n....\n....\n....\n",
    "height 5\nwidth 5\n.....\n.@...\n...@.\n.....\n.....\n",
    "height 3\nwidth 5\n.....\n.@@@.\n.....\n",
];

struct Pool {
    graph: MotionGraph,
    dist: DistanceTable,
}

fn small_pools() -> Vec<Pool> {
    SMALL_MAPS
        .iter()
        .map(|text| {
            let graph = MotionGraph::new(GridMap::parse(text).expect("pool maps parse"));
            let dist = DistanceTable::build(&graph);
            Pool { graph, dist }
        })
        .collect()
}

fn tiny_config(mode: Mode, agents: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        mode,
        agents,
        mean_tasks: 1,
        coalition_degree: match mode {
            Mode::Assembly => 1,
            Mode::Cmapd => 2,
        },
        edge_probability: 0.3,
        seed,
    }
}

/// Runs the optimal solver against the exhaustive oracle on one instance.
/// Returns whether the oracle decided it, appending any disagreement.
fn audit_against_oracle(
    pool: &Pool,
    problem: &Problem,
    seed: u64,
    failures: &mut Vec<String>,
) -> bool {
    let budget = OracleConfig {
        budget: 2_000_000,
        horizon: None,
    };
    let tasks =
        build_task_graph(&pool.graph.map, &pool.dist, problem).expect("generated instances build");
    match oracle_makespan(&pool.graph.map, problem, budget) {
        Err(_) => false,
        Ok(OracleOutcome::Infeasible) => {
            let config = SolverConfig {
                timeout: Some(Duration::from_secs(5)),
                ..SolverConfig::default()
            };
            if let Ok(solution) = pccbs::solve(&pool.graph, &pool.dist, problem, &tasks, &config) {
                let report = validate_solution(&pool.graph.map, problem, &solution.checked_plan());
                if report.ok() {
                    failures.push(format!(
                        "seed {seed}: solver found a valid plan the oracle called infeasible"
                    ));
                }
            }
            true
        }
        Ok(OracleOutcome::Solved { makespan }) => {
            let config = SolverConfig {
                timeout: Some(Duration::from_secs(60)),
                ..SolverConfig::default()
            };
            match pccbs::solve(&pool.graph, &pool.dist, problem, &tasks, &config) {
                Err(err) => {
                    failures.push(format!("seed {seed}: solvable instance unsolved ({err:?})"))
                }
                Ok(solution) => {
                    let report =
                        validate_solution(&pool.graph.map, problem, &solution.checked_plan());
                    if !report.ok() {
                        failures.push(format!("seed {seed}: invalid plan {:?}", report.violations));
                    } else if solution.makespan != makespan {
                        failures.push(format!(
                            "seed {seed}: makespan {} vs oracle {makespan}",
                            solution.makespan
                        ));
                    }
                }
            }
            true
        }
    }
}

#[test]
fn pc_cbs_matches_the_oracle_on_random_instances() {
    let pools = small_pools();
    let mut generated = 0usize;
    let mut decided = 0usize;
    let mut failures = Vec::new();
    let mut seed = 0u64;
    while generated < 200 && seed < 10_000 {
        seed += 1;
        let which = seed as usize % pools.len();
        let pool = &pools[which];
        // The third pool map is a pure 12-cell cycle; three chained agents on
        // it push conflict-tree search onto minutes-long equal-cost plateaus,
        // so that map stays at pair instances to keep this suite fast.
        let cap = if which == 2 { 2 } else { 3 };
        let agents = (1 + (seed as usize / 2) % 3).min(cap);
        let mode = if seed.is_multiple_of(2) && agents >= 2 {
            Mode::Cmapd
        } else {
            Mode::Assembly
        };
        let cfg = tiny_config(mode, agents, seed);
        let Ok(problem) = generate_instance(&pool.graph.map, &pool.dist, &cfg) else {
            continue;
        };
        generated += 1;
        if audit_against_oracle(pool, &problem, seed, &mut failures) {
            decided += 1;
        }
    }
    let detail = format!(
        "{generated} instances, {decided} oracle-decided, {} disagreements{}",
        failures.len(),
        failures
            .first()
            .map(|f| format!(" (first: {f})"))
            .unwrap_or_default()
    );
    let pass = generated >= 200 && decided >= generated / 2 && failures.is_empty();
    verdict(
        1,
        "optimal solver matches the oracle on random instances",
        pass,
        &detail,
    );
}

#[test]
fn coalition_instances_match_the_oracle() {
    let pools = small_pools();
    let mut decided = 0usize;
    let mut failures = Vec::new();
    let mut seed = 100_000u64;
    while decided < 50 && seed < 110_000 {
        seed += 1;
        let pool = &pools[seed as usize % pools.len()];
        let agents = 2 + (seed as usize / 2) % 2;
        let cfg = tiny_config(Mode::Cmapd, agents, seed);
        let Ok(problem) = generate_instance(&pool.graph.map, &pool.dist, &cfg) else {
            continue;
        };
        if audit_against_oracle(pool, &problem, seed, &mut failures) {
            decided += 1;
        }
    }
    let detail = format!(
        "{decided} coalition instances oracle-decided, {} disagreements{}",
        failures.len(),
        failures
            .first()
            .map(|f| format!(" (first: {f})"))
            .unwrap_or_default()
    );
    verdict(
        2,
        "shared-carry instances match the oracle",
        decided >= 50 && failures.is_empty(),
        &detail,
    );
}

#[test]
fn a_precedence_conflict_splits_the_start_interval_exactly() {
    let parent = Interval::new(0, INF);
    let pickups = [5u32, 10, 7, 12];
    let earliest = *pickups.iter().min().expect("nonempty");
    let latest = *pickups.iter().max().expect("nonempty");
    let split = precedence_split_time(SplitRule::Max, earliest, latest);
    let (low, high) = split_interval(parent, split);
    let pass = low == Interval::new(0, 11) && high == Interval::new(12, INF);
    let detail = format!(
        "pickups {pickups:?} split [0,inf) into [{},{}] and [{},inf)",
        low.min_time, low.max_time, high.min_time
    );
    verdict(
        3,
        "a precedence conflict splits the start interval exactly",
        pass,
        &detail,
    );
}

#[test]
fn a_successor_start_waits_for_its_predecessors_delivery() {
    let map = GridMap::parse("height 1\nwidth 8\n........\n").expect("chain map parses");
    let problem = parse_problem(
        "agent 0 start 0 0 park 0 1\n\
         agent 1 start 0 7 park 0 7\n\
         task 0 pickup 0 2 deliver 0 4 coalition 0\n\
         task 1 pickup 0 5 deliver 0 6 coalition 1\n\
         edge 0 1\n\
         allot 0 0\n\
         allot 1 1\n",
    )
    .expect("chain problem parses");
    let graph = MotionGraph::new(map);
    let dist = DistanceTable::build(&graph);
    let tasks = build_task_graph(&graph.map, &dist, &problem).expect("chain instance builds");
    let intervals = initialize_intervals(&tasks).expect("chain instance initializes");

    let first_carry_done = intervals[tasks.carry_node[0]].end.min_time;
    let second_go_done = intervals[tasks.agent_nodes[1][0]].end.min_time;
    let second_carry_start = intervals[tasks.carry_node[1]].start.min_time;
    let pass = first_carry_done == 4 && second_go_done == 2 && second_carry_start == 4;
    let detail = format!(
        "predecessor done at {first_carry_done}, successor reaches its pickup at \
         {second_go_done}, successor carry starts at {second_carry_start}"
    );
    verdict(
        4,
        "a successor start waits for its predecessor's delivery",
        pass,
        &detail,
    );
}

#[test]
fn the_corridor_separates_the_optimum_from_the_baseline() {
    let map = load_map("maps/corridor.map");
    let text = std::fs::read_to_string(asset("instances/corridor.problem"))
        .expect("corridor problem readable");
    let problem = parse_problem(&text).expect("corridor problem parses");
    let graph = MotionGraph::new(map);
    let dist = DistanceTable::build(&graph);
    let tasks = build_task_graph(&graph.map, &dist, &problem).expect("corridor builds");

    let optimal = pccbs::solve(&graph, &dist, &problem, &tasks, &SolverConfig::default())
        .expect("optimal solver handles the corridor");
    let optimal_report = validate_solution(&graph.map, &problem, &optimal.checked_plan());
    let baseline =
        hcbs::solve(&graph, &dist, &problem, &tasks, None).expect("baseline handles the corridor");
    let baseline_report = validate_solution(&graph.map, &problem, &baseline.checked_plan());
    let oracle = match oracle_makespan(&graph.map, &problem, OracleConfig::default())
        .expect("corridor within oracle budget")
    {
        OracleOutcome::Solved { makespan } => makespan,
        OracleOutcome::Infeasible => unreachable!("the corridor is solvable"),
    };

    let pass = optimal_report.ok()
        && baseline_report.ok()
        && optimal.makespan == oracle
        && baseline.makespan > optimal.makespan;
    let detail = format!(
        "optimal {} == oracle {oracle}, baseline {} strictly worse",
        optimal.makespan, baseline.makespan
    );
    verdict(
        5,
        "the corridor separates the optimum from the baseline",
        pass,
        &detail,
    );
}

#[test]
fn the_baseline_never_beats_the_optimum_and_regret_follows_the_formula() {
    let hand_row = |instance: &str, algorithm: &'static str, makespan: u32| RunRecord {
        instance: instance.to_string(),
        algorithm,
        solved: true,
        valid: true,
        makespan: Some(makespan),
        ct_nodes: 1,
        ll_expansions: 1,
        runtime_ms: 0,
    };
    let rows = vec![
        hand_row("x", "pc-cbs", 5),
        hand_row("x", "h-cbs", 5),
        hand_row("y", "pc-cbs", 6),
        hand_row("y", "h-cbs", 8),
    ];
    let metrics = compute_metrics(&rows);
    let formula_ok =
        (metrics.pct_subopt - 50.0).abs() < 1e-9 && (metrics.avg_regret - 1.0).abs() < 1e-9;

    let pools = small_pools();
    let mut instances = Vec::new();
    let mut seed = 200_000u64;
    while instances.len() < 30 && seed < 201_000 {
        seed += 1;
        let pool = &pools[seed as usize % pools.len()];
        let agents = 2 + (seed as usize / 2) % 2;
        let mode = if seed.is_multiple_of(2) {
            Mode::Cmapd
        } else {
            Mode::Assembly
        };
        let cfg = tiny_config(mode, agents, seed);
        let Ok(problem) = generate_instance(&pool.graph.map, &pool.dist, &cfg) else {
            continue;
        };
        instances.push(BenchInstance {
            name: instance_name(&cfg, instances.len()),
            map: pool.graph.map.clone(),
            problem,
        });
    }
    let report = run_benchmark(
        &instances,
        &[Algorithm::PcCbs, Algorithm::HCbs],
        Some(Duration::from_secs(30)),
    )
    .expect("every claimed solution validates");

    let mut joint = 0usize;
    let mut negative = Vec::new();
    for inst in &instances {
        let span = |alg: &str| {
            report
                .rows
                .iter()
                .find(|r| r.instance == inst.name && r.algorithm == alg && r.solved)
                .and_then(|r| r.makespan)
        };
        if let (Some(pc), Some(h)) = (span("pc-cbs"), span("h-cbs")) {
            joint += 1;
            if h < pc {
                negative.push(format!("{}: baseline {h} beat optimum {pc}", inst.name));
            }
        }
    }
    let pass = formula_ok && instances.len() >= 30 && joint > 0 && negative.is_empty();
    let detail = format!(
        "formula check {}, {} instances, {joint} jointly solved, {} negative regrets{}",
        if formula_ok { "exact" } else { "WRONG" },
        instances.len(),
        negative.len(),
        negative
            .first()
            .map(|f| format!(" (first: {f})"))
            .unwrap_or_default()
    );
    verdict(
        6,
        "baseline regret is nonnegative and the formula is exact",
        pass,
        &detail,
    );
}

fn regime(
    map: &GridMap,
    mode: Mode,
    agents: usize,
    mean_tasks: u32,
    degree: usize,
    count: usize,
    seed_base: u64,
) -> Vec<BenchInstance> {
    let graph = MotionGraph::new(map.clone());
    let dist = DistanceTable::build(&graph);
    let mut out = Vec::new();
    let mut seed = seed_base;
    while out.len() < count && seed < seed_base + 10_000 {
        seed += 1;
        let cfg = GeneratorConfig {
            mode,
            agents,
            mean_tasks,
            coalition_degree: degree,
            edge_probability: 0.3,
            seed,
        };
        let Ok(problem) = generate_instance(map, &dist, &cfg) else {
            continue;
        };
        out.push(BenchInstance {
            name: instance_name(&cfg, out.len()),
            map: map.clone(),
            problem,
        });
    }
    out
}

#[test]
#[ignore = "hours-scale benchmark batch; run with --ignored"]
fn regime_trends_hold_at_benchmark_scale() {
    let timeout = Some(Duration::from_secs(300));
    let both = [Algorithm::PcCbs, Algorithm::HCbs];
    let empty9 = load_map("maps/empty9.map");
    let tunnel9 = load_map("maps/maze_tunnel9.map");

    let open = regime(&empty9, Mode::Assembly, 2, 2, 1, 100, 700_000);
    let open = run_benchmark(&open, &both, timeout)
        .expect("open-regime outputs validate")
        .metrics;
    let maze = regime(&tunnel9, Mode::Assembly, 2, 2, 1, 100, 710_000);
    let maze = run_benchmark(&maze, &both, timeout)
        .expect("maze-regime outputs validate")
        .metrics;
    let herd = regime(&empty9, Mode::Cmapd, 3, 2, 3, 100, 720_000);
    let herd = run_benchmark(&herd, &both, timeout)
        .expect("herd-regime outputs validate")
        .metrics;

    let open_ok = open.pct_subopt <= 5.0 && open.solved_pc >= 0.95 && open.solved_h >= 0.95;
    let maze_ok = maze.pct_subopt > open.pct_subopt && maze.avg_regret > open.avg_regret;
    let herd_ok = herd.pct_subopt == 0.0;
    let detail = format!(
        "open grid subopt {:.2}% solved {:.2}/{:.2} ({}), corridored maze subopt {:.2}% \
         regret {:.3} vs open regret {:.3} ({}), full-coalition herd subopt {:.2}% ({})",
        open.pct_subopt,
        open.solved_pc,
        open.solved_h,
        if open_ok { "ok" } else { "BAD" },
        maze.pct_subopt,
        maze.avg_regret,
        open.avg_regret,
        if maze_ok { "ok" } else { "BAD" },
        herd.pct_subopt,
        if herd_ok { "ok" } else { "BAD" },
    );
    verdict(
        7,
        "regime trends hold at benchmark scale",
        open_ok && maze_ok && herd_ok,
        &detail,
    );
}

struct Corruption {
    label: &'static str,
    expect: ViolationKind,
    mutate: fn(&mut CheckedPlan),
}

fn v(row: u16, col: u16) -> Vertex {
    Vertex::new(row, col)
}

fn corruption_fixture(
    map_text: &str,
    problem_text: &str,
    paths: Vec<Vec<Vertex>>,
    member_times: Vec<Vec<(usize, u32, u32)>>,
) -> (GridMap, Problem, CheckedPlan) {
    let map = GridMap::parse(map_text).expect("fixture map parses");
    let problem = parse_problem(problem_text).expect("fixture problem parses");
    (
        map,
        problem,
        CheckedPlan {
            paths,
            member_times,
        },
    )
}

fn chain_fixture() -> (GridMap, Problem, CheckedPlan) {
    corruption_fixture(
        "height 2\nwidth 6\n......\n......\n",
        "agent 0 start 0 0 park 0 5\n\
         agent 1 start 1 5 park 1 0\n\
         task 0 pickup 0 1 deliver 0 3 coalition 0\n\
         task 1 pickup 1 3 deliver 1 1 coalition 1\n\
         edge 0 1\n\
         allot 0 0\n\
         allot 1 1\n",
        vec![
            vec![v(0, 0), v(0, 1), v(0, 2), v(0, 3), v(0, 4), v(0, 5)],
            vec![
                v(1, 5),
                v(1, 4),
                v(1, 3),
                v(1, 3),
                v(1, 2),
                v(1, 1),
                v(1, 0),
            ],
        ],
        vec![vec![(0, 1, 3)], vec![(1, 3, 5)]],
    )
}

fn carry_fixture() -> (GridMap, Problem, CheckedPlan) {
    corruption_fixture(
        "height 2\nwidth 5\n.....\n.....\n",
        "agent 0 start 0 0 park 0 4\n\
         agent 1 start 1 0 park 1 4\n\
         task 0 pickup 0 1 deliver 0 3 coalition 0 1\n\
         allot 0 0\n\
         allot 1 0\n",
        vec![
            vec![
                v(0, 0),
                v(0, 1),
                v(0, 1),
                v(0, 2),
                v(0, 2),
                v(0, 3),
                v(0, 3),
                v(0, 4),
            ],
            vec![
                v(1, 0),
                v(1, 1),
                v(0, 1),
                v(0, 2),
                v(0, 2),
                v(0, 3),
                v(0, 3),
                v(1, 3),
                v(1, 4),
            ],
        ],
        vec![vec![(0, 2, 6)], vec![(0, 2, 6)]],
    )
}

fn chain_corruptions() -> Vec<Corruption> {
    vec![
        Corruption {
            label: "solo: path begins off the start cell",
            expect: ViolationKind::Discontinuity,
            mutate: |p| p.paths[0][0] = v(0, 1),
        },
        Corruption {
            label: "solo: a step teleports two cells",
            expect: ViolationKind::Discontinuity,
            mutate: |p| p.paths[0][2] = v(0, 4),
        },
        Corruption {
            label: "solo: a diagonal slips into the second path",
            expect: ViolationKind::Discontinuity,
            mutate: |p| p.paths[1][1] = v(0, 5),
        },
        Corruption {
            label: "solo: a detour crosses the parked agent",
            expect: ViolationKind::VertexCollision,
            mutate: |p| {
                p.paths[1] = vec![
                    v(1, 5),
                    v(1, 4),
                    v(1, 3),
                    v(1, 3),
                    v(1, 2),
                    v(1, 1),
                    v(1, 2),
                    v(1, 3),
                    v(1, 4),
                    v(1, 5),
                    v(0, 5),
                    v(1, 5),
                    v(1, 4),
                    v(1, 3),
                    v(1, 2),
                    v(1, 1),
                    v(1, 0),
                ];
            },
        },
        Corruption {
            label: "solo: the agents swap along one edge",
            expect: ViolationKind::EdgeCollision,
            mutate: |p| {
                p.paths[0] = vec![
                    v(0, 0),
                    v(0, 1),
                    v(0, 2),
                    v(0, 3),
                    v(1, 3),
                    v(1, 2),
                    v(1, 3),
                    v(1, 4),
                    v(1, 5),
                    v(0, 5),
                ];
                p.paths[1] = vec![
                    v(1, 5),
                    v(1, 4),
                    v(1, 3),
                    v(1, 3),
                    v(1, 2),
                    v(1, 3),
                    v(1, 2),
                    v(1, 1),
                    v(1, 0),
                ];
                p.member_times[1] = vec![(1, 3, 7)];
            },
        },
        Corruption {
            label: "solo: the successor picks up before the predecessor delivers",
            expect: ViolationKind::Precedence,
            mutate: |p| {
                p.paths[1] = vec![v(1, 5), v(1, 4), v(1, 3), v(1, 2), v(1, 1), v(1, 0)];
                p.member_times[1] = vec![(1, 2, 4)];
            },
        },
        Corruption {
            label: "solo: delivery claimed before pickup",
            expect: ViolationKind::Interval,
            mutate: |p| p.member_times[0] = vec![(0, 3, 1)],
        },
        Corruption {
            label: "solo: pickup claimed at the wrong cell",
            expect: ViolationKind::Interval,
            mutate: |p| p.member_times[0] = vec![(0, 2, 3)],
        },
        Corruption {
            label: "solo: task times dropped from the allotment",
            expect: ViolationKind::Interval,
            mutate: |p| p.member_times[0] = vec![],
        },
        Corruption {
            label: "solo: delivery claimed after arrival",
            expect: ViolationKind::Interval,
            mutate: |p| p.member_times[1] = vec![(1, 3, 9)],
        },
        Corruption {
            label: "solo: the path stops short of parking",
            expect: ViolationKind::Parking,
            mutate: |p| p.paths[0].truncate(5),
        },
    ]
}

fn carry_corruptions() -> Vec<Corruption> {
    vec![
        Corruption {
            label: "coalition: members claim different windows",
            expect: ViolationKind::CoalitionDesync,
            mutate: |p| p.member_times[0] = vec![(0, 1, 6)],
        },
        Corruption {
            label: "coalition: a member strays mid-carry",
            expect: ViolationKind::CoalitionDesync,
            mutate: |p| {
                p.paths[1] = vec![
                    v(1, 0),
                    v(1, 1),
                    v(0, 1),
                    v(0, 2),
                    v(1, 2),
                    v(0, 2),
                    v(0, 3),
                    v(1, 3),
                    v(1, 4),
                ];
            },
        },
        Corruption {
            label: "coalition: a member exits over the parked partner",
            expect: ViolationKind::VertexCollision,
            mutate: |p| {
                p.paths[1] = vec![
                    v(1, 0),
                    v(1, 1),
                    v(0, 1),
                    v(0, 2),
                    v(0, 2),
                    v(0, 3),
                    v(0, 3),
                    v(0, 4),
                    v(1, 4),
                ];
            },
        },
        Corruption {
            label: "coalition: the members swap after the carry",
            expect: ViolationKind::EdgeCollision,
            mutate: |p| {
                p.member_times[0] = vec![(0, 2, 5)];
                p.member_times[1] = vec![(0, 2, 5)];
                p.paths[1] = vec![
                    v(1, 0),
                    v(1, 1),
                    v(0, 1),
                    v(0, 2),
                    v(0, 2),
                    v(0, 3),
                    v(0, 4),
                    v(0, 3),
                    v(1, 3),
                    v(1, 4),
                ];
            },
        },
        Corruption {
            label: "coalition: a member forgets its task times",
            expect: ViolationKind::Interval,
            mutate: |p| p.member_times[1] = vec![],
        },
        Corruption {
            label: "coalition: a member stops short of parking",
            expect: ViolationKind::Parking,
            mutate: |p| p.paths[1].truncate(8),
        },
        Corruption {
            label: "coalition: a path begins off the start cell",
            expect: ViolationKind::Discontinuity,
            mutate: |p| p.paths[1][0] = v(1, 1),
        },
        Corruption {
            label: "coalition: a step teleports two cells",
            expect: ViolationKind::Discontinuity,
            mutate: |p| p.paths[0][1] = v(0, 2),
        },
        Corruption {
            label: "coalition: a member overshoots its parking cell",
            expect: ViolationKind::Parking,
            mutate: |p| p.paths[0].push(v(0, 3)),
        },
    ]
}

#[test]
fn corrupted_plans_are_rejected_with_the_right_kind() {
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for (fixture, corruptions) in [
        (chain_fixture(), chain_corruptions()),
        (carry_fixture(), carry_corruptions()),
    ] {
        let (map, problem, base) = fixture;
        let report = validate_solution(&map, &problem, &base);
        assert!(
            report.ok(),
            "baseline fixture plan invalid: {:?}",
            report.violations
        );
        for corruption in corruptions {
            checked += 1;
            let mut plan = base.clone();
            (corruption.mutate)(&mut plan);
            let report = validate_solution(&map, &problem, &plan);
            if report.ok() {
                failures.push(format!("{}: accepted", corruption.label));
            } else if !report
                .violations
                .iter()
                .any(|w| w.kind == corruption.expect)
            {
                failures.push(format!(
                    "{}: expected {:?}, got {:?}",
                    corruption.label, corruption.expect, report.violations
                ));
            }
        }
    }
    let detail = format!(
        "{checked} corrupted plans, {} misclassified{}; solver outputs are \
         validator-gated in every other suite",
        failures.len(),
        failures
            .first()
            .map(|f| format!(" (first: {f})"))
            .unwrap_or_default()
    );
    verdict(
        8,
        "corrupted plans are rejected with the right kind",
        checked == 20 && failures.is_empty(),
        &detail,
    );
}

fn masked(text: &str) -> String {
    text.lines()
        .filter(|line| !line.starts_with("runtime_ms"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn fixed_seeds_reproduce_byte_identical_artifacts() {
    let pools = small_pools();
    let mut failures = Vec::new();

    for seed in [11u64, 12, 13, 14] {
        let pool = &pools[seed as usize % pools.len()];
        let mode = if seed.is_multiple_of(2) {
            Mode::Cmapd
        } else {
            Mode::Assembly
        };
        let cfg = tiny_config(mode, 2, seed);
        let first =
            generate_instance(&pool.graph.map, &pool.dist, &cfg).map(|p| format_problem(&p));
        let second =
            generate_instance(&pool.graph.map, &pool.dist, &cfg).map(|p| format_problem(&p));
        if first.is_err() || first != second {
            failures.push(format!("seed {seed}: generation not reproducible"));
            continue;
        }

        let Ok(text) = first else { continue };
        let problem = parse_problem(&text).expect("generated problems reparse");
        let tasks = build_task_graph(&pool.graph.map, &pool.dist, &problem)
            .expect("generated instances build");
        let config = SolverConfig {
            timeout: Some(Duration::from_secs(30)),
            ..SolverConfig::default()
        };
        let optimal = |_: ()| {
            pccbs::solve(&pool.graph, &pool.dist, &problem, &tasks, &config)
                .map(|s| masked(&format_solution(&s)))
        };
        if optimal(()) != optimal(()) {
            failures.push(format!(
                "seed {seed}: optimal solver output not reproducible"
            ));
        }
        let baseline = |_: ()| {
            hcbs::solve(
                &pool.graph,
                &pool.dist,
                &problem,
                &tasks,
                Some(Duration::from_secs(30)),
            )
            .map(|s| masked(&format_solution(&s)))
        };
        if baseline(()) != baseline(()) {
            failures.push(format!("seed {seed}: baseline output not reproducible"));
        }
    }
    let detail = format!(
        "4 seeds, generation and both solvers compared byte-for-byte, {} mismatches{}",
        failures.len(),
        failures
            .first()
            .map(|f| format!(" (first: {f})"))
            .unwrap_or_default()
    );
    verdict(
        9,
        "fixed seeds reproduce byte-identical artifacts",
        failures.is_empty(),
        &detail,
    );
}

#[test]
fn preprocessing_matches_per_source_search_on_shipped_maps() {
    let mut mismatches = 0usize;
    let mut cells = 0usize;
    for name in [
        "maps/empty9.map",
        "maps/warehouse9.map",
        "maps/maze_gap9.map",
        "maps/maze_tunnel9.map",
    ] {
        let graph = MotionGraph::new(load_map(name));
        let table = DistanceTable::build(&graph);
        let map = &graph.map;
        for i in 0..map.num_cells() {
            let reference = bfs_distances(map, map.vertex_at(i));
            for (j, &want) in reference.iter().enumerate() {
                cells += 1;
                if table.get(map, map.vertex_at(i), map.vertex_at(j)) != want {
                    mismatches += 1;
                }
            }
        }
    }
    let detail = format!("4 maps, {cells} ordered pairs compared, {mismatches} mismatches");
    verdict(
        10,
        "preprocessing matches per-source search on shipped maps",
        mismatches == 0,
        &detail,
    );
}
