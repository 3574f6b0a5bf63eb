//! Independent plan validation and a brute-force joint-state oracle.
//!
//! Nothing here touches solver data structures: both checkers work from the
//! problem description and the gridworld predicates alone, so they can
//! arbitrate between solvers. The oracle enumerates the full joint state
//! space breadth-first and is only meant for desk-scale ground truth.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::gridworld::{is_edge_collision, is_vertex_collision, GridMap, Vertex};
use crate::taskgraph::{AgentId, Problem, TaskId};

/// A plan in checkable form: one position per timestep per agent, and per
/// coalition member the times it claims to have executed each allotted task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedPlan {
    /// Indexed by agent; `paths[a][t]` is the position at timestep t, the
    /// last entry is the arrival at parking. Agents rest there afterwards.
    pub paths: Vec<Vec<Vertex>>,
    /// Indexed by agent, in allotment order: (task, pickup time, delivery time).
    pub member_times: Vec<Vec<(TaskId, u32, u32)>>,
}

impl CheckedPlan {
    /// Position at t, resting at the final cell beyond arrival.
    pub fn at(&self, agent: AgentId, t: u32) -> Vertex {
        let path = &self.paths[agent];
        path[(t as usize).min(path.len() - 1)]
    }

    pub fn arrival(&self, agent: AgentId) -> u32 {
        self.paths[agent].len() as u32 - 1
    }

    pub fn makespan(&self) -> u32 {
        (0..self.paths.len())
            .map(|a| self.arrival(a))
            .max()
            .unwrap_or(0)
    }

    /// The task the agent is executing at t, if any (pickup and delivery
    /// timesteps inclusive).
    fn carrying_at(&self, agent: AgentId, t: u32) -> Option<TaskId> {
        self.member_times[agent]
            .iter()
            .find(|&&(_, pu, dl)| pu <= t && t <= dl)
            .map(|&(task, _, _)| task)
    }

    /// True when x and y are both executing the same task at t, which
    /// exempts them from collision checks.
    fn shared_task_at(&self, x: AgentId, y: AgentId, t: u32) -> bool {
        match (self.carrying_at(x, t), self.carrying_at(y, t)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Discontinuity,
    VertexCollision,
    EdgeCollision,
    Precedence,
    CoalitionDesync,
    Interval,
    Parking,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub time: Option<u32>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, time: impl Into<Option<u32>>, detail: String) {
        self.violations.push(Violation {
            kind,
            time: time.into(),
            detail,
        });
    }
}

/// Checks a plan against the problem from first principles: path legality,
/// collision freedom with the shared-task exemption, precedence edges,
/// coalition unison, allotment order, and parking.
pub fn validate_solution(map: &GridMap, problem: &Problem, plan: &CheckedPlan) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = problem.agents.len();
    if plan.paths.len() != n || plan.member_times.len() != n {
        report.push(
            ViolationKind::Discontinuity,
            None,
            format!("plan covers {} agents, problem has {n}", plan.paths.len()),
        );
        return report;
    }

    for agent in &problem.agents {
        let a = agent.id;
        let path = &plan.paths[a];
        if path.is_empty() {
            report.push(
                ViolationKind::Discontinuity,
                None,
                format!("agent {a}: empty path"),
            );
            continue;
        }
        if path[0] != agent.start {
            report.push(
                ViolationKind::Discontinuity,
                0,
                format!(
                    "agent {a}: path begins at {} instead of {}",
                    path[0], agent.start
                ),
            );
        }
        for t in 0..path.len() - 1 {
            if !map.is_legal_step(path[t], path[t + 1]) {
                report.push(
                    ViolationKind::Discontinuity,
                    t as u32,
                    format!("agent {a}: illegal step {} to {}", path[t], path[t + 1]),
                );
            }
        }
        if *path.last().unwrap() != agent.parking {
            report.push(
                ViolationKind::Parking,
                plan.arrival(a),
                format!(
                    "agent {a}: ends at {} instead of parking {}",
                    path.last().unwrap(),
                    agent.parking
                ),
            );
        }
    }
    if plan.paths.iter().any(|p| p.is_empty()) {
        return report;
    }

    check_events(problem, plan, &mut report);
    check_collisions(plan, &mut report);
    check_precedence(problem, plan, &mut report);
    report
}

fn check_events(problem: &Problem, plan: &CheckedPlan, report: &mut ValidationReport) {
    for a in 0..problem.agents.len() {
        let allotment = &problem.allotments[a];
        let times = &plan.member_times[a];
        if times.len() != allotment.len()
            || times
                .iter()
                .zip(allotment)
                .any(|(&(task, _, _), &want)| task != want)
        {
            report.push(
                ViolationKind::Interval,
                None,
                format!("agent {a}: task times do not match its allotment"),
            );
            continue;
        }
        let mut prev_delivery = 0;
        for &(task, pickup, delivery) in times {
            let spec = &problem.tasks[task];
            if delivery < pickup {
                report.push(
                    ViolationKind::Interval,
                    pickup,
                    format!(
                        "agent {a}: task {task} delivered at {delivery} before pickup {pickup}"
                    ),
                );
            }
            if pickup < prev_delivery {
                report.push(
                    ViolationKind::Interval,
                    pickup,
                    format!("agent {a}: task {task} picked up at {pickup} before previous delivery {prev_delivery}"),
                );
            }
            prev_delivery = delivery;
            if delivery > plan.arrival(a) {
                report.push(
                    ViolationKind::Interval,
                    delivery,
                    format!(
                        "agent {a}: task {task} delivered after arrival {}",
                        plan.arrival(a)
                    ),
                );
            }
            if plan.at(a, pickup) != spec.pickup {
                report.push(
                    ViolationKind::Interval,
                    pickup,
                    format!(
                        "agent {a}: not at task {task} pickup {} at {pickup}",
                        spec.pickup
                    ),
                );
            }
            if plan.at(a, delivery) != spec.delivery {
                report.push(
                    ViolationKind::Interval,
                    delivery,
                    format!(
                        "agent {a}: not at task {task} delivery {} at {delivery}",
                        spec.delivery
                    ),
                );
            }
        }
    }

    for task in &problem.tasks {
        let mut member_windows = Vec::new();
        for &m in &task.coalition {
            if let Some(&(_, pu, dl)) = plan.member_times[m].iter().find(|&&(t, _, _)| t == task.id)
            {
                member_windows.push((m, pu, dl));
            }
        }
        if member_windows.len() != task.coalition.len() {
            continue;
        }
        let (_, pu0, dl0) = member_windows[0];
        for &(m, pu, dl) in &member_windows[1..] {
            if pu != pu0 || dl != dl0 {
                report.push(
                    ViolationKind::CoalitionDesync,
                    pu.min(pu0),
                    format!(
                        "task {}: member {} executes over [{pu},{dl}], member {} over [{pu0},{dl0}]",
                        task.id, m, member_windows[0].0
                    ),
                );
            }
        }
        if member_windows
            .iter()
            .all(|&(_, pu, dl)| pu == pu0 && dl == dl0)
        {
            for t in pu0..=dl0 {
                let here = plan.at(member_windows[0].0, t);
                for &(m, _, _) in &member_windows[1..] {
                    if plan.at(m, t) != here {
                        report.push(
                            ViolationKind::CoalitionDesync,
                            t,
                            format!(
                                "task {}: members {} and {} apart mid-carry",
                                task.id, member_windows[0].0, m
                            ),
                        );
                    }
                }
            }
        }
    }
}

fn check_collisions(plan: &CheckedPlan, report: &mut ValidationReport) {
    let n = plan.paths.len();
    let horizon = plan.makespan();
    for t in 0..=horizon {
        for x in 0..n {
            for y in x + 1..n {
                let shared = plan.shared_task_at(x, y, t);
                if is_vertex_collision(plan.at(x, t), plan.at(y, t), shared) {
                    report.push(
                        ViolationKind::VertexCollision,
                        t,
                        format!("agents {x} and {y} share {} at {t}", plan.at(x, t)),
                    );
                }
                if t < horizon
                    && is_edge_collision(
                        plan.at(x, t),
                        plan.at(x, t + 1),
                        plan.at(y, t),
                        plan.at(y, t + 1),
                        shared,
                    )
                {
                    report.push(
                        ViolationKind::EdgeCollision,
                        t,
                        format!(
                            "agents {x} and {y} swap {} and {} at {t}",
                            plan.at(x, t),
                            plan.at(y, t)
                        ),
                    );
                }
            }
        }
    }
}

fn check_precedence(problem: &Problem, plan: &CheckedPlan, report: &mut ValidationReport) {
    let window = |task: TaskId| -> Option<(u32, u32)> {
        let members = &problem.tasks[task].coalition;
        let mut earliest_pickup = u32::MAX;
        let mut latest_delivery = 0;
        for &m in members {
            let &(_, pu, dl) = plan.member_times[m].iter().find(|&&(t, _, _)| t == task)?;
            earliest_pickup = earliest_pickup.min(pu);
            latest_delivery = latest_delivery.max(dl);
        }
        Some((earliest_pickup, latest_delivery))
    };
    for &(a, b) in &problem.edges {
        if let (Some((_, end_a)), Some((start_b, _))) = (window(a), window(b)) {
            if end_a > start_b {
                report.push(
                    ViolationKind::Precedence,
                    start_b,
                    format!("task {a} delivered at {end_a} after task {b} started at {start_b}"),
                );
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Maximum joint states expanded before giving up.
    pub budget: u64,
    /// Latest timestep explored; defaults to a bound past which no optimal
    /// solution can exist.
    pub horizon: Option<u32>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            budget: 10_000_000,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleOutcome {
    Solved { makespan: u32 },
    Infeasible,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle budget of {0} expanded joint states exceeded")]
    BudgetExceeded(u64),
}

const PENDING: u8 = 0;
const ACTIVE: u8 = 1;
const DONE: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct JointState {
    positions: Vec<Vertex>,
    status: Vec<u8>,
}

/// Minimum makespan by exhaustive breadth-first search over joint states.
pub fn oracle_makespan(
    map: &GridMap,
    problem: &Problem,
    cfg: OracleConfig,
) -> Result<OracleOutcome, OracleError> {
    Ok(match oracle_solve(map, problem, cfg)? {
        Some((_, makespan)) => OracleOutcome::Solved { makespan },
        None => OracleOutcome::Infeasible,
    })
}

/// As [`oracle_makespan`], but also reconstructs one optimal plan.
pub fn oracle_solve(
    map: &GridMap,
    problem: &Problem,
    cfg: OracleConfig,
) -> Result<Option<(CheckedPlan, u32)>, OracleError> {
    let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(map, problem));
    let start = JointState {
        positions: problem.agents.iter().map(|a| a.start).collect(),
        status: vec![PENDING; problem.tasks.len()],
    };

    // Arena of discovered states with parent links for plan reconstruction.
    let mut arena: Vec<(JointState, usize, u32)> = Vec::new();
    let mut seen: HashMap<JointState, usize> = HashMap::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut expanded: u64 = 0;

    for state in fire_events(problem, &start) {
        if collision_free(problem, &start.status, &state) && !seen.contains_key(&state) {
            let idx = arena.len();
            arena.push((state.clone(), usize::MAX, 0));
            seen.insert(state.clone(), idx);
            if is_goal(problem, &state) {
                return Ok(Some(reconstruct(problem, &arena, idx)));
            }
            queue.push_back(idx);
        }
    }

    while let Some(idx) = queue.pop_front() {
        expanded += 1;
        if expanded > cfg.budget {
            return Err(OracleError::BudgetExceeded(cfg.budget));
        }
        let t = arena[idx].2;
        if t >= horizon {
            continue;
        }
        let current = arena[idx].0.clone();
        for moved in joint_moves(map, problem, &current) {
            for next in fire_events(problem, &moved) {
                if !collision_free(problem, &moved.status, &next) {
                    continue;
                }
                if seen.contains_key(&next) {
                    continue;
                }
                let new_idx = arena.len();
                arena.push((next.clone(), idx, t + 1));
                seen.insert(next.clone(), new_idx);
                if is_goal(problem, &next) {
                    return Ok(Some(reconstruct(problem, &arena, new_idx)));
                }
                queue.push_back(new_idx);
            }
        }
    }
    Ok(None)
}

/// Conservative bound on the last timestep of any optimal solution.
pub fn default_horizon(map: &GridMap, problem: &Problem) -> u32 {
    let free = map.free_vertices().len() as u64;
    let bound =
        free * (problem.num_tasks() as u64 + 1) * (problem.max_coalition_degree() as u64 + 1);
    bound.min(u32::MAX as u64 - 1) as u32
}

fn is_goal(problem: &Problem, state: &JointState) -> bool {
    state.status.iter().all(|&s| s == DONE)
        && state
            .positions
            .iter()
            .zip(&problem.agents)
            .all(|(&p, agent)| p == agent.parking)
}

/// All joint successor positions: coalition members of an active task move
/// as one unit, everyone else moves independently. Swap collisions are
/// rejected here; vertex collisions wait until after event firing, where the
/// shared-task exemption is decidable.
fn joint_moves(map: &GridMap, problem: &Problem, state: &JointState) -> Vec<JointState> {
    let n = problem.agents.len();
    let mut unit_of_agent = vec![usize::MAX; n];
    let mut units: Vec<(Vec<AgentId>, Vertex)> = Vec::new();
    for (task, &status) in state.status.iter().enumerate() {
        if status == ACTIVE {
            let members = problem.tasks[task].coalition.clone();
            let cell = state.positions[members[0]];
            debug_assert!(members.iter().all(|&m| state.positions[m] == cell));
            for &m in &members {
                unit_of_agent[m] = units.len();
            }
            units.push((members, cell));
        }
    }
    for (a, unit) in unit_of_agent.iter_mut().enumerate() {
        if *unit == usize::MAX {
            *unit = units.len();
            units.push((vec![a], state.positions[a]));
        }
    }

    let options: Vec<Vec<Vertex>> = units
        .iter()
        .map(|&(_, cell)| {
            let mut opts = vec![cell];
            opts.extend(map.neighbors(cell));
            opts
        })
        .collect();

    let mut out = Vec::new();
    let mut choice = vec![0usize; units.len()];
    'next: loop {
        let mut positions = state.positions.clone();
        for (u, (members, _)) in units.iter().enumerate() {
            for &m in members {
                positions[m] = options[u][choice[u]];
            }
        }
        let mut legal = true;
        'pairs: for x in 0..n {
            for y in x + 1..n {
                if is_edge_collision(
                    state.positions[x],
                    positions[x],
                    state.positions[y],
                    positions[y],
                    false,
                ) {
                    legal = false;
                    break 'pairs;
                }
            }
        }
        if legal {
            out.push(JointState {
                positions,
                status: state.status.clone(),
            });
        }
        for u in 0..units.len() {
            choice[u] += 1;
            if choice[u] < options[u].len() {
                continue 'next;
            }
            choice[u] = 0;
        }
        break;
    }
    out
}

/// Every task-status vector reachable by firing pickups and deliveries at
/// the current timestep, including firing nothing. Deliveries enable
/// same-timestep successor pickups.
fn fire_events(problem: &Problem, state: &JointState) -> Vec<JointState> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([state.status.clone()]);
    seen.insert(state.status.clone());
    let mut out = Vec::new();
    while let Some(status) = queue.pop_front() {
        out.push(JointState {
            positions: state.positions.clone(),
            status: status.clone(),
        });
        for task in &problem.tasks {
            let fired = match status[task.id] {
                PENDING if pickup_ready(problem, state, &status, task.id) => ACTIVE,
                ACTIVE if state.positions[task.coalition[0]] == task.delivery => DONE,
                _ => continue,
            };
            let mut next = status.clone();
            next[task.id] = fired;
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    out
}

fn pickup_ready(problem: &Problem, state: &JointState, status: &[u8], task: TaskId) -> bool {
    let spec = &problem.tasks[task];
    if spec
        .coalition
        .iter()
        .any(|&m| state.positions[m] != spec.pickup)
    {
        return false;
    }
    for &(a, b) in &problem.edges {
        if b == task && status[a] != DONE {
            return false;
        }
    }
    spec.coalition.iter().all(|&m| {
        problem.allotments[m]
            .iter()
            .take_while(|&&t| t != task)
            .all(|&t| status[t] == DONE)
    })
}

/// Vertex-collision check after events fired: co-located agents are exempt
/// only when a shared task is being executed at this timestep, deliveries at
/// this very timestep included.
fn collision_free(problem: &Problem, before: &[u8], state: &JointState) -> bool {
    let n = state.positions.len();
    for x in 0..n {
        for y in x + 1..n {
            if state.positions[x] != state.positions[y] {
                continue;
            }
            let exempt = problem.tasks.iter().any(|task| {
                task.coalition.contains(&x)
                    && task.coalition.contains(&y)
                    && (state.status[task.id] == ACTIVE
                        || (state.status[task.id] == DONE && before[task.id] == ACTIVE))
            });
            if is_vertex_collision(state.positions[x], state.positions[y], exempt) {
                return false;
            }
        }
    }
    true
}

fn reconstruct(
    problem: &Problem,
    arena: &[(JointState, usize, u32)],
    goal: usize,
) -> (CheckedPlan, u32) {
    let mut chain = Vec::new();
    let mut idx = goal;
    loop {
        chain.push(&arena[idx].0);
        if arena[idx].1 == usize::MAX {
            break;
        }
        idx = arena[idx].1;
    }
    chain.reverse();
    let makespan = arena[goal].2;

    let n = problem.agents.len();
    let paths: Vec<Vec<Vertex>> = (0..n)
        .map(|a| chain.iter().map(|s| s.positions[a]).collect())
        .collect();
    let mut pickup = vec![0u32; problem.tasks.len()];
    let mut delivery = vec![0u32; problem.tasks.len()];
    for (t, state) in chain.iter().enumerate() {
        for (task, &s) in state.status.iter().enumerate() {
            let prev = if t == 0 {
                PENDING
            } else {
                chain[t - 1].status[task]
            };
            if s >= ACTIVE && prev == PENDING {
                pickup[task] = t as u32;
            }
            if s == DONE && prev != DONE {
                delivery[task] = t as u32;
            }
        }
    }
    let member_times = (0..n)
        .map(|a| {
            problem.allotments[a]
                .iter()
                .map(|&t| (t, pickup[t], delivery[t]))
                .collect()
        })
        .collect();
    (
        CheckedPlan {
            paths,
            member_times,
        },
        makespan,
    )
}
