//! Conflict-tree search over task intervals and path constraints.
//!
//! The best node by makespan is expanded first. Schedule repairs (interval
//! splits) are applied before collision repairs, and both kinds of child
//! partition the parent's solution space, so the first conflict-free node
//! popped is makespan-optimal.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::gridworld::{
    is_edge_collision, is_vertex_collision, DistanceTable, MotionGraph, Vertex,
};
use crate::lowlevel::{
    agent_events, plan_agent_path, AgentPath, Constraint, ConstraintLoc, PlanInput, TaskTimes,
};
use crate::taskgraph::{
    initialize_intervals, search_horizon, update_intervals, AgentId, Interval, IntervalTable,
    NodeId, NodeKind, Problem, TaskGraph, TaskId,
};
use crate::verify::CheckedPlan;

/// Pivot rule for interval splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    /// Split at the latest observed violating timestep.
    #[default]
    Max,
    /// Split halfway between the earliest consistent and latest violating
    /// timestep.
    Midpoint,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub timeout: Option<Duration>,
    pub split_rule: SplitRule,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            timeout: None,
            split_rule: SplitRule::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Unsolved {
    #[error("timed out")]
    Timeout,
    #[error("search space exhausted")]
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct SolveStats {
    pub algorithm: &'static str,
    pub ct_nodes: u64,
    pub ll_expansions: u64,
    pub runtime_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub makespan: u32,
    pub paths: Vec<AgentPath>,
    pub stats: SolveStats,
}

impl Solution {
    pub fn checked_plan(&self) -> CheckedPlan {
        CheckedPlan {
            paths: self.paths.iter().map(|p| p.positions.clone()).collect(),
            member_times: self
                .paths
                .iter()
                .map(|p| {
                    p.events
                        .iter()
                        .map(|e| (e.task, e.pickup, e.delivery))
                        .collect()
                })
                .collect(),
        }
    }
}

/// Splits `interval` at `split` into `[min, split-1]` and `[split, max]`.
/// A pivot beyond the window is clamped to its upper bound first, pinning
/// the upper child to the final timestep. The low child is empty when the
/// clamped pivot equals the window minimum.
pub fn split_interval(interval: Interval, split: u32) -> (Interval, Interval) {
    let s = split.min(interval.max_time).max(interval.min_time);
    let low = if s == 0 {
        Interval::new(1, 0)
    } else {
        Interval::new(interval.min_time, s - 1)
    };
    (low, Interval::new(s, interval.max_time))
}

/// Pivot timestep for a split whose observations span `earliest` (consistent)
/// to `latest` (violating). Both rules return a value in `(earliest, latest]`
/// whenever `earliest < latest`, so both children strictly shrink.
pub fn precedence_split_time(rule: SplitRule, earliest: u32, latest: u32) -> u32 {
    match rule {
        SplitRule::Max => latest,
        SplitRule::Midpoint => earliest + latest.saturating_sub(earliest).div_ceil(2),
    }
}

/// How to repair coalition members standing on different cells at `t` while
/// all sharing the task's pickup and delivery times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DivergenceFix {
    /// Split the start interval at the pivot: one child finishes gathering by
    /// t, the other starts after the divergence.
    SplitStart(u32),
    /// Split the end interval at the pivot, the mirror case.
    SplitEnd(u32),
    /// Start and end windows pin every permitted execution across t, so the
    /// members cannot both keep their cells: ban one cell per child.
    BanPair,
}

fn divergence_fix(start: Interval, end: Interval, t: u32) -> DivergenceFix {
    if start.max_time > t {
        DivergenceFix::SplitStart(t + 1)
    } else if end.min_time < t {
        DivergenceFix::SplitEnd(t)
    } else {
        DivergenceFix::BanPair
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PrecedenceIssue {
    /// Members fire the pickup at different timesteps.
    PickupDesync { earliest: u32, latest: u32 },
    /// Members fire the delivery at different timesteps.
    DeliveryDesync { earliest: u32, latest: u32 },
    /// Members sit on different cells mid-execution.
    Divergence {
        time: u32,
        first: AgentId,
        second: AgentId,
        first_cell: Vertex,
        second_cell: Vertex,
    },
    /// A predecessor task ends after this task's observed start.
    EdgeOverrun { start: u32, latest_end: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PrecedenceConflict {
    task: TaskId,
    issue: PrecedenceIssue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CollisionConflict {
    first: AgentId,
    second: AgentId,
    time: u32,
    first_loc: ConstraintLoc,
    second_loc: ConstraintLoc,
}

struct CtNode {
    constraints: Vec<Constraint>,
    intervals: IntervalTable,
    paths: Vec<AgentPath>,
    /// Max of own solution makespan and the parent's cost, so popped costs
    /// are non-decreasing while staying a lower bound along any branch that
    /// still permits an optimal solution.
    cost: u32,
    conflicts: u32,
}

struct Search<'a> {
    graph: &'a MotionGraph,
    dist: &'a DistanceTable,
    problem: &'a Problem,
    tasks: &'a TaskGraph,
    split_rule: SplitRule,
    horizon: u32,
    deadline: Option<Instant>,
    open: BinaryHeap<Reverse<(u32, u32, u64)>>,
    arena: Vec<Option<CtNode>>,
    ll_expansions: u64,
}

pub fn solve(
    graph: &MotionGraph,
    dist: &DistanceTable,
    problem: &Problem,
    tasks: &TaskGraph,
    config: &SolverConfig,
) -> Result<Solution, Unsolved> {
    let started = Instant::now();
    let mut search = Search {
        graph,
        dist,
        problem,
        tasks,
        split_rule: config.split_rule,
        horizon: search_horizon(&graph.map, problem),
        deadline: config.timeout.map(|t| started + t),
        open: BinaryHeap::new(),
        arena: Vec::new(),
        ll_expansions: 0,
    };
    let node = search.run()?;
    let solution = Solution {
        makespan: makespan_of(&node.paths),
        paths: node.paths,
        stats: SolveStats {
            algorithm: "pc-cbs",
            ct_nodes: search.arena.len() as u64,
            ll_expansions: search.ll_expansions,
            runtime_ms: started.elapsed().as_millis() as u64,
        },
    };
    debug_assert!(
        crate::verify::validate_solution(&graph.map, problem, &solution.checked_plan()).ok()
    );
    Ok(solution)
}

fn makespan_of(paths: &[AgentPath]) -> u32 {
    paths.iter().map(|p| p.arrival()).max().unwrap_or(0)
}

fn shares_task(paths: &[AgentPath], x: usize, y: usize, t: u32) -> bool {
    match (paths[x].carrying_at(t), paths[y].carrying_at(t)) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

impl<'a> Search<'a> {
    fn run(&mut self) -> Result<CtNode, Unsolved> {
        self.build_root()?;
        let mut last_cost = 0;
        while let Some(Reverse((cost, _, seq))) = self.open.pop() {
            if self.past_deadline() {
                return Err(Unsolved::Timeout);
            }
            let node = self.arena[seq as usize]
                .take()
                .expect("open entries are live");
            debug_assert!(cost >= last_cost);
            last_cost = cost;

            if let Some(conflict) = self.first_precedence_conflict(&node) {
                self.resolve_precedence(&node, conflict)?;
                continue;
            }
            if let Some(conflict) = first_collision(&node.paths) {
                self.resolve_collision(&node, conflict)?;
                continue;
            }
            return Ok(node);
        }
        Err(Unsolved::Exhausted)
    }

    fn past_deadline(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() > d)
    }

    fn push(&mut self, node: CtNode) {
        let seq = self.arena.len() as u64;
        self.open.push(Reverse((node.cost, node.conflicts, seq)));
        self.arena.push(Some(node));
    }

    fn plan_agent(
        &mut self,
        agent: AgentId,
        intervals: &IntervalTable,
        constraints: &[Constraint],
        others: &[AgentPath],
        bound: u32,
    ) -> Result<Option<AgentPath>, Unsolved> {
        if self.past_deadline() {
            return Err(Unsolved::Timeout);
        }
        let events = agent_events(self.problem, self.tasks, intervals, agent);
        let result = plan_agent_path(&PlanInput {
            graph: self.graph,
            dist: self.dist,
            problem: self.problem,
            agent,
            events: &events,
            constraints,
            others,
            makespan_bound: bound,
            horizon: self.horizon,
        });
        self.ll_expansions += result.expanded;
        Ok(result.path)
    }

    fn build_root(&mut self) -> Result<(), Unsolved> {
        let intervals = match initialize_intervals(self.tasks) {
            Ok(table) => table,
            Err(_) => return Err(Unsolved::Exhausted),
        };
        let n = self.problem.num_agents();
        let map = &self.graph.map;

        // Collision-free completion estimates: the last task's earliest end
        // plus the runout to parking, straight from the interval table.
        let mut completion = vec![0u32; n];
        let mut arrival_est = vec![0u32; n];
        for a in 0..n {
            let park = self.problem.agents[a].parking;
            match self.problem.allotments[a].last() {
                Some(&task) => {
                    let carry = self.tasks.carry_node[task];
                    completion[a] = intervals[carry].end.min_time;
                    let runout = self.dist.get(map, self.problem.tasks[task].delivery, park);
                    arrival_est[a] = completion[a].saturating_add(runout);
                }
                None => arrival_est[a] = self.dist.get(map, self.problem.agents[a].start, park),
            }
        }

        let mut order: Vec<AgentId> = (0..n).collect();
        order.sort_by_key(|&a| (Reverse(completion[a]), a));

        let mut planned: Vec<Option<AgentPath>> = vec![None; n];
        for &a in &order {
            let others: Vec<AgentPath> = planned
                .iter()
                .flatten()
                .filter(|p| p.agent != a)
                .cloned()
                .collect();
            let bound = (0..n)
                .filter(|&o| o != a)
                .map(|o| arrival_est[o])
                .max()
                .unwrap_or(0);
            match self.plan_agent(a, &intervals, &[], &others, bound)? {
                Some(path) => {
                    arrival_est[a] = path.arrival();
                    planned[a] = Some(path);
                }
                None => return Err(Unsolved::Exhausted),
            }
        }

        let paths: Vec<AgentPath> = planned
            .into_iter()
            .map(|p| p.expect("all planned"))
            .collect();
        let node = CtNode {
            constraints: Vec::new(),
            intervals,
            cost: makespan_of(&paths),
            conflicts: count_conflicts(self.problem, self.tasks, &paths),
            paths,
        };
        self.push(node);
        Ok(())
    }

    /// Replans every agent in `agents` against the freshest sibling paths,
    /// most loaded first. Returns false when any of them has no path left.
    fn replan(&mut self, node: &mut CtNode, agents: &BTreeSet<AgentId>) -> Result<bool, Unsolved> {
        let mut order: Vec<AgentId> = agents.iter().copied().collect();
        order.sort_by_key(|&a| (Reverse(node.paths[a].arrival()), a));
        for &a in &order {
            let others: Vec<AgentPath> = node
                .paths
                .iter()
                .filter(|p| p.agent != a)
                .cloned()
                .collect();
            let bound = others.iter().map(|p| p.arrival()).max().unwrap_or(0);
            match self.plan_agent(a, &node.intervals, &node.constraints, &others, bound)? {
                Some(path) => node.paths[a] = path,
                None => return Ok(false),
            }
        }
        node.cost = node.cost.max(makespan_of(&node.paths));
        node.conflicts = count_conflicts(self.problem, self.tasks, &node.paths);
        Ok(true)
    }

    /// First task, in topological order, whose observed execution is
    /// inconsistent: members out of sync, members apart mid-execution, or a
    /// predecessor ending past the observed start.
    fn first_precedence_conflict(&self, node: &CtNode) -> Option<PrecedenceConflict> {
        for &id in &self.tasks.topo {
            if self.tasks.nodes[id].kind != NodeKind::Carry {
                continue;
            }
            let task = self.tasks.nodes[id].task;
            let members = &self.problem.tasks[task].coalition;
            let times: Vec<TaskTimes> = members
                .iter()
                .map(|&m| {
                    *node.paths[m]
                        .events
                        .iter()
                        .find(|e| e.task == task)
                        .expect("member path covers its allotment")
                })
                .collect();

            let pickups: Vec<u32> = times.iter().map(|e| e.pickup).collect();
            if pickups.iter().any(|&p| p != pickups[0]) {
                let earliest = *pickups.iter().min().expect("nonempty");
                let latest = *pickups.iter().max().expect("nonempty");
                return Some(PrecedenceConflict {
                    task,
                    issue: PrecedenceIssue::PickupDesync { earliest, latest },
                });
            }
            let deliveries: Vec<u32> = times.iter().map(|e| e.delivery).collect();
            if deliveries.iter().any(|&d| d != deliveries[0]) {
                let earliest = *deliveries.iter().min().expect("nonempty");
                let latest = *deliveries.iter().max().expect("nonempty");
                return Some(PrecedenceConflict {
                    task,
                    issue: PrecedenceIssue::DeliveryDesync { earliest, latest },
                });
            }
            for t in pickups[0]..=deliveries[0] {
                for w in 1..members.len() {
                    let (a, b) = (members[0], members[w]);
                    let (va, vb) = (node.paths[a].at(t), node.paths[b].at(t));
                    if va != vb {
                        return Some(PrecedenceConflict {
                            task,
                            issue: PrecedenceIssue::Divergence {
                                time: t,
                                first: a,
                                second: b,
                                first_cell: va,
                                second_cell: vb,
                            },
                        });
                    }
                }
            }
            let latest_end = self.tasks.preds[id]
                .iter()
                .filter(|&&p| self.tasks.nodes[p].kind == NodeKind::Carry)
                .map(|&p| observed_delivery(&node.paths, self.problem, self.tasks.nodes[p].task))
                .filter(|&end| end > pickups[0])
                .max();
            if let Some(latest_end) = latest_end {
                return Some(PrecedenceConflict {
                    task,
                    issue: PrecedenceIssue::EdgeOverrun {
                        start: pickups[0],
                        latest_end,
                    },
                });
            }
        }
        None
    }

    fn resolve_precedence(
        &mut self,
        parent: &CtNode,
        conflict: PrecedenceConflict,
    ) -> Result<(), Unsolved> {
        let carry = self.tasks.carry_node[conflict.task];
        let start = parent.intervals[carry].start;
        let end = parent.intervals[carry].end;
        match conflict.issue {
            PrecedenceIssue::PickupDesync { earliest, latest } => {
                let pivot = precedence_split_time(self.split_rule, earliest, latest);
                self.split_children(parent, carry, true, pivot)
            }
            PrecedenceIssue::DeliveryDesync { earliest, latest } => {
                let pivot = precedence_split_time(self.split_rule, earliest, latest);
                self.split_children(parent, carry, false, pivot)
            }
            PrecedenceIssue::EdgeOverrun { start, latest_end } => {
                let pivot = precedence_split_time(self.split_rule, start, latest_end);
                self.split_children(parent, carry, true, pivot)
            }
            PrecedenceIssue::Divergence {
                time,
                first,
                second,
                first_cell,
                second_cell,
            } => {
                match divergence_fix(start, end, time) {
                    DivergenceFix::SplitStart(pivot) => {
                        self.split_children(parent, carry, true, pivot)
                    }
                    DivergenceFix::SplitEnd(pivot) => {
                        self.split_children(parent, carry, false, pivot)
                    }
                    DivergenceFix::BanPair => {
                        // Every permitted execution covers `time`, so in any
                        // remaining solution the members share one cell then:
                        // at least one of the two observed cells is given up.
                        for (agent, cell) in [(first, first_cell), (second, second_cell)] {
                            let ban = Constraint {
                                agent,
                                loc: ConstraintLoc::Vertex(cell),
                                time,
                                partner: None,
                            };
                            self.constraint_child(parent, ban)?;
                        }
                        Ok(())
                    }
                }
            }
        }
    }

    /// Two children with the task's start or end interval split at `pivot`;
    /// empty or unpropagatable children are dropped.
    fn split_children(
        &mut self,
        parent: &CtNode,
        carry: NodeId,
        on_start: bool,
        pivot: u32,
    ) -> Result<(), Unsolved> {
        let interval = if on_start {
            parent.intervals[carry].start
        } else {
            parent.intervals[carry].end
        };
        debug_assert!(pivot > interval.min_time);
        let (low, high) = split_interval(interval, pivot);
        for child_interval in [low, high] {
            if child_interval.is_empty() {
                continue;
            }
            let mut intervals = parent.intervals.clone();
            if on_start {
                intervals[carry].start = child_interval;
            } else {
                intervals[carry].end = child_interval;
            }
            let changed = match update_intervals(self.tasks, &mut intervals) {
                Ok(changed) => changed,
                Err(_) => continue,
            };
            let mut affected: BTreeSet<AgentId> = BTreeSet::new();
            for node in changed.into_iter().chain([carry]) {
                affected.extend(self.tasks.owners(self.problem, node).iter().copied());
            }
            let mut child = CtNode {
                constraints: parent.constraints.clone(),
                intervals,
                paths: parent.paths.clone(),
                cost: parent.cost,
                conflicts: 0,
            };
            if self.replan(&mut child, &affected)? {
                self.push(child);
            }
        }
        Ok(())
    }

    fn resolve_collision(
        &mut self,
        parent: &CtNode,
        conflict: CollisionConflict,
    ) -> Result<(), Unsolved> {
        let sides = [
            (conflict.first, conflict.first_loc, conflict.second),
            (conflict.second, conflict.second_loc, conflict.first),
        ];
        for (agent, loc, partner) in sides {
            let ban = Constraint {
                agent,
                loc,
                time: conflict.time,
                partner: Some(partner),
            };
            self.constraint_child(parent, ban)?;
        }
        Ok(())
    }

    fn constraint_child(&mut self, parent: &CtNode, ban: Constraint) -> Result<(), Unsolved> {
        let mut child = CtNode {
            constraints: parent.constraints.iter().copied().chain([ban]).collect(),
            intervals: parent.intervals.clone(),
            paths: parent.paths.clone(),
            cost: parent.cost,
            conflicts: 0,
        };
        let affected: BTreeSet<AgentId> = [ban.agent].into_iter().collect();
        if self.replan(&mut child, &affected)? {
            self.push(child);
        }
        Ok(())
    }
}

fn observed_delivery(paths: &[AgentPath], problem: &Problem, task: TaskId) -> u32 {
    let member = problem.tasks[task].coalition[0];
    paths[member]
        .events
        .iter()
        .find(|e| e.task == task)
        .expect("member path covers its allotment")
        .delivery
}

/// Earliest collision between agents not sharing an active task, vertex
/// checks before edge checks, pairs in index order.
fn first_collision(paths: &[AgentPath]) -> Option<CollisionConflict> {
    let n = paths.len();
    let horizon = makespan_of(paths);
    for t in 0..=horizon {
        for x in 0..n {
            for y in x + 1..n {
                let shared = shares_task(paths, x, y, t);
                let (xv, yv) = (paths[x].at(t), paths[y].at(t));
                if is_vertex_collision(xv, yv, shared) {
                    return Some(CollisionConflict {
                        first: x,
                        second: y,
                        time: t,
                        first_loc: ConstraintLoc::Vertex(xv),
                        second_loc: ConstraintLoc::Vertex(yv),
                    });
                }
                if t < horizon {
                    let (xw, yw) = (paths[x].at(t + 1), paths[y].at(t + 1));
                    if is_edge_collision(xv, xw, yv, yw, shared) {
                        return Some(CollisionConflict {
                            first: x,
                            second: y,
                            time: t,
                            first_loc: ConstraintLoc::Edge(xv, xw),
                            second_loc: ConstraintLoc::Edge(yv, yw),
                        });
                    }
                }
            }
        }
    }
    None
}

/// Total conflict count used as the open-list tie-break: schedule
/// inconsistencies per task plus colliding (pair, timestep) entries.
fn count_conflicts(problem: &Problem, tasks: &TaskGraph, paths: &[AgentPath]) -> u32 {
    let mut count = 0;
    for task in 0..problem.num_tasks() {
        let members = &problem.tasks[task].coalition;
        let times: Vec<TaskTimes> = members
            .iter()
            .map(|&m| {
                *paths[m]
                    .events
                    .iter()
                    .find(|e| e.task == task)
                    .expect("allotment covered")
            })
            .collect();
        let pickups: Vec<u32> = times.iter().map(|e| e.pickup).collect();
        let deliveries: Vec<u32> = times.iter().map(|e| e.delivery).collect();
        let synced = pickups.iter().all(|&p| p == pickups[0])
            && deliveries.iter().all(|&d| d == deliveries[0]);
        if !synced {
            count += 1;
        } else {
            for t in pickups[0]..=deliveries[0] {
                if members
                    .iter()
                    .any(|&m| paths[m].at(t) != paths[members[0]].at(t))
                {
                    count += 1;
                }
            }
        }
        let carry = tasks.carry_node[task];
        for &p in &tasks.preds[carry] {
            if tasks.nodes[p].kind == NodeKind::Carry {
                let end = observed_delivery(paths, problem, tasks.nodes[p].task);
                let start = *pickups.iter().min().expect("nonempty");
                if end > start {
                    count += 1;
                }
            }
        }
    }
    let horizon = makespan_of(paths);
    for t in 0..=horizon {
        for x in 0..paths.len() {
            for y in x + 1..paths.len() {
                let shared = shares_task(paths, x, y, t);
                if is_vertex_collision(paths[x].at(t), paths[y].at(t), shared) {
                    count += 1;
                }
                if t < horizon
                    && is_edge_collision(
                        paths[x].at(t),
                        paths[x].at(t + 1),
                        paths[y].at(t),
                        paths[y].at(t + 1),
                        shared,
                    )
                {
                    count += 1;
                }
            }
        }
    }
    count
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolutionError {
    #[error("line {line}: {what}")]
    Syntax { line: usize, what: String },
    #[error("duplicate event for task {task}")]
    DuplicateEvent { task: TaskId },
    #[error("path for agent {expected} expected, found {found}")]
    PathOrder { expected: usize, found: usize },
    #[error("no event recorded for task {task}")]
    MissingEvent { task: TaskId },
    #[error("{expected} agent paths expected, found {found}")]
    AgentCount { expected: usize, found: usize },
}

/// A solution file's content: makespan, one position-per-timestep path per
/// agent, one pickup/delivery record per task, and the stats trailer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionText {
    pub makespan: u32,
    pub paths: Vec<Vec<Vertex>>,
    pub events: Vec<(TaskId, u32, u32)>,
    pub algorithm: Option<String>,
    pub ct_nodes: Option<u64>,
    pub ll_expansions: Option<u64>,
    pub runtime_ms: Option<u64>,
}

impl SolutionText {
    /// Reassembles per-agent execution times from the per-task records,
    /// ready for validation against `problem`.
    pub fn checked_plan(&self, problem: &Problem) -> Result<CheckedPlan, SolutionError> {
        if self.paths.len() != problem.num_agents() {
            return Err(SolutionError::AgentCount {
                expected: problem.num_agents(),
                found: self.paths.len(),
            });
        }
        let by_task: BTreeMap<TaskId, (u32, u32)> = self
            .events
            .iter()
            .map(|&(task, pu, dl)| (task, (pu, dl)))
            .collect();
        let mut member_times = Vec::with_capacity(self.paths.len());
        for agent in 0..problem.num_agents() {
            let mut times = Vec::new();
            for &task in &problem.allotments[agent] {
                let &(pu, dl) = by_task
                    .get(&task)
                    .ok_or(SolutionError::MissingEvent { task })?;
                times.push((task, pu, dl));
            }
            member_times.push(times);
        }
        Ok(CheckedPlan {
            paths: self.paths.clone(),
            member_times,
        })
    }
}

pub fn format_solution(solution: &Solution) -> String {
    let mut out = String::new();
    writeln!(out, "makespan {}", solution.makespan).expect("write to string");
    for path in &solution.paths {
        write!(out, "path {}", path.agent).expect("write to string");
        for (t, v) in path.positions.iter().enumerate() {
            write!(out, " ({},{})@{}", v.row, v.col, t).expect("write to string");
        }
        out.push('\n');
    }
    let mut events: BTreeMap<TaskId, (u32, u32)> = BTreeMap::new();
    for path in &solution.paths {
        for e in &path.events {
            events.insert(e.task, (e.pickup, e.delivery));
        }
    }
    for (task, (pickup, delivery)) in events {
        writeln!(out, "event {task} pickup {pickup} deliver {delivery}").expect("write to string");
    }
    writeln!(out, "algorithm {}", solution.stats.algorithm).expect("write to string");
    writeln!(out, "ct_nodes {}", solution.stats.ct_nodes).expect("write to string");
    writeln!(out, "ll_expansions {}", solution.stats.ll_expansions).expect("write to string");
    writeln!(out, "runtime_ms {}", solution.stats.runtime_ms).expect("write to string");
    out
}

pub fn parse_solution(text: &str) -> Result<SolutionText, SolutionError> {
    let syntax = |line: usize, what: &str| SolutionError::Syntax {
        line,
        what: what.to_string(),
    };
    let mut makespan = None;
    let mut paths: Vec<Vec<Vertex>> = Vec::new();
    let mut events: BTreeMap<TaskId, (u32, u32)> = BTreeMap::new();
    let mut algorithm = None;
    let mut ct_nodes = None;
    let mut ll_expansions = None;
    let mut runtime_ms = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let keyword = fields.next().expect("nonempty line");
        match keyword {
            "makespan" => {
                let value = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| syntax(line, "expected `makespan <timestep>`"))?;
                if makespan.replace(value).is_some() {
                    return Err(syntax(line, "repeated makespan"));
                }
            }
            "path" => {
                let agent: usize = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| syntax(line, "expected `path <agent> ...`"))?;
                if agent != paths.len() {
                    return Err(SolutionError::PathOrder {
                        expected: paths.len(),
                        found: agent,
                    });
                }
                let mut positions = Vec::new();
                for token in fields.by_ref() {
                    let (cell, t) = token
                        .split_once('@')
                        .ok_or_else(|| syntax(line, "expected `(row,col)@t` position"))?;
                    let t: usize = t
                        .parse()
                        .map_err(|_| syntax(line, "expected `(row,col)@t` position"))?;
                    if t != positions.len() {
                        return Err(syntax(
                            line,
                            "positions must advance one timestep at a time",
                        ));
                    }
                    let body = cell
                        .strip_prefix('(')
                        .and_then(|c| c.strip_suffix(')'))
                        .ok_or_else(|| syntax(line, "expected `(row,col)@t` position"))?;
                    let (row, col) = body
                        .split_once(',')
                        .ok_or_else(|| syntax(line, "expected `(row,col)@t` position"))?;
                    let row = row
                        .parse()
                        .map_err(|_| syntax(line, "expected `(row,col)@t` position"))?;
                    let col = col
                        .parse()
                        .map_err(|_| syntax(line, "expected `(row,col)@t` position"))?;
                    positions.push(Vertex { row, col });
                }
                if positions.is_empty() {
                    return Err(syntax(line, "a path needs at least its starting position"));
                }
                paths.push(positions);
            }
            "event" => {
                let mut num = || fields.next().map(|v| v.to_string());
                let task: TaskId = num().and_then(|v| v.parse().ok()).ok_or_else(|| {
                    syntax(line, "expected `event <task> pickup <t> deliver <t>`")
                })?;
                let pickup_kw = num();
                let pickup: Option<u32> = num().and_then(|v| v.parse().ok());
                let deliver_kw = num();
                let delivery: Option<u32> = num().and_then(|v| v.parse().ok());
                match (
                    pickup_kw.as_deref(),
                    pickup,
                    deliver_kw.as_deref(),
                    delivery,
                ) {
                    (Some("pickup"), Some(pu), Some("deliver"), Some(dl)) => {
                        if events.insert(task, (pu, dl)).is_some() {
                            return Err(SolutionError::DuplicateEvent { task });
                        }
                    }
                    _ => {
                        return Err(syntax(
                            line,
                            "expected `event <task> pickup <t> deliver <t>`",
                        ))
                    }
                }
            }
            "algorithm" => {
                algorithm = Some(
                    fields
                        .next()
                        .ok_or_else(|| syntax(line, "expected `algorithm <name>`"))?
                        .to_string(),
                );
            }
            "ct_nodes" | "ll_expansions" | "runtime_ms" => {
                let value = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| syntax(line, "expected a numeric stat"))?;
                match keyword {
                    "ct_nodes" => ct_nodes = Some(value),
                    "ll_expansions" => ll_expansions = Some(value),
                    _ => runtime_ms = Some(value),
                }
            }
            _ => return Err(syntax(line, "unknown line")),
        }
        if fields.next().is_some() && keyword != "path" {
            return Err(syntax(line, "trailing fields"));
        }
    }

    Ok(SolutionText {
        makespan: makespan.ok_or_else(|| syntax(0, "missing makespan"))?,
        paths,
        events: events
            .into_iter()
            .map(|(task, (pu, dl))| (task, pu, dl))
            .collect(),
        algorithm,
        ct_nodes,
        ll_expansions,
        runtime_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{GridMap, INF};
    use crate::taskgraph::{build_task_graph, parse_problem};
    use crate::verify::{oracle_makespan, validate_solution, OracleConfig, OracleOutcome};

    struct Fixture {
        graph: MotionGraph,
        dist: DistanceTable,
        problem: Problem,
        tasks: TaskGraph,
    }

    fn fixture(map: &str, problem: &str) -> Fixture {
        let map = GridMap::parse(map).expect("map parses");
        let problem = parse_problem(problem).expect("problem parses");
        let graph = MotionGraph::new(map);
        let dist = DistanceTable::build(&graph);
        let tasks = build_task_graph(&graph.map, &dist, &problem).expect("graph builds");
        Fixture {
            graph,
            dist,
            problem,
            tasks,
        }
    }

    fn solve_fixture(fx: &Fixture) -> Solution {
        solve(
            &fx.graph,
            &fx.dist,
            &fx.problem,
            &fx.tasks,
            &SolverConfig::default(),
        )
        .expect("instance solvable")
    }

    fn assert_valid(fx: &Fixture, solution: &Solution) {
        let report = validate_solution(&fx.graph.map, &fx.problem, &solution.checked_plan());
        assert!(report.ok(), "{:?}", report.violations);
    }

    fn oracle(fx: &Fixture) -> u32 {
        match oracle_makespan(&fx.graph.map, &fx.problem, OracleConfig::default())
            .expect("oracle within budget")
        {
            OracleOutcome::Solved { makespan } => makespan,
            OracleOutcome::Infeasible => panic!("fixture should be solvable"),
        }
    }

    #[test]
    fn split_separates_observations_below_and_from_the_pivot() {
        let (low, high) = split_interval(Interval::UNBOUNDED, 12);
        assert_eq!(low, Interval::new(0, 11));
        assert_eq!(high, Interval::new(12, INF));
    }

    #[test]
    fn split_clamps_a_pivot_past_the_window() {
        let (low, high) = split_interval(Interval::new(0, 9), 12);
        assert_eq!(low, Interval::new(0, 8));
        assert_eq!(high, Interval::new(9, 9));
    }

    #[test]
    fn split_at_the_minimum_empties_the_low_child() {
        let (low, high) = split_interval(Interval::new(3, 8), 3);
        assert!(low.is_empty());
        assert_eq!(high, Interval::new(3, 8));
    }

    #[test]
    fn split_pivot_rules_land_inside_the_observed_range() {
        assert_eq!(precedence_split_time(SplitRule::Max, 5, 12), 12);
        assert_eq!(precedence_split_time(SplitRule::Midpoint, 5, 12), 9);
        assert_eq!(precedence_split_time(SplitRule::Midpoint, 4, 5), 5);
    }

    #[test]
    fn divergence_prefers_start_then_end_then_cell_bans() {
        let fix = divergence_fix(Interval::new(0, 9), Interval::new(4, INF), 6);
        assert_eq!(fix, DivergenceFix::SplitStart(7));
        let fix = divergence_fix(Interval::new(0, 5), Interval::new(4, INF), 6);
        assert_eq!(fix, DivergenceFix::SplitEnd(6));
        let fix = divergence_fix(Interval::new(0, 5), Interval::new(6, INF), 6);
        assert_eq!(fix, DivergenceFix::BanPair);
    }

    #[test]
    fn parked_idle_agent_solves_in_the_root() {
        let fx = fixture("height 1\nwidth 2\n..", "agent 0 start 0 0 park 0 0\n");
        let solution = solve_fixture(&fx);
        assert_eq!(solution.makespan, 0);
        assert_eq!(solution.stats.ct_nodes, 1);
        assert_valid(&fx, &solution);
    }

    #[test]
    fn chained_tasks_finish_at_the_oracle_makespan() {
        let fx = fixture(
            "height 6\nwidth 6\n......\n......\n......\n......\n......\n......",
            "agent 0 start 0 0 park 0 4\n\
             agent 1 start 5 0 park 5 5\n\
             task 0 pickup 0 1 deliver 0 4 coalition 0\n\
             task 1 pickup 5 2 deliver 5 5 coalition 1\n\
             edge 0 1\n\
             allot 0 0\n\
             allot 1 1\n",
        );
        let solution = solve_fixture(&fx);
        assert_eq!(solution.makespan, 7);
        assert_eq!(oracle(&fx), 7);
        assert_valid(&fx, &solution);
    }

    #[test]
    fn head_on_agents_pay_for_the_detour() {
        let fx = fixture(
            "height 2\nwidth 3\n...\n...",
            "agent 0 start 0 0 park 0 2\nagent 1 start 0 2 park 0 0\n",
        );
        let solution = solve_fixture(&fx);
        assert_eq!(solution.makespan, 4);
        assert_eq!(oracle(&fx), 4);
        assert_valid(&fx, &solution);
    }

    #[test]
    fn coalition_members_walk_in_unison() {
        let fx = fixture(
            "height 2\nwidth 4\n....\n....",
            "agent 0 start 0 0 park 0 3\n\
             agent 1 start 1 0 park 1 3\n\
             task 0 pickup 0 1 deliver 0 3 coalition 0 1\n\
             allot 0 0\n\
             allot 1 0\n",
        );
        let solution = solve_fixture(&fx);
        assert_eq!(solution.makespan, 5);
        assert_eq!(oracle(&fx), 5);
        assert_valid(&fx, &solution);
    }

    #[test]
    fn coalition_squatter_in_the_aisle_costs_the_optimum_nothing() {
        let fx = fixture(
            "height 3\nwidth 7\n...@@@@\n.......\n@@@@@@@",
            "agent 0 start 1 0 park 1 6\n\
             agent 1 start 0 2 park 0 2\n\
             agent 2 start 0 0 park 0 0\n\
             task 0 pickup 1 1 deliver 1 5 coalition 0\n\
             task 1 pickup 1 2 deliver 0 2 coalition 1 2\n\
             allot 0 0\n\
             allot 1 1\n\
             allot 2 1\n",
        );
        let solution = solve_fixture(&fx);
        assert_eq!(solution.makespan, 6);
        assert_eq!(oracle(&fx), 6);
        assert_valid(&fx, &solution);
    }

    #[test]
    fn zero_timeout_reports_a_timeout() {
        let fx = fixture(
            "height 2\nwidth 3\n...\n...",
            "agent 0 start 0 0 park 0 2\nagent 1 start 0 2 park 0 0\n",
        );
        let config = SolverConfig {
            timeout: Some(Duration::ZERO),
            split_rule: SplitRule::Max,
        };
        let result = solve(&fx.graph, &fx.dist, &fx.problem, &fx.tasks, &config);
        assert_eq!(result.err(), Some(Unsolved::Timeout));
    }

    #[test]
    fn repeated_solves_are_identical() {
        let fx = fixture(
            "height 3\nwidth 7\n...@@@@\n.......\n@@@@@@@",
            "agent 0 start 1 0 park 1 6\n\
             agent 1 start 0 2 park 0 2\n\
             agent 2 start 0 0 park 0 0\n\
             task 0 pickup 1 1 deliver 1 5 coalition 0\n\
             task 1 pickup 1 2 deliver 0 2 coalition 1 2\n\
             allot 0 0\n\
             allot 1 1\n\
             allot 2 1\n",
        );
        let a = solve_fixture(&fx);
        let b = solve_fixture(&fx);
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.stats.ct_nodes, b.stats.ct_nodes);
        assert_eq!(a.stats.ll_expansions, b.stats.ll_expansions);
    }

    #[test]
    fn solution_text_round_trips() {
        let fx = fixture(
            "height 2\nwidth 4\n....\n....",
            "agent 0 start 0 0 park 0 3\n\
             agent 1 start 1 0 park 1 3\n\
             task 0 pickup 0 1 deliver 0 3 coalition 0 1\n\
             allot 0 0\n\
             allot 1 0\n",
        );
        let solution = solve_fixture(&fx);
        let text = format_solution(&solution);
        let parsed = parse_solution(&text).expect("own output parses");
        assert_eq!(parsed.makespan, solution.makespan);
        assert_eq!(parsed.algorithm.as_deref(), Some("pc-cbs"));
        assert_eq!(parsed.paths.len(), 2);
        assert_eq!(parsed.events.len(), 1);
        let plan = parsed.checked_plan(&fx.problem).expect("plan assembles");
        assert_eq!(plan, solution.checked_plan());
        assert!(validate_solution(&fx.graph.map, &fx.problem, &plan).ok());
    }

    #[test]
    fn malformed_solution_lines_are_rejected() {
        assert!(matches!(
            parse_solution("makespan 3\npath 1 (0,0)@0"),
            Err(SolutionError::PathOrder {
                expected: 0,
                found: 1
            })
        ));
        assert!(matches!(
            parse_solution("makespan 3\npath 0 (0,0)@1"),
            Err(SolutionError::Syntax { .. })
        ));
        assert!(matches!(
            parse_solution("path 0 (0,0)@0"),
            Err(SolutionError::Syntax { .. })
        ));
        assert!(matches!(
            parse_solution("makespan 1\nevent 0 pickup 1 deliver 2\nevent 0 pickup 1 deliver 2"),
            Err(SolutionError::DuplicateEvent { task: 0 })
        ));
    }
}
