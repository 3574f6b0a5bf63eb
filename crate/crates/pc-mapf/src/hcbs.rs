//! Greedy hierarchical baseline: a top level that branches on agent
//! ordering when planning gets stuck, a middle level that commits task
//! segments one at a time in ascending-slack order against a shared
//! reservation table, and a bottom-level single-waypoint A*.
//!
//! Committed segments never move. Lower-slack segments are planned as if
//! later ones did not exist, so an agent that could cheaply step aside for
//! a more critical one never does so in advance; the repair for a blocked
//! segment is reordering whole agents and replanning from scratch. Both
//! choices trade optimality for simplicity, which is the point of the
//! baseline: its makespans are valid but can exceed the optimum.

use std::collections::{HashMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use crate::gridworld::{DistanceTable, GridMap, MotionGraph, Vertex, INF};
use crate::lowlevel::{plan_walk, AgentPath, TaskTimes, WalkGoal, WalkInput};
use crate::pccbs::{Solution, SolveStats, Unsolved};
use crate::taskgraph::{
    initialize_intervals, search_horizon, AgentId, IntervalTable, NodeId, NodeKind, Problem,
    TaskGraph, TaskId,
};

/// Retries of the gather loop (member reorderings and start-time bumps)
/// before a coalition approach is declared blocked.
const GATHER_ATTEMPTS: u32 = 64;

/// Critical-path slack per task-graph node: how many timesteps the node's
/// start can slip without raising the collision-free makespan estimate.
/// Zero marks the critical chain.
pub fn compute_slack(
    map: &GridMap,
    dist: &DistanceTable,
    problem: &Problem,
    tasks: &TaskGraph,
    intervals: &IntervalTable,
) -> Vec<u32> {
    let n = tasks.nodes.len();
    let mut makespan_est: u32 = 0;
    let mut park_runouts: Vec<Vec<u32>> = vec![Vec::new(); n];
    for agent in 0..problem.num_agents() {
        let spec = &problem.agents[agent];
        let arrival = match tasks.agent_nodes[agent].last() {
            Some(&last) => {
                let runout = dist.get(map, tasks.nodes[last].end, spec.parking);
                park_runouts[last].push(runout);
                intervals[last].end.min_time.saturating_add(runout)
            }
            None => dist.get(map, spec.start, spec.parking),
        };
        makespan_est = makespan_est.max(arrival);
    }

    let mut latest_start = vec![0u32; n];
    let mut slack = vec![0u32; n];
    for &id in tasks.topo.iter().rev() {
        let mut latest_end = INF;
        for &s in &tasks.succs[id] {
            latest_end = latest_end.min(latest_start[s]);
        }
        for &runout in &park_runouts[id] {
            latest_end = latest_end.min(makespan_est.saturating_sub(runout));
        }
        if latest_end == INF {
            latest_end = makespan_est;
        }
        latest_start[id] = latest_end.saturating_sub(tasks.nodes[id].min_cost);
        slack[id] = latest_start[id].saturating_sub(intervals[id].start.min_time);
    }
    slack
}

pub fn solve(
    graph: &MotionGraph,
    dist: &DistanceTable,
    problem: &Problem,
    tasks: &TaskGraph,
    timeout: Option<Duration>,
) -> Result<Solution, Unsolved> {
    let started = Instant::now();
    let intervals = initialize_intervals(tasks).map_err(|_| Unsolved::Exhausted)?;
    let slack = compute_slack(&graph.map, dist, problem, tasks, &intervals);
    let mut search = Search {
        graph,
        dist,
        problem,
        tasks,
        slack,
        horizon: search_horizon(&graph.map, problem),
        deadline: timeout.map(|limit| started + limit),
        expansions: 0,
    };

    let mut queue: VecDeque<Vec<(AgentId, AgentId)>> = VecDeque::from([Vec::new()]);
    let mut seen: HashSet<Vec<(AgentId, AgentId)>> = HashSet::new();
    let mut ct_nodes: u64 = 1;
    while let Some(overrides) = queue.pop_front() {
        match search.isps(&overrides)? {
            Pass::Planned(paths, makespan) => {
                let solution = Solution {
                    makespan,
                    paths,
                    stats: SolveStats {
                        algorithm: "h-cbs",
                        ct_nodes,
                        ll_expansions: search.expansions,
                        runtime_ms: started.elapsed().as_millis() as u64,
                    },
                };
                debug_assert!(crate::verify::validate_solution(
                    &graph.map,
                    problem,
                    &solution.checked_plan()
                )
                .ok());
                return Ok(solution);
            }
            Pass::Blocked(first, second) => {
                for edge in [(first, second), (second, first)] {
                    if overrides.contains(&edge) {
                        continue;
                    }
                    let mut child = overrides.clone();
                    child.push(edge);
                    child.sort_unstable();
                    if has_cycle(&child) || !seen.insert(child.clone()) {
                        continue;
                    }
                    queue.push_back(child);
                    ct_nodes += 1;
                }
            }
            Pass::Dead => {}
        }
    }
    Err(Unsolved::Exhausted)
}

enum Pass {
    Planned(Vec<AgentPath>, u32),
    /// A segment could not be planned; the named agents must be ordered.
    Blocked(AgentId, AgentId),
    Dead,
}

fn has_cycle(edges: &[(AgentId, AgentId)]) -> bool {
    let agents: HashSet<AgentId> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    // Kahn's algorithm over the tiny override digraph.
    let mut indegree: HashMap<AgentId, usize> = agents.iter().map(|&a| (a, 0)).collect();
    for &(_, b) in edges {
        *indegree.get_mut(&b).unwrap() += 1;
    }
    let mut ready: Vec<AgentId> = agents
        .iter()
        .copied()
        .filter(|a| indegree[a] == 0)
        .collect();
    let mut removed = 0;
    while let Some(a) = ready.pop() {
        removed += 1;
        for &(x, y) in edges {
            if x == a {
                let d = indegree.get_mut(&y).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(y);
                }
            }
        }
    }
    removed != agents.len()
}

/// Space-time occupancy committed so far in one planning pass.
#[derive(Clone, Default)]
struct Reservations {
    vertex: HashMap<(Vertex, u32), Vec<AgentId>>,
    edge: HashMap<(Vertex, Vertex, u32), Vec<AgentId>>,
    /// Cell held from the given time onward by a parked agent.
    rest: HashMap<Vertex, (u32, AgentId)>,
    /// Start cells of agents with no committed walk yet, held at all times.
    waiting: HashMap<Vertex, AgentId>,
}

/// Whose reservations the current walk may pass through: the planning
/// party's own rows always, plus co-members of a shared task at its pickup
/// cell from the gather time on (they all stand there together, legally).
struct Scope<'a> {
    party: &'a [AgentId],
    share: Option<(Vertex, u32, &'a [AgentId])>,
    relax_waiting: bool,
}

impl Scope<'_> {
    fn allows(&self, owner: AgentId, v: Vertex, t: u32) -> bool {
        self.party.contains(&owner)
            || self.share.is_some_and(|(cell, from, members)| {
                v == cell && t >= from && members.contains(&owner)
            })
    }
}

impl Reservations {
    fn vertex_free(&self, scope: &Scope, v: Vertex, t: u32) -> bool {
        if let Some(&owner) = self.waiting.get(&v) {
            if !scope.relax_waiting && !scope.allows(owner, v, t) {
                return false;
            }
        }
        if let Some(&(from, owner)) = self.rest.get(&v) {
            if t >= from && !scope.allows(owner, v, t) {
                return false;
            }
        }
        self.vertex
            .get(&(v, t))
            .is_none_or(|owners| owners.iter().all(|&o| scope.allows(o, v, t)))
    }

    fn edge_free(&self, scope: &Scope, a: Vertex, b: Vertex, t: u32) -> bool {
        self.edge
            .get(&(b, a, t))
            .is_none_or(|owners| owners.iter().all(|&o| scope.party.contains(&o)))
    }

    fn commit(&mut self, owners: &[AgentId], positions: &[Vertex], depart: u32) {
        for (i, &v) in positions.iter().enumerate() {
            let t = depart + i as u32;
            for &o in owners {
                self.vertex.entry((v, t)).or_default().push(o);
            }
            if let Some(&w) = positions.get(i + 1) {
                if w != v {
                    for &o in owners {
                        self.edge.entry((v, w, t)).or_default().push(o);
                    }
                }
            }
        }
    }

    fn latest_foreign_time_at(&self, agent: AgentId, v: Vertex) -> Option<u32> {
        self.vertex
            .iter()
            .filter(|&(&(u, _), owners)| u == v && owners.iter().any(|&o| o != agent))
            .map(|(&(_, t), _)| t)
            .max()
    }

    fn first_blocker(&self, victim: AgentId, v: Vertex, t: u32) -> Option<AgentId> {
        if let Some(&owner) = self.waiting.get(&v) {
            if owner != victim {
                return Some(owner);
            }
        }
        if let Some(&(from, owner)) = self.rest.get(&v) {
            if t >= from && owner != victim {
                return Some(owner);
            }
        }
        self.vertex
            .get(&(v, t))
            .and_then(|owners| owners.iter().copied().filter(|&o| o != victim).min())
    }
}

/// One committed segment walk: positions from depart through arrival, and
/// the task it carries if it is a carry walk.
struct Walk {
    positions: Vec<Vertex>,
    depart: u32,
    task: Option<TaskId>,
}

impl Walk {
    fn end(&self) -> u32 {
        self.depart + self.positions.len() as u32 - 1
    }
}

/// Per-pass planning state.
struct PassState {
    res: Reservations,
    /// Where and when each agent's committed timeline currently ends.
    frontier: Vec<(Vertex, u32)>,
    walks: Vec<Vec<Walk>>,
    carry_done: Vec<bool>,
    carry_end: Vec<u32>,
    parked: Vec<bool>,
}

struct Search<'a> {
    graph: &'a MotionGraph,
    dist: &'a DistanceTable,
    problem: &'a Problem,
    tasks: &'a TaskGraph,
    slack: Vec<u32>,
    horizon: u32,
    deadline: Option<Instant>,
    expansions: u64,
}

impl<'a> Search<'a> {
    fn check_deadline(&self) -> Result<(), Unsolved> {
        match self.deadline {
            Some(deadline) if Instant::now() >= deadline => Err(Unsolved::Timeout),
            _ => Ok(()),
        }
    }

    fn walk(
        &mut self,
        res: &Reservations,
        scope: &Scope,
        from: Vertex,
        depart: u32,
        to: Vertex,
        goal: WalkGoal,
    ) -> Option<Vec<Vertex>> {
        let input = WalkInput {
            graph: self.graph,
            dist: self.dist,
            from,
            to,
            depart,
            goal,
            horizon: self.horizon,
        };
        let result = plan_walk(
            &input,
            |v, t| res.vertex_free(scope, v, t),
            |a, b, t| res.edge_free(scope, a, b, t),
        );
        self.expansions += result.expanded;
        result.path
    }

    /// One full planning pass under the given ordering overrides. Segments
    /// are committed carry by carry (members' approach legs plus the shared
    /// carry walk), then each finished agent walks to its parking cell.
    fn isps(&mut self, overrides: &[(AgentId, AgentId)]) -> Result<Pass, Unsolved> {
        let num_agents = self.problem.num_agents();
        let num_tasks = self.problem.num_tasks();
        let mut state = PassState {
            res: Reservations::default(),
            frontier: (0..num_agents)
                .map(|a| (self.problem.agents[a].start, 0))
                .collect(),
            walks: (0..num_agents).map(|_| Vec::new()).collect(),
            carry_done: vec![false; num_tasks],
            carry_end: vec![0; num_tasks],
            parked: vec![false; num_agents],
        };
        for agent in 0..num_agents {
            state
                .res
                .waiting
                .insert(self.problem.agents[agent].start, agent);
        }
        let held_back = |state: &PassState, agent: AgentId| {
            overrides
                .iter()
                .any(|&(y, x)| x == agent && !state.parked[y])
        };

        loop {
            self.check_deadline()?;

            let mut pick: Option<(u32, NodeId)> = None;
            for task in 0..num_tasks {
                let carry = self.tasks.carry_node[task];
                if state.carry_done[task] || !self.carry_ready(&state, carry) {
                    continue;
                }
                if self.problem.tasks[task]
                    .coalition
                    .iter()
                    .any(|&m| held_back(&state, m))
                {
                    continue;
                }
                let key = (self.slack[carry], carry);
                if pick.is_none_or(|best| key < best) {
                    pick = Some(key);
                }
            }
            if let Some((_, carry)) = pick {
                if let Some(stop) = self.plan_carry(&mut state, carry)? {
                    return Ok(stop);
                }
                continue;
            }

            let park_pick = (0..num_agents).find(|&a| {
                !state.parked[a]
                    && !held_back(&state, a)
                    && self.problem.allotments[a]
                        .iter()
                        .all(|&t| state.carry_done[t])
            });
            if let Some(agent) = park_pick {
                if let Some(stop) = self.plan_park(&mut state, agent)? {
                    return Ok(stop);
                }
                continue;
            }

            if state.parked.iter().all(|&p| p) {
                return Ok(self.assemble(state));
            }
            // Unplanned work remains but overrides gate all of it.
            return Ok(Pass::Dead);
        }
    }

    fn carry_ready(&self, state: &PassState, carry: NodeId) -> bool {
        self.tasks.preds[carry]
            .iter()
            .all(|&p| match self.tasks.nodes[p].kind {
                NodeKind::Carry => state.carry_done[self.tasks.nodes[p].task],
                NodeKind::Go { .. } => self.tasks.preds[p]
                    .iter()
                    .all(|&q| state.carry_done[self.tasks.nodes[q].task]),
            })
    }

    /// Members reach the pickup simultaneously (the gather time), then the
    /// coalition walks the carry as one. The gather starts at the latest
    /// earliest-arrival and is bumped when the approaches cannot be packed.
    fn plan_carry(
        &mut self,
        state: &mut PassState,
        carry: NodeId,
    ) -> Result<Option<Pass>, Unsolved> {
        let task = self.tasks.nodes[carry].task;
        let pickup = self.tasks.nodes[carry].start;
        let delivery = self.tasks.nodes[carry].end;
        let members: Vec<AgentId> = self.problem.tasks[task].coalition.clone();

        let mut order = members.clone();
        order.sort_by_key(|&m| (self.go_slack(carry, m), m));

        let mut gather = 0;
        for &p in &self.tasks.preds[carry] {
            if self.tasks.nodes[p].kind == NodeKind::Carry {
                gather = gather.max(state.carry_end[self.tasks.nodes[p].task]);
            }
        }
        for &m in &members {
            let (pos, ready) = state.frontier[m];
            let scope = Scope {
                party: &[m],
                share: None,
                relax_waiting: false,
            };
            match self.walk(&state.res, &scope, pos, ready, pickup, WalkGoal::Earliest) {
                Some(w) => gather = gather.max(ready + w.len() as u32 - 1),
                None => return self.diagnose(state, m, pos, ready, pickup).map(Some),
            }
        }

        let mut order_now = order.clone();
        let mut last_failed = order[0];
        for _ in 0..GATHER_ATTEMPTS {
            self.check_deadline()?;
            if gather > self.horizon {
                break;
            }
            let mut trial = state.res.clone();
            let mut legs: Vec<(AgentId, Vec<Vertex>, u32)> = Vec::new();
            let mut failed = None;
            for &m in &order_now {
                let (pos, ready) = state.frontier[m];
                let scope = Scope {
                    party: &[m],
                    share: Some((pickup, gather, &members)),
                    relax_waiting: false,
                };
                match self.walk(
                    &trial,
                    &scope,
                    pos,
                    ready,
                    pickup,
                    WalkGoal::Exactly(gather),
                ) {
                    Some(w) => {
                        trial.commit(&[m], &w, ready);
                        legs.push((m, w, ready));
                    }
                    None => {
                        failed = Some(m);
                        break;
                    }
                }
            }
            match failed {
                Some(m) => {
                    last_failed = m;
                    // Let the stuck member claim its approach first; once it
                    // already goes first, only a later gather can help.
                    if order_now[0] == m {
                        gather += 1;
                        order_now.clone_from(&order);
                    } else {
                        order_now.retain(|&x| x != m);
                        order_now.insert(0, m);
                    }
                    continue;
                }
                None => {
                    let scope = Scope {
                        party: &members,
                        share: None,
                        relax_waiting: false,
                    };
                    match self.walk(&trial, &scope, pickup, gather, delivery, WalkGoal::Earliest) {
                        Some(carry_walk) => {
                            trial.commit(&members, &carry_walk, gather);
                            let end = gather + carry_walk.len() as u32 - 1;
                            for (m, w, ready) in legs {
                                state.walks[m].push(Walk {
                                    positions: w,
                                    depart: ready,
                                    task: None,
                                });
                                state.walks[m].push(Walk {
                                    positions: carry_walk.clone(),
                                    depart: gather,
                                    task: Some(task),
                                });
                                state.frontier[m] = (delivery, end);
                                state.res.waiting.remove(&self.problem.agents[m].start);
                            }
                            state.res = trial;
                            for &m in &members {
                                state.res.waiting.remove(&self.problem.agents[m].start);
                            }
                            state.carry_done[task] = true;
                            state.carry_end[task] = end;
                            return Ok(None);
                        }
                        None => {
                            last_failed = members[0];
                            gather += 1;
                            order_now.clone_from(&order);
                        }
                    }
                }
            }
        }
        let (pos, ready) = state.frontier[last_failed];
        self.diagnose(state, last_failed, pos, ready, pickup)
            .map(Some)
    }

    fn plan_park(
        &mut self,
        state: &mut PassState,
        agent: AgentId,
    ) -> Result<Option<Pass>, Unsolved> {
        let park = self.problem.agents[agent].parking;
        let (pos, ready) = state.frontier[agent];
        let goal = match state.res.latest_foreign_time_at(agent, park) {
            Some(t) => WalkGoal::After(t),
            None => WalkGoal::Earliest,
        };
        let scope = Scope {
            party: &[agent],
            share: None,
            relax_waiting: false,
        };
        match self.walk(&state.res, &scope, pos, ready, park, goal) {
            Some(w) => {
                let arrival = ready + w.len() as u32 - 1;
                state.res.commit(&[agent], &w, ready);
                state.res.rest.insert(park, (arrival, agent));
                state.res.waiting.remove(&self.problem.agents[agent].start);
                state.walks[agent].push(Walk {
                    positions: w,
                    depart: ready,
                    task: None,
                });
                state.frontier[agent] = (park, arrival);
                state.parked[agent] = true;
                Ok(None)
            }
            None => self.diagnose(state, agent, pos, ready, park).map(Some),
        }
    }

    /// Rerun the failed leg ignoring waiting-agent holds, then name the
    /// first agent whose reservation the unblocked walk runs through.
    fn diagnose(
        &mut self,
        state: &PassState,
        victim: AgentId,
        pos: Vertex,
        ready: u32,
        target: Vertex,
    ) -> Result<Pass, Unsolved> {
        self.check_deadline()?;
        let relaxed = Scope {
            party: &[victim],
            share: None,
            relax_waiting: true,
        };
        let walk = match self.walk(&state.res, &relaxed, pos, ready, target, WalkGoal::Earliest) {
            Some(w) => w,
            None => {
                if self.dist.get(&self.graph.map, pos, target) == INF {
                    return Ok(Pass::Dead);
                }
                // Fully unreserved walk, to find who owns the blockage.
                let input = WalkInput {
                    graph: self.graph,
                    dist: self.dist,
                    from: pos,
                    to: target,
                    depart: ready,
                    goal: WalkGoal::Earliest,
                    horizon: self.horizon,
                };
                let free = plan_walk(&input, |_, _| true, |_, _, _| true);
                self.expansions += free.expanded;
                match free.path {
                    Some(w) => w,
                    None => return Ok(Pass::Dead),
                }
            }
        };
        let strict = Scope {
            party: &[victim],
            share: None,
            relax_waiting: false,
        };
        for (i, &v) in walk.iter().enumerate() {
            let t = ready + i as u32;
            if !state.res.vertex_free(&strict, v, t) {
                if let Some(owner) = state.res.first_blocker(victim, v, t) {
                    return Ok(Pass::Blocked(owner, victim));
                }
            }
        }
        Ok(Pass::Dead)
    }

    fn go_slack(&self, carry: NodeId, member: AgentId) -> u32 {
        self.tasks.preds[carry]
            .iter()
            .find(|&&p| self.tasks.nodes[p].kind == NodeKind::Go { agent: member })
            .map_or(0, |&p| self.slack[p])
    }

    fn assemble(&self, state: PassState) -> Pass {
        let mut paths = Vec::with_capacity(state.walks.len());
        let mut makespan = 0;
        for (agent, walks) in state.walks.into_iter().enumerate() {
            let mut positions: Vec<Vertex> = Vec::new();
            let mut events = Vec::new();
            for walk in &walks {
                if let Some(task) = walk.task {
                    events.push(TaskTimes {
                        task,
                        pickup: walk.depart,
                        delivery: walk.end(),
                    });
                }
                if positions.is_empty() {
                    debug_assert_eq!(walk.depart, 0);
                    positions.extend_from_slice(&walk.positions);
                } else {
                    debug_assert_eq!(
                        walk.depart as usize + 1,
                        positions.len(),
                        "segments must chain without gaps"
                    );
                    debug_assert_eq!(*positions.last().unwrap(), walk.positions[0]);
                    positions.extend_from_slice(&walk.positions[1..]);
                }
            }
            makespan = makespan.max(positions.len() as u32 - 1);
            paths.push(AgentPath {
                agent,
                positions,
                events,
            });
        }
        Pass::Planned(paths, makespan)
    }
}
