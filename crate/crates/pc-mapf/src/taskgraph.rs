//! Task graphs over pickup-and-delivery tasks with precedence.
//!
//! Each task is served by a coalition of agents; every coalition member gets
//! a GO node (travel to the pickup) and the coalition shares one CARRY node
//! (pickup to delivery). In-schedule edges chain each agent's allotment,
//! explicit edges order CARRY nodes across schedules. Every node carries a
//! start and end interval; propagation keeps them consistent with the edge
//! structure and collision-free move costs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::gridworld::{DistanceTable, GridMap, Vertex, INF};

pub type TaskId = usize;
pub type AgentId = usize;
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSpec {
    pub id: AgentId,
    pub start: Vertex,
    pub parking: Vertex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub pickup: Vertex,
    pub delivery: Vertex,
    /// Sorted, deduplicated agent ids; every member must list this task in
    /// its allotment.
    pub coalition: Vec<AgentId>,
}

/// A full problem instance minus the map, which is stored separately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub agents: Vec<AgentSpec>,
    pub tasks: Vec<Task>,
    /// (a, b) means task a's delivery must precede task b's pickup.
    pub edges: Vec<(TaskId, TaskId)>,
    /// Ordered task ids per agent, indexed by agent id.
    pub allotments: Vec<Vec<TaskId>>,
}

impl Problem {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn max_coalition_degree(&self) -> usize {
        self.tasks
            .iter()
            .map(|t| t.coalition.len())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// One agent travelling from its previous location to the task pickup.
    Go { agent: AgentId },
    /// The whole coalition walking the task from pickup to delivery.
    Carry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub task: TaskId,
    pub start: Vertex,
    pub end: Vertex,
    /// Collision-free moves from start to end; INF when disconnected.
    pub min_cost: u32,
}

#[derive(Debug, Clone)]
pub struct TaskGraph {
    pub nodes: Vec<TaskNode>,
    pub preds: Vec<Vec<NodeId>>,
    pub succs: Vec<Vec<NodeId>>,
    /// Topological order, ties broken by node id.
    pub topo: Vec<NodeId>,
    /// CARRY node of each task; equals the task id by construction.
    pub carry_node: Vec<NodeId>,
    /// Each agent's GO/CARRY node chain in allotment order.
    pub agent_nodes: Vec<Vec<NodeId>>,
}

impl TaskGraph {
    /// Agents that must execute a node: the GO owner, or the coalition.
    pub fn owners<'a>(&self, problem: &'a Problem, node: NodeId) -> &'a [AgentId] {
        match self.nodes[node].kind {
            NodeKind::Go { agent } => {
                let members = &problem.tasks[self.nodes[node].task].coalition;
                let pos = members
                    .iter()
                    .position(|&m| m == agent)
                    .expect("owner in coalition");
                &members[pos..pos + 1]
            }
            NodeKind::Carry => &problem.tasks[self.nodes[node].task].coalition,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("task {task}: empty coalition")]
    EmptyCoalition { task: TaskId },
    #[error("task {task}: coalition member {agent} does not exist")]
    UnknownMember { task: TaskId, agent: AgentId },
    #[error("task {task}: coalition member {agent} has no allotment entry for it")]
    MissingAllotment { task: TaskId, agent: AgentId },
    #[error("agent {agent}: allotted task {task} outside its coalition")]
    NotInCoalition { task: TaskId, agent: AgentId },
    #[error("agent {agent}: task {task} allotted more than once")]
    DuplicateAllotment { task: TaskId, agent: AgentId },
    #[error("task {task}: vertex {vertex} is not a free cell")]
    BlockedTaskVertex { task: TaskId, vertex: Vertex },
    #[error("agent {agent}: vertex {vertex} is not a free cell")]
    BlockedAgentVertex { agent: AgentId, vertex: Vertex },
    #[error("precedence edge references unknown task {task}")]
    UnknownEdgeTask { task: TaskId },
    #[error("task {task}: pickup equals delivery")]
    DegenerateTask { task: TaskId },
    #[error("precedence cycle through task {task}")]
    Cycle { task: TaskId },
}

pub fn build_task_graph(
    map: &GridMap,
    dist: &DistanceTable,
    problem: &Problem,
) -> Result<TaskGraph, BuildError> {
    let n_tasks = problem.tasks.len();
    for agent in &problem.agents {
        for &v in &[agent.start, agent.parking] {
            if !map.is_free(v) {
                return Err(BuildError::BlockedAgentVertex {
                    agent: agent.id,
                    vertex: v,
                });
            }
        }
    }
    for task in &problem.tasks {
        if task.coalition.is_empty() {
            return Err(BuildError::EmptyCoalition { task: task.id });
        }
        if task.pickup == task.delivery {
            return Err(BuildError::DegenerateTask { task: task.id });
        }
        for &v in &[task.pickup, task.delivery] {
            if !map.is_free(v) {
                return Err(BuildError::BlockedTaskVertex {
                    task: task.id,
                    vertex: v,
                });
            }
        }
        for &m in &task.coalition {
            if m >= problem.agents.len() {
                return Err(BuildError::UnknownMember {
                    task: task.id,
                    agent: m,
                });
            }
            if !problem.allotments[m].contains(&task.id) {
                return Err(BuildError::MissingAllotment {
                    task: task.id,
                    agent: m,
                });
            }
        }
    }
    for (agent, allotment) in problem.allotments.iter().enumerate() {
        for (i, &t) in allotment.iter().enumerate() {
            if t >= n_tasks {
                return Err(BuildError::UnknownEdgeTask { task: t });
            }
            if allotment[..i].contains(&t) {
                return Err(BuildError::DuplicateAllotment { task: t, agent });
            }
            if !problem.tasks[t].coalition.contains(&agent) {
                return Err(BuildError::NotInCoalition { task: t, agent });
            }
        }
    }
    for &(a, b) in &problem.edges {
        for t in [a, b] {
            if t >= n_tasks {
                return Err(BuildError::UnknownEdgeTask { task: t });
            }
        }
    }

    // CARRY node ids coincide with task ids; GO nodes follow.
    let mut nodes: Vec<TaskNode> = problem
        .tasks
        .iter()
        .map(|t| TaskNode {
            id: t.id,
            kind: NodeKind::Carry,
            task: t.id,
            start: t.pickup,
            end: t.delivery,
            min_cost: dist.get(map, t.pickup, t.delivery),
        })
        .collect();
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut agent_nodes = vec![Vec::new(); problem.agents.len()];
    for agent in &problem.agents {
        let mut location = agent.start;
        let mut prev_carry: Option<NodeId> = None;
        for &t in &problem.allotments[agent.id] {
            let pickup = problem.tasks[t].pickup;
            let go = nodes.len();
            nodes.push(TaskNode {
                id: go,
                kind: NodeKind::Go { agent: agent.id },
                task: t,
                start: location,
                end: pickup,
                min_cost: dist.get(map, location, pickup),
            });
            if let Some(carry) = prev_carry {
                edges.push((carry, go));
            }
            edges.push((go, t));
            agent_nodes[agent.id].push(go);
            agent_nodes[agent.id].push(t);
            location = problem.tasks[t].delivery;
            prev_carry = Some(t);
        }
    }
    for &(a, b) in &problem.edges {
        edges.push((a, b));
    }

    let n = nodes.len();
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for &(from, to) in &edges {
        succs[from].push(to);
        preds[to].push(from);
    }
    for list in preds.iter_mut().chain(succs.iter_mut()) {
        list.sort_unstable();
        list.dedup();
    }

    let topo = topological_sort(&preds, &succs).map_err(|node| BuildError::Cycle {
        task: nodes[node].task,
    })?;
    Ok(TaskGraph {
        nodes,
        preds,
        succs,
        topo,
        carry_node: (0..n_tasks).collect(),
        agent_nodes,
    })
}

/// Kahn's algorithm with a min-heap so equal-rank nodes come out in id order.
/// Returns a node on a cycle as the error.
fn topological_sort(preds: &[Vec<NodeId>], succs: &[Vec<NodeId>]) -> Result<Vec<NodeId>, NodeId> {
    let n = preds.len();
    let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<NodeId>> =
        (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &u in &succs[v] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.push(Reverse(u));
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n)
            .find(|&i| indegree[i] > 0)
            .expect("cycle node exists");
        return Err(stuck);
    }
    Ok(order)
}

/// Inclusive timestep range; `max_time == INF` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub min_time: u32,
    pub max_time: u32,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        min_time: 0,
        max_time: INF,
    };

    pub fn new(min_time: u32, max_time: u32) -> Interval {
        Interval { min_time, max_time }
    }

    pub fn is_empty(&self) -> bool {
        self.min_time > self.max_time
    }

    pub fn contains(&self, t: u32) -> bool {
        self.min_time <= t && t <= self.max_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeIntervals {
    pub start: Interval,
    pub end: Interval,
}

pub type IntervalTable = Vec<NodeIntervals>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IntervalError {
    #[error("node {node}: start or end interval became empty")]
    Empty { node: NodeId },
    #[error("node {node}: endpoint unreachable")]
    Unreachable { node: NodeId },
}

/// Collision-free earliest times with unbounded upper ends.
pub fn initialize_intervals(graph: &TaskGraph) -> Result<IntervalTable, IntervalError> {
    for node in &graph.nodes {
        if node.min_cost == INF {
            return Err(IntervalError::Unreachable { node: node.id });
        }
    }
    let mut table = vec![
        NodeIntervals {
            start: Interval::UNBOUNDED,
            end: Interval::UNBOUNDED
        };
        graph.nodes.len()
    ];
    update_intervals(graph, &mut table)?;
    Ok(table)
}

/// Propagates interval bounds to the fixpoint: a forward sweep raises
/// minimums along edges and through node traversal costs, a backward sweep
/// lowers maximums. Returns the ids of nodes whose intervals changed.
///
/// One sweep each direction suffices (the two bound systems are
/// independent); the outer loop is a guard and is asserted to exit after a
/// single extra no-op iteration.
pub fn update_intervals(
    graph: &TaskGraph,
    table: &mut IntervalTable,
) -> Result<Vec<NodeId>, IntervalError> {
    let mut changed = vec![false; graph.nodes.len()];
    let mut iterations = 0;
    loop {
        let mut dirty = false;
        for &id in &graph.topo {
            let node = &graph.nodes[id];
            let mut iv = table[id];
            for &p in &graph.preds[id] {
                iv.start.min_time = iv.start.min_time.max(table[p].end.min_time);
            }
            iv.end.min_time = iv
                .end
                .min_time
                .max(iv.start.min_time.saturating_add(node.min_cost));
            if iv != table[id] {
                table[id] = iv;
                changed[id] = true;
                dirty = true;
            }
        }
        for &id in graph.topo.iter().rev() {
            let node = &graph.nodes[id];
            let mut iv = table[id];
            for &s in &graph.succs[id] {
                iv.end.max_time = iv.end.max_time.min(table[s].start.max_time);
            }
            if iv.end.max_time != INF {
                match iv.end.max_time.checked_sub(node.min_cost) {
                    Some(limit) => iv.start.max_time = iv.start.max_time.min(limit),
                    None => return Err(IntervalError::Empty { node: id }),
                }
            }
            if iv != table[id] {
                table[id] = iv;
                changed[id] = true;
                dirty = true;
            }
        }
        for (id, iv) in table.iter().enumerate() {
            if iv.start.is_empty() || iv.end.is_empty() {
                return Err(IntervalError::Empty { node: id });
            }
        }
        if !dirty {
            break;
        }
        iterations += 1;
        debug_assert!(iterations <= 2, "interval propagation failed to settle");
        if iterations > graph.nodes.len() + 2 {
            break;
        }
    }
    Ok((0..changed.len()).filter(|&i| changed[i]).collect())
}

/// Upper bound on any optimal solution's final timestep: no useful plan
/// revisits a (cell, remaining work) pair, padded per coalition member.
pub fn search_horizon(map: &GridMap, problem: &Problem) -> u32 {
    let free = map.free_vertices().len() as u64;
    let bound =
        free * (problem.num_tasks() as u64 + 1) * (problem.max_coalition_degree() as u64 + 1);
    bound.min(INF as u64 - 1) as u32
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProblemError {
    #[error("line {line}: {what}")]
    Syntax { line: usize, what: String },
    #[error("line {line}: duplicate {kind} {id}")]
    Duplicate {
        line: usize,
        kind: &'static str,
        id: usize,
    },
    #[error("line {line}: unknown {kind} {id}")]
    Unknown {
        line: usize,
        kind: &'static str,
        id: usize,
    },
    #[error("{kind} ids must be contiguous from 0")]
    NonContiguous { kind: &'static str },
    #[error("problem declares no agents")]
    NoAgents,
}

/// Parses the problem format: `agent <id> start <r> <c> park <r> <c>`,
/// `task <id> pickup <r> <c> deliver <r> <c> coalition <id>...`,
/// `edge <a> <b>`, `allot <agent> <task>...`. `#` starts a comment.
pub fn parse_problem(text: &str) -> Result<Problem, ProblemError> {
    let mut agents: Vec<(usize, AgentSpec)> = Vec::new();
    let mut tasks: Vec<(usize, Task)> = Vec::new();
    let mut edges: Vec<(TaskId, TaskId)> = Vec::new();
    let mut allots: Vec<(usize, AgentId, Vec<TaskId>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = body.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let syntax = |what: &str| ProblemError::Syntax {
            line,
            what: what.to_string(),
        };
        match words[0] {
            "agent" => {
                if words.len() != 8 || words[2] != "start" || words[5] != "park" {
                    return Err(syntax("expected `agent <id> start <r> <c> park <r> <c>`"));
                }
                let id = parse_num(words[1], line, "agent id")?;
                let start = parse_vertex(words[3], words[4], line)?;
                let parking = parse_vertex(words[6], words[7], line)?;
                if agents.iter().any(|(_, a)| a.id == id) {
                    return Err(ProblemError::Duplicate {
                        line,
                        kind: "agent",
                        id,
                    });
                }
                agents.push((line, AgentSpec { id, start, parking }));
            }
            "task" => {
                if words.len() < 9
                    || words[2] != "pickup"
                    || words[5] != "deliver"
                    || words[8] != "coalition"
                {
                    return Err(syntax(
                        "expected `task <id> pickup <r> <c> deliver <r> <c> coalition <id>...`",
                    ));
                }
                let id = parse_num(words[1], line, "task id")?;
                let pickup = parse_vertex(words[3], words[4], line)?;
                let delivery = parse_vertex(words[6], words[7], line)?;
                let mut coalition = Vec::new();
                for w in &words[9..] {
                    coalition.push(parse_num(w, line, "coalition agent id")?);
                }
                if coalition.is_empty() {
                    return Err(syntax("coalition must list at least one agent"));
                }
                coalition.sort_unstable();
                coalition.dedup();
                if tasks.iter().any(|(_, t)| t.id == id) {
                    return Err(ProblemError::Duplicate {
                        line,
                        kind: "task",
                        id,
                    });
                }
                tasks.push((
                    line,
                    Task {
                        id,
                        pickup,
                        delivery,
                        coalition,
                    },
                ));
            }
            "edge" => {
                if words.len() != 3 {
                    return Err(syntax("expected `edge <taskA> <taskB>`"));
                }
                let a = parse_num(words[1], line, "task id")?;
                let b = parse_num(words[2], line, "task id")?;
                edges.push((a, b));
            }
            "allot" => {
                if words.len() < 2 {
                    return Err(syntax("expected `allot <agent> <task>...`"));
                }
                let agent = parse_num(words[1], line, "agent id")?;
                let mut list = Vec::new();
                for w in &words[2..] {
                    list.push(parse_num(w, line, "task id")?);
                }
                if allots.iter().any(|(_, a, _)| *a == agent) {
                    return Err(ProblemError::Duplicate {
                        line,
                        kind: "allot record for agent",
                        id: agent,
                    });
                }
                allots.push((line, agent, list));
            }
            other => {
                return Err(syntax(&format!("unknown record `{other}`")));
            }
        }
    }

    if agents.is_empty() {
        return Err(ProblemError::NoAgents);
    }
    let n_agents = agents.len();
    let n_tasks = tasks.len();
    agents.sort_by_key(|(_, a)| a.id);
    tasks.sort_by_key(|(_, t)| t.id);
    if agents.iter().enumerate().any(|(i, (_, a))| a.id != i) {
        return Err(ProblemError::NonContiguous { kind: "agent" });
    }
    if tasks.iter().enumerate().any(|(i, (_, t))| t.id != i) {
        return Err(ProblemError::NonContiguous { kind: "task" });
    }
    for (line, task) in &tasks {
        for &m in &task.coalition {
            if m >= n_agents {
                return Err(ProblemError::Unknown {
                    line: *line,
                    kind: "agent",
                    id: m,
                });
            }
        }
    }

    let mut allotments = vec![Vec::new(); n_agents];
    for (line, agent, list) in allots {
        if agent >= n_agents {
            return Err(ProblemError::Unknown {
                line,
                kind: "agent",
                id: agent,
            });
        }
        for &t in &list {
            if t >= n_tasks {
                return Err(ProblemError::Unknown {
                    line,
                    kind: "task",
                    id: t,
                });
            }
        }
        allotments[agent] = list;
    }

    Ok(Problem {
        agents: agents.into_iter().map(|(_, a)| a).collect(),
        tasks: tasks.into_iter().map(|(_, t)| t).collect(),
        edges,
        allotments,
    })
}

fn parse_num(word: &str, line: usize, what: &str) -> Result<usize, ProblemError> {
    word.parse().map_err(|_| ProblemError::Syntax {
        line,
        what: format!("invalid {what} `{word}`"),
    })
}

fn parse_vertex(r: &str, c: &str, line: usize) -> Result<Vertex, ProblemError> {
    let row = parse_num(r, line, "row")? as u16;
    let col = parse_num(c, line, "col")? as u16;
    Ok(Vertex::new(row, col))
}

/// Canonical rendering; `parse_problem` round-trips it.
pub fn format_problem(problem: &Problem) -> String {
    let mut out = String::new();
    for a in &problem.agents {
        out.push_str(&format!(
            "agent {} start {} {} park {} {}\n",
            a.id, a.start.row, a.start.col, a.parking.row, a.parking.col
        ));
    }
    for t in &problem.tasks {
        out.push_str(&format!(
            "task {} pickup {} {} deliver {} {} coalition",
            t.id, t.pickup.row, t.pickup.col, t.delivery.row, t.delivery.col
        ));
        for m in &t.coalition {
            out.push_str(&format!(" {m}"));
        }
        out.push('\n');
    }
    for &(a, b) in &problem.edges {
        out.push_str(&format!("edge {a} {b}\n"));
    }
    for (agent, list) in problem.allotments.iter().enumerate() {
        out.push_str(&format!("allot {agent}"));
        for t in list {
            out.push_str(&format!(" {t}"));
        }
        out.push('\n');
    }
    out
}
