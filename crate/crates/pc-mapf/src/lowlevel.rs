//! Constrained space-time A* for one agent through its ordered pickup and
//! delivery events, ending at its parking vertex.
//!
//! States are (position, timestep, events completed). Expansion order is the
//! lexicographic six-part tuple: bound overflow, precedence-conflict count,
//! collision count against fixed plans, move count plus cost-to-go,
//! cost-to-go, and f-value. The first two pressure the search toward plans
//! the conflict tree will accept; the rest are classic tie-breaks.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use crate::gridworld::{DistanceTable, MotionGraph, Vertex, INF};
use crate::taskgraph::{AgentId, Interval, IntervalTable, Problem, TaskGraph, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintLoc {
    Vertex(Vertex),
    /// Move from the first to the second cell departing at the constraint
    /// time (occupying the target one step later).
    Edge(Vertex, Vertex),
}

/// Bans one agent from a cell or move at one timestep. A constraint born
/// from a collision keeps the opposing agent: the ban is lifted while the
/// constrained agent is executing a task whose coalition includes that
/// partner, because co-movement inside a shared task is legal and a split
/// must not cut those plans away. `partner: None` bans unconditionally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Constraint {
    pub agent: AgentId,
    pub loc: ConstraintLoc,
    pub time: u32,
    pub partner: Option<AgentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskTimes {
    pub task: TaskId,
    pub pickup: u32,
    pub delivery: u32,
}

/// One agent's plan: a position per timestep up to arrival, plus the times
/// it executed each allotted task. Agents rest at the final cell afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentPath {
    pub agent: AgentId,
    pub positions: Vec<Vertex>,
    pub events: Vec<TaskTimes>,
}

impl AgentPath {
    pub fn arrival(&self) -> u32 {
        self.positions.len() as u32 - 1
    }

    pub fn at(&self, t: u32) -> Vertex {
        self.positions[(t as usize).min(self.positions.len() - 1)]
    }

    /// The task being executed at t (pickup through delivery inclusive).
    pub fn carrying_at(&self, t: u32) -> Option<TaskId> {
        self.events
            .iter()
            .find(|e| e.pickup <= t && t <= e.delivery)
            .map(|e| e.task)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Pickup,
    Delivery,
}

/// A pickup or delivery the agent must perform, with the timestep window the
/// current conflict-tree node permits for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventSpec {
    pub task: TaskId,
    pub kind: EventKind,
    pub vertex: Vertex,
    pub window: Interval,
}

/// The agent's event sequence under the given interval table: pickup and
/// delivery per allotted task, windows taken from its CARRY node intervals.
pub fn agent_events(
    problem: &Problem,
    graph: &TaskGraph,
    intervals: &IntervalTable,
    agent: AgentId,
) -> Vec<EventSpec> {
    let mut out = Vec::new();
    for &task in &problem.allotments[agent] {
        let carry = graph.carry_node[task];
        out.push(EventSpec {
            task,
            kind: EventKind::Pickup,
            vertex: problem.tasks[task].pickup,
            window: intervals[carry].start,
        });
        out.push(EventSpec {
            task,
            kind: EventKind::Delivery,
            vertex: problem.tasks[task].delivery,
            window: intervals[carry].end,
        });
    }
    out
}

pub struct PlanInput<'a> {
    pub graph: &'a MotionGraph,
    pub dist: &'a DistanceTable,
    pub problem: &'a Problem,
    pub agent: AgentId,
    pub events: &'a [EventSpec],
    /// May contain other agents' constraints; they are filtered out.
    pub constraints: &'a [Constraint],
    /// Fixed plans of already-planned agents (never this one).
    pub others: &'a [AgentPath],
    /// Arrivals up to this timestep cost nothing in the leading tuple term.
    pub makespan_bound: u32,
    pub horizon: u32,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub path: Option<AgentPath>,
    pub expanded: u64,
}

type Tuple = [u32; 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct State {
    t: u32,
    v: Vertex,
    k: u8,
}

/// Everything derivable once per planning call.
struct Searcher<'a> {
    input: &'a PlanInput<'a>,
    /// input.horizon extended past the last constraint and window minimum,
    /// after which nothing time-dependent remains to dodge or await.
    horizon: u32,
    parking: Vertex,
    /// anchors[k] is the next vertex that matters after completing k events.
    anchors: Vec<Vertex>,
    /// tails[k] is the distance sum from anchors[k] through later anchors.
    tails: Vec<u32>,
    vertex_bans: HashMap<(Vertex, u32), Vec<Option<AgentId>>>,
    edge_bans: HashMap<(Vertex, Vertex, u32), Vec<Option<AgentId>>>,
    latest_parking_ban: Option<u32>,
    /// Per own task: fixed coalition members as (path index, pickup, delivery).
    fixed_members: HashMap<TaskId, Vec<(usize, u32, u32)>>,
    /// Per event index: fixed cross-edge bounds (see `fire_penalty`).
    cross_bounds: Vec<Vec<u32>>,
}

pub fn plan_agent_path(input: &PlanInput) -> PlanResult {
    let searcher = Searcher::new(input);
    searcher.run()
}

impl<'a> Searcher<'a> {
    fn new(input: &'a PlanInput<'a>) -> Searcher<'a> {
        let map = &input.graph.map;
        let parking = input.problem.agents[input.agent].parking;
        let k_max = input.events.len();
        let mut anchors: Vec<Vertex> = input.events.iter().map(|e| e.vertex).collect();
        anchors.push(parking);
        let mut tails = vec![0u32; k_max + 1];
        for k in (0..k_max).rev() {
            tails[k] = input
                .dist
                .get(map, anchors[k], anchors[k + 1])
                .saturating_add(tails[k + 1]);
        }

        let mut vertex_bans: HashMap<(Vertex, u32), Vec<Option<AgentId>>> = HashMap::new();
        let mut edge_bans: HashMap<(Vertex, Vertex, u32), Vec<Option<AgentId>>> = HashMap::new();
        let mut latest_parking_ban = None;
        for c in input.constraints.iter().filter(|c| c.agent == input.agent) {
            match c.loc {
                ConstraintLoc::Vertex(v) => {
                    vertex_bans.entry((v, c.time)).or_default().push(c.partner);
                    if v == parking {
                        latest_parking_ban =
                            Some(latest_parking_ban.map_or(c.time, |t: u32| t.max(c.time)));
                    }
                }
                ConstraintLoc::Edge(from, to) => {
                    edge_bans
                        .entry((from, to, c.time))
                        .or_default()
                        .push(c.partner);
                }
            }
        }

        let mut fixed_members: HashMap<TaskId, Vec<(usize, u32, u32)>> = HashMap::new();
        for &task in &input.problem.allotments[input.agent] {
            let mut members = Vec::new();
            for (idx, other) in input.others.iter().enumerate() {
                if let Some(times) = other.events.iter().find(|e| e.task == task) {
                    members.push((idx, times.pickup, times.delivery));
                }
            }
            fixed_members.insert(task, members);
        }

        let cross_bounds = input
            .events
            .iter()
            .map(|event| {
                let mut bounds = Vec::new();
                for &(a, b) in &input.problem.edges {
                    match event.kind {
                        EventKind::Pickup if b == event.task => {
                            // Latest fixed delivery of the predecessor task.
                            if let Some(t) =
                                fixed_event_times(input.others, a).map(|(_, dl)| dl).max()
                            {
                                bounds.push(t);
                            }
                        }
                        EventKind::Delivery if a == event.task => {
                            // Earliest fixed pickup of the successor task.
                            if let Some(t) =
                                fixed_event_times(input.others, b).map(|(pu, _)| pu).min()
                            {
                                bounds.push(t);
                            }
                        }
                        _ => {}
                    }
                }
                bounds
            })
            .collect();

        let mut static_after: u32 = 0;
        for c in input.constraints.iter().filter(|c| c.agent == input.agent) {
            static_after = static_after.max(c.time.saturating_add(1));
        }
        for e in input.events {
            if e.window.min_time != INF {
                static_after = static_after.max(e.window.min_time);
            }
        }
        let horizon = input.horizon.saturating_add(static_after);

        Searcher {
            input,
            horizon,
            parking,
            anchors,
            tails,
            vertex_bans,
            edge_bans,
            latest_parking_ban,
            fixed_members,
            cross_bounds,
        }
    }

    fn cost_to_go(&self, v: Vertex, k: usize) -> u32 {
        self.input
            .dist
            .get(&self.input.graph.map, v, self.anchors[k])
            .saturating_add(self.tails[k])
    }

    /// Task carried after completing k events (odd k = mid-carry).
    fn carrying(&self, k: usize) -> Option<TaskId> {
        if k % 2 == 1 {
            Some(self.input.events[k - 1].task)
        } else {
            None
        }
    }

    fn ban_applies(
        &self,
        entries: Option<&Vec<Option<AgentId>>>,
        carrying: Option<TaskId>,
    ) -> bool {
        let Some(entries) = entries else { return false };
        entries.iter().any(|&partner| match (partner, carrying) {
            (Some(p), Some(task)) => !self.input.problem.tasks[task].coalition.contains(&p),
            _ => true,
        })
    }

    fn vertex_allowed(&self, v: Vertex, t: u32, k: usize) -> bool {
        !self.ban_applies(self.vertex_bans.get(&(v, t)), self.carrying(k))
    }

    fn move_allowed(&self, from: Vertex, to: Vertex, t: u32, k: usize) -> bool {
        from == to || !self.ban_applies(self.edge_bans.get(&(from, to, t)), self.carrying(k))
    }

    /// Remaining event windows are reachable from (v, t, k): firing each
    /// event at the earliest feasible time must stay within its window.
    fn windows_reachable(&self, v: Vertex, t: u32, k: usize) -> bool {
        let map = &self.input.graph.map;
        let mut at = v;
        let mut earliest = t;
        for event in &self.input.events[k..] {
            earliest = earliest.saturating_add(self.input.dist.get(map, at, event.vertex));
            earliest = earliest.max(event.window.min_time);
            if earliest > event.window.max_time {
                return false;
            }
            at = event.vertex;
        }
        true
    }

    /// Precedence-conflict increments for firing event k at time t.
    fn fire_penalty(&self, k: usize, t: u32) -> u32 {
        let event = &self.input.events[k];
        let mut count = 0;
        for &(_, pickup, delivery) in &self.fixed_members[&event.task] {
            let fixed = match event.kind {
                EventKind::Pickup => pickup,
                EventKind::Delivery => delivery,
            };
            if fixed != t {
                count += 1;
            }
        }
        for &bound in &self.cross_bounds[k] {
            let violated = match event.kind {
                EventKind::Pickup => bound > t,
                EventKind::Delivery => bound < t,
            };
            if violated {
                count += 1;
            }
        }
        count
    }

    /// Mid-carry unison pressure: fixed coalition members elsewhere at t.
    fn divergence_penalty(&self, v: Vertex, t: u32, k: usize) -> u32 {
        let Some(task) = self.carrying(k) else {
            return 0;
        };
        self.fixed_members[&task]
            .iter()
            .filter(|&&(idx, pickup, delivery)| {
                pickup <= t && t <= delivery && self.input.others[idx].at(t) != v
            })
            .count() as u32
    }

    /// New collisions against fixed plans for arriving at `to` at time t
    /// having moved from `from` (equal for the initial placement).
    fn collision_penalty(
        &self,
        from: Vertex,
        to: Vertex,
        t: u32,
        k_from: usize,
        k_to: usize,
    ) -> u32 {
        let mine_now = self.carrying(k_to);
        let mine_move = self.carrying(k_from);
        let mut count = 0;
        for other in self.input.others {
            let shared_now = match (mine_now, other.carrying_at(t)) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            };
            if crate::gridworld::is_vertex_collision(to, other.at(t), shared_now) {
                count += 1;
            }
            if t > 0 {
                let shared_move = match (mine_move, other.carrying_at(t - 1)) {
                    (Some(a), Some(b)) => a == b,
                    _ => false,
                };
                if crate::gridworld::is_edge_collision(
                    from,
                    to,
                    other.at(t - 1),
                    other.at(t),
                    shared_move,
                ) {
                    count += 1;
                }
            }
        }
        count
    }

    fn tuple(&self, t: u32, v: Vertex, k: usize, c2: u32, c3: u32, moves: u32) -> Option<Tuple> {
        let ctg = self.cost_to_go(v, k);
        if ctg == INF || t.saturating_add(ctg) > self.horizon {
            return None;
        }
        let c1 = (t + ctg).saturating_sub(self.input.makespan_bound);
        Some([c1, c2, c3, moves + ctg, ctg, t + ctg])
    }

    /// Emits the arrival state at every legal event-closure level: fire
    /// nothing, or fire each consecutive due event at this very timestep.
    /// A level banned for its own carry status is skipped but does not stop
    /// the chain (events are instantaneous, so passing through is legal).
    #[allow(clippy::too_many_arguments)]
    fn arrivals(
        &self,
        from: Vertex,
        to: Vertex,
        t: u32,
        k: usize,
        c2: u32,
        c3: u32,
        moves: u32,
        out: &mut Vec<(State, Tuple)>,
    ) {
        let k_max = self.input.events.len();
        let mut level = k;
        let mut level_c2 = c2;
        loop {
            if self.vertex_allowed(to, t, level) && self.windows_reachable(to, t, level) {
                let c2_here = level_c2 + self.divergence_penalty(to, t, level);
                let c3_here = c3 + self.collision_penalty(from, to, t, k, level);
                if let Some(tuple) = self.tuple(t, to, level, c2_here, c3_here, moves) {
                    out.push((
                        State {
                            t,
                            v: to,
                            k: level as u8,
                        },
                        tuple,
                    ));
                }
            }
            if level < k_max {
                let event = &self.input.events[level];
                if event.vertex == to && event.window.contains(t) {
                    level_c2 += self.fire_penalty(level, t);
                    level += 1;
                    continue;
                }
            }
            break;
        }
    }

    fn run(&self) -> PlanResult {
        let map = &self.input.graph.map;
        let k_max = self.input.events.len();
        debug_assert!(k_max < u8::MAX as usize);
        let start = self.input.problem.agents[self.input.agent].start;

        let mut open: BinaryHeap<Reverse<(Tuple, State)>> = BinaryHeap::new();
        let mut best: HashMap<State, Tuple> = HashMap::new();
        let mut parent: HashMap<State, State> = HashMap::new();
        let mut expanded = 0u64;

        let mut seeds = Vec::new();
        self.arrivals(start, start, 0, 0, 0, 0, 0, &mut seeds);
        for (state, tuple) in seeds {
            if best.get(&state).is_none_or(|old| tuple < *old) {
                best.insert(state, tuple);
                open.push(Reverse((tuple, state)));
            }
        }

        while let Some(Reverse((tuple, state))) = open.pop() {
            if best.get(&state) != Some(&tuple) {
                continue;
            }
            expanded += 1;
            if state.k as usize == k_max
                && state.v == self.parking
                && self.latest_parking_ban.is_none_or(|ban| state.t > ban)
            {
                let path = self.reconstruct(&parent, state);
                return PlanResult {
                    path: Some(path),
                    expanded,
                };
            }
            if state.t >= self.horizon {
                continue;
            }

            let [_, c2, c3, c4, c5, _] = tuple;
            let moves = c4 - c5;
            let k = state.k as usize;
            let mut candidates = vec![state.v];
            candidates.extend_from_slice(self.input.graph.neighbors(state.v));
            for to in candidates {
                if !self.move_allowed(state.v, to, state.t, k) {
                    continue;
                }
                let moved = moves + u32::from(to != state.v);
                let mut emitted = Vec::new();
                self.arrivals(state.v, to, state.t + 1, k, c2, c3, moved, &mut emitted);
                for (next, next_tuple) in emitted {
                    if best.get(&next).is_none_or(|old| next_tuple < *old) {
                        best.insert(next, next_tuple);
                        parent.insert(next, state);
                        open.push(Reverse((next_tuple, next)));
                    }
                }
            }
            let _ = map;
        }
        PlanResult {
            path: None,
            expanded,
        }
    }

    fn reconstruct(&self, parent: &HashMap<State, State>, goal: State) -> AgentPath {
        let mut chain = vec![goal];
        while let Some(&p) = parent.get(chain.last().unwrap()) {
            chain.push(p);
        }
        chain.reverse();

        let mut positions = Vec::with_capacity(chain.len());
        let mut fire_times = vec![0u32; self.input.events.len()];
        let first = chain[0];
        positions.push(first.v);
        for j in 0..first.k {
            fire_times[j as usize] = first.t;
        }
        for pair in chain.windows(2) {
            let (from, to) = (pair[0], pair[1]);
            debug_assert_eq!(to.t, from.t + 1);
            positions.push(to.v);
            for j in from.k..to.k {
                fire_times[j as usize] = to.t;
            }
        }

        let events = self
            .input
            .events
            .chunks(2)
            .enumerate()
            .map(|(i, pair)| TaskTimes {
                task: pair[0].task,
                pickup: fire_times[2 * i],
                delivery: fire_times[2 * i + 1],
            })
            .collect();
        AgentPath {
            agent: self.input.agent,
            positions,
            events,
        }
    }
}

fn fixed_event_times<'a>(
    others: &'a [AgentPath],
    task: TaskId,
) -> impl Iterator<Item = (u32, u32)> + 'a {
    others.iter().flat_map(move |other| {
        other
            .events
            .iter()
            .filter(move |e| e.task == task)
            .map(|e| (e.pickup, e.delivery))
    })
}

/// Arrival condition for a single-waypoint walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkGoal {
    /// First reachable arrival.
    Earliest,
    /// Arrive at exactly this timestep.
    Exactly(u32),
    /// First arrival strictly after this timestep (for resting at the
    /// target once everything else has passed through it).
    After(u32),
}

/// A walk from one cell to one target, departing at an absolute timestep,
/// against caller-defined occupancy. Plain f-ordered space-time A*, ties by
/// earlier time then row then column.
pub struct WalkInput<'a> {
    pub graph: &'a MotionGraph,
    pub dist: &'a DistanceTable,
    pub from: Vertex,
    pub to: Vertex,
    pub depart: u32,
    pub goal: WalkGoal,
    pub horizon: u32,
}

#[derive(Debug, Clone)]
pub struct WalkResult {
    /// Position per timestep from depart through arrival.
    pub path: Option<Vec<Vertex>>,
    pub expanded: u64,
}

/// `vertex_free(v, t)` must permit occupying v at t; `edge_free(a, b, t)`
/// must permit the move a -> b departing at t. The departure state itself
/// is taken as given: the caller vouches for standing at `from` at `depart`
/// (it is the end of an already committed segment), so only later states
/// are tested.
pub fn plan_walk(
    input: &WalkInput,
    vertex_free: impl Fn(Vertex, u32) -> bool,
    edge_free: impl Fn(Vertex, Vertex, u32) -> bool,
) -> WalkResult {
    let map = &input.graph.map;
    let limit = match input.goal {
        WalkGoal::Exactly(t) => t,
        _ => input.horizon,
    };
    let ctg = |v: Vertex| input.dist.get(map, v, input.to);

    let mut open: BinaryHeap<Reverse<(u32, u32, u16, u16)>> = BinaryHeap::new();
    let mut parent: HashMap<(Vertex, u32), Vertex> = HashMap::new();
    let mut closed: HashSet<(Vertex, u32)> = HashSet::new();
    let mut expanded = 0u64;

    let start_f = input.depart.saturating_add(ctg(input.from));
    if start_f <= limit {
        open.push(Reverse((
            start_f,
            input.depart,
            input.from.row,
            input.from.col,
        )));
    }

    while let Some(Reverse((_, t, row, col))) = open.pop() {
        let v = Vertex::new(row, col);
        if !closed.insert((v, t)) {
            continue;
        }
        expanded += 1;

        let arrived = v == input.to
            && match input.goal {
                WalkGoal::Earliest => true,
                WalkGoal::Exactly(want) => t == want,
                WalkGoal::After(bound) => t > bound,
            };
        if arrived {
            let mut path = vec![v];
            let mut cursor = (v, t);
            while let Some(&p) = parent.get(&cursor) {
                path.push(p);
                cursor = (p, cursor.1 - 1);
            }
            path.reverse();
            debug_assert_eq!(path.len() as u32, t - input.depart + 1);
            return WalkResult {
                path: Some(path),
                expanded,
            };
        }

        for &w in std::iter::once(&v).chain(input.graph.neighbors(v)) {
            let t2 = t + 1;
            if t2.saturating_add(ctg(w)) > limit
                || closed.contains(&(w, t2))
                || !vertex_free(w, t2)
                || (w != v && !edge_free(v, w, t))
            {
                continue;
            }
            if parent.insert((w, t2), v).is_none() {
                open.push(Reverse((t2.saturating_add(ctg(w)), t2, w.row, w.col)));
            }
        }
    }
    WalkResult {
        path: None,
        expanded,
    }
}
