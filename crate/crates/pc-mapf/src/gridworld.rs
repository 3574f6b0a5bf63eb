//! Grid maps, the 4-connected motion graph, collision predicates, and
//! all-pairs shortest-path distances.
//!
//! Everything here is immutable after construction and shared by all solvers
//! and checkers, so the collision rules live in exactly one place.

use std::fmt;

use thiserror::Error;

/// Sentinel for "unreachable" distances and unbounded times.
pub const INF: u32 = u32::MAX;

/// A cell of the grid, in (row, col) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub row: u16,
    pub col: u16,
}

impl Vertex {
    pub fn new(row: u16, col: u16) -> Self {
        Vertex { row, col }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("line {line}: expected `{expected} <n>`")]
    Header { line: usize, expected: &'static str },
    #[error("line {line}: row has {got} cells, expected {expected}")]
    RowLength {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: unknown cell character {ch:?}")]
    UnknownCell { line: usize, ch: char },
    #[error("expected {expected} rows, found {got}")]
    RowCount { expected: usize, got: usize },
    #[error("map dimension {0} exceeds {max}", max = u16::MAX)]
    Oversized(usize),
    #[error("map has no free cell")]
    NoFreeCell,
}

/// Row-major occupancy grid. `true` cells are free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    pub height: u16,
    pub width: u16,
    cells: Vec<bool>,
}

impl GridMap {
    /// Parses the map format: `height <H>`, `width <W>`, then H rows of
    /// exactly W characters where `.` is free and `@` is an obstacle.
    pub fn parse(text: &str) -> Result<GridMap, MapError> {
        let mut lines = text.lines().enumerate();
        let height = parse_header(lines.next(), 1, "height")?;
        let width = parse_header(lines.next(), 2, "width")?;
        if height > u16::MAX as usize {
            return Err(MapError::Oversized(height));
        }
        if width > u16::MAX as usize {
            return Err(MapError::Oversized(width));
        }

        let mut cells = Vec::with_capacity(height * width);
        let mut rows = 0;
        for (idx, line) in lines {
            if rows == height && line.trim().is_empty() {
                continue;
            }
            let line_no = idx + 1;
            if rows == height {
                return Err(MapError::RowCount {
                    expected: height,
                    got: rows + 1,
                });
            }
            let got = line.chars().count();
            if got != width {
                return Err(MapError::RowLength {
                    line: line_no,
                    expected: width,
                    got,
                });
            }
            for ch in line.chars() {
                match ch {
                    '.' => cells.push(true),
                    '@' => cells.push(false),
                    other => {
                        return Err(MapError::UnknownCell {
                            line: line_no,
                            ch: other,
                        })
                    }
                }
            }
            rows += 1;
        }
        if rows != height {
            return Err(MapError::RowCount {
                expected: height,
                got: rows,
            });
        }
        if !cells.iter().any(|&free| free) {
            return Err(MapError::NoFreeCell);
        }
        Ok(GridMap {
            height: height as u16,
            width: width as u16,
            cells,
        })
    }

    /// Renders back to the map file format (round-trips with [`GridMap::parse`]).
    pub fn format(&self) -> String {
        let mut out = format!("height {}\nwidth {}\n", self.height, self.width);
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(if self.is_free(Vertex::new(row, col)) {
                    '.'
                } else {
                    '@'
                });
            }
            out.push('\n');
        }
        out
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Row-major cell index; callers must pass an in-bounds vertex.
    pub fn index(&self, v: Vertex) -> usize {
        v.row as usize * self.width as usize + v.col as usize
    }

    pub fn vertex_at(&self, index: usize) -> Vertex {
        Vertex::new(
            (index / self.width as usize) as u16,
            (index % self.width as usize) as u16,
        )
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.row < self.height && v.col < self.width
    }

    pub fn is_free(&self, v: Vertex) -> bool {
        self.contains(v) && self.cells[self.index(v)]
    }

    pub fn free_vertices(&self) -> Vec<Vertex> {
        (0..self.cells.len())
            .filter(|&i| self.cells[i])
            .map(|i| self.vertex_at(i))
            .collect()
    }

    /// Free 4-connected neighbors, in up/down/left/right order.
    pub fn neighbors(&self, v: Vertex) -> Vec<Vertex> {
        let mut out = Vec::with_capacity(4);
        if v.row > 0 {
            out.push(Vertex::new(v.row - 1, v.col));
        }
        if v.row + 1 < self.height {
            out.push(Vertex::new(v.row + 1, v.col));
        }
        if v.col > 0 {
            out.push(Vertex::new(v.row, v.col - 1));
        }
        if v.col + 1 < self.width {
            out.push(Vertex::new(v.row, v.col + 1));
        }
        out.retain(|&u| self.is_free(u));
        out
    }

    /// True when an agent at `from` may occupy `to` one timestep later:
    /// wait in place or move along one grid edge, both endpoints free.
    pub fn is_legal_step(&self, from: Vertex, to: Vertex) -> bool {
        if !self.is_free(from) || !self.is_free(to) {
            return false;
        }
        let dr = from.row.abs_diff(to.row);
        let dc = from.col.abs_diff(to.col);
        dr + dc <= 1
    }
}

fn parse_header(
    line: Option<(usize, &str)>,
    line_no: usize,
    key: &'static str,
) -> Result<usize, MapError> {
    let header = || MapError::Header {
        line: line_no,
        expected: key,
    };
    let (_, text) = line.ok_or_else(header)?;
    let mut parts = text.split_whitespace();
    if parts.next() != Some(key) {
        return Err(header());
    }
    let value: usize = parts
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or_else(header)?;
    if value == 0 || parts.next().is_some() {
        return Err(header());
    }
    Ok(value)
}

/// The motion graph over free cells, with cached adjacency.
#[derive(Debug, Clone)]
pub struct MotionGraph {
    pub map: GridMap,
    adjacency: Vec<Vec<Vertex>>,
}

impl MotionGraph {
    pub fn new(map: GridMap) -> MotionGraph {
        let adjacency = (0..map.num_cells())
            .map(|i| {
                let v = map.vertex_at(i);
                if map.is_free(v) {
                    map.neighbors(v)
                } else {
                    Vec::new()
                }
            })
            .collect();
        MotionGraph { map, adjacency }
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[self.map.index(v)]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// All-pairs shortest move counts over the motion graph, Floyd-Warshall.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<u32>,
}

impl DistanceTable {
    pub fn build(graph: &MotionGraph) -> DistanceTable {
        let n = graph.map.num_cells();
        let mut dist = vec![INF; n * n];
        for i in 0..n {
            if graph.map.is_free(graph.map.vertex_at(i)) {
                dist[i * n + i] = 0;
            }
        }
        for i in 0..n {
            for &nb in &graph.adjacency[i] {
                dist[i * n + graph.map.index(nb)] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = dist[i * n + k];
                if dik == INF {
                    continue;
                }
                for j in 0..n {
                    let through = dik.saturating_add(dist[k * n + j]);
                    if through < dist[i * n + j] {
                        dist[i * n + j] = through;
                    }
                }
            }
        }
        DistanceTable { n, dist }
    }

    pub fn get(&self, map: &GridMap, from: Vertex, to: Vertex) -> u32 {
        self.dist[map.index(from) * self.n + map.index(to)]
    }
}

/// Per-source BFS distances indexed by cell, the reference for
/// [`DistanceTable`] correctness checks.
pub fn bfs_distances(map: &GridMap, source: Vertex) -> Vec<u32> {
    let mut dist = vec![INF; map.num_cells()];
    if !map.is_free(source) {
        return dist;
    }
    dist[map.index(source)] = 0;
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[map.index(v)];
        for nb in map.neighbors(v) {
            let slot = &mut dist[map.index(nb)];
            if *slot == INF {
                *slot = dv + 1;
                queue.push_back(nb);
            }
        }
    }
    dist
}

/// Two occupancies at the same timestep collide unless the agents are
/// executing the same pickup-and-delivery task at that timestep.
pub fn is_vertex_collision(a: Vertex, b: Vertex, same_task: bool) -> bool {
    a == b && !same_task
}

/// Two moves over the same timestep collide when they exchange positions
/// along one edge, with the same shared-task exemption as vertices.
pub fn is_edge_collision(
    a_from: Vertex,
    a_to: Vertex,
    b_from: Vertex,
    b_to: Vertex,
    same_task: bool,
) -> bool {
    a_from != a_to && a_from == b_to && a_to == b_from && !same_task
}
