//! Local observations and the range-based coordination graph fed to the
//! network.
//!
//! Each agent sees a `(2r+1)²` window centred on itself with four binary
//! channels (obstacle, other live agent, own goal, off-board), followed by
//! four scalars: `dx/W`, `dy/H` to its goal, the fraction of steps left and
//! its done flag. Done agents get an all-zero window.

use crate::env::{AgentAction, Cell, GridState};
use crate::numcore::Matrix;

pub const DEFAULT_RADIUS: usize = 2;

const CHANNELS: usize = 4;
const CH_OBSTACLE: usize = 0;
const CH_AGENT: usize = 1;
const CH_GOAL: usize = 2;
const CH_OFF_BOARD: usize = 3;
const SCALARS: usize = 4;

pub fn window_side(radius: usize) -> usize {
    2 * radius + 1
}

/// Length of one observation vector; independent of grid size and agent count.
pub fn feature_len(radius: usize) -> usize {
    CHANNELS * window_side(radius).pow(2) + SCALARS
}

/// Undirected graph over agents; edges are stored once with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinationGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl CoordinationGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut list: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        list.sort_unstable();
        list.dedup();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &list {
            assert!(j < n, "edge ({i}, {j}) out of range for {n} nodes");
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Self { n, edges: list, neighbors }
    }

    /// Agents `i` and `j` are linked when their radius-`r` ranges intersect.
    pub fn from_positions(positions: &[Cell], radius: usize) -> Self {
        let reach = 2 * radius as i32;
        let n = positions.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if positions[i].chebyshev(positions[j]) <= reach {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// `D^{-1/2} (A + I) D^{-1/2}`.
    pub fn normalized_adjacency(&self) -> Matrix {
        let inv_sqrt: Vec<f64> = (0..self.n)
            .map(|i| 1.0 / ((self.neighbors[i].len() + 1) as f64).sqrt())
            .collect();
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m.set(i, i, inv_sqrt[i] * inv_sqrt[i]);
            for &j in &self.neighbors[i] {
                m.set(i, j, inv_sqrt[i] * inv_sqrt[j]);
            }
        }
        m
    }

    /// Nodes within `hops` edges of `i`, including `i`, in ascending order.
    pub fn ball(&self, i: usize, hops: usize) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        seen[i] = true;
        let mut frontier = vec![i];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        (0..self.n).filter(|&v| seen[v]).collect()
    }
}

/// Network input: one observation row per agent plus the coordination graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub observations: Matrix,
    pub graph: CoordinationGraph,
}

impl GraphInput {
    pub fn n_agents(&self) -> usize {
        self.graph.n()
    }
}

pub fn preprocess(state: &GridState, radius: usize) -> GraphInput {
    preprocess_with_intents(state, radius, &[])
}

/// Like [`preprocess`], but agents with an intended move are drawn in the
/// other-agent channel at the cell they are about to enter (when that cell is
/// on the board and free of obstacles). The graph uses true positions.
/// An empty `intents` slice means no intents.
pub fn preprocess_with_intents(state: &GridState, radius: usize, intents: &[Option<AgentAction>]) -> GraphInput {
    assert!(radius >= 1, "observation radius must be at least 1");
    let n = state.n_agents();
    let positions: Vec<Cell> = state.agents.iter().map(|a| a.position).collect();
    let shown = displayed_positions(state, intents);
    let occupancy = occupancy(state, &shown);

    let f = feature_len(radius);
    let mut observations = Matrix::zeros(n, f);
    for (i, &cell) in shown.iter().enumerate() {
        write_observation(state, radius, i, cell, &occupancy, observations.row_mut(i));
    }
    GraphInput { observations, graph: CoordinationGraph::from_positions(&positions, radius) }
}

/// Recomputes the observation rows of `agents` only, leaving the others as
/// they are in `input`.
pub fn refresh_rows(
    state: &GridState,
    radius: usize,
    intents: &[Option<AgentAction>],
    agents: &[usize],
    input: &mut GraphInput,
) {
    let shown = displayed_positions(state, intents);
    let occupancy = occupancy(state, &shown);
    for &i in agents {
        let row = input.observations.row_mut(i);
        row.iter_mut().for_each(|v| *v = 0.0);
        write_observation(state, radius, i, shown[i], &occupancy, row);
    }
}

/// Number of live agents displayed on each cell.
fn occupancy(state: &GridState, shown: &[Cell]) -> Vec<u8> {
    let mut counts = vec![0u8; state.width() * state.height()];
    for (i, a) in state.agents.iter().enumerate() {
        if !a.done {
            counts[cell_index(state, shown[i])] += 1;
        }
    }
    counts
}

fn cell_index(state: &GridState, c: Cell) -> usize {
    c.y as usize * state.width() + c.x as usize
}

fn displayed_positions(state: &GridState, intents: &[Option<AgentAction>]) -> Vec<Cell> {
    state
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| match intents.get(i).copied().flatten() {
            Some(act) if !a.done => {
                let target = a.position.offset(act.displacement());
                if state.in_bounds(target) && !state.is_obstacle(target) {
                    target
                } else {
                    a.position
                }
            }
            _ => a.position,
        })
        .collect()
}

fn write_observation(
    state: &GridState,
    radius: usize,
    agent: usize,
    shown_self: Cell,
    occupancy: &[u8],
    row: &mut [f64],
) {
    let side = window_side(radius);
    let plane = side * side;
    let me = &state.agents[agent];
    let scalars = CHANNELS * plane;

    let dx = f64::from(me.goal.x - me.position.x) / state.width() as f64;
    let dy = f64::from(me.goal.y - me.position.y) / state.height() as f64;
    let left = if state.step_limit == 0 {
        0.0
    } else {
        state.steps_remaining() as f64 / state.step_limit as f64
    };
    row[scalars] = dx;
    row[scalars + 1] = dy;
    row[scalars + 2] = left;
    row[scalars + 3] = if me.done { 1.0 } else { 0.0 };
    if me.done {
        return;
    }

    let r = radius as i32;
    let own = me.position;
    for wy in 0..side {
        for wx in 0..side {
            let c = Cell::new(own.x + wx as i32 - r, own.y + wy as i32 - r);
            let k = wy * side + wx;
            if !state.in_bounds(c) {
                row[CH_OFF_BOARD * plane + k] = 1.0;
                continue;
            }
            if state.is_obstacle(c) {
                row[CH_OBSTACLE * plane + k] = 1.0;
            }
            let others = occupancy[cell_index(state, c)] - u8::from(c == shown_self);
            if others > 0 {
                row[CH_AGENT * plane + k] = 1.0;
            }
            if c == me.goal {
                row[CH_GOAL * plane + k] = 1.0;
            }
        }
    }
}
