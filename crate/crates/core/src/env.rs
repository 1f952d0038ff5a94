//! Deterministic grid-world MMDP: drones deliver to per-agent goals while
//! avoiding obstacles, the board edge and each other.
//!
//! Moves resolve simultaneously. A mover that leaves the board stays put
//! (out of bounds). A mover that targets an obstacle, a cell another mover
//! also targets, a cell whose occupant ends the step there, or the cell of
//! an agent moving into its own origin (a swap) stays put and collides.
//! Blocked movers are resolved to a fixed point, so the resulting state
//! never has two live agents on one cell.

use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GOAL_REWARD: f64 = 1.0;
pub const COLLISION_PENALTY: f64 = -1.0;
pub const OUT_OF_BOUNDS_PENALTY: f64 = -0.5;
/// Charged to both agents of every live pair at Chebyshev distance <= 1.
pub const PROXIMITY_PENALTY: f64 = -0.05;
/// Per cell of Chebyshev distance gained towards the goal.
pub const SHAPING_WEIGHT: f64 = 0.1;

pub const N_ACTIONS: usize = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("grid dimensions {width}x{height} are too small (minimum 2x2)")]
    InvalidDimensions { width: usize, height: usize },
    #[error("{needed} placements do not fit into {cells} cells")]
    CapacityExceeded { needed: usize, cells: usize },
    #[error("step called on a terminal state")]
    TerminalState,
    #[error("joint action has {got} entries, state has {expected} agents")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn offset(self, (dx, dy): (i32, i32)) -> Cell {
        Cell::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The nine primitive moves. `y` grows southwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum AgentAction {
    North = 0,
    NorthEast = 1,
    East = 2,
    SouthEast = 3,
    South = 4,
    SouthWest = 5,
    West = 6,
    NorthWest = 7,
    Stay = 8,
}

impl AgentAction {
    pub const ALL: [AgentAction; N_ACTIONS] = [
        AgentAction::North,
        AgentAction::NorthEast,
        AgentAction::East,
        AgentAction::SouthEast,
        AgentAction::South,
        AgentAction::SouthWest,
        AgentAction::West,
        AgentAction::NorthWest,
        AgentAction::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn displacement(self) -> (i32, i32) {
        match self {
            AgentAction::North => (0, -1),
            AgentAction::NorthEast => (1, -1),
            AgentAction::East => (1, 0),
            AgentAction::SouthEast => (1, 1),
            AgentAction::South => (0, 1),
            AgentAction::SouthWest => (-1, 1),
            AgentAction::West => (-1, 0),
            AgentAction::NorthWest => (-1, -1),
            AgentAction::Stay => (0, 0),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            AgentAction::North => "N",
            AgentAction::NorthEast => "NE",
            AgentAction::East => "E",
            AgentAction::SouthEast => "SE",
            AgentAction::South => "S",
            AgentAction::SouthWest => "SW",
            AgentAction::West => "W",
            AgentAction::NorthWest => "NW",
            AgentAction::Stay => "STAY",
        }
    }
}

/// One action per agent, index-aligned with `GridState::agents`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction(pub Vec<AgentAction>);

impl JointAction {
    pub fn stay(n: usize) -> Self {
        JointAction(vec![AgentAction::Stay; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[AgentAction] {
        &self.0
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(a.short_name())?;
        }
        f.write_str(">")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStatus {
    pub position: Cell,
    pub goal: Cell,
    pub done: bool,
    pub cumulative_score: f64,
}

impl AgentStatus {
    pub fn new(position: Cell, goal: Cell) -> Self {
        Self { position, goal, done: false, cumulative_score: 0.0 }
    }
}

/// Static part of a scenario: dimensions and obstacles. Shared between all
/// states of an episode.
#[derive(Debug, PartialEq, Eq)]
struct Board {
    width: usize,
    height: usize,
    obstacles: Vec<Cell>,
    obstacle_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    board: Arc<Board>,
    pub agents: Vec<AgentStatus>,
    pub step: usize,
    pub step_limit: usize,
}

impl GridState {
    /// Builds and validates a state. Obstacles are deduplicated and sorted.
    pub fn new(
        width: usize,
        height: usize,
        mut obstacles: Vec<Cell>,
        agents: Vec<AgentStatus>,
        step_limit: usize,
    ) -> Result<Self, EnvError> {
        if width < 2 || height < 2 {
            return Err(EnvError::InvalidDimensions { width, height });
        }
        obstacles.sort();
        obstacles.dedup();
        let mut obstacle_mask = vec![false; width * height];
        for &c in &obstacles {
            if c.x < 0 || c.y < 0 || c.x as usize >= width || c.y as usize >= height {
                return Err(EnvError::InvalidState(format!("obstacle {c} outside the grid")));
            }
            obstacle_mask[c.y as usize * width + c.x as usize] = true;
        }
        let state = GridState {
            board: Arc::new(Board { width, height, obstacles, obstacle_mask }),
            agents,
            step: 0,
            step_limit,
        };
        state.validate()?;
        Ok(state)
    }

    /// Checks every structural invariant of the state.
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidState(msg));
        for (i, a) in self.agents.iter().enumerate() {
            if !self.in_bounds(a.position) {
                return bad(format!("agent {i} at {} outside the grid", a.position));
            }
            if !self.in_bounds(a.goal) {
                return bad(format!("goal of agent {i} at {} outside the grid", a.goal));
            }
            if !a.done && self.is_obstacle(a.position) {
                return bad(format!("agent {i} stands on obstacle {}", a.position));
            }
        }
        for i in 0..self.agents.len() {
            for j in i + 1..self.agents.len() {
                let (a, b) = (&self.agents[i], &self.agents[j]);
                if !a.done && !b.done && a.position == b.position {
                    return bad(format!("agents {i} and {j} share cell {}", a.position));
                }
            }
        }
        if self.step > self.step_limit {
            return bad(format!("step {} exceeds limit {}", self.step, self.step_limit));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.board.width
    }

    pub fn height(&self) -> usize {
        self.board.height
    }

    pub fn obstacles(&self) -> &[Cell] {
        &self.board.obstacles
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width() && (c.y as usize) < self.height()
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.board.obstacle_mask[c.y as usize * self.board.width + c.x as usize]
    }

    pub fn steps_remaining(&self) -> usize {
        self.step_limit - self.step
    }

    pub fn live_agents(&self) -> impl Iterator<Item = usize> + '_ {
        self.agents.iter().enumerate().filter(|(_, a)| !a.done).map(|(i, _)| i)
    }

    /// Replaces the entries of done agents by `Stay`.
    pub fn normalize_action(&self, action: &mut JointAction) {
        for (a, s) in action.0.iter_mut().zip(&self.agents) {
            if s.done {
                *a = AgentAction::Stay;
            }
        }
    }

    pub fn total_score(&self) -> f64 {
        self.agents.iter().map(|a| a.cumulative_score).sum()
    }

    pub fn goals_reached(&self) -> usize {
        self.agents.iter().filter(|a| a.done).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentEvents {
    pub reached_goal: bool,
    pub collision: bool,
    pub out_of_bounds: bool,
    /// Number of live agents within Chebyshev distance 1 after the move.
    pub proximity_pairs: u32,
}

impl AgentEvents {
    pub fn proximity(&self) -> bool {
        self.proximity_pairs > 0
    }

    pub fn is_empty(&self) -> bool {
        !self.reached_goal && !self.collision && !self.out_of_bounds && self.proximity_pairs == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: GridState,
    pub rewards: Vec<f64>,
    pub events: Vec<AgentEvents>,
}

impl StepOutcome {
    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

/// The per-agent reward as a function of its events and its distance gain.
pub fn compose_reward(events: &AgentEvents, distance_gain: i32) -> f64 {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    GOAL_REWARD * flag(events.reached_goal)
        + COLLISION_PENALTY * flag(events.collision)
        + OUT_OF_BOUNDS_PENALTY * flag(events.out_of_bounds)
        + PROXIMITY_PENALTY * f64::from(events.proximity_pairs)
        + SHAPING_WEIGHT * f64::from(distance_gain)
}

pub fn is_terminal(state: &GridState) -> bool {
    state.step >= state.step_limit || state.agents.iter().all(|a| a.done)
}

pub fn step(state: &GridState, action: &JointAction) -> Result<StepOutcome, EnvError> {
    if is_terminal(state) {
        return Err(EnvError::TerminalState);
    }
    let n = state.n_agents();
    if action.len() != n {
        return Err(EnvError::LengthMismatch { expected: n, got: action.len() });
    }

    let mut events = vec![AgentEvents::default(); n];
    let origin: Vec<Cell> = state.agents.iter().map(|a| a.position).collect();
    let live: Vec<bool> = state.agents.iter().map(|a| !a.done).collect();
    // Where each agent ends up; starts as the intended cell.
    let mut dest = origin.clone();

    for i in 0..n {
        if !live[i] {
            continue;
        }
        let target = origin[i].offset(action.0[i].displacement());
        if target == origin[i] {
            continue;
        }
        if !state.in_bounds(target) {
            events[i].out_of_bounds = true;
        } else if state.is_obstacle(target) {
            events[i].collision = true;
        } else {
            dest[i] = target;
        }
    }

    let moving = |i: usize, dest: &[Cell]| live[i] && dest[i] != origin[i];

    // Movers sharing a target, and pairwise swaps.
    let mut blocked = vec![false; n];
    for i in 0..n {
        if !moving(i, &dest) {
            continue;
        }
        for j in 0..n {
            if i == j || !moving(j, &dest) {
                continue;
            }
            if dest[i] == dest[j] || (dest[i] == origin[j] && dest[j] == origin[i]) {
                blocked[i] = true;
            }
        }
    }
    for i in 0..n {
        if blocked[i] {
            dest[i] = origin[i];
            events[i].collision = true;
        }
    }

    // A mover entering a cell whose occupant ends the step there collides.
    // Reverting one mover may block another, so iterate to a fixed point.
    loop {
        let mut changed = false;
        for i in 0..n {
            if !moving(i, &dest) {
                continue;
            }
            let occupied = (0..n).any(|j| j != i && live[j] && dest[j] == dest[i]);
            if occupied {
                dest[i] = origin[i];
                events[i].collision = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    for i in 0..n {
        if !live[i] {
            continue;
        }
        for j in i + 1..n {
            if live[j] && dest[i].chebyshev(dest[j]) <= 1 {
                events[i].proximity_pairs += 1;
                events[j].proximity_pairs += 1;
            }
        }
    }

    let mut next = state.clone();
    next.step += 1;
    let mut rewards = vec![0.0; n];
    for i in 0..n {
        if !live[i] {
            continue;
        }
        let agent = &mut next.agents[i];
        let before = origin[i].chebyshev(agent.goal);
        let after = dest[i].chebyshev(agent.goal);
        agent.position = dest[i];
        if dest[i] == agent.goal {
            events[i].reached_goal = true;
            agent.done = true;
        }
        rewards[i] = compose_reward(&events[i], before - after);
        agent.cumulative_score += rewards[i];
    }

    Ok(StepOutcome { next_state: next, rewards, events })
}

/// Places agents, goals and obstacles on distinct uniformly sampled cells.
pub fn generate_scenario(
    width: usize,
    height: usize,
    n_agents: usize,
    n_obstacles: usize,
    step_limit: usize,
    seed: u64,
) -> Result<GridState, EnvError> {
    if width < 2 || height < 2 {
        return Err(EnvError::InvalidDimensions { width, height });
    }
    let cells = width * height;
    let needed = 2 * n_agents + n_obstacles;
    if needed > cells {
        return Err(EnvError::CapacityExceeded { needed, cells });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, cells, needed).into_vec();
    let cell = |k: usize| Cell::new((k % width) as i32, (k / width) as i32);
    let agents = (0..n_agents)
        .map(|i| AgentStatus::new(cell(picks[i]), cell(picks[n_agents + i])))
        .collect();
    let obstacles = picks[2 * n_agents..].iter().map(|&k| cell(k)).collect();
    GridState::new(width, height, obstacles, agents, step_limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use AgentAction::*;

    fn state_with(agents: &[((i32, i32), (i32, i32))], obstacles: &[(i32, i32)]) -> GridState {
        GridState::new(
            8,
            8,
            obstacles.iter().map(|&(x, y)| Cell::new(x, y)).collect(),
            agents
                .iter()
                .map(|&((x, y), (gx, gy))| AgentStatus::new(Cell::new(x, y), Cell::new(gx, gy)))
                .collect(),
            40,
        )
        .unwrap()
    }

    #[test]
    fn out_of_bounds_keeps_agent_in_place() {
        let s = state_with(&[((0, 0), (7, 7))], &[]);
        let out = step(&s, &JointAction(vec![NorthWest])).unwrap();
        assert_eq!(out.next_state.agents[0].position, Cell::new(0, 0));
        assert_eq!(out.rewards[0], -0.5);
        assert!(out.events[0].out_of_bounds && !out.events[0].collision);
    }

    #[test]
    fn two_movers_into_one_cell_both_collide() {
        // (2,3) East and (4,3) West both target (3,3). The pair is also at
        // distance 2 so no proximity charge applies; distance to far goals
        // is unchanged because they stay.
        let s = state_with(&[((2, 3), (2, 7)), ((4, 3), (4, 7))], &[]);
        let out = step(&s, &JointAction(vec![East, West])).unwrap();
        assert_eq!(out.next_state.agents[0].position, Cell::new(2, 3));
        assert_eq!(out.next_state.agents[1].position, Cell::new(4, 3));
        assert_eq!(out.rewards, vec![-1.0, -1.0]);
        assert!(out.events.iter().all(|e| e.collision));
    }

    #[test]
    fn idle_agent_gets_nothing() {
        let s = state_with(&[((0, 0), (5, 0))], &[]);
        let out = step(&s, &JointAction(vec![Stay])).unwrap();
        assert_eq!(out.rewards, vec![0.0]);
        assert!(out.events[0].is_empty());
    }

    #[test]
    fn reaching_goal_pays_bonus_plus_shaping() {
        let s = state_with(&[((1, 1), (1, 2))], &[]);
        let out = step(&s, &JointAction(vec![South])).unwrap();
        let a = &out.next_state.agents[0];
        assert!(a.done);
        assert_eq!(a.position, Cell::new(1, 2));
        assert!((out.rewards[0] - 1.1).abs() < 1e-12);
        assert!(out.events[0].reached_goal);
    }

    #[test]
    fn obstacle_and_stayer_collisions_hit_mover_only() {
        let s = state_with(&[((1, 1), (7, 7)), ((3, 3), (7, 0)), ((4, 3), (0, 7))], &[(2, 1)]);
        // agent 0 runs into the obstacle, agent 1 into agent 2 which stays.
        let out = step(&s, &JointAction(vec![East, East, Stay])).unwrap();
        assert!(out.events[0].collision);
        assert!(out.events[1].collision);
        assert!(!out.events[2].collision);
        assert_eq!(out.next_state.agents[1].position, Cell::new(3, 3));
        // agents 1 and 2 are adjacent: one proximity pair each
        assert_eq!(out.events[2].proximity_pairs, 1);
        assert_eq!(out.rewards[2], -0.05);
    }

    #[test]
    fn swaps_collide_and_chains_follow() {
        let s = state_with(&[((1, 1), (7, 7)), ((2, 1), (7, 0))], &[]);
        let out = step(&s, &JointAction(vec![East, West])).unwrap();
        assert!(out.events[0].collision && out.events[1].collision);

        // A follows B which moves into free space: both succeed.
        let s = state_with(&[((1, 1), (7, 1)), ((2, 1), (7, 2))], &[]);
        let out = step(&s, &JointAction(vec![East, East])).unwrap();
        assert!(!out.events[0].collision && !out.events[1].collision);
        assert_eq!(out.next_state.agents[0].position, Cell::new(2, 1));
        assert_eq!(out.next_state.agents[1].position, Cell::new(3, 1));
    }

    #[test]
    fn blocked_leader_cascades_to_follower() {
        // B tries to move onto the obstacle and stays, so A following B collides too.
        let s = state_with(&[((1, 1), (7, 1)), ((2, 1), (7, 2))], &[(3, 1)]);
        let out = step(&s, &JointAction(vec![East, East])).unwrap();
        assert!(out.events[0].collision && out.events[1].collision);
        out.next_state.validate().unwrap();
    }

    #[test]
    fn done_agents_are_not_physical() {
        let mut s = state_with(&[((1, 1), (1, 1)), ((2, 1), (7, 7))], &[]);
        s.agents[0].done = true;
        let out = step(&s, &JointAction(vec![South, West])).unwrap();
        assert_eq!(out.next_state.agents[0].position, Cell::new(1, 1));
        assert_eq!(out.next_state.agents[1].position, Cell::new(1, 1));
        assert_eq!(out.rewards[0], 0.0);
        assert!(!out.events[1].collision);
    }

    #[test]
    fn terminal_and_malformed_inputs_are_rejected() {
        let mut s = state_with(&[((1, 1), (7, 7))], &[]);
        assert_eq!(
            step(&s, &JointAction(vec![Stay, Stay])),
            Err(EnvError::LengthMismatch { expected: 1, got: 2 })
        );
        s.step = s.step_limit;
        assert!(is_terminal(&s));
        assert_eq!(step(&s, &JointAction(vec![Stay])), Err(EnvError::TerminalState));
    }

    #[test]
    fn terminal_detection() {
        let mut s = state_with(&[((1, 1), (7, 7)), ((2, 2), (6, 6))], &[]);
        assert!(!is_terminal(&s));
        s.step = 3;
        s.agents.iter_mut().for_each(|a| a.done = true);
        assert!(is_terminal(&s));
        s.agents[0].done = false;
        assert!(!is_terminal(&s));
        s.step = s.step_limit;
        assert!(is_terminal(&s));
    }

    #[test]
    fn scenario_generation() {
        let s = generate_scenario(8, 8, 5, 4, 40, 7).unwrap();
        assert_eq!(s.n_agents(), 5);
        assert_eq!(s.obstacles().len(), 4);
        let mut cells: Vec<Cell> = s.obstacles().to_vec();
        cells.extend(s.agents.iter().flat_map(|a| [a.position, a.goal]));
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 14);
        assert_eq!(s, generate_scenario(8, 8, 5, 4, 40, 7).unwrap());

        let tiny = generate_scenario(2, 2, 1, 0, 10, 0).unwrap();
        assert_ne!(tiny.agents[0].position, tiny.agents[0].goal);
        assert!(tiny.in_bounds(tiny.agents[0].goal));

        assert_eq!(
            generate_scenario(2, 2, 3, 2, 10, 0),
            Err(EnvError::CapacityExceeded { needed: 8, cells: 4 })
        );
        assert_eq!(
            generate_scenario(1, 5, 1, 0, 10, 0),
            Err(EnvError::InvalidDimensions { width: 1, height: 5 })
        );
    }
}
