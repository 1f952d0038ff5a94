//! Best-response dynamics on normal-form games.
//!
//! Each agent in turn switches to a best response against the others'
//! current actions. Under an exact best-response oracle the updating agent's
//! payoff never decreases, and a sweep that changes nothing is a pure Nash
//! equilibrium. Games without one (matching pennies) cycle forever; that is
//! reported as [`NoConvergence`].

use rand::Rng;
use thiserror::Error;

pub trait Game {
    fn n_agents(&self) -> usize;
    fn n_actions(&self, agent: usize) -> usize;
    fn payoffs(&self, joint: &[usize]) -> Vec<f64>;

    fn payoff(&self, agent: usize, joint: &[usize]) -> f64 {
        self.payoffs(joint)[agent]
    }
}

pub trait BestResponse {
    /// A best action for `agent` holding the others in `joint` fixed.
    fn best_response(&self, agent: usize, joint: &[usize]) -> usize;
}

/// Exact argmax over the game's payoffs. Ties keep the current action when it
/// is among the maximizers, otherwise pick the lowest index, so a joint action
/// at which nobody strictly improves is a fixed point.
pub struct ExactBestResponse<'g, G: Game>(pub &'g G);

impl<G: Game> BestResponse for ExactBestResponse<'_, G> {
    fn best_response(&self, agent: usize, joint: &[usize]) -> usize {
        let game = self.0;
        let mut probe = joint.to_vec();
        let current = game.payoff(agent, joint);
        let mut best = joint[agent];
        let mut best_value = current;
        for a in 0..game.n_actions(agent) {
            probe[agent] = a;
            let v = game.payoff(agent, &probe);
            if v > best_value {
                best = a;
                best_value = v;
            }
        }
        best
    }
}

/// Dense payoff table over every joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    actions: Vec<usize>,
    /// `table[joint_index][agent]`.
    table: Vec<Vec<f64>>,
}

impl MatrixGame {
    pub fn from_fn(actions: Vec<usize>, mut payoff: impl FnMut(&[usize]) -> Vec<f64>) -> Self {
        let n = actions.len();
        let size: usize = actions.iter().product();
        let mut table = Vec::with_capacity(size);
        let mut joint = vec![0; n];
        for idx in 0..size {
            decode(&actions, idx, &mut joint);
            let p = payoff(&joint);
            assert_eq!(p.len(), n, "payoff vector length");
            table.push(p);
        }
        Self { actions, table }
    }

    /// Independent uniform payoffs in `[0, 1)` for every agent and joint action.
    pub fn random(actions: Vec<usize>, rng: &mut impl Rng) -> Self {
        let n = actions.len();
        Self::from_fn(actions, |_| (0..n).map(|_| rng.gen::<f64>()).collect())
    }

    /// Everybody gets 1 iff all actions are equal.
    pub fn coordination(n_agents: usize, n_actions: usize) -> Self {
        Self::from_fn(vec![n_actions; n_agents], |j| {
            let v = if j.iter().all(|&a| a == j[0]) { 1.0 } else { 0.0 };
            vec![v; j.len()]
        })
    }

    pub fn matching_pennies() -> Self {
        Self::from_fn(vec![2, 2], |j| if j[0] == j[1] { vec![1.0, -1.0] } else { vec![-1.0, 1.0] })
    }

    pub fn size(&self) -> usize {
        self.table.len()
    }

    pub fn index(&self, joint: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &m) in joint.iter().zip(&self.actions) {
            debug_assert!(*a < m);
            idx = idx * m + a;
        }
        idx
    }

    pub fn joint(&self, index: usize) -> Vec<usize> {
        let mut j = vec![0; self.actions.len()];
        decode(&self.actions, index, &mut j);
        j
    }

    /// No agent can strictly gain by deviating alone.
    pub fn is_pure_nash(&self, joint: &[usize]) -> bool {
        let mut probe = joint.to_vec();
        for agent in 0..self.n_agents() {
            let here = self.payoff(agent, joint);
            for a in 0..self.actions[agent] {
                probe[agent] = a;
                if self.payoff(agent, &probe) > here {
                    return false;
                }
            }
            probe[agent] = joint[agent];
        }
        true
    }

    /// Brute force over the full joint action space.
    pub fn pure_nash_equilibria(&self) -> Vec<Vec<usize>> {
        (0..self.size()).map(|i| self.joint(i)).filter(|j| self.is_pure_nash(j)).collect()
    }
}

fn decode(actions: &[usize], mut idx: usize, out: &mut [usize]) {
    for (slot, &m) in out.iter_mut().zip(actions).rev() {
        *slot = idx % m;
        idx /= m;
    }
}

impl Game for MatrixGame {
    fn n_agents(&self) -> usize {
        self.actions.len()
    }

    fn n_actions(&self, agent: usize) -> usize {
        self.actions[agent]
    }

    fn payoffs(&self, joint: &[usize]) -> Vec<f64> {
        self.table[self.index(joint)].clone()
    }

    fn payoff(&self, agent: usize, joint: &[usize]) -> f64 {
        self.table[self.index(joint)][agent]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub sweep: usize,
    pub agent: usize,
    pub from: usize,
    pub to: usize,
    /// Updating agent's payoff before and after its move.
    pub before: f64,
    pub after: f64,
    /// Every agent's payoff after the move.
    pub payoffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrdOutcome {
    pub joint: Vec<usize>,
    pub trace: Vec<UpdateRecord>,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no fixed point after {sweeps} sweeps")]
pub struct NoConvergence {
    pub sweeps: usize,
    pub last: Vec<usize>,
    pub trace: Vec<UpdateRecord>,
}

pub fn best_response_dynamics<G: Game, B: BestResponse>(
    game: &G,
    oracle: &B,
    start: &[usize],
    max_sweeps: usize,
) -> Result<BrdOutcome, NoConvergence> {
    assert_eq!(start.len(), game.n_agents(), "start length");
    let mut joint = start.to_vec();
    let mut trace = Vec::new();
    for sweep in 1..=max_sweeps {
        let mut changed = false;
        for agent in 0..game.n_agents() {
            let before = game.payoff(agent, &joint);
            let from = joint[agent];
            let to = oracle.best_response(agent, &joint);
            joint[agent] = to;
            let payoffs = game.payoffs(&joint);
            changed |= to != from;
            trace.push(UpdateRecord { sweep, agent, from, to, before, after: payoffs[agent], payoffs });
        }
        if !changed {
            return Ok(BrdOutcome { joint, trace, sweeps: sweep });
        }
    }
    Err(NoConvergence { sweeps: max_sweeps, last: joint, trace })
}
