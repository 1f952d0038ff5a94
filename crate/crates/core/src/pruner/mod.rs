//! Joint-action pruning by iterated conditional resampling.
//!
//! Starting from a joint action drawn from the unconditioned per-agent
//! policies, each sweep visits the agents in order and redraws agent `i`'s
//! move from its policy conditioned on everybody else's current moves.
//! After `sweeps` sweeps the current joint action is recorded. Sampling stops
//! once `k` distinct joint actions were seen or after `4k` records, whichever
//! comes first, so confident (near one-hot) policies still terminate.

mod dynamics;
mod oracle;

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{AgentAction, JointAction, N_ACTIONS};

pub use dynamics::{
    best_response_dynamics, BestResponse, BrdOutcome, ExactBestResponse, Game, MatrixGame, NoConvergence,
    UpdateRecord,
};
pub use oracle::{GameOracle, NetworkOracle, UniformOracle};

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_SWEEPS: usize = 2;
/// Total records allowed per requested distinct candidate.
pub const DRAWS_PER_CANDIDATE: usize = 4;

/// Per-agent action distributions, optionally conditioned on the other
/// agents' current moves.
pub trait PolicyOracle {
    fn n_agents(&self) -> usize;

    /// Frozen agents (finished ones) always play `Stay` and are never resampled.
    fn is_frozen(&self, _agent: usize) -> bool {
        false
    }

    /// Unconditioned policies of every agent.
    fn joint_policy(&mut self) -> Vec<[f64; N_ACTIONS]>;

    /// Policy of `agent` given the moves of the others in `current`
    /// (`current[agent]` is ignored).
    fn conditional(&mut self, agent: usize, current: &[AgentAction]) -> [f64; N_ACTIONS];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    /// Every recorded joint action, duplicates included, in draw order.
    pub joint_actions: Vec<JointAction>,
    pub distinct_count: usize,
}

impl CandidateSet {
    /// Distinct joint actions in lexicographic order with their share of the
    /// records.
    pub fn frequencies(&self) -> Vec<(JointAction, f64)> {
        let mut counts: BTreeMap<&JointAction, usize> = BTreeMap::new();
        for a in &self.joint_actions {
            *counts.entry(a).or_default() += 1;
        }
        let total = self.joint_actions.len() as f64;
        counts.into_iter().map(|(a, c)| (a.clone(), c as f64 / total)).collect()
    }
}

/// Draws an index from a probability vector. Falls back to the most likely
/// entry if the weights are degenerate.
pub fn sample_action(policy: &[f64; N_ACTIONS], rng: &mut impl Rng) -> AgentAction {
    let idx = match WeightedIndex::new(policy.iter().copied()) {
        Ok(dist) => dist.sample(rng),
        Err(_) => argmax(policy),
    };
    AgentAction::from_index(idx).expect("policy has nine entries")
}

pub fn argmax(policy: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in policy.iter().enumerate() {
        if p > policy[best] {
            best = i;
        }
    }
    best
}

pub fn sample_candidates<O: PolicyOracle + ?Sized>(
    oracle: &mut O,
    k: usize,
    sweeps: usize,
    rng: &mut impl Rng,
) -> CandidateSet {
    assert!(k >= 1 && sweeps >= 1, "k and sweeps must be positive");
    let n = oracle.n_agents();
    let frozen: Vec<bool> = (0..n).map(|i| oracle.is_frozen(i)).collect();

    let initial = oracle.joint_policy();
    let mut current: Vec<AgentAction> = (0..n)
        .map(|i| if frozen[i] { AgentAction::Stay } else { sample_action(&initial[i], rng) })
        .collect();

    let max_draws = DRAWS_PER_CANDIDATE * k;
    let mut joint_actions = Vec::with_capacity(max_draws);
    let mut seen = std::collections::HashSet::new();
    while seen.len() < k && joint_actions.len() < max_draws {
        for _ in 0..sweeps {
            for i in 0..n {
                if frozen[i] {
                    continue;
                }
                let policy = oracle.conditional(i, &current);
                current[i] = sample_action(&policy, rng);
            }
        }
        let ja = JointAction(current.clone());
        seen.insert(ja.clone());
        joint_actions.push(ja);
    }
    CandidateSet { joint_actions, distinct_count: seen.len() }
}

pub fn sample_candidates_seeded<O: PolicyOracle + ?Sized>(oracle: &mut O, k: usize, sweeps: usize, seed: u64) -> CandidateSet {
    sample_candidates(oracle, k, sweeps, &mut ChaCha8Rng::seed_from_u64(seed))
}
