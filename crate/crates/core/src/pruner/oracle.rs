use std::collections::HashMap;

use super::dynamics::{BestResponse, ExactBestResponse, Game};
use super::PolicyOracle;
use crate::env::{AgentAction, GridState, N_ACTIONS};
use crate::model::{self, ModelParams};
use crate::obsgraph::{self, GraphInput};

const UNIFORM: [f64; N_ACTIONS] = [1.0 / N_ACTIONS as f64; N_ACTIONS];

/// Uniform over the nine moves for every agent and context.
#[derive(Debug, Clone)]
pub struct UniformOracle {
    frozen: Vec<bool>,
}

impl UniformOracle {
    pub fn new(n_agents: usize) -> Self {
        Self { frozen: vec![false; n_agents] }
    }

    /// Finished agents of `state` are frozen.
    pub fn for_state(state: &GridState) -> Self {
        Self { frozen: state.agents.iter().map(|a| a.done).collect() }
    }
}

impl PolicyOracle for UniformOracle {
    fn n_agents(&self) -> usize {
        self.frozen.len()
    }

    fn is_frozen(&self, agent: usize) -> bool {
        self.frozen[agent]
    }

    fn joint_policy(&mut self) -> Vec<[f64; N_ACTIONS]> {
        vec![UNIFORM; self.frozen.len()]
    }

    fn conditional(&mut self, _: usize, _: &[AgentAction]) -> [f64; N_ACTIONS] {
        UNIFORM
    }
}

/// Network-backed conditional policies.
///
/// The others' moves are shown to the network by drawing each other agent at
/// the cell it is about to enter; agent `i` itself stays where it is. The
/// state, step counter and graph are left untouched. Results are memoized on
/// `(agent, others' moves)`.
pub struct NetworkOracle<'a> {
    params: &'a ModelParams,
    state: &'a GridState,
    radius: usize,
    base: Option<Vec<[f64; N_ACTIONS]>>,
    input: GraphInput,
    memo: HashMap<(usize, Vec<AgentAction>), [f64; N_ACTIONS]>,
    noise: f64,
    /// Number of network evaluations actually performed.
    pub evaluations: usize,
}

impl<'a> NetworkOracle<'a> {
    /// `base` may carry already computed unconditioned policies of `state`.
    pub fn new(params: &'a ModelParams, state: &'a GridState, radius: usize, base: Option<Vec<[f64; N_ACTIONS]>>) -> Self {
        Self {
            params,
            state,
            radius,
            base,
            input: obsgraph::preprocess(state, radius),
            memo: HashMap::new(),
            noise: 0.0,
            evaluations: 0,
        }
    }

    /// Mixes every returned policy with the uniform one: `(1 − ε)·π + ε/9`.
    pub fn with_noise(mut self, epsilon: f64) -> Self {
        assert!((0.0..=1.0).contains(&epsilon), "noise must lie in [0, 1]");
        self.noise = epsilon;
        self
    }

    fn mix(&self, mut p: [f64; N_ACTIONS]) -> [f64; N_ACTIONS] {
        if self.noise > 0.0 {
            for v in &mut p {
                *v = (1.0 - self.noise) * *v + self.noise / N_ACTIONS as f64;
            }
        }
        p
    }
}

impl PolicyOracle for NetworkOracle<'_> {
    fn n_agents(&self) -> usize {
        self.state.n_agents()
    }

    fn is_frozen(&self, agent: usize) -> bool {
        self.state.agents[agent].done
    }

    fn joint_policy(&mut self) -> Vec<[f64; N_ACTIONS]> {
        if self.base.is_none() {
            self.evaluations += 1;
            let pv = model::predict(self.params, &self.input).expect("observation shape matches the model");
            self.base = Some(pv.policies);
        }
        let base = self.base.as_ref().expect("set above");
        base.iter().map(|p| self.mix(*p)).collect()
    }

    fn conditional(&mut self, agent: usize, current: &[AgentAction]) -> [f64; N_ACTIONS] {
        let mut others = current.to_vec();
        others[agent] = AgentAction::Stay;
        let key = (agent, others);
        if let Some(p) = self.memo.get(&key) {
            return self.mix(*p);
        }
        let intents: Vec<Option<AgentAction>> =
            (0..current.len()).map(|j| if j == agent { None } else { Some(current[j]) }).collect();
        // Only rows within L hops of `agent` influence its output.
        let rows = self.input.graph.ball(agent, self.params.n_layers());
        let mut ctx = self.input.clone();
        obsgraph::refresh_rows(self.state, self.radius, &intents, &rows, &mut ctx);
        self.evaluations += 1;
        let (policy, _) = model::predict_agent(self.params, &ctx, agent).expect("observation shape matches the model");
        self.memo.insert(key, policy);
        self.mix(policy)
    }
}

/// One-hot exact best responses of a normal-form game with at most nine
/// actions per agent; action `a` maps to `AgentAction::from_index(a)`.
pub struct GameOracle<'g, G: Game> {
    game: &'g G,
    start: Vec<usize>,
}

impl<'g, G: Game> GameOracle<'g, G> {
    pub fn new(game: &'g G, start: Vec<usize>) -> Self {
        assert!((0..game.n_agents()).all(|i| game.n_actions(i) <= N_ACTIONS));
        Self { game, start }
    }
}

fn one_hot(i: usize) -> [f64; N_ACTIONS] {
    let mut p = [0.0; N_ACTIONS];
    p[i] = 1.0;
    p
}

impl<G: Game> PolicyOracle for GameOracle<'_, G> {
    fn n_agents(&self) -> usize {
        self.game.n_agents()
    }

    fn joint_policy(&mut self) -> Vec<[f64; N_ACTIONS]> {
        self.start.iter().map(|&a| one_hot(a)).collect()
    }

    fn conditional(&mut self, agent: usize, current: &[AgentAction]) -> [f64; N_ACTIONS] {
        let joint: Vec<usize> = current.iter().map(|a| a.index()).collect();
        one_hot(ExactBestResponse(self.game).best_response(agent, &joint))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_scenario;
    use crate::model::ModelConfig;
    use crate::pruner::{sample_candidates_seeded, MatrixGame};

    #[test]
    fn network_conditional_matches_direct_evaluation() {
        let params = ModelParams::init(&ModelConfig::default(), 3);
        let state = generate_scenario(8, 8, 4, 4, 25, 5).unwrap();
        let mut oracle = NetworkOracle::new(&params, &state, 2, None);
        let current = vec![AgentAction::East, AgentAction::South, AgentAction::Stay, AgentAction::NorthWest];
        let intents: Vec<Option<AgentAction>> =
            current.iter().enumerate().map(|(j, &a)| if j == 1 { None } else { Some(a) }).collect();
        let full = obsgraph::preprocess_with_intents(&state, 2, &intents);
        let direct = model::predict(&params, &full).unwrap().policies[1];
        let got = oracle.conditional(1, &current);
        for (a, b) in got.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        // agent 1's own entry is irrelevant and served from the memo
        let mut other = current.clone();
        other[1] = AgentAction::West;
        assert_eq!(oracle.conditional(1, &other), got);
        assert_eq!(oracle.evaluations, 1);
    }

    #[test]
    fn noise_mixes_with_uniform() {
        let params = ModelParams::init(&ModelConfig::default(), 3);
        let state = generate_scenario(8, 8, 3, 4, 25, 5).unwrap();
        let current = vec![AgentAction::Stay; 3];
        let raw = NetworkOracle::new(&params, &state, 2, None).conditional(0, &current);
        let mixed = NetworkOracle::new(&params, &state, 2, None).with_noise(0.25).conditional(0, &current);
        for (r, m) in raw.iter().zip(&mixed) {
            assert!((m - (0.75 * r + 0.25 / 9.0)).abs() < 1e-15);
        }
        let full = NetworkOracle::new(&params, &state, 2, None).with_noise(1.0).joint_policy();
        assert!(full.iter().flatten().all(|&p| (p - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn game_oracle_sampling_lands_on_equilibrium() {
        let game = MatrixGame::coordination(3, 5);
        let mut oracle = GameOracle::new(&game, vec![0, 3, 4]);
        let set = sample_candidates_seeded(&mut oracle, 4, 1, 0);
        assert_eq!(set.distinct_count, 1);
        let joint: Vec<usize> = set.joint_actions[0].0.iter().map(|a| a.index()).collect();
        assert!(game.is_pure_nash(&joint));
    }
}
