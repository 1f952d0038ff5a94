//! Browser bindings. Every call returns JSON text so the page needs no
//! generated type glue beyond strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use siclop::env::{self, AgentEvents, AgentStatus, Cell, GridState, JointAction};
use siclop::experiment::mix_seed;
use siclop::model::{self, ModelConfig, ModelParams};
use siclop::obsgraph::CoordinationGraph;
use siclop::pruner::{sample_candidates_seeded, NetworkOracle};
use siclop::search::Budget;
use siclop::trainer::{choose_action, EpisodeConfig, PlannerKind};

/// Upper bound on the per-step node budget; keeps the page responsive.
pub const MAX_NODES: usize = 2000;

#[derive(Serialize)]
struct StateView<'a> {
    width: usize,
    height: usize,
    step: usize,
    step_limit: usize,
    terminal: bool,
    obstacles: &'a [Cell],
    agents: &'a [AgentStatus],
    edges: &'a [(usize, usize)],
    mean_score: f64,
}

#[derive(Serialize)]
struct StepView {
    actions: Vec<&'static str>,
    rewards: Vec<f64>,
    events: Vec<AgentEvents>,
    /// Per-agent action distribution the planner settled on.
    policies: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CandidateView {
    actions: Vec<&'static str>,
    share: f64,
}

fn names(action: &JointAction) -> Vec<&'static str> {
    action.0.iter().map(|a| a.short_name()).collect()
}

#[wasm_bindgen]
pub struct Simulator {
    initial: GridState,
    state: GridState,
    params: ModelParams,
    config: EpisodeConfig,
    seed: u64,
}

#[wasm_bindgen]
impl Simulator {
    /// Generates a scenario. The network starts from seeded random weights
    /// until a checkpoint is loaded.
    #[wasm_bindgen(constructor)]
    pub fn new(
        width: usize,
        height: usize,
        agents: usize,
        obstacles: usize,
        step_limit: usize,
        seed: u32,
    ) -> Result<Simulator, String> {
        let seed = u64::from(seed);
        let initial = env::generate_scenario(width, height, agents, obstacles, step_limit, seed).map_err(|e| e.to_string())?;
        let config = EpisodeConfig::default();
        let params = ModelParams::init(&ModelConfig::default(), seed);
        Ok(Simulator { state: initial.clone(), initial, params, config, seed })
    }

    pub fn reset(&mut self) {
        self.state = self.initial.clone();
    }

    pub fn state_json(&self) -> String {
        let positions: Vec<Cell> = self.state.agents.iter().map(|a| a.position).collect();
        let graph = CoordinationGraph::from_positions(&positions, self.config.radius);
        let n = self.state.n_agents().max(1) as f64;
        let view = StateView {
            width: self.state.width(),
            height: self.state.height(),
            step: self.state.step,
            step_limit: self.state.step_limit,
            terminal: env::is_terminal(&self.state),
            obstacles: self.state.obstacles(),
            agents: &self.state.agents,
            edges: graph.edges(),
            mean_score: self.state.total_score() / n,
        };
        serde_json::to_string(&view).expect("state serializes")
    }

    /// Plans one joint action with `planner` ("siclop", "uniform-mcts" or
    /// "random") under a node budget, applies it and describes the step.
    pub fn plan_step(&mut self, planner: &str, nodes: usize) -> Result<String, String> {
        if env::is_terminal(&self.state) {
            return Err("episode is over; reset to play again".into());
        }
        let mut config = self.config.clone();
        config.planner = planner.parse::<PlannerKind>().map_err(|e| e.to_string())?;
        config.search.budget = Budget::Nodes(nodes.clamp(1, MAX_NODES));
        let seed = mix_seed(self.seed, self.state.step as u64);
        let (mut action, policies) = choose_action(&self.state, Some(&self.params), &config, seed).map_err(|e| e.to_string())?;
        self.state.normalize_action(&mut action);
        let outcome = env::step(&self.state, &action).map_err(|e| e.to_string())?;
        let view = StepView {
            actions: names(&action),
            rewards: outcome.rewards.clone(),
            events: outcome.events.clone(),
            policies: policies.iter().map(|p| p.to_vec()).collect(),
        };
        self.state = outcome.next_state;
        Ok(serde_json::to_string(&view).expect("step serializes"))
    }

    /// Joint actions the pruner would hand to the tree from the current
    /// state, with their share of the sampled records.
    pub fn candidates(&self, k: usize) -> String {
        if env::is_terminal(&self.state) {
            return "[]".into();
        }
        let mut oracle =
            NetworkOracle::new(&self.params, &self.state, self.config.radius, None).with_noise(self.config.policy_noise);
        let seed = mix_seed(self.seed ^ 0xC0FFEE, self.state.step as u64);
        let set = sample_candidates_seeded(&mut oracle, k.max(1), self.config.search.sweeps, seed);
        let mut views: Vec<CandidateView> =
            set.frequencies().iter().map(|(a, share)| CandidateView { actions: names(a), share: *share }).collect();
        views.sort_by(|a, b| b.share.total_cmp(&a.share));
        serde_json::to_string(&views).expect("candidates serialize")
    }

    /// Replaces the network with a checkpoint written by the command line
    /// trainer. The checkpoint must use the default model shape.
    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<(), String> {
        self.params = model::load_expecting(bytes, &ModelConfig::default()).map_err(|e| e.to_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_planner_names_are_reported() {
        let mut sim = Simulator::new(6, 6, 2, 2, 10, 1).unwrap();
        assert!(sim.plan_step("greedy", 20).is_err());
        assert_eq!(sim.state.step, 0);
    }

    #[test]
    fn candidate_shares_sum_to_one() {
        let sim = Simulator::new(8, 8, 3, 4, 20, 2).unwrap();
        let v: serde_json::Value = serde_json::from_str(&sim.candidates(8)).unwrap();
        let rows = v.as_array().unwrap();
        assert!(!rows.is_empty() && rows.len() <= 8);
        let total: f64 = rows.iter().map(|r| r["share"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(rows.iter().all(|r| r["actions"].as_array().unwrap().len() == 3));
    }
}
