//! Self-play episodes and network training from their visit counts and
//! returns.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
#[cfg(not(target_arch = "wasm32"))]
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{self, AgentEvents, GridState, JointAction, N_ACTIONS, PROXIMITY_PENALTY};
use crate::model::{self, ModelError, ModelParams, TrainingTarget};
use crate::obsgraph::{self, GraphInput};
use crate::search::{self, NetworkGuide, RolloutGuide, SearchConfig, SearchError};

pub const DEFAULT_EPOCHS: usize = 4;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_RECENT_WINDOW: usize = 10;
pub const DEFAULT_REPLAY_CAPACITY: usize = 50;
pub const DEFAULT_POLICY_NOISE: f64 = 0.25;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("replay store is empty")]
    EmptyStore,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EpisodeError {
    #[error("initial state is already terminal")]
    TerminalStart,
    #[error("the siclop planner needs network parameters")]
    MissingParams,
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Env(#[from] env::EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlannerKind {
    Siclop,
    UniformMcts,
    Random,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Siclop, PlannerKind::UniformMcts, PlannerKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Siclop => "siclop",
            PlannerKind::UniformMcts => "uniform-mcts",
            PlannerKind::Random => "random",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlannerKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown planner `{s}` (expected siclop, uniform-mcts or random)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub planner: PlannerKind,
    pub search: SearchConfig,
    pub radius: usize,
    pub rollout_depth: usize,
    /// Uniform mixture weight of the pruner's network policies.
    pub policy_noise: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            planner: PlannerKind::Siclop,
            search: SearchConfig::default(),
            radius: obsgraph::DEFAULT_RADIUS,
            rollout_depth: search::DEFAULT_ROLLOUT_DEPTH,
            policy_noise: DEFAULT_POLICY_NOISE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub graph_input: GraphInput,
    /// Per-agent marginal of the root visit counts; all zero for agents
    /// that had already finished.
    pub policies: Vec<[f64; N_ACTIONS]>,
    pub action: JointAction,
    pub rewards: Vec<f64>,
    pub events: Vec<AgentEvents>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    /// `returns[t][i]` is agent `i`'s reward summed from step `t` on.
    pub returns: Vec<Vec<f64>>,
    pub n_agents: usize,
}

/// Aggregate event counts of one episode.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeSummary {
    pub mean_score: f64,
    pub collisions: u32,
    pub oob: u32,
    /// Total proximity penalty magnitude over all agents and steps.
    pub proximity: f64,
    pub goals: u32,
    pub steps: usize,
}

/// `out[t] = Σ_{t' ≥ t} rewards[t']`, per agent.
pub fn suffix_returns(rewards: &[Vec<f64>], n_agents: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n_agents]; rewards.len()];
    let mut acc = vec![0.0; n_agents];
    for t in (0..rewards.len()).rev() {
        for i in 0..n_agents {
            acc[i] += rewards[t][i];
        }
        out[t].clone_from(&acc);
    }
    out
}

impl EpisodeRecord {
    pub fn from_steps(steps: Vec<StepRecord>, n_agents: usize) -> Self {
        let rewards: Vec<Vec<f64>> = steps.iter().map(|s| s.rewards.clone()).collect();
        let returns = suffix_returns(&rewards, n_agents);
        Self { steps, returns, n_agents }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn summary(&self) -> EpisodeSummary {
        let mut s = EpisodeSummary { steps: self.steps.len(), ..Default::default() };
        let mut total = 0.0;
        for step in &self.steps {
            total += step.rewards.iter().sum::<f64>();
            for e in &step.events {
                s.collisions += u32::from(e.collision);
                s.oob += u32::from(e.out_of_bounds);
                s.goals += u32::from(e.reached_goal);
                s.proximity += -PROXIMITY_PENALTY * f64::from(e.proximity_pairs);
            }
        }
        s.mean_score = if self.n_agents == 0 { 0.0 } else { total / self.n_agents as f64 };
        s
    }

    pub fn training_target(&self, t: usize) -> TrainingTarget {
        TrainingTarget {
            graph_input: self.steps[t].graph_input.clone(),
            target_policies: self.steps[t].policies.clone(),
            target_values: self.returns[t].clone(),
        }
    }
}

/// An episode plus the time spent choosing its actions.
#[derive(Debug, Clone)]
pub struct Episode {
    pub record: EpisodeRecord,
    pub final_state: GridState,
    #[cfg(not(target_arch = "wasm32"))]
    pub planning_time: Duration,
}

impl Episode {
    #[cfg(not(target_arch = "wasm32"))]
    pub fn ms_per_action(&self) -> f64 {
        if self.record.is_empty() {
            return 0.0;
        }
        self.planning_time.as_secs_f64() * 1e3 / self.record.len() as f64
    }

    /// No clock on wasm32.
    #[cfg(target_arch = "wasm32")]
    pub fn ms_per_action(&self) -> f64 {
        0.0
    }
}

fn one_hot_policies(action: &JointAction) -> Vec<[f64; N_ACTIONS]> {
    action
        .0
        .iter()
        .map(|a| {
            let mut p = [0.0; N_ACTIONS];
            p[a.index()] = 1.0;
            p
        })
        .collect()
}

fn step_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64)
}

/// Chooses one joint action and the policy target recorded for it.
pub fn choose_action(
    state: &GridState,
    params: Option<&ModelParams>,
    config: &EpisodeConfig,
    seed: u64,
) -> Result<(JointAction, Vec<[f64; N_ACTIONS]>), EpisodeError> {
    let search_config = SearchConfig { seed, ..config.search.clone() };
    match config.planner {
        PlannerKind::Siclop => {
            let params = params.ok_or(EpisodeError::MissingParams)?;
            let guide = NetworkGuide { params, radius: config.radius, noise: config.policy_noise };
            let plan = search::plan_or_fallback(state, &guide, &search_config)?;
            Ok((plan.action, plan.visit_policy))
        }
        PlannerKind::UniformMcts => {
            let guide = RolloutGuide { depth: config.rollout_depth };
            let plan = search::plan_or_fallback(state, &guide, &search_config)?;
            Ok((plan.action, plan.visit_policy))
        }
        PlannerKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let action = search::random_joint_action(state, &mut rng);
            let policies = one_hot_policies(&action);
            Ok((action, policies))
        }
    }
}

/// Plans and steps from `initial` until the episode ends.
pub fn run_episode(
    initial: &GridState,
    params: Option<&ModelParams>,
    config: &EpisodeConfig,
    seed: u64,
) -> Result<Episode, EpisodeError> {
    if env::is_terminal(initial) {
        return Err(EpisodeError::TerminalStart);
    }
    let mut state = initial.clone();
    let mut steps = Vec::new();
    #[cfg(not(target_arch = "wasm32"))]
    let mut planning_time = Duration::ZERO;
    while !env::is_terminal(&state) {
        #[cfg(not(target_arch = "wasm32"))]
        let started = Instant::now();
        let (mut action, mut policies) = choose_action(&state, params, config, step_seed(seed, steps.len()))?;
        #[cfg(not(target_arch = "wasm32"))]
        {
            planning_time += started.elapsed();
        }
        state.normalize_action(&mut action);
        // Finished agents make no decision; an all-zero target drops them
        // from the policy loss.
        for (p, a) in policies.iter_mut().zip(&state.agents) {
            if a.done {
                *p = [0.0; N_ACTIONS];
            }
        }
        let graph_input = obsgraph::preprocess(&state, config.radius);
        let out = env::step(&state, &action)?;
        steps.push(StepRecord { graph_input, policies, action, rewards: out.rewards, events: out.events });
        state = out.next_state;
    }
    Ok(Episode {
        record: EpisodeRecord::from_steps(steps, initial.n_agents()),
        final_state: state,
        #[cfg(not(target_arch = "wasm32"))]
        planning_time,
    })
}

/// Ring buffer of the most recent episodes. Episode ids count every episode
/// ever pushed.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    capacity: usize,
    episodes: VecDeque<(u64, EpisodeRecord)>,
    next_id: u64,
}

impl ReplayStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, episodes: VecDeque::with_capacity(capacity), next_id: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Total episodes pushed, evicted ones included.
    pub fn total_pushed(&self) -> u64 {
        self.next_id
    }

    /// Appends an episode, evicting the oldest one when full. Returns its id.
    pub fn push(&mut self, record: EpisodeRecord) -> u64 {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        let id = self.next_id;
        self.next_id += 1;
        self.episodes.push_back((id, record));
        id
    }

    pub fn get(&self, id: u64) -> Option<&EpisodeRecord> {
        self.episodes.iter().find(|(i, _)| *i == id).map(|(_, r)| r)
    }

    /// Stored ids, oldest first.
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.episodes.iter().map(|(i, _)| *i)
    }

    /// The `window` most recent episodes, oldest first.
    pub fn recent(&self, window: usize) -> impl Iterator<Item = (u64, &EpisodeRecord)> {
        let skip = self.episodes.len().saturating_sub(window);
        self.episodes.iter().skip(skip).map(|(i, r)| (*i, r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub recent_window: usize,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            recent_window: DEFAULT_RECENT_WINDOW,
            lr: model::DEFAULT_LR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: ModelParams,
    /// Mean per-sample loss of each batch, in update order.
    pub batch_losses: Vec<f64>,
    /// `(episode id, step)` of every sample used, in update order.
    pub sampled: Vec<(u64, usize)>,
}

/// Each epoch shuffles every step of the `recent_window` newest episodes and
/// takes one update per batch.
pub fn train(params: &ModelParams, store: &ReplayStore, config: &TrainConfig, seed: u64) -> Result<TrainReport, TrainError> {
    let pool: Vec<(u64, usize)> = store
        .recent(config.recent_window.max(1))
        .flat_map(|(id, r)| (0..r.len()).map(move |t| (id, t)))
        .collect();
    if pool.is_empty() {
        return Err(TrainError::EmptyStore);
    }
    let batch_size = config.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = params.clone();
    let mut batch_losses = Vec::new();
    let mut sampled = Vec::new();
    for _ in 0..config.epochs {
        let mut order = pool.clone();
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<TrainingTarget> = chunk
                .iter()
                .map(|&(id, t)| store.get(id).expect("pool ids are stored").training_target(t))
                .collect();
            let (l, grads) = model::loss(&params, &batch)?;
            params = model::apply_update(&params, &grads, config.lr)?;
            batch_losses.push(l / batch.len() as f64);
            sampled.extend_from_slice(chunk);
        }
    }
    Ok(TrainReport { params, batch_losses, sampled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{AgentAction, AgentStatus, Cell};
    use crate::model::ModelConfig;
    use crate::search::Budget;

    fn small_config(planner: PlannerKind) -> EpisodeConfig {
        EpisodeConfig {
            planner,
            search: SearchConfig { budget: Budget::Nodes(40), ..SearchConfig::default() },
            ..EpisodeConfig::default()
        }
    }

    #[test]
    fn adjacent_goal_finishes_in_one_step() {
        let state = GridState::new(5, 5, vec![], vec![AgentStatus::new(Cell::new(1, 1), Cell::new(2, 1))], 10).unwrap();
        let params = ModelParams::init(&ModelConfig::default(), 0);
        for planner in PlannerKind::ALL.into_iter().filter(|p| *p != PlannerKind::Random) {
            let ep = run_episode(&state, Some(&params), &small_config(planner), 1).unwrap();
            assert_eq!(ep.record.len(), 1, "{planner}");
            assert_eq!(ep.record.steps[0].action.0[0], AgentAction::East);
            assert!(ep.record.steps[0].policies[0][AgentAction::East.index()] > 0.5);
            assert!((ep.record.returns[0][0] - 1.1).abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_start_is_rejected() {
        let mut state = env::generate_scenario(5, 5, 2, 0, 3, 0).unwrap();
        state.step = 3;
        let err = run_episode(&state, None, &small_config(PlannerKind::Random), 0).unwrap_err();
        assert_eq!(err, EpisodeError::TerminalStart);
    }

    #[test]
    fn episodes_are_reproducible() {
        let state = env::generate_scenario(6, 6, 3, 2, 8, 4).unwrap();
        let params = ModelParams::init(&ModelConfig::default(), 2);
        for planner in PlannerKind::ALL {
            let a = run_episode(&state, Some(&params), &small_config(planner), 9).unwrap();
            let b = run_episode(&state, Some(&params), &small_config(planner), 9).unwrap();
            assert_eq!(a.record, b.record);
        }
    }

    #[test]
    fn returns_are_suffix_sums() {
        let state = env::generate_scenario(6, 6, 3, 2, 12, 8).unwrap();
        let ep = run_episode(&state, None, &small_config(PlannerKind::Random), 3).unwrap();
        let r = &ep.record;
        for t in 0..r.len() {
            for i in 0..r.n_agents {
                let direct: f64 = r.steps[t..].iter().map(|s| s.rewards[i]).sum();
                assert_eq!(r.returns[t][i], r.steps[t..].iter().rev().fold(0.0, |acc, s| acc + s.rewards[i]));
                assert!((r.returns[t][i] - direct).abs() < 1e-12);
            }
        }
        let summary = r.summary();
        assert!((summary.mean_score - ep.final_state.total_score() / 3.0).abs() < 1e-9);
    }

    #[test]
    fn store_evicts_oldest_first() {
        let state = env::generate_scenario(5, 5, 1, 0, 2, 0).unwrap();
        let ep = run_episode(&state, None, &small_config(PlannerKind::Random), 0).unwrap().record;
        let mut store = ReplayStore::new(3);
        for _ in 0..5 {
            store.push(ep.clone());
        }
        assert_eq!(store.len(), 3);
        assert_eq!(store.ids().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(store.recent(2).map(|(i, _)| i).collect::<Vec<_>>(), vec![3, 4]);
    }

    fn filled_store(n: usize, capacity: usize) -> ReplayStore {
        let mut store = ReplayStore::new(capacity);
        for seed in 0..n as u64 {
            let state = env::generate_scenario(6, 6, 2, 2, 4, seed).unwrap();
            store.push(run_episode(&state, None, &small_config(PlannerKind::Random), seed).unwrap().record);
        }
        store
    }

    #[test]
    fn training_respects_the_window() {
        let store = filled_store(14, 50);
        let params = ModelParams::init(&ModelConfig::default(), 0);
        let config = TrainConfig { epochs: 2, batch_size: 8, recent_window: 10, lr: 1e-3 };
        let report = train(&params, &store, &config, 5).unwrap();
        assert!(report.sampled.iter().all(|&(id, _)| id >= 4));
        let again = train(&params, &store, &config, 5).unwrap();
        assert_eq!(report.params, again.params);
        assert_eq!(report.batch_losses, again.batch_losses);
    }

    #[test]
    fn empty_store_is_an_error() {
        let params = ModelParams::init(&ModelConfig::default(), 0);
        let err = train(&params, &ReplayStore::new(4), &TrainConfig::default(), 0).unwrap_err();
        assert!(matches!(err, TrainError::EmptyStore));
    }

    #[test]
    fn repeated_training_on_one_sample_lowers_its_loss() {
        let state = env::generate_scenario(6, 6, 3, 2, 1, 2).unwrap();
        let mut store = ReplayStore::new(1);
        store.push(run_episode(&state, None, &small_config(PlannerKind::Random), 0).unwrap().record);
        let params = ModelParams::init(&ModelConfig::default(), 1);
        let target = store.get(0).unwrap().training_target(0);
        let before = model::loss_value(&params, std::slice::from_ref(&target)).unwrap();
        let config = TrainConfig { epochs: 200, batch_size: 1, recent_window: 1, lr: 1e-3 };
        let report = train(&params, &store, &config, 0).unwrap();
        let after = model::loss_value(&report.params, &[target]).unwrap();
        assert!(after < before, "{before} -> {after}");
    }
}
