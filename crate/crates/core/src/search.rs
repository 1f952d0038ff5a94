//! Anytime MCTS over joint actions.
//!
//! Each simulation descends from the root by the prior-weighted UCT score,
//! asks the pruner for a handful of joint actions at the selected leaf,
//! creates one child per distinct candidate and backs each child's value up
//! to the root. A child's value is its mean per-agent step reward plus the
//! guide's estimate of the resulting state (zero for terminal states). Edges
//! higher up accumulate the rewards of the edges below them; there is no
//! discounting.

use std::cmp::Ordering;
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{self, AgentAction, GridState, JointAction, N_ACTIONS};
use crate::model::{self, ModelParams};
use crate::obsgraph;
use crate::pruner::{self, argmax, CandidateSet, NetworkOracle, UniformOracle};

pub const DEFAULT_EXPLORATION: f64 = 1.4;
pub const DEFAULT_ROLLOUT_DEPTH: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("cannot plan from a terminal state")]
    TerminalRoot,
    #[error("budget exhausted before the root was expanded")]
    BudgetTooSmall,
    #[error(transparent)]
    Env(#[from] env::EnvError),
}

/// Search budget per decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// Wall-clock milliseconds; the expansion in flight when time runs out
    /// is completed.
    Millis(u64),
    /// Number of tree nodes created by expansions. Simulations that only
    /// revisit terminal leaves are capped at the same number.
    Nodes(usize),
}

impl Budget {
    pub fn is_positive(&self) -> bool {
        match *self {
            Budget::Millis(ms) => ms > 0,
            Budget::Nodes(n) => n > 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub exploration: f64,
    pub budget: Budget,
    pub k: usize,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            exploration: DEFAULT_EXPLORATION,
            budget: Budget::Nodes(200),
            k: pruner::DEFAULT_K,
            sweeps: pruner::DEFAULT_SWEEPS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub prior: f64,
    pub visits: u32,
    pub total_value: f64,
    /// Smallest and largest value ever backed up through this edge.
    pub min_value: f64,
    pub max_value: f64,
}

impl Edge {
    pub fn new(prior: f64) -> Self {
        Self { prior, visits: 0, total_value: 0.0, min_value: f64::INFINITY, max_value: f64::NEG_INFINITY }
    }

    pub fn mean_value(&self) -> f64 {
        self.total_value / f64::from(self.visits.max(1))
    }

    fn record(&mut self, value: f64) {
        self.visits += 1;
        self.total_value += value;
        self.min_value = self.min_value.min(value);
        self.max_value = self.max_value.max(value);
    }
}

/// `Q + c·prior·sqrt(ln N / n)`; unvisited edges score `+∞`.
pub fn score(edge: &Edge, parent_visits: u32, exploration: f64, prior: f64) -> f64 {
    if edge.visits == 0 {
        return f64::INFINITY;
    }
    let explore = (f64::from(parent_visits.max(1)).ln() / f64::from(edge.visits)).sqrt();
    edge.mean_value() + exploration * prior * explore
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Child {
    pub action: JointAction,
    pub edge: Edge,
    /// Mean per-agent reward of the transition.
    pub reward: f64,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: GridState,
    pub visits: u32,
    /// Sorted by joint action.
    pub children: Vec<Child>,
    pub expanded: bool,
    pub terminal: bool,
    policies: Option<Vec<[f64; N_ACTIONS]>>,
}

impl SearchNode {
    fn new(state: GridState, policies: Option<Vec<[f64; N_ACTIONS]>>) -> Self {
        let terminal = env::is_terminal(&state);
        Self { state, visits: 1, children: Vec::new(), expanded: false, terminal, policies }
    }

    /// Index of the child with the most visits; ties go to the higher prior,
    /// then to the first in joint-action order.
    pub fn most_visited(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in self.children.iter().enumerate() {
            best = match best {
                None => Some(i),
                Some(b) => {
                    let cb = &self.children[b];
                    let better = c.edge.visits > cb.edge.visits
                        || (c.edge.visits == cb.edge.visits && c.edge.prior > cb.edge.prior);
                    Some(if better { i } else { b })
                }
            };
        }
        best
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }
}

/// Adds `value` to the last edge of `path`; every edge above receives its
/// own reward plus the value of the edge below it. Every parent on the path
/// gains one visit.
pub fn backpropagate(tree: &mut SearchTree, path: &[(NodeId, usize)], value: f64) {
    let mut v = value;
    for (depth, &(node, child)) in path.iter().enumerate().rev() {
        if depth + 1 < path.len() {
            v += tree.nodes[node].children[child].reward;
        }
        tree.nodes[node].children[child].edge.record(v);
        tree.nodes[node].visits += 1;
    }
}

/// Leaf evaluation and candidate generation used by the search.
pub trait Guide {
    /// Estimated value of a non-terminal state, plus its per-agent policies
    /// when the guide has them.
    fn evaluate(&self, state: &GridState, rng: &mut ChaCha8Rng) -> (f64, Option<Vec<[f64; N_ACTIONS]>>);

    fn candidates(
        &self,
        state: &GridState,
        policies: Option<&[[f64; N_ACTIONS]]>,
        k: usize,
        sweeps: usize,
        rng: &mut ChaCha8Rng,
    ) -> CandidateSet;

    /// Whether children get equal priors instead of candidate frequencies.
    fn flat_priors(&self) -> bool {
        false
    }

    /// Action to take when no search is possible.
    fn fallback(&self, state: &GridState) -> JointAction;
}

/// Network priors and values.
pub struct NetworkGuide<'a> {
    pub params: &'a ModelParams,
    pub radius: usize,
    /// Weight of the uniform policy mixed into every sampled policy.
    pub noise: f64,
}

impl Guide for NetworkGuide<'_> {
    fn evaluate(&self, state: &GridState, _: &mut ChaCha8Rng) -> (f64, Option<Vec<[f64; N_ACTIONS]>>) {
        let pv = model::predict(self.params, &obsgraph::preprocess(state, self.radius))
            .expect("observation shape matches the model");
        (pv.aggregate_value, Some(pv.policies))
    }

    fn candidates(
        &self,
        state: &GridState,
        policies: Option<&[[f64; N_ACTIONS]]>,
        k: usize,
        sweeps: usize,
        rng: &mut ChaCha8Rng,
    ) -> CandidateSet {
        let mut oracle =
            NetworkOracle::new(self.params, state, self.radius, policies.map(<[_]>::to_vec)).with_noise(self.noise);
        pruner::sample_candidates(&mut oracle, k, sweeps, rng)
    }

    /// Greedy per-agent argmax of the raw network policy.
    fn fallback(&self, state: &GridState) -> JointAction {
        let pv = model::predict(self.params, &obsgraph::preprocess(state, self.radius))
            .expect("observation shape matches the model");
        let mut a = JointAction(
            pv.policies.iter().map(|p| AgentAction::from_index(argmax(p)).unwrap()).collect(),
        );
        state.normalize_action(&mut a);
        a
    }
}

/// Uniform candidates, equal priors and random-rollout leaf values.
pub struct RolloutGuide {
    pub depth: usize,
}

impl Default for RolloutGuide {
    fn default() -> Self {
        Self { depth: DEFAULT_ROLLOUT_DEPTH }
    }
}

pub fn random_joint_action(state: &GridState, rng: &mut impl Rng) -> JointAction {
    JointAction(
        state
            .agents
            .iter()
            .map(|a| if a.done { AgentAction::Stay } else { AgentAction::ALL[rng.gen_range(0..N_ACTIONS)] })
            .collect(),
    )
}

impl Guide for RolloutGuide {
    fn evaluate(&self, state: &GridState, rng: &mut ChaCha8Rng) -> (f64, Option<Vec<[f64; N_ACTIONS]>>) {
        let mut s = state.clone();
        let mut total = 0.0;
        for _ in 0..self.depth {
            if env::is_terminal(&s) {
                break;
            }
            let a = random_joint_action(&s, rng);
            let out = env::step(&s, &a).expect("rollout from a live state");
            total += out.mean_reward();
            s = out.next_state;
        }
        (total, None)
    }

    fn candidates(
        &self,
        state: &GridState,
        _: Option<&[[f64; N_ACTIONS]]>,
        k: usize,
        sweeps: usize,
        rng: &mut ChaCha8Rng,
    ) -> CandidateSet {
        pruner::sample_candidates(&mut UniformOracle::for_state(state), k, sweeps, rng)
    }

    fn flat_priors(&self) -> bool {
        true
    }

    fn fallback(&self, state: &GridState) -> JointAction {
        JointAction::stay(state.n_agents())
    }
}

/// A search in progress. [`plan`] drives it to completion; tests can step it
/// one simulation at a time.
pub struct Search<'g, G: Guide + ?Sized> {
    tree: SearchTree,
    guide: &'g G,
    config: SearchConfig,
    rng: ChaCha8Rng,
    nodes_created: usize,
    simulations: usize,
    #[cfg(not(target_arch = "wasm32"))]
    started: Option<Instant>,
}

impl<'g, G: Guide + ?Sized> Search<'g, G> {
    pub fn new(root: GridState, guide: &'g G, config: SearchConfig) -> Result<Self, SearchError> {
        if env::is_terminal(&root) {
            return Err(SearchError::TerminalRoot);
        }
        #[cfg(not(target_arch = "wasm32"))]
        let started = matches!(config.budget, Budget::Millis(_)).then(Instant::now);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            tree: SearchTree { nodes: vec![SearchNode::new(root, None)] },
            guide,
            config,
            rng,
            nodes_created: 0,
            simulations: 0,
            #[cfg(not(target_arch = "wasm32"))]
            started,
        })
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn nodes_created(&self) -> usize {
        self.nodes_created
    }

    pub fn simulations(&self) -> usize {
        self.simulations
    }

    pub fn exhausted(&self) -> bool {
        match self.config.budget {
            Budget::Nodes(n) => self.nodes_created >= n || self.simulations >= n,
            #[cfg(not(target_arch = "wasm32"))]
            Budget::Millis(ms) => self.started.is_none_or(|t| t.elapsed().as_secs_f64() * 1e3 >= ms as f64),
            #[cfg(target_arch = "wasm32")]
            Budget::Millis(_) => true,
        }
    }

    fn select_child(&self, id: NodeId) -> usize {
        let node = &self.tree.nodes[id];
        let c = self.config.exploration;
        let mut best = 0;
        let mut best_key = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (i, ch) in node.children.iter().enumerate() {
            let key = (score(&ch.edge, node.visits, c, ch.edge.prior), ch.edge.prior);
            let better = match key.0.partial_cmp(&best_key.0) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => key.1 > best_key.1,
                _ => false,
            };
            if better || i == 0 {
                best = i;
                best_key = key;
            }
        }
        best
    }

    /// One select / expand / evaluate / backpropagate round.
    pub fn simulate(&mut self) -> Result<(), SearchError> {
        self.simulations += 1;
        let mut path: Vec<(NodeId, usize)> = Vec::new();
        let mut id = 0;
        while self.tree.nodes[id].expanded && !self.tree.nodes[id].terminal {
            let c = self.select_child(id);
            path.push((id, c));
            id = self.tree.nodes[id].children[c].node;
        }

        if self.tree.nodes[id].terminal {
            // Nothing beyond a terminal leaf: back up the edge reward again.
            if let Some(&(p, c)) = path.last() {
                let r = self.tree.nodes[p].children[c].reward;
                backpropagate(&mut self.tree, &path, r);
            }
            return Ok(());
        }

        if self.tree.nodes[id].policies.is_none() {
            let (_, policies) = self.guide.evaluate(&self.tree.nodes[id].state, &mut self.rng);
            self.tree.nodes[id].policies = policies;
        }
        let set = {
            let node = &self.tree.nodes[id];
            self.guide.candidates(&node.state, node.policies.as_deref(), self.config.k, self.config.sweeps, &mut self.rng)
        };
        let freqs = set.frequencies();
        let flat = 1.0 / freqs.len() as f64;

        let mut children = Vec::with_capacity(freqs.len());
        let mut values = Vec::with_capacity(freqs.len());
        for (action, freq) in freqs {
            let out = env::step(&self.tree.nodes[id].state, &action)?;
            let reward = out.mean_reward();
            let child = if env::is_terminal(&out.next_state) {
                values.push(reward);
                SearchNode::new(out.next_state, None)
            } else {
                let (v, policies) = self.guide.evaluate(&out.next_state, &mut self.rng);
                values.push(reward + v);
                SearchNode::new(out.next_state, policies)
            };
            let node_id = self.tree.nodes.len();
            self.tree.nodes.push(child);
            let prior = if self.guide.flat_priors() { flat } else { freq };
            children.push(Child { action, edge: Edge::new(prior), reward, node: node_id });
        }
        self.nodes_created += children.len();
        let node = &mut self.tree.nodes[id];
        node.children = children;
        node.expanded = true;

        for (c, v) in values.into_iter().enumerate() {
            path.push((id, c));
            backpropagate(&mut self.tree, &path, v);
            path.pop();
        }
        Ok(())
    }

    /// Runs simulations until the budget is spent.
    pub fn run(&mut self) -> Result<(), SearchError> {
        while !self.exhausted() {
            self.simulate()?;
        }
        Ok(())
    }

    /// Most visited root joint action.
    pub fn best_action(&self) -> Result<JointAction, SearchError> {
        let root = self.tree.root();
        if !root.expanded {
            return Err(SearchError::BudgetTooSmall);
        }
        let i = root.most_visited().ok_or(SearchError::BudgetTooSmall)?;
        Ok(root.children[i].action.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub action: JointAction,
    /// Per-agent marginals of root visit counts.
    pub visit_policy: Vec<[f64; N_ACTIONS]>,
    pub simulations: usize,
    pub nodes_created: usize,
    pub used_fallback: bool,
}

/// Per-agent marginal distribution of the root's joint-action visit counts.
pub fn marginalize_policy(root: &SearchNode) -> Vec<[f64; N_ACTIONS]> {
    let n = root.state.n_agents();
    let mut out = vec![[0.0; N_ACTIONS]; n];
    let total: f64 = root.children.iter().map(|c| f64::from(c.edge.visits)).sum();
    if total == 0.0 {
        return out;
    }
    for c in &root.children {
        let w = f64::from(c.edge.visits) / total;
        for (i, a) in c.action.0.iter().enumerate() {
            out[i][a.index()] += w;
        }
    }
    out
}

/// Plans one joint action; fails with [`SearchError::BudgetTooSmall`] if
/// the root could not be expanded.
pub fn plan<G: Guide + ?Sized>(root: &GridState, guide: &G, config: &SearchConfig) -> Result<Plan, SearchError> {
    let mut search = Search::new(root.clone(), guide, config.clone())?;
    search.run()?;
    let action = search.best_action()?;
    Ok(Plan {
        action,
        visit_policy: marginalize_policy(search.tree().root()),
        simulations: search.simulations(),
        nodes_created: search.nodes_created(),
        used_fallback: false,
    })
}

/// [`plan`], falling back to the guide's greedy action when the budget was
/// too small to expand the root.
pub fn plan_or_fallback<G: Guide + ?Sized>(root: &GridState, guide: &G, config: &SearchConfig) -> Result<Plan, SearchError> {
    match plan(root, guide, config) {
        Err(SearchError::BudgetTooSmall) => {
            let action = guide.fallback(root);
            let visit_policy = action
                .0
                .iter()
                .map(|a| {
                    let mut p = [0.0; N_ACTIONS];
                    p[a.index()] = 1.0;
                    p
                })
                .collect();
            Ok(Plan { action, visit_policy, simulations: 0, nodes_created: 0, used_fallback: true })
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        let mut e = Edge::new(1.0);
        e.visits = 5;
        e.total_value = 2.5;
        let s = score(&e, 10, 1.0, 1.0);
        assert!((s - (0.5 + (10f64.ln() / 5.0).sqrt())).abs() < 1e-12);
        assert!((s - 1.1786).abs() < 1e-4);
        assert_eq!(score(&e, 10, 0.0, 0.7), 0.5);
        assert_eq!(score(&Edge::new(0.3), 10, 1.0, 0.3), f64::INFINITY);
    }

    fn single_edge_tree() -> SearchTree {
        let s = env::generate_scenario(4, 4, 1, 0, 5, 0).unwrap();
        let mut root = SearchNode::new(s.clone(), None);
        root.children.push(Child { action: JointAction::stay(1), edge: Edge::new(1.0), reward: 0.0, node: 1 });
        root.expanded = true;
        SearchTree { nodes: vec![root, SearchNode::new(s, None)] }
    }

    #[test]
    fn backpropagate_running_mean() {
        let mut tree = single_edge_tree();
        backpropagate(&mut tree, &[(0, 0)], 2.0);
        let e = tree.nodes[0].children[0].edge;
        assert_eq!((e.visits, e.total_value, e.mean_value()), (1, 2.0, 2.0));
        backpropagate(&mut tree, &[(0, 0)], 0.0);
        let e = tree.nodes[0].children[0].edge;
        assert_eq!((e.visits, e.mean_value()), (2, 1.0));
        assert_eq!(tree.nodes[0].visits, 3);
    }

    #[test]
    fn upper_edges_add_their_rewards() {
        let mut tree = single_edge_tree();
        let s = tree.nodes[0].state.clone();
        tree.nodes[0].children[0].reward = 0.5;
        tree.nodes[1].children.push(Child { action: JointAction::stay(1), edge: Edge::new(1.0), reward: 0.25, node: 2 });
        tree.nodes[1].expanded = true;
        tree.nodes.push(SearchNode::new(s, None));
        backpropagate(&mut tree, &[(0, 0), (1, 0)], 1.25);
        assert_eq!(tree.nodes[1].children[0].edge.total_value, 1.25);
        assert_eq!(tree.nodes[0].children[0].edge.total_value, 1.75);
    }

    #[test]
    fn most_visited_breaks_ties_by_prior() {
        let mut tree = single_edge_tree();
        let s = tree.nodes[0].state.clone();
        tree.nodes[0].children.push(Child {
            action: JointAction(vec![AgentAction::East]),
            edge: Edge::new(0.7),
            reward: 0.0,
            node: 2,
        });
        tree.nodes.push(SearchNode::new(s, None));
        tree.nodes[0].children[0].edge.prior = 0.3;
        assert_eq!(tree.nodes[0].most_visited(), Some(1));
    }

    #[test]
    fn terminal_root_is_rejected() {
        let mut s = env::generate_scenario(4, 4, 1, 0, 5, 0).unwrap();
        s.step = 5;
        let guide = RolloutGuide::default();
        assert_eq!(plan(&s, &guide, &SearchConfig::default()).unwrap_err(), SearchError::TerminalRoot);
    }

    /// Root candidates `North` (good, value 1) and `South` (bad, value 0),
    /// with the given share of records for `North`; below the root only
    /// `Stay` is proposed and the value stays with the position.
    struct TwoArm {
        good_share: f64,
        single: bool,
    }

    fn two_arm_root() -> GridState {
        GridState::new(8, 8, vec![], vec![env::AgentStatus::new(env::Cell::new(2, 3), env::Cell::new(7, 3))], 30).unwrap()
    }

    impl Guide for TwoArm {
        fn evaluate(&self, state: &GridState, _: &mut ChaCha8Rng) -> (f64, Option<Vec<[f64; N_ACTIONS]>>) {
            (if state.agents[0].position.y < 3 { 1.0 } else { 0.0 }, None)
        }

        fn candidates(
            &self,
            state: &GridState,
            _: Option<&[[f64; N_ACTIONS]]>,
            _: usize,
            _: usize,
            _: &mut ChaCha8Rng,
        ) -> CandidateSet {
            let one = |a| JointAction(vec![a]);
            if state.step > 0 || self.single {
                let a = if state.step > 0 { AgentAction::Stay } else { AgentAction::North };
                return CandidateSet { joint_actions: vec![one(a)], distinct_count: 1 };
            }
            let n_good = (self.good_share * 4.0).round() as usize;
            let joint_actions = (0..4).map(|i| one(if i < n_good { AgentAction::North } else { AgentAction::South })).collect();
            CandidateSet { joint_actions, distinct_count: 2 }
        }

        fn fallback(&self, state: &GridState) -> JointAction {
            JointAction::stay(state.n_agents())
        }
    }

    #[test]
    fn single_candidate_is_returned_for_any_budget() {
        let guide = TwoArm { good_share: 1.0, single: true };
        for budget in [1, 2, 50] {
            let config = SearchConfig { budget: Budget::Nodes(budget), ..SearchConfig::default() };
            assert_eq!(plan(&two_arm_root(), &guide, &config).unwrap().action.0, vec![AgentAction::North]);
        }
    }

    #[test]
    fn better_arm_wins_on_visits() {
        let guide = TwoArm { good_share: 0.5, single: false };
        for seed in 0..20 {
            let config = SearchConfig { budget: Budget::Nodes(500), seed, ..SearchConfig::default() };
            let mut search = Search::new(two_arm_root(), &guide, config).unwrap();
            search.run().unwrap();
            let root = search.tree().root();
            let visits: Vec<u32> = root.children.iter().map(|c| c.edge.visits).collect();
            let north = root.children.iter().position(|c| c.action.0[0] == AgentAction::North).unwrap();
            assert!(visits[north] > visits[1 - north], "{visits:?}");
            assert_eq!(search.best_action().unwrap().0, vec![AgentAction::North]);
        }
    }

    #[test]
    fn one_expansion_picks_the_higher_prior() {
        // the worse arm carries the larger prior; both have one visit
        let guide = TwoArm { good_share: 0.25, single: false };
        let config = SearchConfig { budget: Budget::Nodes(1), ..SearchConfig::default() };
        let plan = plan(&two_arm_root(), &guide, &config).unwrap();
        assert_eq!(plan.action.0, vec![AgentAction::South]);
        assert_eq!(plan.simulations, 1);
    }

    #[test]
    fn greedy_search_follows_the_higher_value() {
        let guide = TwoArm { good_share: 0.25, single: false };
        let config = SearchConfig { exploration: 0.0, budget: Budget::Nodes(4), ..SearchConfig::default() };
        assert_eq!(plan(&two_arm_root(), &guide, &config).unwrap().action.0, vec![AgentAction::North]);
    }

    fn root_with(children: &[(Vec<AgentAction>, u32)]) -> SearchNode {
        let state = env::generate_scenario(6, 6, children[0].0.len(), 0, 5, 1).unwrap();
        let mut root = SearchNode::new(state, None);
        for (i, (a, n)) in children.iter().enumerate() {
            let mut edge = Edge::new(0.5);
            edge.visits = *n;
            root.children.push(Child { action: JointAction(a.clone()), edge, reward: 0.0, node: i + 1 });
        }
        root.expanded = true;
        root
    }

    #[test]
    fn marginals_of_visit_counts() {
        use AgentAction::*;
        let single = marginalize_policy(&root_with(&[(vec![East, Stay, North], 7)]));
        assert_eq!(single[0][East.index()], 1.0);
        assert_eq!(single[1][Stay.index()], 1.0);
        assert_eq!(single[2][North.index()], 1.0);

        let split = marginalize_policy(&root_with(&[(vec![East, West, North], 3), (vec![East, South, North], 3)]));
        assert_eq!(split[0][East.index()], 1.0);
        assert_eq!(split[1][West.index()], 0.5);
        assert_eq!(split[1][South.index()], 0.5);
        assert_eq!(split[2][North.index()], 1.0);
        for p in &split {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
