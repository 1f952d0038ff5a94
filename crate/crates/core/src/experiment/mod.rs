//! Experiment harness: training runs, evaluation and planning benchmarks
//! driven by an [`ExperimentConfig`], reporting one [`MetricsRow`] per
//! episode.

mod config;
mod metrics;

use std::time::{Duration, Instant};

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, DEFAULT_EXPERIMENT_LR};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};

use crate::env::{self, EnvError, GridState};
use crate::model::ModelParams;
use crate::search::{self, NetworkGuide, RolloutGuide, SearchConfig};
use crate::trainer::{self, Episode, EpisodeError, PlannerKind, ReplayStore, TrainError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("no scenarios to run")]
    NoScenarios,
    #[error("the siclop planner needs a checkpoint")]
    MissingParams,
}

/// Deterministic per-episode seed.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The random scenario of training episode `index`.
pub fn training_scenario(config: &ExperimentConfig, index: usize) -> Result<GridState, EnvError> {
    env::generate_scenario(
        config.width,
        config.height,
        config.n_agents,
        config.n_obstacles,
        config.step_limit,
        mix_seed(config.seed, index as u64),
    )
}

/// `count` scenarios drawn from the config's environment settings.
pub fn generated_scenarios(config: &ExperimentConfig, count: usize) -> Result<Vec<GridState>, EnvError> {
    (0..count).map(|i| training_scenario(config, i)).collect()
}

fn metrics_row(index: usize, episode: &Episode, timing: bool) -> MetricsRow {
    let s = episode.record.summary();
    MetricsRow {
        episode: index,
        mean_score: s.mean_score,
        collisions: s.collisions,
        oob: s.oob,
        proximity: s.proximity,
        goals: s.goals,
        ms_per_action: if timing { episode.ms_per_action() } else { 0.0 },
    }
}

/// Runs every job on the calling thread or on a pool of `jobs` threads.
/// Results keep job order either way.
fn run_jobs<T: Send>(jobs: usize, count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    if jobs > 1 && count > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
        return pool.install(|| (0..count).into_par_iter().map(&f).collect());
    }
    let _ = jobs;
    (0..count).map(f).collect()
}

pub enum TrainingEvent<'a> {
    Episode(&'a MetricsRow, &'a trainer::EpisodeRecord),
    /// Parameters after `episodes` finished episodes.
    Checkpoint { episodes: usize, params: &'a ModelParams },
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub params: ModelParams,
    pub rows: Vec<MetricsRow>,
    /// Mean per-sample loss of every training round.
    pub round_losses: Vec<f64>,
}

/// Self-play training. Episodes are generated in rounds of `train_every` on
/// a frozen snapshot of the parameters, then the network is trained on the
/// replay store. The planner kind only selects how actions are chosen; the
/// network is trained from whatever the planner did.
pub fn run_training(
    config: &ExperimentConfig,
    mut on_event: impl FnMut(TrainingEvent<'_>),
) -> Result<TrainingOutcome, ExperimentError> {
    config.validate()?;
    let mut params = ModelParams::init(&config.model_config(), config.seed);
    let mut store = ReplayStore::new(config.replay_capacity);
    let episode_config = config.episode_config();
    let train_config = config.train_config();
    let mut rows = Vec::with_capacity(config.episodes);
    let mut round_losses = Vec::new();

    let mut done = 0;
    while done < config.episodes {
        let round = config.train_every.min(config.episodes - done);
        let snapshot = &params;
        let results = run_jobs(config.jobs, round, |j| {
            let index = done + j;
            let state = training_scenario(config, index)?;
            trainer::run_episode(&state, Some(snapshot), &episode_config, mix_seed(config.seed ^ 0xA5A5, index as u64))
                .map_err(ExperimentError::from)
        });
        for (j, result) in results.into_iter().enumerate() {
            let episode = result?;
            let row = metrics_row(done + j, &episode, config.timing);
            on_event(TrainingEvent::Episode(&row, &episode.record));
            rows.push(row);
            store.push(episode.record);
        }
        done += round;

        let report = trainer::train(&params, &store, &train_config, mix_seed(config.seed ^ 0x5A5A, done as u64))?;
        round_losses.push(report.batch_losses.iter().sum::<f64>() / report.batch_losses.len().max(1) as f64);
        params = report.params;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.episodes {
            on_event(TrainingEvent::Checkpoint { episodes: done, params: &params });
        }
    }
    on_event(TrainingEvent::Checkpoint { episodes: done, params: &params });
    Ok(TrainingOutcome { params, rows, round_losses })
}

/// Planning-only episodes on the given scenarios.
pub fn run_eval(
    config: &ExperimentConfig,
    params: Option<&ModelParams>,
    scenarios: &[GridState],
) -> Result<Vec<MetricsRow>, ExperimentError> {
    if scenarios.is_empty() {
        return Err(ExperimentError::NoScenarios);
    }
    if config.planner == PlannerKind::Siclop && params.is_none() {
        return Err(ExperimentError::MissingParams);
    }
    let episode_config = config.episode_config();
    let results = run_jobs(config.jobs, scenarios.len(), |i| {
        trainer::run_episode(&scenarios[i], params, &episode_config, mix_seed(config.seed ^ 0xE7A1, i as u64))
    });
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| Ok(metrics_row(i, &r?, config.timing)))
        .collect()
}

/// Mean of `mean_score` over rows.
pub fn mean_score(rows: &[MetricsRow]) -> f64 {
    rows.iter().map(|r| r.mean_score).sum::<f64>() / rows.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Wall-clock duration of every plan call, in call order.
    pub durations: Vec<Duration>,
    pub fallbacks: usize,
}

impl BenchReport {
    pub fn calls(&self) -> usize {
        self.durations.len()
    }

    pub fn mean_ms(&self) -> f64 {
        self.durations.iter().map(Duration::as_secs_f64).sum::<f64>() * 1e3 / self.calls().max(1) as f64
    }

    pub fn max_ms(&self) -> f64 {
        self.durations.iter().map(|d| d.as_secs_f64() * 1e3).fold(0.0, f64::max)
    }

    /// `q`-quantile of the call durations in milliseconds (nearest rank).
    pub fn quantile_ms(&self, q: f64) -> f64 {
        let mut ms: Vec<f64> = self.durations.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        if ms.is_empty() {
            return 0.0;
        }
        ms.sort_by(f64::total_cmp);
        let rank = ((q * ms.len() as f64).ceil() as usize).clamp(1, ms.len());
        ms[rank - 1]
    }

    pub fn share_within(&self, limit: Duration) -> f64 {
        self.durations.iter().filter(|d| **d <= limit).count() as f64 / self.calls().max(1) as f64
    }
}

/// Times `calls` consecutive plan calls. States come from following the
/// planned actions through freshly generated scenarios.
/// Needs a clock; panics on wasm32.
pub fn bench(
    config: &ExperimentConfig,
    params: Option<&ModelParams>,
    calls: usize,
) -> Result<BenchReport, ExperimentError> {
    if config.planner == PlannerKind::Siclop && params.is_none() {
        return Err(ExperimentError::MissingParams);
    }
    let mut durations = Vec::with_capacity(calls);
    let mut fallbacks = 0;
    let mut scenario = 0;
    let mut state = training_scenario(config, scenario)?;
    let base = config.episode_config();
    for call in 0..calls {
        if env::is_terminal(&state) {
            scenario += 1;
            state = training_scenario(config, scenario)?;
        }
        let search_config = SearchConfig { seed: mix_seed(config.seed, call as u64), ..base.search.clone() };
        let started = Instant::now();
        let (action, fallback) = match config.planner {
            PlannerKind::Siclop => {
                let guide = NetworkGuide {
                    params: params.expect("checked above"),
                    radius: base.radius,
                    noise: base.policy_noise,
                };
                let plan = search::plan_or_fallback(&state, &guide, &search_config).map_err(EpisodeError::from)?;
                (plan.action, plan.used_fallback)
            }
            PlannerKind::UniformMcts => {
                let guide = RolloutGuide { depth: base.rollout_depth };
                let plan = search::plan_or_fallback(&state, &guide, &search_config).map_err(EpisodeError::from)?;
                (plan.action, plan.used_fallback)
            }
            PlannerKind::Random => {
                let (a, _) = trainer::choose_action(&state, params, &base, search_config.seed)?;
                (a, false)
            }
        };
        durations.push(started.elapsed());
        fallbacks += usize::from(fallback);
        state = env::step(&state, &action)?.next_state;
    }
    Ok(BenchReport { durations, fallbacks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::Budget;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            width: 5,
            height: 5,
            n_agents: 2,
            n_obstacles: 1,
            step_limit: 6,
            budget: Budget::Nodes(30),
            episodes: 5,
            train_every: 2,
            timing: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn training_is_reproducible_and_rows_match_episodes() {
        let config = tiny();
        let mut checkpoints = Vec::new();
        let a = run_training(&config, |e| {
            if let TrainingEvent::Checkpoint { episodes, .. } = e {
                checkpoints.push(episodes);
            }
        })
        .unwrap();
        let b = run_training(&config, |_| {}).unwrap();
        assert_eq!(a.rows.len(), 5);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.params, b.params);
        assert_eq!(checkpoints, vec![5]);
        assert_eq!(a.round_losses.len(), 3);
    }

    #[test]
    fn parallel_episodes_match_serial_ones() {
        let serial = tiny();
        let parallel = ExperimentConfig { jobs: 3, ..tiny() };
        let a = run_training(&serial, |_| {}).unwrap();
        let b = run_training(&parallel, |_| {}).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn eval_rejects_empty_scenarios_and_missing_params() {
        let config = tiny();
        assert!(matches!(run_eval(&config, None, &[]), Err(ExperimentError::NoScenarios)));
        let scenarios = generated_scenarios(&config, 2).unwrap();
        assert!(matches!(run_eval(&config, None, &scenarios), Err(ExperimentError::MissingParams)));
        let random = ExperimentConfig { planner: PlannerKind::Random, ..tiny() };
        assert_eq!(run_eval(&random, None, &scenarios).unwrap().len(), 2);
    }

    #[test]
    fn bench_quantiles() {
        let r = BenchReport { durations: (1..=100).map(Duration::from_millis).collect(), fallbacks: 0 };
        assert_eq!(r.quantile_ms(0.99), 99.0);
        assert_eq!(r.max_ms(), 100.0);
        assert_eq!(r.share_within(Duration::from_millis(50)), 0.5);
    }
}
