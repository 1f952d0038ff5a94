use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::model::ModelConfig;
use crate::obsgraph;
use crate::pruner::{DEFAULT_K, DEFAULT_SWEEPS};
use crate::search::{Budget, SearchConfig, DEFAULT_EXPLORATION, DEFAULT_ROLLOUT_DEPTH};
use crate::trainer::{
    EpisodeConfig, PlannerKind, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_RECENT_WINDOW,
    DEFAULT_POLICY_NOISE, DEFAULT_REPLAY_CAPACITY,
};

/// Self-play learning rate. Larger than the optimizer default: with summed
/// losses every step is clipped, and a run gets only a few hundred updates.
pub const DEFAULT_EXPERIMENT_LR: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Every setting of a training or evaluation run. Parsed from flat
/// `key = value` text; unknown keys are errors, missing keys keep their
/// defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub width: usize,
    pub height: usize,
    pub n_agents: usize,
    pub n_obstacles: usize,
    pub step_limit: usize,

    pub planner: PlannerKind,
    pub exploration: f64,
    pub budget: Budget,
    pub k: usize,
    pub sweeps: usize,
    pub radius: usize,
    pub rollout_depth: usize,
    pub policy_noise: f64,

    pub gcn_layers: usize,
    pub gcn_width: usize,
    pub head_hidden: usize,
    pub temperature: f64,
    pub lr: f64,

    pub episodes: usize,
    pub train_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub recent_window: usize,
    pub replay_capacity: usize,
    /// Zero disables intermediate checkpoints.
    pub checkpoint_every: usize,

    pub seed: u64,
    pub jobs: usize,
    /// When off, `ms_per_action` is written as 0 so metrics files are
    /// reproducible byte for byte.
    pub timing: bool,

    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub replay_log: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            width: 8,
            height: 8,
            n_agents: 4,
            n_obstacles: 4,
            step_limit: 25,
            planner: PlannerKind::Siclop,
            exploration: DEFAULT_EXPLORATION,
            budget: Budget::Nodes(200),
            k: DEFAULT_K,
            sweeps: DEFAULT_SWEEPS,
            radius: obsgraph::DEFAULT_RADIUS,
            rollout_depth: DEFAULT_ROLLOUT_DEPTH,
            policy_noise: DEFAULT_POLICY_NOISE,
            gcn_layers: 2,
            gcn_width: 64,
            head_hidden: 64,
            temperature: 1.0,
            lr: DEFAULT_EXPERIMENT_LR,
            episodes: 200,
            train_every: 10,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            recent_window: DEFAULT_RECENT_WINDOW,
            replay_capacity: DEFAULT_REPLAY_CAPACITY,
            checkpoint_every: 50,
            seed: 0,
            jobs: 1,
            timing: true,
            metrics: PathBuf::from("metrics.csv"),
            checkpoint: PathBuf::from("siclop.ckpt"),
            replay_log: None,
        }
    }
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    let (kind, amount) = s.split_once(':').ok_or("expected `nodes:N` or `ms:N`")?;
    let amount: u64 = amount.trim().parse().map_err(|e| format!("{e}"))?;
    match kind.trim() {
        "nodes" => Ok(Budget::Nodes(amount as usize)),
        "ms" => Ok(Budget::Millis(amount)),
        other => Err(format!("unknown budget kind `{other}`")),
    }
}

fn format_budget(b: Budget) -> String {
    match b {
        Budget::Nodes(n) => format!("nodes:{n}"),
        Budget::Millis(ms) => format!("ms:{ms}"),
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got `{s}`")),
    }
}

fn value<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, val) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, msg: format!("expected `key = value`, got `{body}`") })?;
            let (key, val) = (key.trim(), val.trim());
            c.set(key, val).map_err(|msg| match msg {
                None => ConfigError::UnknownKey { line, key: key.to_string() },
                Some(msg) => ConfigError::Value { line, key: key.to_string(), msg },
            })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// `Err(None)` for an unknown key.
    fn set(&mut self, key: &str, v: &str) -> Result<(), Option<String>> {
        match key {
            "width" => self.width = value(v)?,
            "height" => self.height = value(v)?,
            "agents" => self.n_agents = value(v)?,
            "obstacles" => self.n_obstacles = value(v)?,
            "step_limit" => self.step_limit = value(v)?,
            "planner" => self.planner = value(v)?,
            "c" => self.exploration = value(v)?,
            "budget" => self.budget = parse_budget(v)?,
            "k" => self.k = value(v)?,
            "sweeps" => self.sweeps = value(v)?,
            "radius" => self.radius = value(v)?,
            "rollout_depth" => self.rollout_depth = value(v)?,
            "policy_noise" => self.policy_noise = value(v)?,
            "gcn_layers" => self.gcn_layers = value(v)?,
            "gcn_width" => self.gcn_width = value(v)?,
            "head_hidden" => self.head_hidden = value(v)?,
            "temperature" => self.temperature = value(v)?,
            "lr" => self.lr = value(v)?,
            "episodes" => self.episodes = value(v)?,
            "train_every" => self.train_every = value(v)?,
            "epochs" => self.epochs = value(v)?,
            "batch_size" => self.batch_size = value(v)?,
            "recent_window" => self.recent_window = value(v)?,
            "replay_capacity" => self.replay_capacity = value(v)?,
            "checkpoint_every" => self.checkpoint_every = value(v)?,
            "seed" => self.seed = value(v)?,
            "jobs" => self.jobs = value(v)?,
            "timing" => self.timing = parse_bool(v)?,
            "metrics" => self.metrics = PathBuf::from(v),
            "checkpoint" => self.checkpoint = PathBuf::from(v),
            "replay_log" => self.replay_log = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            _ => return Err(None),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("width", self.width),
            ("height", self.height),
            ("agents", self.n_agents),
            ("step_limit", self.step_limit),
            ("k", self.k),
            ("sweeps", self.sweeps),
            ("radius", self.radius),
            ("rollout_depth", self.rollout_depth),
            ("gcn_layers", self.gcn_layers),
            ("gcn_width", self.gcn_width),
            ("head_hidden", self.head_hidden),
            ("episodes", self.episodes),
            ("train_every", self.train_every),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("recent_window", self.recent_window),
            ("replay_capacity", self.replay_capacity),
            ("jobs", self.jobs),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::Invalid(format!("`{name}` must be positive")));
        }
        if !self.budget.is_positive() {
            return Err(ConfigError::Invalid("budget must be positive".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(ConfigError::Invalid("temperature must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::Invalid("lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.policy_noise) {
            return Err(ConfigError::Invalid("policy_noise must lie in [0, 1]".into()));
        }
        if !(self.exploration >= 0.0 && self.exploration.is_finite()) {
            return Err(ConfigError::Invalid("c must be non-negative".into()));
        }
        if self.width < 2 || self.height < 2 {
            return Err(ConfigError::Invalid("grid must be at least 2x2".into()));
        }
        if 2 * self.n_agents + self.n_obstacles > self.width * self.height {
            return Err(ConfigError::Invalid("too many agents and obstacles for the grid".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            feature_len: obsgraph::feature_len(self.radius),
            gcn_widths: vec![self.gcn_width; self.gcn_layers],
            head_hidden: self.head_hidden,
            temperature: self.temperature,
        }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            planner: self.planner,
            search: SearchConfig {
                exploration: self.exploration,
                budget: self.budget,
                k: self.k,
                sweeps: self.sweeps,
                seed: self.seed,
            },
            radius: self.radius,
            rollout_depth: self.rollout_depth,
            policy_noise: self.policy_noise,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            recent_window: self.recent_window,
            lr: self.lr,
        }
    }

    /// Renders every key; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("width", self.width.to_string());
        kv("height", self.height.to_string());
        kv("agents", self.n_agents.to_string());
        kv("obstacles", self.n_obstacles.to_string());
        kv("step_limit", self.step_limit.to_string());
        kv("planner", self.planner.to_string());
        kv("c", self.exploration.to_string());
        kv("budget", format_budget(self.budget));
        kv("k", self.k.to_string());
        kv("sweeps", self.sweeps.to_string());
        kv("radius", self.radius.to_string());
        kv("rollout_depth", self.rollout_depth.to_string());
        kv("policy_noise", self.policy_noise.to_string());
        kv("gcn_layers", self.gcn_layers.to_string());
        kv("gcn_width", self.gcn_width.to_string());
        kv("head_hidden", self.head_hidden.to_string());
        kv("temperature", self.temperature.to_string());
        kv("lr", self.lr.to_string());
        kv("episodes", self.episodes.to_string());
        kv("train_every", self.train_every.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("recent_window", self.recent_window.to_string());
        kv("replay_capacity", self.replay_capacity.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("seed", self.seed.to_string());
        kv("jobs", self.jobs.to_string());
        kv("timing", if self.timing { "on" } else { "off" }.to_string());
        kv("metrics", self.metrics.display().to_string());
        kv("checkpoint", self.checkpoint.display().to_string());
        if let Some(p) = &self.replay_log {
            kv("replay_log", p.display().to_string());
        }
        s
    }
}
