//! Experiment configuration: defaults, validation, and the flat
//! `key=value` file format.

use crate::agent::{DEFAULT_BATCH_SIZE, DEFAULT_MAX_STALENESS, DEFAULT_NOISE_SIGMA_DB, DEFAULT_REPLAY_CAPACITY};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("malformed line `{0}`: expected key=value")]
    Malformed(String),
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &'static str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.to_string() }
}

/// Load balancing controller selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Controller {
    NoMlb,
    RuleStatic,
    RuleAdaptive,
    QLearning,
    DrlSbp,
    DrlMbp,
}

impl Controller {
    pub const ALL: [Controller; 6] = [
        Controller::NoMlb,
        Controller::RuleStatic,
        Controller::RuleAdaptive,
        Controller::QLearning,
        Controller::DrlSbp,
        Controller::DrlMbp,
    ];

    pub fn is_drl(self) -> bool {
        matches!(self, Controller::DrlSbp | Controller::DrlMbp)
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Controller::NoMlb => "nomlb",
            Controller::RuleStatic => "rule-static",
            Controller::RuleAdaptive => "rule-adaptive",
            Controller::QLearning => "qlearning",
            Controller::DrlSbp => "drl-sbp",
            Controller::DrlMbp => "drl-mbp",
        };
        f.write_str(s)
    }
}

impl FromStr for Controller {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nomlb" => Ok(Controller::NoMlb),
            "rule-static" => Ok(Controller::RuleStatic),
            "rule-adaptive" => Ok(Controller::RuleAdaptive),
            "qlearning" => Ok(Controller::QLearning),
            "drl-sbp" => Ok(Controller::DrlSbp),
            "drl-mbp" => Ok(Controller::DrlMbp),
            other => Err(invalid("controller", format!("unknown controller `{other}`"))),
        }
    }
}

/// Agent scoping: one agent per cluster, or one over the whole network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchMode {
    TwoLayer,
    Centralized,
}

impl fmt::Display for ArchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchMode::TwoLayer => "two-layer",
            ArchMode::Centralized => "centralized",
        })
    }
}

impl FromStr for ArchMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two-layer" => Ok(ArchMode::TwoLayer),
            "centralized" => Ok(ArchMode::Centralized),
            other => Err(invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Full experiment description. Defaults follow the reference simulation
/// parameters; environment variables are never consulted.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_sbs: usize,
    pub n_users: usize,
    pub area_side: f64,
    /// Per-user constant bit rate demand (bits/s).
    pub cbr: f64,
    pub controller: Controller,
    pub mode: ArchMode,
    /// Number of seeds; runs use seeds `0..seeds`.
    pub seeds: usize,
    /// Total steps per run, warmup included.
    pub steps: u64,
    /// Zero-offset steps at the start of a run that feed the first
    /// clustering with load history.
    pub warmup: u64,
    /// Steps between top-layer re-clusterings.
    pub stage_length: u64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub actor_rate: f64,
    pub critic_rate: f64,
    pub replay_capacity: usize,
    pub max_staleness: u64,
    pub hidden: Vec<usize>,
    pub noise_sigma_db: f64,
    /// Adaptive-moment estimation for the critic (plain SGD otherwise).
    pub critic_optimizer_adam: bool,
    /// Adaptive-moment estimation for the actor (plain SGD otherwise).
    pub actor_optimizer_adam: bool,
    pub actor_weight_decay: f64,
    pub critic_weight_decay: f64,
    /// Simulator seconds each DRL action is held (the agents' control
    /// period; the bottom layer operates on the order of seconds up to
    /// minutes).
    pub control_interval: u64,
    /// Candidate cluster counts: `h_min..=h_max` intersected with
    /// `2..n_sbs`.
    pub h_min: usize,
    pub h_max: usize,
    /// Moving-average window for reported rewards.
    pub ma_window: usize,
    /// Two-branch offline-evaluation mode (DRL controllers only).
    pub safeguard: bool,
    /// Evaluation replicas per policy evaluation.
    pub eval_seeds: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_sbs: 12,
            n_users: 200,
            area_side: 300.0,
            cbr: 112_000.0,
            controller: Controller::NoMlb,
            mode: ArchMode::TwoLayer,
            seeds: 5,
            steps: 4_000,
            warmup: 200,
            stage_length: 10_000,
            gamma: 0.99,
            tau: 0.001,
            batch_size: DEFAULT_BATCH_SIZE,
            actor_rate: 1e-4,
            critic_rate: 1e-3,
            replay_capacity: DEFAULT_REPLAY_CAPACITY,
            max_staleness: DEFAULT_MAX_STALENESS,
            hidden: vec![400, 300],
            noise_sigma_db: DEFAULT_NOISE_SIGMA_DB,
            critic_optimizer_adam: true,
            actor_optimizer_adam: false,
            actor_weight_decay: 1e-3,
            critic_weight_decay: 1e-2,
            control_interval: 10,
            h_min: 2,
            h_max: 6,
            ma_window: 200,
            safeguard: false,
            eval_seeds: 3,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Checks every field, reporting the offending field by name.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_sbs == 0 {
            return Err(invalid("n_sbs", "must be at least 1"));
        }
        if self.area_side <= 0.0 {
            return Err(invalid("area_side", "must be positive"));
        }
        if self.cbr <= 0.0 {
            return Err(invalid("cbr", "must be positive"));
        }
        if self.seeds == 0 {
            return Err(invalid("seeds", "must run at least one seed"));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must run at least one step"));
        }
        if self.warmup >= self.steps {
            return Err(invalid("warmup", format!("must be below steps = {}", self.steps)));
        }
        if self.stage_length == 0 {
            return Err(invalid("stage_length", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("gamma", "must lie in [0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid("tau", "must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        if self.actor_rate <= 0.0 {
            return Err(invalid("actor_rate", "must be positive"));
        }
        if self.critic_rate <= 0.0 {
            return Err(invalid("critic_rate", "must be positive"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(invalid("replay_capacity", "must hold at least one batch"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid("hidden", "needs at least one non-zero layer size"));
        }
        if self.noise_sigma_db < 0.0 {
            return Err(invalid("noise_sigma_db", "must be non-negative"));
        }
        if self.h_min < 2 {
            return Err(invalid("h_min", "must be at least 2"));
        }
        if self.h_max < self.h_min {
            return Err(invalid("h_max", "must be at least h_min"));
        }
        if self.ma_window == 0 {
            return Err(invalid("ma_window", "must be at least 1"));
        }
        if self.eval_seeds == 0 {
            return Err(invalid("eval_seeds", "must be at least 1"));
        }
        if self.control_interval == 0 {
            return Err(invalid("control_interval", "must be at least 1"));
        }
        if self.safeguard && !self.controller.is_drl() {
            return Err(invalid("safeguard", "requires a DRL controller"));
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: FromStr>(field: &'static str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            v.parse().map_err(|e| invalid(field, e))
        }
        match key {
            "n_sbs" => self.n_sbs = parse("n_sbs", value)?,
            "n_users" => self.n_users = parse("n_users", value)?,
            "area_side" => self.area_side = parse("area_side", value)?,
            "cbr" => self.cbr = parse("cbr", value)?,
            "controller" => self.controller = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "seeds" => self.seeds = parse("seeds", value)?,
            "steps" => self.steps = parse("steps", value)?,
            "warmup" => self.warmup = parse("warmup", value)?,
            "stage_length" => self.stage_length = parse("stage_length", value)?,
            "gamma" => self.gamma = parse("gamma", value)?,
            "tau" => self.tau = parse("tau", value)?,
            "batch_size" => self.batch_size = parse("batch_size", value)?,
            "actor_rate" => self.actor_rate = parse("actor_rate", value)?,
            "critic_rate" => self.critic_rate = parse("critic_rate", value)?,
            "replay_capacity" => self.replay_capacity = parse("replay_capacity", value)?,
            "max_staleness" => self.max_staleness = parse("max_staleness", value)?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .map(|t| parse::<usize>("hidden", t.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "noise_sigma_db" => self.noise_sigma_db = parse("noise_sigma_db", value)?,
            "critic_optimizer_adam" => {
                self.critic_optimizer_adam = parse("critic_optimizer_adam", value)?
            }
            "actor_optimizer_adam" => {
                self.actor_optimizer_adam = parse("actor_optimizer_adam", value)?
            }
            "actor_weight_decay" => self.actor_weight_decay = parse("actor_weight_decay", value)?,
            "control_interval" => self.control_interval = parse("control_interval", value)?,
            "critic_weight_decay" => {
                self.critic_weight_decay = parse("critic_weight_decay", value)?
            }
            "h_min" => self.h_min = parse("h_min", value)?,
            "h_max" => self.h_max = parse("h_max", value)?,
            "ma_window" => self.ma_window = parse("ma_window", value)?,
            "safeguard" => self.safeguard = parse("safeguard", value)?,
            "eval_seeds" => self.eval_seeds = parse("eval_seeds", value)?,
            "out" => self.out_dir = PathBuf::from(value),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Parses a flat `key=value` file (`#` comments and blank lines
    /// allowed) on top of the current values.
    pub fn apply_file_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed(line.to_string()))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &std::path::Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)?;
        self.apply_file_text(&text)
    }

    /// Candidate cluster counts for this scenario size.
    pub fn h_range(&self) -> std::ops::RangeInclusive<usize> {
        let hi = self.h_max.min(self.n_sbs.saturating_sub(1));
        self.h_min.min(hi)..=hi
    }
}
