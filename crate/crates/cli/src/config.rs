//! Flat key-value run configuration.
//!
//! Every key has a default, so an empty file is a valid configuration. Keys
//! can be overridden from the command line with `--set key=value`, where the
//! value uses TOML syntax (`--set strategies=["noadapt","fast-slow"]`); bare
//! words are taken as strings.

use std::path::{Path, PathBuf};

use fstta_core::model::{Architecture, TrainConfig};
use fstta_core::sim::LayoutFamily;
use fstta_core::{AdaptConfig, FastConfig, ShiftSpec, SlowConfig, Strategy};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Stream families a run can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamKind {
    Seen,
    Unseen,
}

impl StreamKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "seen" => Some(StreamKind::Seen),
            "unseen" => Some(StreamKind::Unseen),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Seen => "seen",
            StreamKind::Unseen => "unseen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory for params, results and sidecars.
    pub output_dir: PathBuf,
    /// Params file name, resolved inside `output_dir`.
    pub params_file: String,

    pub pretrain_seed: u64,
    pub pretrain_epochs: usize,
    pub pretrain_train_episodes: usize,
    pub pretrain_heldout_episodes: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub pretrain_min_accuracy: f64,

    /// Stream families evaluated by `run`: any of "seen", "unseen".
    pub streams: Vec<String>,
    pub stream_seeds: Vec<u64>,
    pub episodes: usize,
    pub shift_bias_norm: f64,
    pub shift_noise: f64,
    pub shift_layout: LayoutFamily,

    pub shuffles: usize,
    pub shuffle_seed: u64,

    pub strategies: Vec<String>,
    /// Strategy adapted in the forgetting protocol.
    pub forgetting_strategy: String,

    pub fast_lr: f64,
    pub fast_window: usize,
    pub tau: f64,
    pub momentum: f64,
    pub trunc_lo: f64,
    pub trunc_hi: f64,
    pub phi_eps: f64,
    pub slow_lr: f64,
    pub slow_interval: usize,
    pub slow_q: f64,
    pub tent_lr: f64,

    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let fast = FastConfig::default();
        let slow = SlowConfig::default();
        Self {
            output_dir: PathBuf::from("results"),
            params_file: "params.bin".into(),
            pretrain_seed: 0,
            pretrain_epochs: train.epochs,
            pretrain_train_episodes: train.train_episodes,
            pretrain_heldout_episodes: train.heldout_episodes,
            pretrain_lr: train.lr,
            pretrain_batch: train.batch,
            pretrain_min_accuracy: train.min_accuracy,
            streams: vec!["unseen".into()],
            stream_seeds: vec![1],
            episodes: 200,
            shift_bias_norm: 0.5,
            shift_noise: 0.1,
            shift_layout: LayoutFamily::Alternate,
            shuffles: 5,
            shuffle_seed: 7,
            strategies: ["noadapt", "tent-int-1", "tent-int-3", "tent-stable", "fast-only", "fast-only-nodlr", "fast-slow"]
                .map(String::from)
                .to_vec(),
            forgetting_strategy: "fast-slow".into(),
            fast_lr: 0.1,
            fast_window: fast.window,
            tau: fast.tau,
            momentum: fast.momentum,
            trunc_lo: fast.trunc_lo,
            trunc_hi: fast.trunc_hi,
            phi_eps: fast.phi_eps,
            slow_lr: 1.0,
            slow_interval: slow.interval,
            slow_q: slow.q,
            tent_lr: 0.1,
            threads: 0,
        }
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("`{name}`: {msg}"))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("must be a positive finite number, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut table = toml::Table::try_from(&*self).expect("config serializes");
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override `{item}` is not key=value")))?;
            let key = key.trim();
            if !table.contains_key(key) {
                return Err(HarnessError::Config(format!("unknown config key `{key}`")));
            }
            let raw = raw.trim();
            let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.to_string()),
            };
            table.insert(key.to_string(), value);
        }
        *self = Self::deserialize(toml::Value::Table(table)).map_err(|e| HarnessError::Config(e.message().to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.params_file.is_empty() {
            return Err(field("params_file", "must not be empty"));
        }
        if self.pretrain_train_episodes == 0 {
            return Err(field("pretrain_train_episodes", "must be >= 1"));
        }
        if self.pretrain_heldout_episodes == 0 {
            return Err(field("pretrain_heldout_episodes", "must be >= 1"));
        }
        positive("pretrain_lr", self.pretrain_lr)?;
        if self.pretrain_batch == 0 {
            return Err(field("pretrain_batch", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.pretrain_min_accuracy) {
            return Err(field("pretrain_min_accuracy", format!("must lie in [0, 1], got {}", self.pretrain_min_accuracy)));
        }
        if self.streams.is_empty() {
            return Err(field("streams", "needs at least one of \"seen\", \"unseen\""));
        }
        for s in &self.streams {
            if StreamKind::parse(s).is_none() {
                return Err(field("streams", format!("unknown stream `{s}`, expected \"seen\" or \"unseen\"")));
            }
        }
        if self.stream_seeds.is_empty() {
            return Err(field("stream_seeds", "needs at least one seed"));
        }
        let mut seeds = self.stream_seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.stream_seeds.len() {
            return Err(field("stream_seeds", "contains duplicates"));
        }
        if self.episodes == 0 {
            return Err(field("episodes", "must be >= 1"));
        }
        if !(self.shift_bias_norm >= 0.0 && self.shift_bias_norm.is_finite()) {
            return Err(field("shift_bias_norm", format!("must be >= 0, got {}", self.shift_bias_norm)));
        }
        if !(self.shift_noise >= 0.0 && self.shift_noise.is_finite()) {
            return Err(field("shift_noise", format!("must be >= 0, got {}", self.shift_noise)));
        }
        if self.shuffles == 0 {
            return Err(field("shuffles", "must be >= 1"));
        }
        if self.strategies.is_empty() {
            return Err(field("strategies", "needs at least one strategy"));
        }
        let parsed = self.strategy_list()?;
        let mut names: Vec<String> = parsed.iter().map(|s| s.to_string()).collect();
        names.sort();
        names.dedup();
        if names.len() != parsed.len() {
            return Err(field("strategies", "lists a strategy twice"));
        }
        self.forgetting()?;
        positive("fast_lr", self.fast_lr)?;
        positive("tent_lr", self.tent_lr)?;
        if !(self.slow_lr >= 0.0 && self.slow_lr.is_finite()) {
            return Err(field("slow_lr", format!("must be >= 0, got {}", self.slow_lr)));
        }
        if self.fast_window < 2 {
            return Err(field("fast_window", "must be >= 2"));
        }
        if self.slow_interval == 0 {
            return Err(field("slow_interval", "must be >= 1"));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(field("momentum", format!("must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.trunc_lo > 0.0 && self.trunc_lo <= self.trunc_hi && self.trunc_hi.is_finite()) {
            return Err(field("trunc_lo", format!("need 0 < trunc_lo <= trunc_hi, got [{}, {}]", self.trunc_lo, self.trunc_hi)));
        }
        if !self.tau.is_finite() {
            return Err(field("tau", "must be finite"));
        }
        if !(self.phi_eps >= 0.0 && self.phi_eps.is_finite()) {
            return Err(field("phi_eps", format!("must be >= 0, got {}", self.phi_eps)));
        }
        if !(self.slow_q > 0.0 && self.slow_q < 1.0) {
            return Err(field("slow_q", format!("must lie in (0, 1), got {}", self.slow_q)));
        }
        self.adapt_config().validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn strategy_list(&self) -> Result<Vec<Strategy>> {
        self.strategies
            .iter()
            .map(|s| s.parse::<Strategy>().map_err(|e| field("strategies", e)))
            .collect()
    }

    pub fn forgetting(&self) -> Result<Strategy> {
        let s: Strategy = self.forgetting_strategy.parse().map_err(|e| field("forgetting_strategy", e))?;
        if !s.adapts() {
            return Err(field("forgetting_strategy", "must be an adapting strategy"));
        }
        Ok(s)
    }

    pub fn stream_kinds(&self) -> Vec<StreamKind> {
        self.streams.iter().filter_map(|s| StreamKind::parse(s)).collect()
    }

    pub fn params_path(&self) -> PathBuf {
        self.output_dir.join(&self.params_file)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            arch: Architecture::default(),
            train_episodes: self.pretrain_train_episodes,
            heldout_episodes: self.pretrain_heldout_episodes,
            epochs: self.pretrain_epochs,
            lr: self.pretrain_lr,
            batch: self.pretrain_batch,
            min_accuracy: self.pretrain_min_accuracy,
        }
    }

    pub fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            fast: FastConfig {
                window: self.fast_window,
                base_lr: self.fast_lr,
                tau: self.tau,
                momentum: self.momentum,
                trunc_lo: self.trunc_lo,
                trunc_hi: self.trunc_hi,
                phi_eps: self.phi_eps,
                ..FastConfig::default()
            },
            slow: SlowConfig { interval: self.slow_interval, lr: self.slow_lr, q: self.slow_q, ..SlowConfig::default() },
            tent_lr: self.tent_lr,
        }
    }

    /// Shift of a stream family; the unseen bias direction is drawn from `seed`.
    pub fn shift(&self, kind: StreamKind, seed: u64) -> ShiftSpec {
        match kind {
            StreamKind::Seen => ShiftSpec::seen(),
            StreamKind::Unseen => {
                let mut s = ShiftSpec::unseen(seed, self.shift_bias_norm, self.shift_noise);
                s.layout = self.shift_layout;
                s
            }
        }
    }
}
