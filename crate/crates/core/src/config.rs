//! Training configuration and its plain-text `key = value` representation.
//!
//! Files may contain blank lines and `#` comments. Every key is optional;
//! missing keys keep their defaults. [`TrainConfig::to_text`] writes every
//! key in a fixed order so a run's effective configuration can be embedded
//! in its outputs and read back unchanged.

use std::fmt::Write as _;
use std::path::Path;

use crate::embed::EmbedParams;
use crate::error::{Error, Result};

/// Walk length (in edges) used by the single-long-walk ablation.
pub const LONG_WALK_LENGTH: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub noise_dim: usize,
    pub hidden_dim: usize,
    /// Width of the recurrent input produced from each (type, node) pair.
    pub input_dim: usize,
    pub embed_dim: usize,
    pub embed_window: usize,
    pub embed_negatives: usize,
    pub embed_epochs: usize,
    pub embed_lr: f64,
    pub embed_walk_length: usize,
    pub embed_walks_per_node: usize,
    /// Real-walk lengths in edges, drawn uniformly.
    pub walk_lengths: Vec<usize>,
    pub batch_size: usize,
    pub n_critic: usize,
    /// Generator steps at the start of training that use `warmup_critic_iters`
    /// critic updates instead of `n_critic`.
    pub critic_warmup_steps: usize,
    pub warmup_critic_iters: usize,
    pub clip: f64,
    pub critic_lr: f64,
    pub gen_lr: f64,
    pub rms_decay: f64,
    pub temperature: f64,
    pub steps: usize,
    /// Maximum generated walk size in nodes.
    pub max_len: usize,
    pub checkpoint_interval: usize,
    pub train_fraction: f64,
    pub type_retries: usize,
    /// Generated walks per target edge when building the score matrix.
    pub walks_per_edge: f64,
    pub single_long_walk: bool,
    pub uniform_node_sampling: bool,
    pub probabilistic_assembler: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            noise_dim: 16,
            hidden_dim: 32,
            input_dim: 16,
            embed_dim: 16,
            embed_window: 2,
            embed_negatives: 5,
            embed_epochs: 5,
            embed_lr: 0.025,
            embed_walk_length: 10,
            embed_walks_per_node: 10,
            walk_lengths: vec![1, 2, 3],
            batch_size: 32,
            n_critic: 5,
            critic_warmup_steps: 25,
            warmup_critic_iters: 25,
            clip: 0.2,
            critic_lr: 5e-3,
            gen_lr: 1e-3,
            rms_decay: 0.9,
            temperature: 0.5,
            steps: 16000,
            max_len: 4,
            checkpoint_interval: 1000,
            train_fraction: 0.6,
            type_retries: 10,
            walks_per_edge: 3.0,
            single_long_walk: false,
            uniform_node_sampling: false,
            probabilistic_assembler: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Param(format!("cannot parse {key} = {value:?}")))
}

impl TrainConfig {
    /// Real-walk lengths after applying the single-long-walk ablation.
    pub fn effective_lengths(&self) -> Vec<usize> {
        if self.single_long_walk {
            vec![LONG_WALK_LENGTH]
        } else {
            self.walk_lengths.clone()
        }
    }

    /// Generated-walk node limit after applying the ablation.
    pub fn effective_max_len(&self) -> usize {
        if self.single_long_walk {
            self.max_len.max(LONG_WALK_LENGTH + 1)
        } else {
            self.max_len
        }
    }

    pub fn embed_params(&self) -> EmbedParams {
        EmbedParams {
            dim: self.embed_dim,
            window: self.embed_window,
            negatives: self.embed_negatives,
            epochs: self.embed_epochs,
            lr: self.embed_lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("noise_dim", self.noise_dim),
            ("hidden_dim", self.hidden_dim),
            ("input_dim", self.input_dim),
            ("embed_window", self.embed_window),
            ("embed_negatives", self.embed_negatives),
            ("embed_walk_length", self.embed_walk_length),
            ("embed_walks_per_node", self.embed_walks_per_node),
            ("batch_size", self.batch_size),
            ("n_critic", self.n_critic),
            ("checkpoint_interval", self.checkpoint_interval),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Param(format!("{k} must be positive")));
            }
        }
        if self.embed_dim < 2 {
            return Err(Error::Param("embed_dim must be at least 2".into()));
        }
        if self.max_len < 2 {
            return Err(Error::Param("max_len must be at least 2 nodes".into()));
        }
        if self.walk_lengths.is_empty() {
            return Err(Error::Param("walk_lengths must not be empty".into()));
        }
        let max_len = self.effective_max_len();
        if let Some(&bad) = self.effective_lengths().iter().find(|&&l| l == 0 || l + 1 > max_len) {
            return Err(Error::Param(format!("walk length {bad} is outside 1..{}", max_len - 1)));
        }
        for (k, v) in [
            ("clip", self.clip),
            ("temperature", self.temperature),
            ("walks_per_edge", self.walks_per_edge),
        ] {
            if !(v > 0.0) {
                return Err(Error::Param(format!("{k} must be positive, got {v}")));
            }
        }
        for (k, v) in [
            ("critic_lr", self.critic_lr),
            ("gen_lr", self.gen_lr),
            ("embed_lr", self.embed_lr),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Param(format!("{k} must be non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.rms_decay) {
            return Err(Error::Param("rms_decay must lie in [0, 1)".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Param("train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "noise_dim" => self.noise_dim = parse(key, v)?,
            "hidden_dim" => self.hidden_dim = parse(key, v)?,
            "input_dim" => self.input_dim = parse(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "embed_window" => self.embed_window = parse(key, v)?,
            "embed_negatives" => self.embed_negatives = parse(key, v)?,
            "embed_epochs" => self.embed_epochs = parse(key, v)?,
            "embed_lr" => self.embed_lr = parse(key, v)?,
            "embed_walk_length" => self.embed_walk_length = parse(key, v)?,
            "embed_walks_per_node" => self.embed_walks_per_node = parse(key, v)?,
            "walk_lengths" => {
                self.walk_lengths = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "batch_size" => self.batch_size = parse(key, v)?,
            "n_critic" => self.n_critic = parse(key, v)?,
            "critic_warmup_steps" => self.critic_warmup_steps = parse(key, v)?,
            "warmup_critic_iters" => self.warmup_critic_iters = parse(key, v)?,
            "clip" => self.clip = parse(key, v)?,
            "critic_lr" => self.critic_lr = parse(key, v)?,
            "gen_lr" => self.gen_lr = parse(key, v)?,
            "rms_decay" => self.rms_decay = parse(key, v)?,
            "temperature" => self.temperature = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "checkpoint_interval" => self.checkpoint_interval = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "type_retries" => self.type_retries = parse(key, v)?,
            "walks_per_edge" => self.walks_per_edge = parse(key, v)?,
            "single_long_walk" => self.single_long_walk = parse(key, v)?,
            "uniform_node_sampling" => self.uniform_node_sampling = parse(key, v)?,
            "probabilistic_assembler" => self.probabilistic_assembler = parse(key, v)?,
            other => return Err(Error::Param(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Param(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_text(&text)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let lengths = self
            .walk_lengths
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("seed", self.seed.to_string()),
            ("noise_dim", self.noise_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("input_dim", self.input_dim.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("embed_window", self.embed_window.to_string()),
            ("embed_negatives", self.embed_negatives.to_string()),
            ("embed_epochs", self.embed_epochs.to_string()),
            ("embed_lr", self.embed_lr.to_string()),
            ("embed_walk_length", self.embed_walk_length.to_string()),
            ("embed_walks_per_node", self.embed_walks_per_node.to_string()),
            ("walk_lengths", lengths),
            ("batch_size", self.batch_size.to_string()),
            ("n_critic", self.n_critic.to_string()),
            ("critic_warmup_steps", self.critic_warmup_steps.to_string()),
            ("warmup_critic_iters", self.warmup_critic_iters.to_string()),
            ("clip", self.clip.to_string()),
            ("critic_lr", self.critic_lr.to_string()),
            ("gen_lr", self.gen_lr.to_string()),
            ("rms_decay", self.rms_decay.to_string()),
            ("temperature", self.temperature.to_string()),
            ("steps", self.steps.to_string()),
            ("max_len", self.max_len.to_string()),
            ("checkpoint_interval", self.checkpoint_interval.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("type_retries", self.type_retries.to_string()),
            ("walks_per_edge", self.walks_per_edge.to_string()),
            ("single_long_walk", self.single_long_walk.to_string()),
            ("uniform_node_sampling", self.uniform_node_sampling.to_string()),
            ("probabilistic_assembler", self.probabilistic_assembler.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
