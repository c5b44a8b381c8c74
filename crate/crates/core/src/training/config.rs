use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agent::ArchConfig;
use crate::error::{Error, Result};

/// Hyperparameters of the training loop.
///
/// Config files are flat `key = value` text, one key per line, `#` starts a
/// comment. Keys are the field names below, including the flattened
/// architecture fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Environment steps; every step advances all parallel episodes.
    pub number_of_training_steps: usize,
    pub batch_size: usize,
    /// Environment steps between gradient updates.
    pub update_frequency: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub soft_update_rate: f64,
    pub bptt_length: usize,
    pub buffer_size: usize,
    pub discount_factor: f64,
    pub initial_exploration_probability: f64,
    pub final_exploration_probability: f64,
    pub time_of_exploration_decay: usize,
    pub mdqn_temperature: f64,
    pub mdqn_bootstrap: f64,
    pub mdqn_clipping: f64,
    /// Episodes run side by side; each draws a fresh graph.
    pub graphs_per_batch: usize,
    /// Episode length as a multiple of `|V|`.
    pub episode_length_per_vertex: f64,
    /// Environment steps between validation runs; 0 disables validation.
    pub validation_interval: usize,
    pub validation_trajectories: usize,
    /// Environment steps between loss records in the log.
    pub log_interval: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            number_of_training_steps: 40_000,
            batch_size: 64,
            update_frequency: 8,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            soft_update_rate: 0.01,
            bptt_length: 5,
            buffer_size: 40_000,
            discount_factor: 0.7,
            initial_exploration_probability: 1.0,
            final_exploration_probability: 0.05,
            time_of_exploration_decay: 5_000,
            mdqn_temperature: 0.01,
            mdqn_bootstrap: 0.9,
            mdqn_clipping: -1.0,
            graphs_per_batch: 32,
            episode_length_per_vertex: 2.0,
            validation_interval: 2_000,
            validation_trajectories: 10,
            log_interval: 500,
            seed: 0,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Exploration probability at environment step `step`: linear from the
    /// initial to the final value, then constant.
    pub fn epsilon(&self, step: usize) -> f64 {
        let frac = if self.time_of_exploration_decay == 0 {
            1.0
        } else {
            (step as f64 / self.time_of_exploration_decay as f64).min(1.0)
        };
        self.initial_exploration_probability
            + (self.final_exploration_probability - self.initial_exploration_probability) * frac
    }

    /// Episode length on a graph with `n` vertices.
    pub fn episode_length(&self, n: usize) -> usize {
        ((self.episode_length_per_vertex * n as f64).ceil() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("update_frequency", self.update_frequency),
            ("bptt_length", self.bptt_length),
            ("buffer_size", self.buffer_size),
            ("graphs_per_batch", self.graphs_per_batch),
            ("validation_trajectories", self.validation_trajectories),
            ("log_interval", self.log_interval),
            ("embed_dim", self.arch.embed_dim),
            ("hidden_dim", self.arch.hidden_dim),
            ("message_dim", self.arch.message_dim),
            ("value_hidden", self.arch.value_hidden),
            ("advantage_hidden", self.arch.advantage_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        let checks = [
            ("learning_rate", self.learning_rate >= 0.0),
            ("adam_beta1", (0.0..1.0).contains(&self.adam_beta1)),
            ("adam_beta2", (0.0..1.0).contains(&self.adam_beta2)),
            ("adam_epsilon", self.adam_epsilon > 0.0),
            ("soft_update_rate", (0.0..=1.0).contains(&self.soft_update_rate)),
            ("discount_factor", (0.0..=1.0).contains(&self.discount_factor)),
            (
                "initial_exploration_probability",
                (0.0..=1.0).contains(&self.initial_exploration_probability),
            ),
            (
                "final_exploration_probability",
                (0.0..=self.initial_exploration_probability).contains(&self.final_exploration_probability),
            ),
            ("mdqn_temperature", self.mdqn_temperature > 0.0),
            ("mdqn_bootstrap", self.mdqn_bootstrap >= 0.0),
            ("mdqn_clipping", self.mdqn_clipping <= 0.0),
            ("episode_length_per_vertex", self.episode_length_per_vertex > 0.0),
            ("observation_horizon", self.arch.observation_horizon > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::Argument(format!("{name} is out of range")));
            }
        }
        Ok(())
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let Value::Object(mut map) = serde_json::to_value(&*self)? else {
            unreachable!("config serializes to an object");
        };
        let slot = map
            .get_mut(key)
            .ok_or_else(|| Error::Argument(format!("unknown config key `{key}`")))?;
        *slot = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        *self = serde_json::from_value(Value::Object(map))
            .map_err(|e| Error::Argument(format!("bad value `{value}` for `{key}`: {e}")))?;
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Renders every key in the file format accepted by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let Value::Object(map) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!("config serializes to an object");
        };
        let map: Map<String, Value> = map;
        let mut out = String::new();
        for (k, v) in map {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_hyperparameter_table() {
        let c = TrainConfig::default();
        assert_eq!(c.number_of_training_steps, 40_000);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.update_frequency, 8);
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!((c.adam_beta1, c.adam_beta2), (0.9, 0.999));
        assert_eq!(c.soft_update_rate, 0.01);
        assert_eq!(c.bptt_length, 5);
        assert_eq!(c.buffer_size, 40_000);
        assert_eq!(c.discount_factor, 0.7);
        assert_eq!(c.initial_exploration_probability, 1.0);
        assert_eq!(c.final_exploration_probability, 0.05);
        assert_eq!(c.time_of_exploration_decay, 5_000);
        assert_eq!(c.mdqn_temperature, 0.01);
        assert_eq!(c.mdqn_bootstrap, 0.9);
        assert_eq!(c.mdqn_clipping, -1.0);
        assert_eq!(c.graphs_per_batch, 32);
        c.validate().unwrap();
    }

    #[test]
    fn epsilon_decays_linearly_then_holds() {
        let c = TrainConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(2_500) - 0.525).abs() < 1e-12);
        assert!((c.epsilon(5_000) - 0.05).abs() < 1e-12);
        assert!((c.epsilon(40_000) - 0.05).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for s in (0..6_000).step_by(37) {
            assert!(c.epsilon(s) <= prev);
            prev = c.epsilon(s);
        }
    }

    #[test]
    fn parses_flat_text_with_comments() {
        let c = TrainConfig::parse(
            "# small run\nnumber_of_training_steps = 100\nlearning_rate=5e-4 # slower\n\nhidden_dim = 32\nuse_recurrence = false\n",
        )
        .unwrap();
        assert_eq!(c.number_of_training_steps, 100);
        assert_eq!(c.learning_rate, 5e-4);
        assert_eq!(c.arch.hidden_dim, 32);
        assert!(!c.arch.use_recurrence);
        assert_eq!(c.batch_size, 64);
    }

    #[test]
    fn text_round_trips() {
        let mut c = TrainConfig::default();
        c.seed = 17;
        c.mdqn_temperature = 0.02;
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_bad_values_and_ranges() {
        assert!(matches!(TrainConfig::parse("no_such_key = 1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(TrainConfig::parse("\nbatch_size = many"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(TrainConfig::parse("batch_size"), Err(Error::Parse { line: 1, .. })));
        assert!(TrainConfig::parse("batch_size = 0").is_err());
        assert!(TrainConfig::parse("mdqn_temperature = 0").is_err());
    }
}
