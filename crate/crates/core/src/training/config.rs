use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::HistoryMode;
use crate::error::{Error, Result};
use crate::model::{AblationSwitches, ModelConfig};

/// Every hyperparameter, seed, and switch of a run, as one flat record.
///
/// Defaults are the reference architecture; optimizer and schedule defaults
/// are conventional choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pad_len: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub temporal_heads: usize,
    pub temporal_head_dim: usize,
    pub ffn_dim: usize,
    pub history_len: usize,
    pub dropout: f64,

    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global-norm gradient clipping threshold; `0` disables clipping.
    pub grad_clip: f64,
    pub seed: u64,

    pub use_temporal_attention: bool,
    pub use_time_embedding: bool,
    pub use_variate_embedding: bool,
    pub use_history: bool,

    pub eval_history: HistoryMode,
    pub train_batteries: Vec<String>,
    pub test_batteries: Vec<String>,
    /// Tail fraction of each training battery held out for model selection.
    pub val_fraction: f64,
    /// Rated capacity used for batteries whose files do not state one.
    pub rated_capacity_ah: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            pad_len: m.pad_len,
            hidden: m.hidden,
            encoder_layers: m.encoder_layers,
            encoder_heads: m.encoder_heads,
            temporal_heads: m.temporal_heads,
            temporal_head_dim: m.temporal_head_dim,
            ffn_dim: m.ffn_dim,
            history_len: m.history_len,
            dropout: m.dropout,
            batch_size: 16,
            epochs: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 0.0,
            seed: 0,
            use_temporal_attention: true,
            use_time_embedding: true,
            use_variate_embedding: true,
            use_history: true,
            eval_history: HistoryMode::GroundTruth,
            train_batteries: vec!["B0005".into(), "B0006".into()],
            test_batteries: vec!["B0007".into()],
            val_fraction: 0.2,
            rated_capacity_ah: 2.0,
        }
    }
}

const LIST_KEYS: [&str; 2] = ["train_batteries", "test_batteries"];

/// Parse one override value: TOML syntax first, then a bare string; list
/// fields also accept `a,b,c`.
fn override_value(key: &str, raw: &str) -> toml::Value {
    let raw = raw.trim();
    let parsed = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"));
    match parsed {
        Some(v) => v,
        None if LIST_KEYS.contains(&key) => toml::Value::Array(
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| toml::Value::String(s.to_string()))
                .collect(),
        ),
        None => toml::Value::String(raw.to_string()),
    }
}

impl TrainConfig {
    /// Built-in defaults, then `file` (if any), then `overrides` (`key=value`).
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        Self::resolve_over(&Self::default(), file, overrides)
    }

    /// Like [`TrainConfig::resolve`] with `base` in place of the built-in defaults.
    pub fn resolve_over(base: &TrainConfig, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = base.to_toml().parse().expect("serialized config parses");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let from_file = text
                .parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            table.extend(from_file);
        }
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let key = key.trim();
            table.insert(key.to_string(), override_value(key, value));
        }
        for key in LIST_KEYS {
            if let Some(toml::Value::String(s)) = table.get(key) {
                let v = override_value(key, &format!("{s},"));
                table.insert(key.to_string(), v);
            }
        }
        let cfg: TrainConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn switches(&self) -> AblationSwitches {
        AblationSwitches {
            use_temporal_attention: self.use_temporal_attention,
            use_time_embedding: self.use_time_embedding,
            use_variate_embedding: self.use_variate_embedding,
            use_history: self.use_history,
        }
    }

    pub fn with_switches(&self, s: AblationSwitches) -> Self {
        Self {
            use_temporal_attention: s.use_temporal_attention,
            use_time_embedding: s.use_time_embedding,
            use_variate_embedding: s.use_variate_embedding,
            use_history: s.use_history,
            ..self.clone()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            pad_len: self.pad_len,
            features: crate::data::NUM_FEATURES,
            hidden: self.hidden,
            encoder_layers: self.encoder_layers,
            encoder_heads: self.encoder_heads,
            temporal_heads: self.temporal_heads,
            temporal_head_dim: self.temporal_head_dim,
            ffn_dim: self.ffn_dim,
            history_len: self.history_len,
            dropout: self.dropout,
            switches: self.switches(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::Config("grad_clip must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        if !(self.rated_capacity_ah > 0.0) {
            return Err(Error::Config("rated_capacity_ah must be positive".into()));
        }
        Ok(())
    }

    /// Canonical TOML rendering, also used for display.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    pub fn config_hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
