use serde::{Deserialize, Serialize};

use crate::data::NUM_FEATURES;
use crate::error::{Error, Result};

/// Which architectural components take part in the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSwitches {
    pub use_temporal_attention: bool,
    pub use_time_embedding: bool,
    pub use_variate_embedding: bool,
    pub use_history: bool,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        Self::full()
    }
}

impl AblationSwitches {
    pub const fn full() -> Self {
        Self {
            use_temporal_attention: true,
            use_time_embedding: true,
            use_variate_embedding: true,
            use_history: true,
        }
    }

    pub fn is_full(&self) -> bool {
        *self == Self::full()
    }

    /// The full model followed by the four single-removal variants.
    pub fn ablation_variants() -> [(&'static str, AblationSwitches); 5] {
        let full = Self::full();
        [
            ("full", full),
            (
                "w/o variate embedding",
                Self {
                    use_variate_embedding: false,
                    ..full
                },
            ),
            (
                "w/o history embedding",
                Self {
                    use_history: false,
                    ..full
                },
            ),
            (
                "w/o temporal attention",
                Self {
                    use_temporal_attention: false,
                    ..full
                },
            ),
            (
                "w/o continuous time embedding",
                Self {
                    use_time_embedding: false,
                    ..full
                },
            ),
        ]
    }
}

/// Architecture hyperparameters. Defaults are the reference configuration (T=371, H=42, 8 heads, FFN 168, p=10).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub pad_len: usize,
    pub features: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub temporal_heads: usize,
    pub temporal_head_dim: usize,
    pub ffn_dim: usize,
    pub history_len: usize,
    pub dropout: f64,
    pub switches: AblationSwitches,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            pad_len: 371,
            features: NUM_FEATURES,
            hidden: 42,
            encoder_layers: 1,
            encoder_heads: 8,
            temporal_heads: 1,
            temporal_head_dim: NUM_FEATURES,
            ffn_dim: 168,
            history_len: 10,
            dropout: 0.1,
            switches: AblationSwitches::full(),
        }
    }
}

impl ModelConfig {
    /// Per-head width of the encoder attention: `ceil(hidden / heads)`.
    ///
    /// With H=42 and 8 heads this is 6, so Q/K/V project to 48 columns and
    /// the output projection maps 48 back to 42.
    pub fn encoder_head_dim(&self) -> usize {
        self.hidden.div_ceil(self.encoder_heads)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pad_len", self.pad_len),
            ("features", self.features),
            ("hidden", self.hidden),
            ("encoder_layers", self.encoder_layers),
            ("encoder_heads", self.encoder_heads),
            ("temporal_heads", self.temporal_heads),
            ("temporal_head_dim", self.temporal_head_dim),
            ("ffn_dim", self.ffn_dim),
            ("history_len", self.history_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.pad_len < 2 {
            return Err(Error::Config("pad_len must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamInit {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    Uniform {
        fan_in: usize,
    },
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub path: String,
    pub shape: Vec<usize>,
    pub init: ParamInit,
}

impl ParamSpec {
    pub fn weight(path: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            path: path.into(),
            shape: vec![rows, cols],
            init: ParamInit::Uniform { fan_in: rows },
        }
    }

    pub fn bias(path: impl Into<String>, len: usize) -> Self {
        Self {
            path: path.into(),
            shape: vec![len],
            init: ParamInit::Zeros,
        }
    }

    pub fn gamma(path: impl Into<String>, len: usize) -> Self {
        Self {
            path: path.into(),
            shape: vec![len],
            init: ParamInit::Ones,
        }
    }
}

/// Every learnable tensor of the model.
///
/// Components disabled by ablation keep their parameters (they receive zero
/// gradients); the per-timestep token projection exists only when the variate
/// embedding is switched off.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (d, h, t) = (cfg.features, cfg.hidden, cfg.pad_len);
    let mut specs = Vec::new();

    let tw = cfg.temporal_heads * cfg.temporal_head_dim;
    specs.push(ParamSpec::weight("temporal.w_q", d, tw));
    specs.push(ParamSpec::weight("temporal.w_k", d, tw));
    specs.push(ParamSpec::weight("temporal.w_v", d, tw));
    specs.push(ParamSpec::weight("temporal.w_o", tw, d));
    specs.push(ParamSpec::gamma("temporal.ln.gamma", d));
    specs.push(ParamSpec::bias("temporal.ln.beta", d));

    for v in 0..d {
        specs.push(ParamSpec::weight(format!("variate.{v}.weight"), t, h));
        specs.push(ParamSpec::bias(format!("variate.{v}.bias"), h));
    }
    if !cfg.switches.use_variate_embedding {
        specs.push(ParamSpec::weight("token.weight", d, h));
        specs.push(ParamSpec::bias("token.bias", h));
    }

    specs.push(ParamSpec::weight("time.weight", t, h));
    specs.push(ParamSpec::bias("time.bias", h));
    specs.push(ParamSpec::weight("history.weight", cfg.history_len, h));
    specs.push(ParamSpec::bias("history.bias", h));

    let layer = super::StandardEncoderLayer::from_config(cfg);
    for l in 0..cfg.encoder_layers {
        specs.extend(super::Encoder::param_specs(&layer, &format!("encoder.{l}")));
    }

    specs.push(ParamSpec::weight("head.w1", h, h));
    specs.push(ParamSpec::bias("head.b1", h));
    specs.push(ParamSpec::weight("head.w2", h, 1));
    specs.push(ParamSpec::bias("head.b2", 1));
    specs
}
