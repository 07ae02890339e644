use super::config::{ModelConfig, ParamSpec};
use super::layers::{layer_norm, multi_head_attention};
use super::Graph;
use crate::error::Result;
use crate::numerics::Var;

/// A token-mixing layer mapping `n×H` to `n×H`.
///
/// Only [`StandardEncoderLayer`] ships; alternative attention variants plug in
/// by implementing this trait.
pub trait Encoder: Send + Sync {
    fn param_specs(&self, prefix: &str) -> Vec<ParamSpec>;

    /// `mask` flags which tokens may be attended to.
    fn forward(&self, g: &mut Graph, prefix: &str, x: Var, mask: &[bool]) -> Result<Var>;
}

/// Post-norm layer: `LN(x + Drop(MHSA(x)))` then `LN(x + Drop(FFN(x)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardEncoderLayer {
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
}

impl StandardEncoderLayer {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            hidden: cfg.hidden,
            heads: cfg.encoder_heads,
            head_dim: cfg.encoder_head_dim(),
            ffn_dim: cfg.ffn_dim,
        }
    }
}

impl Encoder for StandardEncoderLayer {
    fn param_specs(&self, prefix: &str) -> Vec<ParamSpec> {
        let (h, aw, f) = (self.hidden, self.heads * self.head_dim, self.ffn_dim);
        vec![
            ParamSpec::weight(format!("{prefix}.attn.w_q"), h, aw),
            ParamSpec::weight(format!("{prefix}.attn.w_k"), h, aw),
            ParamSpec::weight(format!("{prefix}.attn.w_v"), h, aw),
            ParamSpec::weight(format!("{prefix}.attn.w_o"), aw, h),
            ParamSpec::gamma(format!("{prefix}.ln1.gamma"), h),
            ParamSpec::bias(format!("{prefix}.ln1.beta"), h),
            ParamSpec::weight(format!("{prefix}.ffn.w1"), h, f),
            ParamSpec::bias(format!("{prefix}.ffn.b1"), f),
            ParamSpec::weight(format!("{prefix}.ffn.w2"), f, h),
            ParamSpec::bias(format!("{prefix}.ffn.b2"), h),
            ParamSpec::gamma(format!("{prefix}.ln2.gamma"), h),
            ParamSpec::bias(format!("{prefix}.ln2.beta"), h),
        ]
    }

    fn forward(&self, g: &mut Graph, prefix: &str, x: Var, mask: &[bool]) -> Result<Var> {
        let attn = multi_head_attention(g, &format!("{prefix}.attn"), x, self.heads, self.head_dim, mask)?;
        let attn = g.dropout(attn.output)?;
        let x1 = g.tape.add(x, attn)?;
        let x1 = layer_norm(g, &format!("{prefix}.ln1"), x1)?;

        let f = g.affine(x1, &format!("{prefix}.ffn.w1"), &format!("{prefix}.ffn.b1"))?;
        let f = g.tape.relu(f);
        let f = g.affine(f, &format!("{prefix}.ffn.w2"), &format!("{prefix}.ffn.b2"))?;
        let f = g.dropout(f)?;
        let x2 = g.tape.add(x1, f)?;
        layer_norm(g, &format!("{prefix}.ln2"), x2)
    }
}
