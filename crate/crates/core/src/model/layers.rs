//! Forward stages recorded on a [`Graph`].

use super::{Graph, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{ops::LAYER_NORM_EPS, Tensor, Var};

pub struct AttentionVars {
    /// Attention output after the `W_O` projection, before any residual.
    pub output: Var,
    /// One `n×n` weight matrix per head.
    pub weights: Vec<Var>,
}

/// Multi-head scaled dot-product self-attention with a key-side mask.
///
/// Parameters live at `{prefix}.w_q`, `w_k`, `w_v` (`width × heads·head_dim`)
/// and `{prefix}.w_o` (`heads·head_dim × width`).
pub fn multi_head_attention(
    g: &mut Graph,
    prefix: &str,
    x: Var,
    heads: usize,
    head_dim: usize,
    key_mask: &[bool],
) -> Result<AttentionVars> {
    let w_q = g.param(&format!("{prefix}.w_q"))?;
    let w_k = g.param(&format!("{prefix}.w_k"))?;
    let w_v = g.param(&format!("{prefix}.w_v"))?;
    let w_o = g.param(&format!("{prefix}.w_o"))?;
    let q = g.tape.matmul(x, w_q)?;
    let k = g.tape.matmul(x, w_k)?;
    let v = g.tape.matmul(x, w_v)?;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let mut outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for head in 0..heads {
        let start = head * head_dim;
        let qh = g.tape.slice_cols(q, start, head_dim)?;
        let kh = g.tape.slice_cols(k, start, head_dim)?;
        let vh = g.tape.slice_cols(v, start, head_dim)?;
        let scores = g.tape.matmul_nt(qh, kh)?;
        let scores = g.tape.scale(scores, scale);
        let w = g.tape.softmax_masked(scores, key_mask)?;
        outputs.push(g.tape.matmul(w, vh)?);
        weights.push(w);
    }
    let concat = if outputs.len() == 1 {
        outputs[0]
    } else {
        g.tape.concat_cols(&outputs)?
    };
    let output = g.tape.matmul(concat, w_o)?;
    Ok(AttentionVars { output, weights })
}

pub fn layer_norm(g: &mut Graph, prefix: &str, x: Var) -> Result<Var> {
    let gamma = g.param(&format!("{prefix}.gamma"))?;
    let beta = g.param(&format!("{prefix}.beta"))?;
    Ok(g.tape.layer_norm(x, gamma, beta, LAYER_NORM_EPS)?)
}

pub struct TemporalVars {
    pub weights: Vec<Var>,
    pub pre_residual: Var,
    pub output: Var,
}

/// `LayerNorm(X + Dropout(MHA(X)))` over time steps in feature space.
pub fn temporal_block(g: &mut Graph, cfg: &ModelConfig, x: Var, mask: &[bool]) -> Result<TemporalVars> {
    let attn = multi_head_attention(g, "temporal", x, cfg.temporal_heads, cfg.temporal_head_dim, mask)?;
    let dropped = g.dropout(attn.output)?;
    let residual = g.tape.add(x, dropped)?;
    let output = layer_norm(g, "temporal.ln", residual)?;
    Ok(TemporalVars {
        weights: attn.weights,
        pre_residual: attn.output,
        output,
    })
}

/// Project each variable's full length-`T` series with its own weights,
/// stacking the results into `d×H`.
pub fn variate_block(g: &mut Graph, z: Var) -> Result<Var> {
    let d = g.tape.value(z).cols();
    let mut rows = Vec::with_capacity(d);
    for v in 0..d {
        let column = g.tape.slice_cols(z, v, 1)?;
        let series = g.tape.transpose(column)?;
        rows.push(g.affine(series, &format!("variate.{v}.weight"), &format!("variate.{v}.bias"))?);
    }
    Ok(g.tape.concat_rows(&rows)?)
}

/// Per-timestep tokens `T×H` used when the variate embedding is ablated.
pub fn token_block(g: &mut Graph, z: Var) -> Result<Var> {
    Ok(g.affine(z, "token.weight", "token.bias")?)
}

/// `tau·W_time + b_time`, a `1×H` row.
pub fn time_block(g: &mut Graph, tau: &[f64]) -> Result<Var> {
    let tau = g.tape.leaf(Tensor::row(tau.to_vec()));
    Ok(g.affine(tau, "time.weight", "time.bias")?)
}

/// `history·W_hist + b_hist`, a `1×H` row.
pub fn history_block(g: &mut Graph, history: &[f64]) -> Result<Var> {
    let h = g.tape.leaf(Tensor::row(history.to_vec()));
    Ok(g.affine(h, "history.weight", "history.bias")?)
}

fn single_row_of_width(stage: &'static str, row: &Tensor, width: usize) -> Result<()> {
    if row.shape() != [1, width] {
        return Err(Error::ShapeChain {
            stage,
            expected: vec![1, width],
            actual: row.shape().to_vec(),
        });
    }
    Ok(())
}

/// Broadcast-add the time embedding to every token row.
pub fn fuse(g: &mut Graph, tokens: Var, e_time: Var) -> Result<Var> {
    single_row_of_width("fuse", g.tape.value(e_time), g.tape.value(tokens).cols())?;
    Ok(g.tape.add_row(tokens, e_time)?)
}

/// Append the history embedding as the final token.
pub fn assemble(g: &mut Graph, tokens: Var, e_hist: Var) -> Result<Var> {
    single_row_of_width("assemble_input", g.tape.value(e_hist), g.tape.value(tokens).cols())?;
    Ok(g.tape.concat_rows(&[tokens, e_hist])?)
}

/// Mean-pool the valid tokens, then `relu(·W1 + b1)·W2 + b2`, giving `1×1`.
pub fn head(g: &mut Graph, tokens: Var, mask: &[bool]) -> Result<Var> {
    let pooled = g.tape.mean_rows(tokens, Some(mask))?;
    let hidden = g.affine(pooled, "head.w1", "head.b1")?;
    let hidden = g.tape.relu(hidden);
    Ok(g.affine(hidden, "head.w2", "head.b2")?)
}
