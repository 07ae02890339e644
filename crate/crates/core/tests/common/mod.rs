//! Shared fixtures and explicit-loop reference implementations.
#![allow(dead_code)]
// references stay as plain index loops so they read like the math
#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

use tidsit::data::{generate_synthetic_fleet, prepare, Cycle, NormalizationStats, PaddedCycle};
use tidsit::model::ModelConfig;
use tidsit::numerics::{ParamSet, RngStream, Tensor};

pub const EPS_LN: f64 = 1e-5;

/// T=16, H=8, p=4, d=3, two encoder heads, no dropout.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        pad_len: 16,
        hidden: 8,
        encoder_heads: 2,
        ffn_dim: 32,
        history_len: 4,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

pub fn fleet(batteries: usize, cycles: usize, t_min: usize, t_max: usize, seed: u64) -> tidsit::data::CycleSet {
    generate_synthetic_fleet(batteries, cycles, t_min, t_max, seed).unwrap()
}

pub fn prepared(set: &tidsit::data::CycleSet, pad_len: usize, history_len: usize) -> Vec<PaddedCycle> {
    let stats = NormalizationStats::fit(set).unwrap();
    prepare(set, &stats, pad_len, history_len).unwrap()
}

/// Random cycle of `len` samples with jittered timestamps.
pub fn random_cycle(rng: &mut RngStream, len: usize, index: u32) -> Cycle {
    let mut t = 0.0;
    let mut ts = Vec::with_capacity(len);
    let mut rs = Vec::with_capacity(len);
    for _ in 0..len {
        ts.push(t);
        t += rng.uniform_range(0.2, 30.0);
        rs.push([
            rng.uniform_range(2.5, 4.2),
            rng.uniform_range(-2.2, -1.8),
            rng.uniform_range(22.0, 40.0),
        ]);
    }
    Cycle::new("R", index, ts, rs, rng.uniform_range(1.3, 2.1)).unwrap()
}

pub fn random_tensor(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols).map(|_| rng.uniform_range(-scale, scale)).collect(),
    )
    .unwrap()
}

fn at(t: &Tensor, r: usize, c: usize) -> f64 {
    t.data()[r * t.shape()[1] + c]
}

fn vec_at(t: &Tensor, i: usize) -> f64 {
    t.data()[i]
}

/// Explicit-loop multi-head attention. Returns per-head weights and the
/// output after `W_O`.
pub fn naive_attention(
    x: &Tensor,
    mask: &[bool],
    w_q: &Tensor,
    w_k: &Tensor,
    w_v: &Tensor,
    w_o: &Tensor,
    heads: usize,
    head_dim: usize,
) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let n = x.shape()[0];
    let width = x.shape()[1];
    let proj = |w: &Tensor| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..w.shape()[1])
                    .map(|j| (0..width).map(|k| at(x, i, k) * at(w, k, j)).sum())
                    .collect()
            })
            .collect()
    };
    let (q, k, v) = (proj(w_q), proj(w_k), proj(w_v));
    let mut weights = Vec::with_capacity(heads);
    let mut concat = vec![vec![0.0; heads * head_dim]; n];
    for h in 0..heads {
        let off = h * head_dim;
        let mut wh = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut scores = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                if mask[j] {
                    let mut s = 0.0;
                    for c in 0..head_dim {
                        s += q[i][off + c] * k[j][off + c];
                    }
                    scores[j] = s / (head_dim as f64).sqrt();
                }
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..n {
                if mask[j] {
                    wh[i][j] = (scores[j] - max).exp();
                    z += wh[i][j];
                }
            }
            for j in 0..n {
                wh[i][j] /= z;
            }
            for c in 0..head_dim {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += wh[i][j] * v[j][off + c];
                }
                concat[i][off + c] = acc;
            }
        }
        weights.push(wh);
    }
    let out = (0..n)
        .map(|i| {
            (0..width)
                .map(|c| (0..heads * head_dim).map(|k| concat[i][k] * at(w_o, k, c)).sum())
                .collect()
        })
        .collect();
    (weights, out)
}

pub fn naive_layer_norm(x: &[Vec<f64>], gamma: &Tensor, beta: &Tensor) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + EPS_LN).sqrt();
            row.iter()
                .enumerate()
                .map(|(c, v)| (v - mean) * inv * vec_at(gamma, c) + vec_at(beta, c))
                .collect()
        })
        .collect()
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|r| t.row_slice(r).to_vec()).collect()
}

fn add_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

/// Explicit-loop temporal attention block: weights, pre-residual output,
/// and `LN(X + attn)`.
pub fn naive_temporal(
    params: &ParamSet,
    cfg: &ModelConfig,
    x: &Tensor,
    mask: &[bool],
) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let p = |s: &str| params.get(&format!("temporal.{s}")).unwrap();
    let (w, pre) = naive_attention(
        x,
        mask,
        p("w_q"),
        p("w_k"),
        p("w_v"),
        p("w_o"),
        cfg.temporal_heads,
        cfg.temporal_head_dim,
    );
    let out = naive_layer_norm(&add_rows(&rows_of(x), &pre), p("ln.gamma"), p("ln.beta"));
    (w, pre, out)
}

/// Explicit-loop post-norm encoder layer with all tokens attendable.
pub fn naive_encoder_layer(params: &ParamSet, cfg: &ModelConfig, layer: usize, x: &Tensor) -> Vec<Vec<f64>> {
    let p = |s: &str| params.get(&format!("encoder.{layer}.{s}")).unwrap();
    let n = x.shape()[0];
    let h = cfg.hidden;
    let mask = vec![true; n];
    let (_, attn) = naive_attention(
        x,
        &mask,
        p("attn.w_q"),
        p("attn.w_k"),
        p("attn.w_v"),
        p("attn.w_o"),
        cfg.encoder_heads,
        cfg.encoder_head_dim(),
    );
    let x1 = naive_layer_norm(&add_rows(&rows_of(x), &attn), p("ln1.gamma"), p("ln1.beta"));
    let (w1, b1, w2, b2) = (p("ffn.w1"), p("ffn.b1"), p("ffn.w2"), p("ffn.b2"));
    let f: Vec<Vec<f64>> = x1
        .iter()
        .map(|row| {
            let hidden: Vec<f64> = (0..cfg.ffn_dim)
                .map(|j| {
                    let s: f64 = (0..h).map(|k| row[k] * at(w1, k, j)).sum::<f64>() + vec_at(b1, j);
                    s.max(0.0)
                })
                .collect();
            (0..h)
                .map(|c| (0..cfg.ffn_dim).map(|k| hidden[k] * at(w2, k, c)).sum::<f64>() + vec_at(b2, c))
                .collect()
        })
        .collect();
    naive_layer_norm(&add_rows(&x1, &f), p("ln2.gamma"), p("ln2.beta"))
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &Tensor) -> f64 {
    a.iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, v)| (v - at(b, r, c)).abs()))
        .fold(0.0, f64::max)
}
