//! The TIDSIT forward pass.
//!
//! Shape chain for one cycle with `d` features, pad length `T`, width `H`:
//!
//! ```text
//! X: T×d ─temporal attention─▶ T×d ─variate embedding─▶ d×H ─(+ E_time)─▶ d×H
//!        ─(concat E_hist)─▶ (d+1)×H ─encoder─▶ (d+1)×H ─mean pool, head─▶ 1×1
//! ```
//!
//! Without the variate embedding each time step becomes a token (`T×H`) and
//! padded steps are masked in the encoder and the pooling.

pub mod checkpoint;
mod config;
mod encoder;
mod graph;
pub mod layers;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::{param_specs, AblationSwitches, ModelConfig, ParamInit, ParamSpec};
pub use encoder::{Encoder, StandardEncoderLayer};
pub use graph::{Graph, Mode};

use crate::data::PaddedCycle;
use crate::error::{Error, Result};
use crate::numerics::{streams, ParamSet, RngStream, Tensor, Var};

/// Every learnable weight, addressed by path, plus the architecture that owns them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: ParamSet,
}

fn path_key(path: &str) -> u64 {
    // FNV-1a: a stable per-path substream key independent of registration order
    path.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let root = RngStream::new(seed, streams::INIT);
    let mut params = ParamSet::new();
    for spec in param_specs(config) {
        let n: usize = spec.shape.iter().product();
        let data = match spec.init {
            ParamInit::Zeros => vec![0.0; n],
            ParamInit::Ones => vec![1.0; n],
            ParamInit::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut rng = root.substream(path_key(&spec.path));
                (0..n).map(|_| rng.uniform_range(-bound, bound)).collect()
            }
        };
        params.insert(spec.path, Tensor::new(spec.shape, data)?);
    }
    Ok(ModelParams {
        config: config.clone(),
        params,
    })
}

/// Shape recorded after one pipeline stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageShape {
    pub stage: &'static str,
    pub shape: Vec<usize>,
}

pub struct ForwardVars {
    pub prediction: Var,
    pub stages: Vec<StageShape>,
}

fn check_stage(
    g: &Graph,
    stages: &mut Vec<StageShape>,
    stage: &'static str,
    v: Var,
    expected: [usize; 2],
) -> Result<()> {
    let actual = g.tape.value(v).shape().to_vec();
    if actual != expected {
        return Err(Error::ShapeChain {
            stage,
            expected: expected.to_vec(),
            actual,
        });
    }
    stages.push(StageShape { stage, shape: actual });
    Ok(())
}

fn check_input(cfg: &ModelConfig, padded: &PaddedCycle) -> Result<()> {
    let expect = |stage, expected: Vec<usize>, actual: Vec<usize>| {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::ShapeChain {
                stage,
                expected,
                actual,
            })
        }
    };
    expect(
        "input",
        vec![cfg.pad_len, cfg.features],
        padded.features.shape().to_vec(),
    )?;
    expect("mask", vec![cfg.pad_len], vec![padded.mask.len()])?;
    expect("tau", vec![cfg.pad_len], vec![padded.tau.len()])?;
    expect("history", vec![cfg.history_len], vec![padded.history.len()])
}

/// Record the full pipeline for one cycle on `g`, asserting each stage's shape.
pub fn forward(
    g: &mut Graph,
    cfg: &ModelConfig,
    padded: &PaddedCycle,
    switches: &AblationSwitches,
) -> Result<ForwardVars> {
    check_input(cfg, padded)?;
    let (t, d, h) = (cfg.pad_len, cfg.features, cfg.hidden);
    let mut stages = Vec::new();

    let x = g.tape.leaf(padded.features.clone());
    check_stage(g, &mut stages, "input", x, [t, d])?;

    let z = if switches.use_temporal_attention {
        layers::temporal_block(g, cfg, x, &padded.mask)?.output
    } else {
        x
    };
    check_stage(g, &mut stages, "temporal_attention", z, [t, d])?;

    let (mut tokens, mut token_mask) = if switches.use_variate_embedding {
        let tokens = layers::variate_block(g, z)?;
        check_stage(g, &mut stages, "variate_embedding", tokens, [d, h])?;
        (tokens, vec![true; d])
    } else {
        let tokens = layers::token_block(g, z)?;
        check_stage(g, &mut stages, "token_embedding", tokens, [t, h])?;
        (tokens, padded.mask.clone())
    };
    let n = token_mask.len();

    if switches.use_time_embedding {
        let e_time = layers::time_block(g, &padded.tau)?;
        check_stage(g, &mut stages, "time_embedding", e_time, [1, h])?;
        tokens = layers::fuse(g, tokens, e_time)?;
        check_stage(g, &mut stages, "fuse", tokens, [n, h])?;
    }

    if switches.use_history {
        let e_hist = layers::history_block(g, &padded.history)?;
        check_stage(g, &mut stages, "history_embedding", e_hist, [1, h])?;
        tokens = layers::assemble(g, tokens, e_hist)?;
        token_mask.push(true);
        check_stage(g, &mut stages, "assemble_input", tokens, [n + 1, h])?;
    }
    let n = token_mask.len();

    let layer = StandardEncoderLayer::from_config(cfg);
    for l in 0..cfg.encoder_layers {
        tokens = layer.forward(g, &format!("encoder.{l}"), tokens, &token_mask)?;
    }
    check_stage(g, &mut stages, "encoder", tokens, [n, h])?;

    let prediction = layers::head(g, tokens, &token_mask)?;
    check_stage(g, &mut stages, "head", prediction, [1, 1])?;
    Ok(ForwardVars { prediction, stages })
}

/// Predicted SoH using an explicit parameter set (the model's own, or a
/// perturbed copy for finite differences).
pub fn predict_with(
    cfg: &ModelConfig,
    params: &ParamSet,
    padded: &PaddedCycle,
    switches: &AblationSwitches,
    mode: Mode,
    rng: Option<&mut RngStream>,
) -> Result<(f64, Vec<StageShape>)> {
    let mut g = Graph::new(params, mode, cfg.dropout, rng);
    let fwd = forward(&mut g, cfg, padded, switches)?;
    let y = g.tape.value(fwd.prediction).item()?;
    if !y.is_finite() {
        return Err(Error::Contract(format!(
            "non-finite prediction for battery {} cycle {}",
            padded.battery_id, padded.cycle_index
        )));
    }
    Ok((y, fwd.stages))
}

pub fn predict_soh(
    model: &ModelParams,
    padded: &PaddedCycle,
    switches: &AblationSwitches,
    mode: Mode,
    rng: Option<&mut RngStream>,
) -> Result<f64> {
    Ok(predict_with(&model.config, &model.params, padded, switches, mode, rng)?.0)
}

impl ModelParams {
    /// Evaluation-mode prediction with the configured switches.
    pub fn predict(&self, padded: &PaddedCycle) -> Result<f64> {
        predict_soh(self, padded, &self.config.switches, Mode::Eval, None)
    }
}

pub struct SampleGradient {
    pub prediction: f64,
    pub loss: f64,
    pub grads: ParamSet,
}

/// Loss `weight·(ŷ − y)²` for one cycle and its gradient for every parameter.
pub fn sample_gradient(
    model: &ModelParams,
    padded: &PaddedCycle,
    weight: f64,
    mode: Mode,
    rng: Option<&mut RngStream>,
) -> Result<SampleGradient> {
    let cfg = &model.config;
    let mut g = Graph::new(&model.params, mode, cfg.dropout, rng);
    let fwd = forward(&mut g, cfg, padded, &cfg.switches)?;
    let target = g.tape.leaf(Tensor::from_parts(vec![1, 1], vec![padded.soh]));
    let diff = g.tape.sub(fwd.prediction, target)?;
    let sq = g.tape.square(diff);
    let loss = g.tape.scale(sq, weight);
    let loss = g.tape.sum(loss);
    let adjoints = g.tape.backward(loss)?;
    Ok(SampleGradient {
        prediction: g.tape.value(fwd.prediction).item()?,
        loss: g.tape.value(loss).item()?,
        grads: g.tape.param_gradients(&adjoints, &model.params),
    })
}

/// Per-head weights, the pre-residual attention output, and the block output.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalTrace {
    pub weights: Vec<Tensor>,
    pub pre_residual: Tensor,
    pub output: Tensor,
}

/// Evaluation-mode temporal attention on a raw `T×d` input.
pub fn temporal_attention(model: &ModelParams, x: &Tensor, mask: &[bool]) -> Result<TemporalTrace> {
    let mut g = Graph::new(&model.params, Mode::Eval, 0.0, None);
    let xv = g.tape.leaf(x.clone());
    let vars = layers::temporal_block(&mut g, &model.config, xv, mask)?;
    Ok(TemporalTrace {
        weights: vars.weights.iter().map(|&w| g.tape.value(w).clone()).collect(),
        pre_residual: g.tape.value(vars.pre_residual).clone(),
        output: g.tape.value(vars.output).clone(),
    })
}

fn eval_stage(params: &ParamSet, build: impl FnOnce(&mut Graph) -> Result<Var>) -> Result<Tensor> {
    let mut g = Graph::new(params, Mode::Eval, 0.0, None);
    let out = build(&mut g)?;
    Ok(g.tape.value(out).clone())
}

/// `T×d` to `d×H`, one projection per variable.
pub fn variate_embedding(params: &ParamSet, z: &Tensor) -> Result<Tensor> {
    eval_stage(params, |g| {
        let z = g.tape.leaf(z.clone());
        layers::variate_block(g, z)
    })
}

pub fn time_embedding(params: &ParamSet, tau: &[f64]) -> Result<Tensor> {
    eval_stage(params, |g| layers::time_block(g, tau))
}

pub fn history_embedding(params: &ParamSet, history: &[f64]) -> Result<Tensor> {
    eval_stage(params, |g| layers::history_block(g, history))
}

pub fn fuse(z_var: &Tensor, e_time: &Tensor) -> Result<Tensor> {
    eval_stage(&ParamSet::new(), |g| {
        let z = g.tape.leaf(z_var.clone());
        let e = g.tape.leaf(e_time.clone());
        layers::fuse(g, z, e)
    })
}

pub fn assemble_input(z_fused: &Tensor, e_hist: &Tensor) -> Result<Tensor> {
    eval_stage(&ParamSet::new(), |g| {
        let z = g.tape.leaf(z_fused.clone());
        let e = g.tape.leaf(e_hist.clone());
        layers::assemble(g, z, e)
    })
}

/// Run every encoder layer over `z_input` with all tokens attendable.
pub fn encoder_forward(
    model: &ModelParams,
    z_input: &Tensor,
    mode: Mode,
    rng: Option<&mut RngStream>,
) -> Result<Tensor> {
    let cfg = &model.config;
    let mut g = Graph::new(&model.params, mode, cfg.dropout, rng);
    let mask = vec![true; z_input.rows()];
    let layer = StandardEncoderLayer::from_config(cfg);
    let mut x = g.tape.leaf(z_input.clone());
    for l in 0..cfg.encoder_layers {
        x = layer.forward(&mut g, &format!("encoder.{l}"), x, &mask)?;
    }
    Ok(g.tape.value(x).clone())
}

#[cfg(test)]
mod tests;
