//! MSE loss, Adam, and the seeded mini-batch training loop.

mod config;
mod optimizer;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub use config::TrainConfig;
pub use optimizer::{optimizer_step, AdamConfig, AdamState};

use crate::data::{prepare, split_by_battery, tail_holdout, CycleSet, NormalizationStats, PaddedCycle};
use crate::error::{Error, Result};
use crate::evaluation::rmse;
use crate::model::{init_params, predict_with, sample_gradient, Checkpoint, CheckpointMeta, Mode, ModelParams};
use crate::numerics::{finite_difference_gradient, max_relative_error, streams, GradCheckReport, ParamSet, RngStream};

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "mse_loss needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the mini-batch MSE losses.
    pub train_loss: f64,
    pub val_rmse: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub seed: u64,
    pub config_hash: String,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_rmse,wall_seconds,seed,config_hash\n");
        for e in &self.epochs {
            let val = e.val_rmse.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{:.3},{},{}\n",
                e.epoch, e.train_loss, val, e.wall_seconds, self.seed, self.config_hash
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub log: TrainLog,
    /// Epoch whose parameters were returned (1-based).
    pub best_epoch: usize,
    pub best_val_rmse: Option<f64>,
}

/// Side channels of a training run.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Normalization stats stored in checkpoints.
    pub stats: Option<&'a NormalizationStats>,
    /// Written atomically after every epoch with the current best parameters.
    pub checkpoint: Option<&'a Path>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

/// Model-ready train/validation/test samples and the stats they were scaled with.
#[derive(Clone, Debug)]
pub struct PreparedSplit {
    pub stats: NormalizationStats,
    pub train: Vec<PaddedCycle>,
    pub val: Vec<PaddedCycle>,
    pub test: Vec<PaddedCycle>,
}

/// Split by battery, fit normalization on the training batteries, pad, and
/// hold out the tail of each training battery for validation.
pub fn prepare_split(set: &CycleSet, config: &TrainConfig) -> Result<PreparedSplit> {
    let (train_set, test_set) = split_by_battery(set, &config.train_batteries, &config.test_batteries)?;
    let stats = NormalizationStats::fit(&train_set)?;
    let train_all = prepare(&train_set, &stats, config.pad_len, config.history_len)?;
    let test = prepare(&test_set, &stats, config.pad_len, config.history_len)?;
    let (train, val) = tail_holdout(train_all, config.val_fraction);
    Ok(PreparedSplit {
        stats,
        train,
        val,
        test,
    })
}

/// Loss and summed gradient of one mini-batch, each sample weighted `1/len`.
///
/// Samples run in parallel with their own dropout sub-streams; results are
/// reduced in batch order so the sum is reproducible.
pub fn batch_gradient(
    model: &ModelParams,
    batch: &[&PaddedCycle],
    mode: Mode,
    dropout_root: Option<&RngStream>,
) -> Result<(f64, ParamSet)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let parts: Vec<_> = batch
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let mut rng = dropout_root.map(|r| r.substream(i as u64));
            sample_gradient(model, sample, weight, mode, rng.as_mut())
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grads = model.params.zeros_like();
    for part in &parts {
        loss += part.loss;
        grads.accumulate(&part.grads)?;
    }
    Ok((loss, grads))
}

/// Compare the reverse-mode gradient of the batch MSE (evaluation mode, so
/// no dropout) against central finite differences with step `eps`.
pub fn gradient_check(model: &ModelParams, batch: &[PaddedCycle], eps: f64) -> Result<GradCheckReport> {
    let refs: Vec<&PaddedCycle> = batch.iter().collect();
    let (_, analytic) = batch_gradient(model, &refs, Mode::Eval, None)?;
    let cfg = &model.config;
    let loss = |params: &ParamSet| -> f64 {
        let mut total = 0.0;
        for s in batch {
            match predict_with(cfg, params, s, &cfg.switches, Mode::Eval, None) {
                Ok((y, _)) => total += (y - s.soh) * (y - s.soh),
                Err(_) => return f64::NAN,
            }
        }
        total / batch.len() as f64
    };
    let numeric = finite_difference_gradient(loss, &model.params, eps);
    Ok(max_relative_error(&analytic, &numeric)?)
}

/// Evaluation-mode predictions with ground-truth history, in input order.
pub fn predict_all(model: &ModelParams, samples: &[PaddedCycle]) -> Result<Vec<f64>> {
    samples.par_iter().map(|s| model.predict(s)).collect()
}

pub fn train(
    train_set: &[PaddedCycle],
    val_set: &[PaddedCycle],
    config: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let model = init_params(&config.model_config(), config.seed)?;
    train_from(model, train_set, val_set, config, opts)
}

/// Train starting from given parameters.
pub fn train_from(
    mut model: ModelParams,
    train_set: &[PaddedCycle],
    val_set: &[PaddedCycle],
    config: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let adam = AdamConfig {
        lr: config.learning_rate,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.adam_eps,
    };
    let mut state = AdamState::new(&model.params);
    let shuffle_root = RngStream::new(config.seed, streams::SHUFFLE);
    let dropout_root = RngStream::new(config.seed, streams::DROPOUT);
    let config_hash = config.config_hash();

    let mut log = TrainLog {
        seed: config.seed,
        config_hash: config_hash.clone(),
        epochs: Vec::with_capacity(config.epochs),
    };
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val: Option<f64> = None;
    let targets: Vec<f64> = val_set.iter().map(|s| s.soh).collect();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        shuffle_root.substream(epoch as u64).shuffle(&mut order);
        let epoch_rng = dropout_root.substream(epoch as u64);

        let mut weighted_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&PaddedCycle> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch_rng = epoch_rng.substream(b as u64);
            let (loss, mut grads) = batch_gradient(&model, &batch, Mode::Train, Some(&batch_rng))?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if config.grad_clip > 0.0 {
                let norm = grads.global_norm();
                if norm > config.grad_clip {
                    grads.scale(config.grad_clip / norm);
                }
            }
            optimizer_step(&mut model.params, &grads, &mut state, &adam)?;
            weighted_loss += loss * batch.len() as f64;
        }
        let train_loss = weighted_loss / train_set.len() as f64;

        let val_rmse = if val_set.is_empty() {
            None
        } else {
            Some(rmse(&predict_all(&model, val_set)?, &targets)?)
        };
        let improved = match (val_rmse, best_val) {
            (None, _) => true,
            (Some(v), None) => v.is_finite(),
            (Some(v), Some(b)) => v < b,
        };
        if improved {
            best = model.clone();
            best_epoch = epoch;
            best_val = val_rmse;
        }

        let record = EpochRecord {
            epoch,
            train_loss,
            val_rmse,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        if opts.verbose {
            let val = val_rmse.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
            eprintln!(
                "epoch {epoch:>4}/{}  train_mse {train_loss:.3e}  val_rmse {val}  {:.1}s",
                config.epochs, record.wall_seconds
            );
        }
        log.epochs.push(record);

        if let Some(path) = opts.checkpoint {
            let stats = opts
                .stats
                .ok_or_else(|| Error::Contract("checkpointing needs normalization stats".into()))?;
            Checkpoint {
                model: best.clone(),
                stats: stats.clone(),
                train_config: config.clone(),
                meta: CheckpointMeta {
                    epoch: best_epoch,
                    epochs_completed: epoch,
                    best_val_rmse: best_val,
                    config_hash: config_hash.clone(),
                },
            }
            .save(path)?;
        }
    }

    Ok(TrainOutcome {
        model: best,
        log,
        best_epoch,
        best_val_rmse: best_val,
    })
}

#[cfg(test)]
mod tests;
