use super::*;
use crate::data::{generate_synthetic, prepare, tail_holdout};

fn toy_config() -> TrainConfig {
    TrainConfig {
        pad_len: 16,
        hidden: 8,
        encoder_heads: 2,
        ffn_dim: 32,
        history_len: 4,
        dropout: 0.1,
        batch_size: 4,
        epochs: 3,
        seed: 17,
        ..TrainConfig::default()
    }
}

fn samples(cfg: &TrainConfig, n: usize) -> (Vec<PaddedCycle>, NormalizationStats) {
    let set = generate_synthetic(n, 4, cfg.pad_len, 5).unwrap();
    let stats = NormalizationStats::fit(&set).unwrap();
    (prepare(&set, &stats, cfg.pad_len, cfg.history_len).unwrap(), stats)
}

#[test]
fn mse_examples() {
    assert_eq!(mse_loss(&[0.3, 0.5], &[0.3, 0.5]).unwrap(), 0.0);
    assert_eq!(mse_loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
    assert!((mse_loss(&[0.9], &[0.7]).unwrap() - 0.04).abs() < 1e-15);
    assert!(matches!(mse_loss(&[], &[]), Err(Error::Contract(_))));
    assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn batch_gradient_matches_mse_of_predictions() {
    let cfg = toy_config();
    let (s, _) = samples(&cfg, 5);
    let model = init_params(&cfg.model_config(), 1).unwrap();
    let batch: Vec<&PaddedCycle> = s.iter().collect();
    let (loss, _) = batch_gradient(&model, &batch, Mode::Eval, None).unwrap();
    let preds = predict_all(&model, &s).unwrap();
    let targets: Vec<f64> = s.iter().map(|x| x.soh).collect();
    assert!((loss - mse_loss(&preds, &targets).unwrap()).abs() < 1e-15);
}

#[test]
fn same_seed_gives_identical_logs_and_params() {
    let cfg = toy_config();
    let (s, _) = samples(&cfg, 12);
    let (tr, val) = tail_holdout(s, 0.25);
    let a = train(&tr, &val, &cfg, &TrainOptions::default()).unwrap();
    let b = train(&tr, &val, &cfg, &TrainOptions::default()).unwrap();
    let losses = |o: &TrainOutcome| o.log.epochs.iter().map(|e| e.train_loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(a.model, b.model);
    assert_eq!(a.log.epochs.len(), 3);
    assert!(a.log.epochs.iter().all(|e| e.val_rmse.is_some()));
    let c = train(&tr, &val, &TrainConfig { seed: 18, ..cfg }, &TrainOptions::default()).unwrap();
    assert_ne!(losses(&a), losses(&c));
}

#[test]
fn zero_learning_rate_keeps_initial_params() {
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..toy_config()
    };
    let (s, _) = samples(&cfg, 6);
    let out = train(&s, &[], &cfg, &TrainOptions::default()).unwrap();
    assert_eq!(out.model, init_params(&cfg.model_config(), cfg.seed).unwrap());
    assert_eq!(out.best_epoch, cfg.epochs);
    assert_eq!(out.best_val_rmse, None);
}

#[test]
fn best_validation_epoch_is_returned_and_checkpointed() {
    let cfg = TrainConfig {
        epochs: 6,
        learning_rate: 3e-3,
        ..toy_config()
    };
    let (s, stats) = samples(&cfg, 15);
    let (tr, val) = tail_holdout(s, 0.2);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let out = train(
        &tr,
        &val,
        &cfg,
        &TrainOptions {
            stats: Some(&stats),
            checkpoint: Some(&ckpt),
            verbose: false,
        },
    )
    .unwrap();
    let vals: Vec<f64> = out.log.epochs.iter().map(|e| e.val_rmse.unwrap()).collect();
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_val_rmse, Some(min));
    assert_eq!(vals[out.best_epoch - 1], min);

    let back = Checkpoint::load(&ckpt).unwrap();
    assert_eq!(back.model, out.model);
    assert_eq!(back.meta.epoch, out.best_epoch);
    assert_eq!(back.meta.epochs_completed, 6);
    assert_eq!(back.stats, stats);
    assert_eq!(back.train_config, cfg);
    let targets: Vec<f64> = val.iter().map(|v| v.soh).collect();
    assert_eq!(rmse(&predict_all(&back.model, &val).unwrap(), &targets).unwrap(), min);
}

#[test]
fn loss_falls_on_synthetic_data() {
    let cfg = TrainConfig {
        epochs: 8,
        dropout: 0.0,
        learning_rate: 3e-3,
        ..toy_config()
    };
    let (s, _) = samples(&cfg, 30);
    let out = train(&s, &[], &cfg, &TrainOptions::default()).unwrap();
    let first = out.log.epochs.first().unwrap().train_loss;
    let last = out.log.epochs.last().unwrap().train_loss;
    assert!(first > last, "{first} -> {last}");
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let cfg = toy_config();
    let (mut s, _) = samples(&cfg, 6);
    s[2].features.data_mut()[0] = f64::NAN;
    let err = train(&s, &[], &cfg, &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }), "{err}");
}

#[test]
fn train_log_csv_has_one_row_per_epoch() {
    let cfg = toy_config();
    let (s, _) = samples(&cfg, 6);
    let out = train(&s, &[], &cfg, &TrainOptions::default()).unwrap();
    let csv = out.log.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_rmse,wall_seconds,seed,config_hash");
    assert_eq!(lines.len(), 1 + cfg.epochs);
    assert!(lines[1].starts_with("1,"));
    assert!(lines[1].ends_with(&cfg.config_hash()));
}

#[test]
fn empty_training_set_is_rejected() {
    assert!(matches!(
        train(&[], &[], &toy_config(), &TrainOptions::default()),
        Err(Error::Config(_))
    ));
}

#[test]
fn gradient_check_passes_on_toy_model() {
    let cfg = TrainConfig {
        dropout: 0.0,
        pad_len: 8,
        hidden: 4,
        ffn_dim: 8,
        history_len: 2,
        ..toy_config()
    };
    let (s, _) = samples(&cfg, 2);
    let model = init_params(&cfg.model_config(), 3).unwrap();
    let report = gradient_check(&model, &s, 1e-6).unwrap();
    assert!(report.max < 1e-4, "{:?}", report.worst_path);
    assert_eq!(report.per_path.len(), model.params.len());
}
