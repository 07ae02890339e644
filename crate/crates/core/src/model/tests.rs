use super::*;
use crate::data::{generate_synthetic, prepare, NormalizationStats};
use crate::numerics::ops;

fn toy_config() -> ModelConfig {
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

fn toy_samples(cfg: &ModelConfig, n: usize) -> Vec<PaddedCycle> {
    let set = generate_synthetic(n, 4, cfg.pad_len, 3).unwrap();
    let stats = NormalizationStats::fit(&set).unwrap();
    prepare(&set, &stats, cfg.pad_len, cfg.history_len).unwrap()
}

fn t(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

fn params(entries: Vec<(&str, Tensor)>) -> ParamSet {
    entries.into_iter().map(|(p, v)| (p.to_string(), v)).collect()
}

#[test]
fn init_is_deterministic_and_bounded() {
    let cfg = toy_config();
    let a = init_params(&cfg, 11).unwrap();
    assert_eq!(a, init_params(&cfg, 11).unwrap());
    assert_ne!(a, init_params(&cfg, 12).unwrap());
    let specs = param_specs(&cfg);
    assert_eq!(specs.len(), a.params.len());
    for s in specs {
        let v = a.params.get(&s.path).unwrap();
        assert_eq!(v.shape(), s.shape.as_slice());
        match s.init {
            ParamInit::Zeros => assert!(v.data().iter().all(|&x| x == 0.0), "{}", s.path),
            ParamInit::Ones => assert!(v.data().iter().all(|&x| x == 1.0)),
            ParamInit::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                assert!(v.data().iter().all(|x| x.abs() <= bound), "{}", s.path);
                assert!(v.data().iter().any(|&x| x != 0.0));
            }
        }
    }
}

#[test]
fn default_encoder_projects_to_48_and_back() {
    let m = init_params(&ModelConfig::default(), 0).unwrap();
    assert_eq!(m.params.get("encoder.0.attn.w_q").unwrap().shape(), &[42, 48]);
    assert_eq!(m.params.get("encoder.0.attn.w_o").unwrap().shape(), &[48, 42]);
    assert_eq!(m.params.get("encoder.0.ffn.w1").unwrap().shape(), &[42, 168]);
    assert_eq!(m.params.get("variate.2.weight").unwrap().shape(), &[371, 42]);
    assert_eq!(m.params.get("temporal.w_q").unwrap().shape(), &[3, 3]);
}

#[test]
fn variate_embedding_affine_collapse() {
    let p = params(vec![
        ("variate.0.weight", Tensor::zeros(&[4, 3])),
        ("variate.0.bias", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()),
        ("variate.1.weight", Tensor::zeros(&[4, 3])),
        ("variate.1.bias", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()),
    ]);
    let z = Tensor::new(vec![4, 2], (0..8).map(f64::from).collect()).unwrap();
    let out = variate_embedding(&p, &z).unwrap();
    assert_eq!(out.shape(), &[2, 3]);
    for r in 0..2 {
        assert_eq!(out.row_slice(r), &[1.0, -2.0, 0.5]);
    }
}

#[test]
fn variate_embedding_uses_per_variable_weights() {
    let w0 = t(&[
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![1.0, 1.0, 1.0],
    ]);
    let p = params(vec![
        ("variate.0.weight", w0),
        ("variate.0.bias", Tensor::new(vec![3], vec![0.5, 0.0, 0.0]).unwrap()),
        ("variate.1.weight", Tensor::full(&[4, 3], 0.5)),
        ("variate.1.bias", Tensor::new(vec![3], vec![0.0, 0.0, -1.0]).unwrap()),
    ]);
    // column 0 = [1,3,5,7], column 1 = [2,4,6,8]
    let z = t(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0], vec![7.0, 8.0]]);
    let out = variate_embedding(&p, &z).unwrap();
    assert_eq!(out, t(&[vec![8.5, 10.0, 12.0], vec![10.0, 10.0, 9.0]]));

    let same = t(&[vec![1.0, 1.0], vec![3.0, 3.0], vec![5.0, 5.0], vec![7.0, 7.0]]);
    let out = variate_embedding(&p, &same).unwrap();
    assert_ne!(out.row_slice(0), out.row_slice(1));
}

#[test]
fn time_embedding_examples() {
    let w = t(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
    let b = Tensor::new(vec![2], vec![0.1, 0.2]).unwrap();
    let p = params(vec![("time.weight", w.clone()), ("time.bias", b.clone())]);
    let out = time_embedding(&p, &[0.0, 0.5, 1.0]).unwrap();
    assert!(out.max_abs_diff(&t(&[vec![6.6, 8.2]])) < 1e-12);

    let p0 = params(vec![("time.weight", Tensor::zeros(&[3, 2])), ("time.bias", b)]);
    assert_eq!(time_embedding(&p0, &[0.3, -1.0, 0.9]).unwrap().data(), &[0.1, 0.2]);

    let pz = params(vec![("time.weight", w), ("time.bias", Tensor::zeros(&[2]))]);
    assert_eq!(time_embedding(&pz, &[0.0; 3]).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn history_embedding_examples() {
    let w = t(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    let p = params(vec![
        ("history.weight", w),
        ("history.bias", Tensor::new(vec![2], vec![0.5, 0.5]).unwrap()),
    ]);
    // ones sum the columns: [4, 6] + bias
    assert_eq!(history_embedding(&p, &[1.0, 1.0]).unwrap().data(), &[4.5, 6.5]);

    let p = params(vec![
        ("history.weight", t(&[vec![1.0, 0.0], vec![2.0, 1.0]])),
        ("history.bias", Tensor::new(vec![2], vec![0.0, 1.0]).unwrap()),
    ]);
    let out = history_embedding(&p, &[0.9, 0.8]).unwrap();
    assert!(out.max_abs_diff(&t(&[vec![2.5, 1.8]])) < 1e-12);
    assert!(history_embedding(&p, &[0.9, 0.8, 0.7]).is_err());

    let p = params(vec![
        ("history.weight", Tensor::zeros(&[2, 2])),
        ("history.bias", Tensor::new(vec![2], vec![0.1, 0.2]).unwrap()),
    ]);
    assert_eq!(history_embedding(&p, &[0.9, 0.8]).unwrap().data(), &[0.1, 0.2]);
}

#[test]
fn fuse_and_assemble_examples() {
    let z = t(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
    let e = t(&[vec![0.5, -1.0]]);
    assert_eq!(fuse(&z, &Tensor::zeros(&[1, 2])).unwrap(), z);
    assert_eq!(fuse(&Tensor::zeros(&[3, 2]), &e).unwrap(), t(&vec![vec![0.5, -1.0]; 3]));
    let fused = fuse(&z, &e).unwrap();
    for r in 0..3 {
        for c in 0..2 {
            assert_eq!(fused.get(r, c), z.get(r, c) + e.get(0, c));
        }
    }
    assert!(fuse(&z, &t(&[vec![1.0, 2.0, 3.0]])).is_err());

    let big = assemble_input(&Tensor::zeros(&[3, 42]), &Tensor::ones(&[1, 42])).unwrap();
    assert_eq!(big.shape(), &[4, 42]);
    let out = assemble_input(&z, &e).unwrap();
    assert_eq!(&out.data()[..6], z.data());
    assert_eq!(out.row_slice(3), e.data());
    assert_eq!(assemble_input(&t(&[vec![1.0, 2.0]]), &e).unwrap().shape(), &[2, 2]);
    assert!(assemble_input(&z, &t(&[vec![1.0]])).is_err());
}

#[test]
fn single_valid_key_copies_its_value_row() {
    let cfg = toy_config();
    let m = init_params(&cfg, 5).unwrap();
    let x = t(&[vec![0.2, 0.7, 0.4], vec![-1.0; 3], vec![-1.0; 3], vec![-1.0; 3]]);
    let cfg4 = ModelConfig { pad_len: 4, ..cfg };
    let m4 = ModelParams {
        config: cfg4,
        params: m.params,
    };
    let trace = temporal_attention(&m4, &x, &[true, false, false, false]).unwrap();
    let wv = m4.params.get("temporal.w_v").unwrap();
    let wo = m4.params.get("temporal.w_o").unwrap();
    let x0 = t(&[x.row_slice(0).to_vec()]);
    let expected = ops::matmul(&ops::matmul(&x0, wv).unwrap(), wo).unwrap();
    for r in 0..4 {
        assert_eq!(trace.weights[0].row_slice(r), &[1.0, 0.0, 0.0, 0.0]);
        assert!(trace
            .pre_residual
            .row_slice(r)
            .iter()
            .zip(expected.data())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }
    assert!(temporal_attention(&m4, &x, &[false; 4]).is_err());
}

#[test]
fn encoder_is_deterministic_and_shape_preserving() {
    let m = init_params(&ModelConfig::default(), 2).unwrap();
    let z = Tensor::new(vec![4, 42], (0..168).map(|k| (k as f64 * 0.37).sin()).collect()).unwrap();
    let a = encoder_forward(&m, &z, Mode::Eval, None).unwrap();
    let b = encoder_forward(&m, &z, Mode::Eval, None).unwrap();
    assert_eq!(a.shape(), &[4, 42]);
    assert_eq!(a, b);
    let mut rng = RngStream::new(1, streams::DROPOUT);
    let c = encoder_forward(&m, &z, Mode::Train, Some(&mut rng)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn one_token_encoder_reduces_to_value_chain() {
    let cfg = toy_config();
    let m = init_params(&cfg, 9).unwrap();
    let x = Tensor::row((0..8).map(|k| 0.1 * k as f64 - 0.3).collect());
    let out = encoder_forward(&m, &x, Mode::Eval, None).unwrap();

    let p = |s: &str| m.params.get(&format!("encoder.0.{s}")).unwrap();
    let attn = ops::matmul(&ops::matmul(&x, p("attn.w_v")).unwrap(), p("attn.w_o")).unwrap();
    let x1 = ops::layer_norm(
        &ops::add(&x, &attn).unwrap(),
        p("ln1.gamma"),
        p("ln1.beta"),
        ops::LAYER_NORM_EPS,
    )
    .unwrap();
    let mut f = ops::matmul(&x1, p("ffn.w1")).unwrap();
    f = ops::add(&f, &p("ffn.b1").reshape(vec![1, 32]).unwrap()).unwrap();
    f = ops::relu(&f);
    f = ops::matmul(&f, p("ffn.w2")).unwrap();
    f = ops::add(&f, &p("ffn.b2").reshape(vec![1, 8]).unwrap()).unwrap();
    let x2 = ops::layer_norm(
        &ops::add(&x1, &f).unwrap(),
        p("ln2.gamma"),
        p("ln2.beta"),
        ops::LAYER_NORM_EPS,
    )
    .unwrap();
    assert!(out.max_abs_diff(&x2) < 1e-12);
}

#[test]
fn eval_prediction_is_bitwise_repeatable_and_finite() {
    let cfg = toy_config();
    let m = init_params(&cfg, 1).unwrap();
    for s in toy_samples(&cfg, 6) {
        let a = m.predict(&s).unwrap();
        assert_eq!(a.to_bits(), m.predict(&s).unwrap().to_bits());
        assert!(a.is_finite());
    }
}

#[test]
fn shape_chain_is_recorded() {
    let cfg = toy_config();
    let m = init_params(&cfg, 1).unwrap();
    let s = &toy_samples(&cfg, 2)[0];
    let (_, stages) = predict_with(&cfg, &m.params, s, &cfg.switches, Mode::Eval, None).unwrap();
    let got: Vec<(&str, Vec<usize>)> = stages.iter().map(|s| (s.stage, s.shape.clone())).collect();
    assert_eq!(
        got,
        vec![
            ("input", vec![16, 3]),
            ("temporal_attention", vec![16, 3]),
            ("variate_embedding", vec![3, 8]),
            ("time_embedding", vec![1, 8]),
            ("fuse", vec![3, 8]),
            ("history_embedding", vec![1, 8]),
            ("assemble_input", vec![4, 8]),
            ("encoder", vec![4, 8]),
            ("head", vec![1, 1]),
        ]
    );
}

#[test]
fn mismatched_inputs_break_the_chain() {
    let cfg = toy_config();
    let m = init_params(&cfg, 1).unwrap();
    let mut s = toy_samples(&cfg, 2)[0].clone();
    s.history.push(1.0);
    assert!(matches!(m.predict(&s), Err(Error::ShapeChain { stage: "history", .. })));
}

#[test]
fn every_ablation_variant_runs() {
    let cfg = toy_config();
    let s = &toy_samples(&cfg, 3)[2];
    for (name, switches) in AblationSwitches::ablation_variants() {
        let m = init_params(
            &ModelConfig {
                switches,
                ..cfg.clone()
            },
            4,
        )
        .unwrap();
        let (y, stages) = predict_with(&m.config, &m.params, s, &switches, Mode::Eval, None).unwrap();
        assert!(y.is_finite(), "{name}");
        let encoder = stages.iter().find(|st| st.stage == "encoder").unwrap();
        let tokens = match (switches.use_variate_embedding, switches.use_history) {
            (true, true) => 4,
            (true, false) => 3,
            (false, true) => 17,
            (false, false) => 16,
        };
        assert_eq!(encoder.shape, vec![tokens, 8], "{name}");
    }
}

#[test]
fn token_path_ignores_padded_steps_after_attention() {
    // without temporal attention the padded rows only reach masked tokens
    let cfg = ModelConfig {
        switches: AblationSwitches {
            use_variate_embedding: false,
            use_temporal_attention: false,
            use_time_embedding: false,
            use_history: true,
        },
        ..toy_config()
    };
    let m = init_params(&cfg, 4).unwrap();
    let s = toy_samples(&cfg, 3)[2].clone();
    let mut perturbed = s.clone();
    for j in s.len..cfg.pad_len {
        for c in 0..3 {
            perturbed.features.data_mut()[j * 3 + c] = 0.37 * (j + c) as f64;
        }
    }
    assert!(s.len < cfg.pad_len);
    assert_eq!(m.predict(&s).unwrap(), m.predict(&perturbed).unwrap());
}

#[test]
fn sentinel_value_is_part_of_the_function() {
    let cfg = toy_config();
    let m = init_params(&cfg, 6).unwrap();
    let s = toy_samples(&cfg, 3)[2].clone();
    assert!(s.len < cfg.pad_len);
    let mut zero_pad = s.clone();
    for j in s.len..cfg.pad_len {
        zero_pad.tau[j] = 0.0;
        for c in 0..3 {
            zero_pad.features.data_mut()[j * 3 + c] = 0.0;
        }
    }
    assert_ne!(m.predict(&s).unwrap(), m.predict(&zero_pad).unwrap());
}

#[test]
fn gradients_cover_exactly_the_enabled_paths() {
    let cfg = toy_config();
    let m = init_params(&cfg, 8).unwrap();
    let samples = toy_samples(&cfg, 4);
    let mut total = m.params.zeros_like();
    for s in &samples {
        total
            .accumulate(&sample_gradient(&m, s, 1.0, Mode::Eval, None).unwrap().grads)
            .unwrap();
    }
    for (path, g) in total.iter() {
        assert!(g.data().iter().any(|&x| x != 0.0), "dead parameter {path}");
    }

    let no_time = ModelConfig {
        switches: AblationSwitches {
            use_time_embedding: false,
            use_history: false,
            ..AblationSwitches::full()
        },
        ..cfg
    };
    let m = init_params(&no_time, 8).unwrap();
    let g = sample_gradient(&m, &samples[1], 1.0, Mode::Eval, None).unwrap().grads;
    for (path, t) in g.iter() {
        let disabled = path.starts_with("time.") || path.starts_with("history.");
        assert_eq!(t.data().iter().all(|&x| x == 0.0), disabled, "{path}");
    }
}

#[test]
fn training_mode_needs_a_stream_when_dropout_is_active() {
    let cfg = ModelConfig {
        dropout: 0.1,
        ..toy_config()
    };
    let m = init_params(&cfg, 1).unwrap();
    let s = &toy_samples(&cfg, 2)[0];
    assert!(predict_soh(&m, s, &cfg.switches, Mode::Train, None).is_err());
    let mut a = RngStream::new(3, streams::DROPOUT);
    let mut b = RngStream::new(3, streams::DROPOUT);
    let ya = predict_soh(&m, s, &cfg.switches, Mode::Train, Some(&mut a)).unwrap();
    let yb = predict_soh(&m, s, &cfg.switches, Mode::Train, Some(&mut b)).unwrap();
    assert_eq!(ya.to_bits(), yb.to_bits());
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let cfg = toy_config();
    let m = init_params(&cfg, 21).unwrap();
    let ck = Checkpoint {
        model: m.clone(),
        stats: NormalizationStats::from_bounds([2.5, -2.1, 22.0], [4.2, 0.0, 41.3]).unwrap(),
        train_config: crate::training::TrainConfig::default(),
        meta: CheckpointMeta {
            epoch: 3,
            epochs_completed: 4,
            best_val_rmse: Some(0.012_345_678_901_234_5),
            config_hash: "abc".into(),
        },
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    for s in toy_samples(&cfg, 3) {
        assert_eq!(
            m.predict(&s).unwrap().to_bits(),
            back.model.predict(&s).unwrap().to_bits()
        );
    }
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes().unwrap());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let m = init_params(&toy_config(), 1).unwrap();
    let ck = Checkpoint {
        model: m,
        stats: NormalizationStats::from_bounds([0.0; 3], [1.0; 3]).unwrap(),
        train_config: crate::training::TrainConfig::default(),
        meta: CheckpointMeta::default(),
    };
    let bytes = ck.to_bytes().unwrap();
    assert!(matches!(
        Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
        Err(Error::Checkpoint(_))
    ));
    assert!(matches!(
        Checkpoint::from_bytes(b"NOTACKPT...."),
        Err(Error::Checkpoint(_))
    ));
    let mut wrong_version = bytes.clone();
    wrong_version[8] = 9;
    assert!(Checkpoint::from_bytes(&wrong_version).is_err());
    let mut extra = bytes;
    extra.push(0);
    assert!(Checkpoint::from_bytes(&extra).is_err());
}
