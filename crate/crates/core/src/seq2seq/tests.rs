use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{grad_check, GradCheckReport, Matrix, ParamSet, SgdConfig};
use crate::recurrent::{LstmRegressor, WindowRegressor};
use crate::signal::{Horizon, TimeSeriesFrame};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn attention_fixture(seed: u64, hidden: usize, align: usize) -> (ParamSet, Attention) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let att = Attention::new(&mut ps, "att", hidden, hidden, align, &mut rng);
    (ps, att)
}

fn frame_from(target: Vec<f64>, channel: Vec<f64>) -> TimeSeriesFrame {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let ts = (0..target.len()).map(|i| start + Duration::hours(i as i64)).collect();
    TimeSeriesFrame::new(ts, vec!["x".into()], vec![channel], "y", target).unwrap()
}

fn small_config() -> ForecasterConfig {
    let sgd = SgdConfig {
        learning_rate: 0.1,
        batch_size: 16,
        epochs: 3,
        seed: 0,
        clip_norm: Some(5.0),
    };
    ForecasterConfig {
        encoder_hidden: vec![5, 3],
        predictor_hidden: vec![4],
        attention_size: 3,
        mlp_hidden: vec![6],
        window: 7,
        pretrain: SgdConfig {
            epochs: 2,
            ..sgd.clone()
        },
        train: sgd,
        ..ForecasterConfig::desk()
    }
}

/// Gradient check of the squared error of one window through `accumulate`.
fn check_regressor<M: WindowRegressor + Clone>(model: &M, x: &Matrix, y: f64, seed: u64) -> GradCheckReport {
    let mut work = model.clone();
    let mut params = model.params().clone();
    grad_check(&mut params, 1e-5, Some(40), seed, |ps| {
        *work.params_mut() = ps.clone();
        let loss = work.accumulate(x, y, 1.0)?;
        for (dst, src) in ps.grads_mut().iter_mut().zip(work.params().grads().iter()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(loss)
    })
    .unwrap()
}

#[test]
fn single_step_attention_returns_that_step() {
    let (ps, att) = attention_fixture(1, 4, 3);
    let h = Matrix::from_rows(&[vec![0.1, -0.2, 0.3, 0.4]]).unwrap();
    let (ctx, w) = attention_context(&att, ps.values(), &h, &[0.5, 0.5, 0.5, 0.5]).unwrap();
    assert_eq!(w, vec![1.0]);
    assert_eq!(ctx, h.row(0).to_vec());
}

#[test]
fn zero_parameters_give_uniform_weights() {
    let (mut ps, att) = attention_fixture(2, 3, 3);
    ps.values_mut().iter_mut().for_each(|m| m.fill(0.0));
    let h = Matrix::filled(6, 3, 0.7);
    let (ctx, w) = attention_context(&att, ps.values(), &h, &[1.0, 2.0, 3.0]).unwrap();
    assert!(w.iter().all(|&a| (a - 1.0 / 6.0).abs() < 1e-15));
    assert!(ctx.iter().all(|&c| (c - 0.7).abs() < 1e-12));
}

#[test]
fn attention_weights_match_scalar_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (ps, att) = attention_fixture(5, 4, 3);
    let h = random_matrix(&mut rng, 3, 4, 1.0);
    let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (ctx, w) = attention_context(&att, ps.values(), &h, &q).unwrap();

    let (wh, wq, v) = (
        &ps.values()[att.w_hidden],
        &ps.values()[att.w_query],
        &ps.values()[att.v],
    );
    let mut scores = [0.0; 3];
    for (t, s) in scores.iter_mut().enumerate() {
        for k in 0..3 {
            let mut z = 0.0;
            for j in 0..4 {
                z += wh.get(k, j) * h.get(t, j) + wq.get(k, j) * q[j];
            }
            *s += v.get(k, 0) * z.tanh();
        }
    }
    let denom: f64 = scores.iter().map(|s| s.exp()).sum();
    for t in 0..3 {
        assert!((w[t] - scores[t].exp() / denom).abs() < 1e-14);
    }
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for j in 0..4 {
        let expect: f64 = (0..3).map(|t| w[t] * h.get(t, j)).sum();
        assert!((ctx[j] - expect).abs() < 1e-14);
    }
}

#[test]
fn attention_rejects_bad_shapes() {
    let (ps, att) = attention_fixture(1, 4, 3);
    assert!(attention_context(&att, ps.values(), &Matrix::zeros(0, 4), &[0.0; 4]).is_err());
    assert!(attention_context(&att, ps.values(), &Matrix::zeros(2, 3), &[0.0; 4]).is_err());
    assert!(attention_context(&att, ps.values(), &Matrix::zeros(2, 4), &[0.0; 3]).is_err());
}

proptest! {
    #[test]
    fn attention_weights_form_a_distribution(seed in 0u64..1000, steps in 1usize..20, scale in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut ps, att) = attention_fixture(seed, 3, 4);
        for m in ps.values_mut().iter_mut() {
            m.scale(scale);
        }
        let h = random_matrix(&mut rng, steps, 3, scale);
        let q = [0.3 * scale, -scale, 0.1];
        let (_, w) = attention_context(&att, ps.values(), &h, &q).unwrap();
        prop_assert!(w.iter().all(|&a| a >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn attention_gradient_check() {
    for seed in [5, 6, 7] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let (mut ps, att) = attention_fixture(seed, 4, 3);
        let h = random_matrix(&mut rng, 5, 4, 1.0);
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w_out: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let report = grad_check(&mut ps, 1e-5, None, seed, |ps| {
            let (p, g) = ps.split_mut();
            let out = att.forward(p, &h, &q)?;
            let mut dh = Matrix::zeros(5, 4);
            let mut dq = vec![0.0; 4];
            att.backward(p, g, &h, &q, &out, &w_out, &mut dh, &mut dq);
            Ok(out.context.iter().zip(&w_out).map(|(a, b)| a * b).sum())
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn attention_input_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (ps, att) = attention_fixture(8, 3, 4);
    let h = random_matrix(&mut rng, 4, 3, 1.0);
    let q = vec![0.2, -0.4, 0.9];
    let w_out = [0.5, -1.0, 0.25];
    let loss = |h: &Matrix, q: &[f64]| {
        let out = att.forward(ps.values(), h, q).unwrap();
        out.context.iter().zip(&w_out).map(|(a, b)| a * b).sum::<f64>()
    };
    let out = att.forward(ps.values(), &h, &q).unwrap();
    let mut grads = ps.grads().clone();
    let mut dh = Matrix::zeros(4, 3);
    let mut dq = vec![0.0; 3];
    att.backward(ps.values(), &mut grads, &h, &q, &out, &w_out, &mut dh, &mut dq);
    let eps = 1e-6;
    for i in 0..h.len() {
        let (mut a, mut b) = (h.clone(), h.clone());
        a.data_mut()[i] += eps;
        b.data_mut()[i] -= eps;
        let numeric = (loss(&a, &q) - loss(&b, &q)) / (2.0 * eps);
        assert!((numeric - dh.data()[i]).abs() < 1e-8);
    }
    for i in 0..3 {
        let (mut a, mut b) = (q.clone(), q.clone());
        a[i] += eps;
        b[i] -= eps;
        let numeric = (loss(&h, &a) - loss(&h, &b)) / (2.0 * eps);
        assert!((numeric - dq[i]).abs() < 1e-8);
    }
}

fn autoencoder_fixture(seed: u64) -> (ParamSet, EncoderDecoder) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let ae = EncoderDecoder::new(&mut ps, 3, &[5, 2], &mut rng);
    (ps, ae)
}

#[test]
fn decoder_mirrors_encoder() {
    let (_, ae) = autoencoder_fixture(0);
    assert_eq!(ae.decoder.hidden_sizes(), vec![2, 5]);
    assert_eq!(ae.decoder.input_size(), 2);
    let mut enc_state: Vec<usize> = ae.encoder.hidden_sizes();
    enc_state.reverse();
    assert_eq!(ae.decoder.hidden_sizes(), enc_state);
    assert_eq!(ae.reconstruction.output, 3);
}

#[test]
fn autoencoder_gradient_check() {
    for seed in [10, 11, 12] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
        let (mut ps, ae) = autoencoder_fixture(seed);
        let x = random_matrix(&mut rng, 4, 3, 1.0);
        let report = grad_check(&mut ps, 1e-5, None, seed, |ps| {
            let (p, g) = ps.split_mut();
            ae.accumulate(p, g, &x, 1.0)
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn zero_epoch_pretraining_changes_nothing() {
    let (mut ps, ae) = autoencoder_fixture(1);
    let before = ps.clone();
    let cfg = SgdConfig {
        epochs: 0,
        ..SgdConfig::default()
    };
    let curve = pretrain_autoencoder(&ae, &mut ps, &[Matrix::zeros(4, 3)], &cfg).unwrap();
    assert!(curve.is_empty());
    assert_eq!(ps, before);
}

#[test]
fn constant_windows_are_reconstructed() {
    let (mut ps, ae) = autoencoder_fixture(2);
    let windows = vec![Matrix::filled(6, 3, 0.5); 256];
    let cfg = SgdConfig {
        learning_rate: 1.0,
        batch_size: 1,
        epochs: 100,
        seed: 2,
        clip_norm: Some(5.0),
    };
    let curve = pretrain_autoencoder(&ae, &mut ps, &windows, &cfg).unwrap();
    assert!(curve.len() <= 100);
    assert!(
        *curve.last().unwrap() < 1e-6,
        "loss curve {:?}",
        curve.iter().step_by(10).collect::<Vec<_>>()
    );
}

#[test]
fn sinusoid_pretraining_loss_decreases() {
    let (mut ps, ae) = autoencoder_fixture(3);
    let windows: Vec<Matrix> = (0..64)
        .map(|k| {
            let data = (0..8)
                .flat_map(|t| {
                    let phase = 0.3 * (k + t) as f64;
                    [0.5 + 0.4 * phase.sin(), 0.5 + 0.4 * phase.cos(), 0.5]
                })
                .collect();
            Matrix::from_vec(8, 3, data).unwrap()
        })
        .collect();
    let cfg = SgdConfig {
        learning_rate: 0.05,
        batch_size: 16,
        epochs: 10,
        seed: 3,
        clip_norm: Some(5.0),
    };
    let curve = pretrain_autoencoder(&ae, &mut ps, &windows, &cfg).unwrap();
    assert_eq!(curve.len(), 10);
    for pair in curve.windows(2) {
        assert!(pair[1] < pair[0], "{curve:?}");
    }
}

#[test]
fn pretraining_reports_divergence() {
    let (mut ps, ae) = autoencoder_fixture(4);
    let windows = vec![Matrix::filled(4, 3, 1e200); 4];
    let cfg = SgdConfig {
        epochs: 3,
        ..SgdConfig::default()
    };
    let err = pretrain_autoencoder(&ae, &mut ps, &windows, &cfg).unwrap_err();
    assert!(matches!(err, crate::Error::Diverged { index: 0, .. }), "{err}");
}

#[test]
fn zero_weights_predict_the_output_bias() {
    let cfg = ForecasterConfig {
        window: 7,
        ..small_config()
    };
    let mut model = Forecaster::new(&cfg, 3, 1).unwrap();
    model.params.values_mut().iter_mut().for_each(|m| m.fill(0.0));
    let bias = model.head.b;
    model.params.values_mut()[bias].data_mut()[0] = -0.42;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random_matrix(&mut rng, 7, 3, 1.0);
    assert_eq!(model.forecast(&x).unwrap(), -0.42);
    assert!(model.forecast(&Matrix::zeros(6, 3)).is_err());
    assert!(model.forecast(&Matrix::zeros(7, 2)).is_err());
}

#[test]
fn plain_configuration_matches_lstm_regressor() {
    let cfg = ForecasterConfig {
        use_wavelet: false,
        use_encoder: false,
        use_attention: false,
        predictor_hidden: vec![6, 4],
        ..small_config()
    };
    let model = Forecaster::new(&cfg, 3, 17).unwrap();
    let baseline = LstmRegressor::new(3, &[6, 4], 17);
    assert_eq!(model.params, baseline.params);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let x = random_matrix(&mut rng, 7, 3, 1.0);
        assert_eq!(model.forecast(&x).unwrap(), baseline.predict_prepared(&x).unwrap());
    }
}

#[test]
fn full_pipeline_gradient_check() {
    for seed in [30, 31, 32] {
        let cfg = ForecasterConfig {
            use_wavelet: false,
            ..small_config()
        };
        let mut model = Forecaster::new(&cfg, 3, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in model.params.values_mut().iter_mut() {
            m.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let x = random_matrix(&mut rng, 7, 3, 1.0);
        let report = check_regressor(&model, &x, 0.4, seed);
        assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn frozen_encoder_receives_no_gradient() {
    let cfg = ForecasterConfig {
        freeze_encoder: true,
        ..small_config()
    };
    let mut model = Forecaster::new(&cfg, 3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_matrix(&mut rng, 7, 3, 1.0);
    model.accumulate(&x, 0.9, 1.0).unwrap();
    for id in model.params.ids() {
        let norm = model.params.grads()[id].norm_sq();
        if model.params.name(id).starts_with("encoder") || model.params.name(id).starts_with("decoder") {
            assert_eq!(norm, 0.0, "{}", model.params.name(id));
        }
    }
    let head_w = model.head.w;
    assert!(model.params.grads()[head_w].norm_sq() > 0.0);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let model = Forecaster::new(&small_config(), 3, 4).unwrap();
    let file = model.to_tensor_file(&[("note", "x".into())]).unwrap();
    let text = file.to_text();
    let parsed = crate::numerics::TensorFile::parse(&text, std::path::Path::new("mem")).unwrap();
    let restored = Forecaster::from_tensor_file(&parsed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_matrix(&mut rng, 7, 3, 1.0);
    assert_eq!(model.forecast(&x).unwrap(), restored.forecast(&x).unwrap());
    assert_eq!(parsed.meta("note"), Some("x"));
}

fn sinusoid_frame(n: usize) -> TimeSeriesFrame {
    let y: Vec<f64> = (0..n)
        .map(|t| (std::f64::consts::TAU * t as f64 / 24.0).sin())
        .collect();
    let x: Vec<f64> = (0..n)
        .map(|t| (std::f64::consts::TAU * t as f64 / 24.0).cos())
        .collect();
    frame_from(y, x)
}

#[test]
fn noiseless_sinusoid_is_learned() {
    let cfg = ForecasterConfig {
        train: SgdConfig {
            epochs: 30,
            ..ForecasterConfig::desk().train
        },
        ..ForecasterConfig::desk()
    }
    .with_seed(1);
    let (_, report) = train_forecaster(&cfg, &sinusoid_frame(800)).unwrap();
    assert!(report.rmse < 0.05, "rmse {}", report.rmse);
    assert_eq!(report.predictions.len(), report.split.test_samples);
    assert!((report.rmse - report.mse.sqrt()).abs() < 1e-15);
}

#[test]
fn training_is_deterministic_and_splits_are_ordered() {
    let cfg = small_config().with_seed(9);
    let frame = sinusoid_frame(200);
    let (_, a) = train_forecaster(&cfg, &frame).unwrap();
    let (_, b) = train_forecaster(&cfg, &frame).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.pretrain_loss.len(), 2);
    assert_eq!(a.fit.train_loss.len(), 3);
    let s = &a.split;
    assert!(s.train_span.1 < s.validation_span.0);
    assert!(s.validation_span.1 < s.test_span.0);
    let c = train_forecaster(&cfg.clone().with_seed(10), &frame).unwrap().1;
    assert_ne!(a.predictions, c.predictions);
}

#[test]
fn variant_flags_follow_row_names() {
    assert_eq!(Variant::WtEdLstm.flags(), Some((true, true, false)));
    assert_eq!(Variant::EdLstmAm.flags(), Some((false, true, true)));
    assert_eq!(Variant::WtEdLstmAm.flags(), Some((true, true, true)));
    assert_eq!(Variant::Lstm.flags(), Some((false, false, false)));
    assert_eq!(Variant::Mlp.flags(), None);
    for v in Variant::ALL.into_iter().skip(1) {
        assert_eq!(variant_label(&v.configure(&ForecasterConfig::desk())), v.label());
    }
}

#[test]
fn constant_series_is_fit_exactly_by_every_variant() {
    let frame = frame_from(vec![3.0; 200], vec![-1.0; 200]);
    let cfg = ForecasterConfig {
        train: SgdConfig {
            epochs: 2,
            ..small_config().train
        },
        ..small_config()
    };
    let report = ablate(&frame, &cfg, &[Horizon::OneStep, Horizon::TwoStep], &[0, 1]).unwrap();
    assert_eq!(report.rows.len(), 5);
    for row in &report.rows {
        assert_eq!(row.mean_rmse.len(), 2);
        assert!(row.mean_rmse.iter().all(|&r| r.abs() < 1e-8), "{row:?}");
    }
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,one_step,two_step");
    assert_eq!(lines.len(), 8);
    assert!(lines[1].starts_with("SVR,out of scope"));
    assert!(lines[2].starts_with("RFR,out of scope"));
    let names: Vec<&str> = lines[3..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["MLP", "LSTM", "WT-ED-LSTM", "ED-LSTM-AM", "WT-ED-LSTM-AM"]);
    assert_eq!(report.traces.len(), 2);
    let trace = report.traces[0].to_csv();
    assert!(trace.starts_with("timestamp,truth,MLP,LSTM,WT-ED-LSTM,ED-LSTM-AM,WT-ED-LSTM-AM\n"));
    assert_eq!(report.seeds_csv().lines().count(), 1 + 5 * 2 * 2);
    assert!(report.to_table().contains("out of scope"));
}
