use fsc_core::numerics::{SgdConfig, TensorFile};
use fsc_core::seq2seq::{train_forecaster, Forecaster, ForecasterConfig};
use fsc_core::signal::{make_windows, synthetic::synthetic_greenhouse, synthetic::GreenhouseConfig, TimeSeriesFrame};

fn quick_config(seed: u64) -> ForecasterConfig {
    let desk = ForecasterConfig::desk();
    ForecasterConfig {
        encoder_hidden: vec![6, 4],
        predictor_hidden: vec![6],
        attention_size: 4,
        train: SgdConfig {
            epochs: 3,
            ..desk.train.clone()
        },
        pretrain: SgdConfig {
            epochs: 1,
            ..desk.pretrain.clone()
        },
        ..desk
    }
    .with_seed(seed)
}

fn series(hours: usize) -> TimeSeriesFrame {
    synthetic_greenhouse(&GreenhouseConfig {
        hours,
        ..GreenhouseConfig::default()
    })
}

#[test]
fn csv_round_trip_keeps_the_series() {
    let frame = series(300);
    let mut bytes = Vec::new();
    frame.write_csv(&mut bytes).unwrap();
    let back = TimeSeriesFrame::from_reader(bytes.as_slice(), std::path::Path::new("mem"), None).unwrap();
    assert_eq!(back.len(), frame.len());
    assert_eq!(back.timestamps(), frame.timestamps());
    assert_eq!(back.channel_names(), frame.channel_names());
    assert_eq!(back.target(), frame.target());
}

#[test]
fn checkpoint_on_disk_reproduces_test_predictions() {
    let frame = series(600);
    let config = quick_config(5);
    let (model, report) = train_forecaster(&config, &frame).unwrap();
    assert!(report.rmse.is_finite());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.fsct");
    model.to_tensor_file(&[]).unwrap().save(&path).unwrap();
    let restored = Forecaster::from_tensor_file(&TensorFile::load(&path).unwrap()).unwrap();

    let samples = make_windows(&frame, config.window, config.horizon.lead()).unwrap();
    for sample in samples.iter().rev().take(20) {
        assert_eq!(
            model.forecast(&sample.input).unwrap(),
            restored.forecast(&sample.input).unwrap()
        );
    }
    let (_, again) = train_forecaster(&config, &frame).unwrap();
    assert_eq!(report, again);
}
