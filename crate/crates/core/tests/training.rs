use aedes_core::imgpipe::{generate_synthetic_dataset, Dataset, SplitName, SplitRatios, ZcaOptions};
use aedes_core::modelfmt::to_bytes;
use aedes_core::nn::{LayerSpec, Padding};
use aedes_core::train::{
    bce_loss, evaluate, evaluate_scores, train, train_spec, write_history_csv, AdamConfig, ModelSpec, TrainConfig,
};
use aedes_core::{Error, Precision, Rng};

fn synthetic(n_per_class: usize, size: usize, seed: u64) -> Dataset {
    generate_synthetic_dataset(n_per_class, (size, size), &Rng::new(seed), SplitRatios::default()).unwrap()
}

fn small_config(size: usize, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        image_size: (size, size),
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn strict_runs_are_bit_identical() {
    let ds = synthetic(30, 16, 1);
    let cfg = TrainConfig {
        strict: true,
        ..small_config(16, 2)
    };
    let a = train(&ds, &cfg, |_| {}).unwrap();
    let b = train(&ds, &cfg, |_| {}).unwrap();
    assert_eq!(to_bytes(&a.model).unwrap(), to_bytes(&b.model).unwrap());
    let csv = |h: &[_]| {
        let mut buf = Vec::new();
        write_history_csv(h, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(&a.history), csv(&b.history));
}

#[test]
fn thread_count_does_not_change_results() {
    let ds = synthetic(20, 16, 2);
    let cfg = small_config(16, 1);
    let parallel = train(&ds, &cfg, |_| {}).unwrap();
    let strict = train(&ds, &TrainConfig { strict: true, ..cfg }, |_| {}).unwrap();
    assert_eq!(to_bytes(&parallel.model).unwrap(), to_bytes(&strict.model).unwrap());
}

#[test]
fn history_has_one_row_per_epoch() {
    let ds = synthetic(20, 16, 3);
    let mut seen = Vec::new();
    let out = train(&ds, &small_config(16, 3), |m| seen.push(m.epoch)).unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    assert_eq!(out.history.len(), 3);
    for m in &out.history {
        assert!((0.0..=1.0).contains(&m.acc) && (0.0..=1.0).contains(&m.val_acc));
        assert!(m.train_loss.is_finite() && m.val_loss.is_finite());
    }
}

#[test]
fn first_epoch_lowers_training_loss() {
    let ds = synthetic(100, 32, 4);
    let out = train(&ds, &small_config(32, 1), |_| {}).unwrap();
    let train_set = ds.subset(SplitName::Train);
    let images: Vec<_> = train_set.iter().map(|s| &s.image).collect();
    let scores = out.model.score_images(&images).unwrap();
    let labels: Vec<f32> = train_set.iter().map(|s| f32::from(s.label)).collect();
    let (after, _) = bce_loss(&scores, &labels).unwrap();
    assert!(
        after < out.initial_train_loss,
        "loss {after} after one epoch, {} before",
        out.initial_train_loss
    );
}

#[test]
fn double_precision_and_whitening() {
    let ds = synthetic(20, 8, 5);
    let spec = ModelSpec {
        input_shape: [8, 8, 3],
        layers: vec![
            LayerSpec::conv(4, 3, Padding::Same),
            LayerSpec::ReLU,
            LayerSpec::max_pool(2),
            LayerSpec::Flatten,
            LayerSpec::dense(1),
            LayerSpec::Sigmoid,
        ],
    };
    let cfg = TrainConfig {
        precision: Precision::F64,
        zca: ZcaOptions {
            enabled: true,
            epsilon: 1e-2,
            ..Default::default()
        },
        ..small_config(8, 2)
    };
    let out = train_spec(&ds, &spec, &cfg, |_| {}).unwrap();
    assert_eq!(out.model.preprocessor().zca.as_ref().unwrap().dim(), 192);
    assert_eq!(out.history.len(), 2);
}

#[test]
fn zca_above_cap_is_a_config_error() {
    let ds = synthetic(10, 40, 6);
    let cfg = TrainConfig {
        zca: ZcaOptions {
            enabled: true,
            ..Default::default()
        },
        ..small_config(40, 1)
    };
    assert!(matches!(train(&ds, &cfg, |_| {}), Err(Error::Config(_))));
}

#[test]
fn exploding_updates_abort_with_location() {
    let ds = synthetic(20, 16, 7);
    let cfg = TrainConfig {
        optimizer: AdamConfig {
            learning_rate: 1e30,
            ..Default::default()
        },
        ..small_config(16, 3)
    };
    match train(&ds, &cfg, |_| {}) {
        Err(e @ Error::Diverged { epoch, batch }) => {
            assert!(epoch >= 1 && batch >= 1);
            assert!(e.to_string().contains(&format!("epoch {epoch}, batch {batch}")));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn empty_validation_split_rejected() {
    let ds = generate_synthetic_dataset(
        10,
        (16, 16),
        &Rng::new(8),
        SplitRatios {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        },
    )
    .unwrap();
    assert!(matches!(train(&ds, &small_config(16, 1), |_| {}), Err(Error::Config(_))));
}

#[test]
fn zero_epochs_rejected() {
    let ds = synthetic(10, 16, 9);
    assert!(matches!(train(&ds, &small_config(16, 0), |_| {}), Err(Error::Config(_))));
}

#[test]
fn evaluation_identities() {
    let ds = synthetic(20, 16, 10);
    let out = train(&ds, &small_config(16, 1), |_| {}).unwrap();
    let samples = ds.subset(SplitName::Val);
    let e = evaluate(&out.model, &samples).unwrap();
    let c = e.confusion;
    assert_eq!(c.total(), samples.len());
    assert_eq!(e.accuracy, (c.tp + c.tn) as f64 / samples.len() as f64);

    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let scores = out.model.score_images(&images).unwrap();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
    let a = evaluate_scores(&scores, &labels, 0.5).unwrap().accuracy;
    let b = evaluate_scores(&scores, &flipped, 0.5).unwrap().accuracy;
    assert!((a + b - 1.0).abs() < 1e-12);
}

#[test]
fn summary_rows() {
    let spec = ModelSpec {
        input_shape: [1, 1, 2],
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::dense(3),
            LayerSpec::dense(1),
            LayerSpec::Sigmoid,
        ],
    };
    let s = spec.summary().unwrap();
    assert_eq!(s.rows[0].params, 0);
    assert_eq!(s.rows[1].params, 9);
    assert_eq!(s.total_params, 9 + 4);

    let broken = ModelSpec {
        input_shape: [4, 4, 3],
        layers: vec![LayerSpec::dense(1), LayerSpec::Sigmoid],
    };
    let err = broken.summary().unwrap_err().to_string();
    assert!(err.contains("layer 0 (Dense)"), "{err}");
}
