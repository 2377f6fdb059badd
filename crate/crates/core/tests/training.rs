mod common;

use kgt_core::graph::{DatasetSplit, SplitMode};
use kgt_core::model::ModelConfig;
use kgt_core::train::{
    resume, train, Checkpoint, LogRecord, StopReason, TrainConfig, TrainOptions, LAST_CHECKPOINT, METRICS_FILE,
};

fn toy_model() -> ModelConfig {
    ModelConfig {
        hidden_dim: 8,
        ..ModelConfig::default()
    }
}

fn toy_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        num_negatives: 3,
        learning_rate: 5e-3,
        seed: 11,
        patience: 100,
        ..TrainConfig::default()
    }
}

fn losses(log: &[LogRecord]) -> Vec<f64> {
    log.iter().filter(|r| r.split == "train").map(|r| r.loss.unwrap()).collect()
}

fn strip_wall_time(text: &str) -> Vec<LogRecord> {
    text.lines()
        .map(|l| {
            let mut r: LogRecord = serde_json::from_str(l).unwrap();
            r.wall_ms = 0;
            r
        })
        .collect()
}

#[test]
fn toy_training_reduces_loss() {
    let data = common::toy_dataset();
    let out = train(&data, &toy_model(), &toy_train(20), TrainOptions::default()).unwrap();
    let l = losses(&out.log);
    assert_eq!(l.len(), 20);
    assert!(l[19] < l[0], "{l:?}");
    assert_eq!(out.stop, StopReason::EpochLimit);
    assert!(out.best.is_some());
}

#[test]
fn identical_seeds_give_identical_runs() {
    let data = common::toy_dataset();
    let a = train(&data, &toy_model(), &toy_train(3), TrainOptions::default()).unwrap();
    let b = train(&data, &toy_model(), &toy_train(3), TrainOptions::default()).unwrap();
    assert_eq!(a.last.to_bytes().unwrap(), b.last.to_bytes().unwrap());
    assert_eq!(losses(&a.log), losses(&b.log));
    let c = train(&data, &toy_model(), &TrainConfig { seed: 12, ..toy_train(3) }, TrainOptions::default()).unwrap();
    assert_ne!(a.last.to_bytes().unwrap(), c.last.to_bytes().unwrap());
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let data = common::toy_dataset();
    let full_dir = tempfile::tempdir().unwrap();
    let part_dir = tempfile::tempdir().unwrap();
    let cfg = toy_train(5);
    train(
        &data,
        &toy_model(),
        &cfg,
        TrainOptions {
            out_dir: Some(full_dir.path().into()),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let partial = train(
        &data,
        &toy_model(),
        &cfg,
        TrainOptions {
            out_dir: Some(part_dir.path().into()),
            interrupt_after: Some(2),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    assert_eq!(partial.stop, StopReason::Interrupted);
    let ck = Checkpoint::load(&part_dir.path().join(LAST_CHECKPOINT)).unwrap();
    assert_eq!(ck.progress.epoch, 2);
    resume(
        &data,
        ck,
        TrainOptions {
            out_dir: Some(part_dir.path().into()),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(full_dir.path(), LAST_CHECKPOINT), read(part_dir.path(), LAST_CHECKPOINT));
    let full_log = String::from_utf8(read(full_dir.path(), METRICS_FILE)).unwrap();
    let part_log = String::from_utf8(read(part_dir.path(), METRICS_FILE)).unwrap();
    assert_eq!(strip_wall_time(&full_log), strip_wall_time(&part_log));
}

#[test]
fn target_mrr_stops_early() {
    let data = common::toy_dataset();
    let cfg = TrainConfig {
        stop_at_valid_mrr: Some(0.0),
        ..toy_train(10)
    };
    let out = train(&data, &toy_model(), &cfg, TrainOptions::default()).unwrap();
    assert_eq!(out.stop, StopReason::TargetReached);
    assert_eq!(out.last.progress.epoch, 1);
}

#[test]
fn patience_triggers_early_stopping() {
    let data = common::toy_dataset();
    let cfg = TrainConfig {
        patience: 1,
        learning_rate: 1e-12,
        ..toy_train(10)
    };
    let out = train(&data, &toy_model(), &cfg, TrainOptions::default()).unwrap();
    assert_eq!(out.stop, StopReason::EarlyStopping);
    assert!(out.last.progress.epoch < 10);
}

#[test]
fn too_many_negatives_is_a_sampling_error() {
    let data = common::toy_dataset();
    let cfg = TrainConfig {
        num_negatives: 6,
        ..toy_train(1)
    };
    let err = train(&data, &toy_model(), &cfg, TrainOptions::default()).unwrap_err();
    assert!(matches!(err, kgt_core::Error::Sampling { .. }), "{err}");
}

#[test]
fn umls_loads_with_expected_sizes() {
    let data = DatasetSplit::load(&common::umls_dir(), SplitMode::Transductive).unwrap();
    assert_eq!(data.num_entities(), 135);
    assert_eq!(data.num_base_relations(), 46);
    assert_eq!((data.train.len(), data.valid.len(), data.test.len()), (5216, 652, 661));
    let filter = kgt_core::graph::FilterSets::build(&[&data.train, &data.valid, &data.test], None);
    assert_eq!(filter.total_entries(), 6529);
}
