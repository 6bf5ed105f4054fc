use rumor_net::data::{Event, Label, Tweet};
use rumor_net::model::ModelConfig;
use rumor_net::tensor::{Tape, Tensor, BCE_CLAMP};
use rumor_net::train::{
    build_model, checkpoint_bytes, checkpoint_from_bytes, cross_validate, evaluate,
    holdout_split, load_checkpoint, save_checkpoint, stratified_folds, train, write_curve,
    Confusion, MetricsReport, StopReason, TrainConfig,
};
use std::path::Path;

/// Rumor events mention "hoax", non-rumor events "report".
fn toy_corpus(n: usize) -> Vec<Event> {
    (0..n)
        .map(|i| {
            let rumor = i % 2 == 0;
            let cue = if rumor { "hoax" } else { "report" };
            let tweets = (0..6)
                .map(|t| {
                    let text = format!("{cue} filler{} words{}", (i + t) % 5, t % 3);
                    Tweet::new(format!("e{i}-{t}"), t as i64, format!("u{}", (i + t) % 4), text)
                })
                .collect();
            Event {
                event_id: format!("e{i}"),
                label: if rumor { Label::Rumor } else { Label::NonRumor },
                tweets,
            }
        })
        .collect()
}

fn tiny(seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::tiny();
    cfg.interval_len = 16;
    cfg.seed = seed;
    cfg
}

#[test]
fn hand_confusion_matrix() {
    let c = Confusion { tp: 3, fp: 1, fn_: 2, tn: 4 };
    let m = MetricsReport::from_confusion(c);
    assert!((m.accuracy - 0.7).abs() < 1e-12);
    assert!((m.rumor.precision - 0.75).abs() < 1e-12);
    assert!((m.rumor.recall - 0.6).abs() < 1e-12);
    assert!((m.rumor.f1 - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.nonrumor.precision - 4.0 / 6.0).abs() < 1e-12);
    assert!((m.nonrumor.recall - 0.8).abs() < 1e-12);
}

#[test]
fn metrics_from_probabilities_threshold_at_half() {
    let probs = [0.9, 0.5, 0.51, 0.1];
    let labels = [Label::Rumor, Label::Rumor, Label::NonRumor, Label::NonRumor];
    let m = MetricsReport::from_probabilities(&probs, &labels);
    assert_eq!(m.confusion, Confusion { tp: 1, fp: 1, fn_: 1, tn: 1 });
}

#[test]
fn bce_values() {
    let cases = [
        (0.5, 1.0, std::f64::consts::LN_2),
        (0.5, 0.0, std::f64::consts::LN_2),
        (0.8, 1.0, -(0.8f64).ln()),
        (0.8, 0.0, -(0.2f64).ln()),
        (0.0, 1.0, -BCE_CLAMP.ln()),
        (1.0, 0.0, -(1.0 - (1.0 - BCE_CLAMP)).ln()),
    ];
    for (p, t, want) in cases {
        let mut tape = Tape::new();
        let prob = tape.leaf(Tensor::scalar(p));
        let loss = tape.bce(prob, t).unwrap();
        let got = tape.value(loss).data()[0];
        assert!((got - want).abs() < 1e-12, "p={p} t={t}: {got} vs {want}");
    }
    assert!((-BCE_CLAMP.ln() - 27.631).abs() < 1e-3);
}

#[test]
fn zero_epoch_cap_leaves_the_model_untouched() {
    let events = toy_corpus(6);
    let mut cfg = tiny(1);
    cfg.max_epochs = 0;
    let mut model = build_model(&cfg, &events, None).unwrap();
    let initial = model.clone();
    let prepared = model.prepare_all(&events).unwrap();
    let out = train(&mut model, &prepared, &TrainConfig::new(cfg), |_| {}).unwrap();
    assert!(out.curve.is_empty());
    assert_eq!(out.stop, StopReason::EpochCap);
    assert_eq!(model, initial);
}

#[test]
fn early_loss_falls_on_most_seeds() {
    let events = toy_corpus(8);
    let falling = [1u64, 2, 3]
        .into_iter()
        .filter(|&seed| {
            let mut cfg = tiny(seed);
            cfg.dropout = 0.0;
            cfg.max_epochs = 5;
            let mut model = build_model(&cfg, &events, None).unwrap();
            let prepared = model.prepare_all(&events).unwrap();
            let out = train(&mut model, &prepared, &TrainConfig::new(cfg), |_| {}).unwrap();
            out.curve[4].train_loss < out.curve[0].train_loss
        })
        .count();
    assert!(falling >= 2, "loss fell on only {falling} of 3 seeds");
}

#[test]
fn training_is_deterministic_and_curves_are_complete() {
    let events = toy_corpus(6);
    let run = || {
        let mut cfg = tiny(4);
        cfg.max_epochs = 4;
        let mut model = build_model(&cfg, &events, None).unwrap();
        let prepared = model.prepare_all(&events).unwrap();
        let mut seen = Vec::new();
        let out = train(&mut model, &prepared, &TrainConfig::new(cfg), |p| seen.push(*p)).unwrap();
        assert_eq!(seen, out.curve);
        (model, out)
    };
    let (a, out_a) = run();
    let (b, out_b) = run();
    assert_eq!(checkpoint_bytes(&a).unwrap(), checkpoint_bytes(&b).unwrap());
    assert_eq!(out_a, out_b);
    assert_eq!(out_a.curve.len(), 4);
    let epochs: Vec<usize> = out_a.curve.iter().map(|p| p.epoch).collect();
    assert_eq!(epochs, [1, 2, 3, 4]);

    let mut csv = Vec::new();
    write_curve(&out_a.curve, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_accuracy");
    assert_eq!(lines.len(), 5);
    let loss: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(loss, out_a.curve[0].train_loss);
}

#[test]
fn patience_stops_a_flat_run() {
    let events = toy_corpus(4);
    let mut cfg = tiny(2);
    cfg.max_epochs = 200;
    let mut model = build_model(&cfg, &events, None).unwrap();
    let prepared = model.prepare_all(&events).unwrap();
    let mut tc = TrainConfig::new(cfg);
    tc.patience = 1;
    tc.min_delta = 1e9;
    let out = train(&mut model, &prepared, &tc, |_| {}).unwrap();
    assert_eq!(out.stop, StopReason::Converged);
    assert_eq!(out.curve.len(), 2);
}

#[test]
fn folds_partition_and_stratify() {
    let labels: Vec<Label> = (0..10).map(|i| if i < 6 { Label::Rumor } else { Label::NonRumor }).collect();
    let folds = stratified_folds(&labels, 2, 9).unwrap();
    let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    for fold in &folds {
        let rumors = fold.iter().filter(|&&i| labels[i] == Label::Rumor).count();
        assert_eq!((rumors, fold.len() - rumors), (3, 2));
    }
    assert_eq!(folds, stratified_folds(&labels, 2, 9).unwrap());
    assert!(stratified_folds(&labels, 1, 9).is_err());
    assert!(stratified_folds(&labels[..3], 5, 9).is_err());

    let labels: Vec<Label> = (0..103).map(|i| if i % 3 == 0 { Label::Rumor } else { Label::NonRumor }).collect();
    let folds = stratified_folds(&labels, 5, 1).unwrap();
    let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

#[test]
fn holdout_split_is_stratified() {
    let labels: Vec<Label> = (0..200).map(|i| if i % 2 == 0 { Label::Rumor } else { Label::NonRumor }).collect();
    let (train_idx, test_idx) = holdout_split(&labels, 0.2, 42).unwrap();
    assert_eq!(test_idx.len(), 40);
    assert_eq!(train_idx.len(), 160);
    let rumors = test_idx.iter().filter(|&&i| labels[i] == Label::Rumor).count();
    assert_eq!(rumors, 20);
    let mut all: Vec<usize> = train_idx.iter().chain(&test_idx).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..200).collect::<Vec<_>>());
}

#[test]
fn cross_validation_reports_every_fold() {
    let events = toy_corpus(8);
    let mut cfg = tiny(3);
    cfg.max_epochs = 2;
    let mut tc = TrainConfig::new(cfg);
    tc.folds = 2;
    let report = cross_validate(&events, &tc, None).unwrap();
    assert_eq!(report.folds.len(), 2);
    let counted: usize = report.folds.iter().map(|f| f.confusion.total()).sum();
    assert_eq!(counted, 8);
    assert_eq!(report.mean.confusion.total(), 8);
}

#[test]
fn checkpoint_round_trip() {
    let events = toy_corpus(6);
    let mut cfg = tiny(6);
    cfg.max_epochs = 2;
    let mut model = build_model(&cfg, &events, None).unwrap();
    let prepared = model.prepare_all(&events).unwrap();
    train(&mut model, &prepared, &TrainConfig::new(cfg), |_| {}).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.config, model.config);
    assert_eq!(checkpoint_bytes(&loaded).unwrap(), checkpoint_bytes(&model).unwrap());
    assert_eq!(evaluate(&loaded, &prepared).unwrap(), evaluate(&model, &prepared).unwrap());
}

#[test]
fn checkpoint_rejects_foreign_and_future_files() {
    let events = toy_corpus(4);
    let model = build_model(&tiny(1), &events, None).unwrap();
    let bytes = checkpoint_bytes(&model).unwrap();
    let path = Path::new("x.ckpt");

    let mut wrong_magic = bytes.clone();
    wrong_magic[..8].copy_from_slice(b"NOTACKPT");
    assert!(checkpoint_from_bytes(&wrong_magic, path).is_err());

    let text = String::from_utf8_lossy(&bytes[16..]).into_owned();
    let at = 16 + text.find("\"version\":1").unwrap() + "\"version\":".len();
    let mut future = bytes.clone();
    future[at] = b'2';
    let err = checkpoint_from_bytes(&future, path).unwrap_err().to_string();
    assert!(err.contains("version"), "{err}");

    assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 3], path).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(checkpoint_from_bytes(&longer, path).is_err());

    let err = load_checkpoint("/definitely/missing.ckpt").unwrap_err();
    assert!(err.is_io());
    assert!(err.to_string().contains("/definitely/missing.ckpt"));
}
