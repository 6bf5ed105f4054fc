use rumor_net::tensor::{kernels, SeededRng, Tensor};
use rumor_net::users::{pretrain, PretrainConfig, UserHistory, UserTable, NULL_ROW};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    kernels::dot(a, b) / (kernels::dot(a, a).sqrt() * kernels::dot(b, b).sqrt())
}

/// Two authors with disjoint one-word vocabularies: word 2 for A, word 3 for B.
fn two_author_setup() -> (UserTable, Tensor, Vec<UserHistory>) {
    let mut rng = SeededRng::new(11);
    let table = UserTable::init(&["A", "B"], 8, &mut rng).unwrap();
    let words = Tensor::uniform(&[4, 8], 0.08, &mut rng).with_grad();
    let hist = vec![
        UserHistory { user_id: "A".into(), documents: vec![vec![2; 6]; 3] },
        UserHistory { user_id: "B".into(), documents: vec![vec![3; 6]; 3] },
    ];
    (table, words, hist)
}

#[test]
fn author_vector_aligns_with_own_word() {
    let (mut table, mut words, hist) = two_author_setup();
    let cfg = PretrainConfig { epochs: 50, ..Default::default() };
    pretrain(&mut table, &hist, &mut words, &cfg, &mut SeededRng::new(3)).unwrap();
    let ua = table.lookup(Some("A"));
    assert!(cosine(ua, words.row(2)) > cosine(ua, words.row(3)));
    let ub = table.lookup(Some("B"));
    assert!(cosine(ub, words.row(3)) > cosine(ub, words.row(2)));
    assert!(table.matrix().row(NULL_ROW).iter().all(|&x| x == 0.0));
}

#[test]
fn pretraining_loss_does_not_increase() {
    let mut rng = SeededRng::new(5);
    let ids: Vec<String> = (0..6).map(|i| format!("u{i}")).collect();
    let mut table = UserTable::init(&ids, 6, &mut rng).unwrap();
    let mut words = Tensor::uniform(&[12, 6], 0.08, &mut rng).with_grad();
    let hist: Vec<UserHistory> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| UserHistory {
            user_id: id.clone(),
            documents: (0..4).map(|d| (0..5).map(|t| 2 + (i * 3 + d + t) % 10).collect()).collect(),
        })
        .collect();
    let cfg = PretrainConfig { epochs: 40, ..Default::default() };
    let report = pretrain(&mut table, &hist, &mut words, &cfg, &mut SeededRng::new(9)).unwrap();
    assert_eq!(report.epoch_losses.len(), 40);
    for w in report.epoch_losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-3, "loss rose: {} -> {}", w[0], w[1]);
    }
    assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
}

#[test]
fn pretraining_is_deterministic() {
    let run = || {
        let (mut table, mut words, hist) = two_author_setup();
        let cfg = PretrainConfig { epochs: 5, ..Default::default() };
        pretrain(&mut table, &hist, &mut words, &cfg, &mut SeededRng::new(8)).unwrap();
        table
    };
    assert!(run().matrix().bit_eq(run().matrix()));
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("users.bin");
    let table = UserTable::init(&["x", "y", "z"], 5, &mut SeededRng::new(1)).unwrap();
    table.save(&path).unwrap();
    let back = UserTable::load(&path).unwrap();
    assert!(back.matrix().bit_eq(table.matrix()));
    assert_eq!(back.user_ids(), table.user_ids());
}
