use proptest::prelude::*;
use rumor_net::data::{Event, Label, Tweet};
use rumor_net::model::{Ablation, Mode, Model, ModelConfig};
use rumor_net::tensor::{SeededRng, Tape};
use rumor_net::train::build_model;

fn random_event(id: usize, rng: &mut SeededRng) -> Event {
    let n = rng.range(1, 25);
    let tweets = (0..n)
        .map(|t| {
            let words: Vec<String> = (0..rng.range(1, 8)).map(|_| format!("w{}", rng.range(0, 30))).collect();
            Tweet::new(format!("{id}-{t}"), t as i64, format!("u{}", rng.range(0, 6)), words.join(" "))
        })
        .collect();
    Event {
        event_id: format!("e{id}"),
        label: if rng.bernoulli(0.5) { Label::Rumor } else { Label::NonRumor },
        tweets,
    }
}

fn fixture(seed: u64, ablation: Ablation) -> (Model, Vec<Event>) {
    let mut rng = SeededRng::new(seed);
    let events: Vec<Event> = (0..6).map(|i| random_event(i, &mut rng)).collect();
    let mut cfg = ModelConfig::tiny();
    cfg.interval_len = 12;
    cfg.seed = seed;
    cfg.ablation = ablation;
    (build_model(&cfg, &events, None).unwrap(), events)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn model_attention_is_a_distribution_over_real_tokens(seed in 0u64..1_000_000) {
        let (model, events) = fixture(seed, Ablation::default());
        for event in &events {
            let ie = model.prepare(event).unwrap();
            let weights = model.attention_weights(&ie).unwrap();
            for (iv, alpha) in ie.intervals.iter().zip(&weights) {
                let real = iv.real_tokens();
                prop_assert_eq!(alpha.len(), iv.word_indices.len());
                prop_assert!(alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
                prop_assert!(alpha[real..].iter().all(|&a| a == 0.0));
                if real > 0 {
                    let sum: f64 = alpha[..real].iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-9, "sum {}", sum);
                }
                if real == 1 {
                    prop_assert_eq!(alpha[0], 1.0);
                }
            }
            let p = model.predict(&ie).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }
}

#[test]
fn no_user_context_zeroes_the_author_half_of_the_cube() {
    let ablation = Ablation { no_user_context: true, ..Ablation::default() };
    let (model, events) = fixture(3, ablation);
    let ie = model.prepare(&events[0]).unwrap();
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &ie, Mode::Infer).unwrap();
    let cube = tape.value(out.cube);
    let depth = model.config.cube_depth();
    let half = model.config.user_dim;
    for (i, chunk) in cube.data().chunks(depth).enumerate() {
        assert!(chunk[half..].iter().all(|&x| x == 0.0), "row {i}");
    }
}

#[test]
fn no_user_context_ignores_author_embeddings() {
    let ablation = Ablation { no_user_context: true, ..Ablation::default() };
    let (mut model, events) = fixture(5, ablation);
    let ie = model.prepare(&events[1]).unwrap();
    let before = model.predict(&ie).unwrap();
    let mut rng = SeededRng::new(99);
    for x in model.users.matrix_mut().data_mut().iter_mut().skip(model.config.user_dim) {
        *x = rng.uniform(-1.0, 1.0);
    }
    assert_eq!(model.predict(&ie).unwrap(), before);

    model.config.ablation.no_user_context = false;
    assert_ne!(model.predict(&ie).unwrap(), before);
}

#[test]
fn no_attention_uses_mean_of_word_vectors() {
    let ablation = Ablation { no_attention: true, ..Ablation::default() };
    let (model, events) = fixture(8, ablation);
    let ie = model.prepare(&events[2]).unwrap();
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &ie, Mode::Infer).unwrap();
    assert!(out.attention.iter().all(|a| a.is_none()));

    // the first row of each interval matrix holds the interval vector
    let cube = tape.value(out.cube).data().to_vec();
    let (q, depth, d) = (ie.q, model.config.cube_depth(), model.config.user_dim);
    for (k, iv) in ie.intervals.iter().enumerate() {
        let real = iv.real_tokens();
        let row = &cube[k * q * depth..k * q * depth + d];
        let mut mean = vec![0.0; d];
        for &w in &iv.word_indices[..real] {
            let emb = &model.params.words.data()[w * d..(w + 1) * d];
            for (m, e) in mean.iter_mut().zip(emb) {
                *m += e / real as f64;
            }
        }
        for (a, b) in row.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn ablations_change_the_prediction() {
    let (model, events) = fixture(11, Ablation::default());
    let ie = model.prepare(&events[0]).unwrap();
    let full = model.predict(&ie).unwrap();
    let no_ctx = Ablation { no_user_context: true, ..Ablation::default() };
    let no_attn = Ablation { no_attention: true, ..Ablation::default() };
    for ablation in [no_ctx, no_attn] {
        let mut tape = Tape::new();
        let out = model.forward_with(&mut tape, &ie, ablation, Mode::Infer).unwrap();
        assert_ne!(tape.value(out.prob).data()[0], full, "{ablation:?}");
    }
}

#[test]
fn inference_is_deterministic_and_train_mode_uses_dropout() {
    let (mut model, events) = fixture(13, Ablation::default());
    model.config.dropout = 0.5;
    let ie = model.prepare(&events[3]).unwrap();
    assert_eq!(model.predict(&ie).unwrap(), model.predict(&ie).unwrap());
    let mut rng = SeededRng::new(1);
    let probs: Vec<f64> = (0..4)
        .map(|_| {
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &ie, Mode::Train(&mut rng)).unwrap();
            tape.value(out.prob).data()[0]
        })
        .collect();
    assert!(probs.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn unseen_words_and_authors_are_accepted() {
    let (model, _) = fixture(2, Ablation::default());
    let event = Event {
        event_id: "x".into(),
        label: Label::Rumor,
        tweets: vec![Tweet::new("a", 0, "stranger", "entirely novel vocabulary")],
    };
    let ie = model.prepare(&event).unwrap();
    let p = model.predict(&ie).unwrap();
    assert!(p > 0.0 && p < 1.0);
}
