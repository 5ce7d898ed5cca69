mod common;

use std::time::Instant;

use coherence_core::caption::*;

#[test]
fn memorizes_twenty_pairs() {
    let config = CaptionerConfig::desk();
    let (vocab, examples) = common::memorization_set(20, &config);
    let mut trainer = CaptionTrainer::new(Captioner::new(config, vocab).unwrap());
    let batch: Vec<&CaptionExample> = examples.iter().collect();
    let start = Instant::now();
    let mut done = None;
    for step in 1..=500 {
        let loss = trainer.step(&batch).unwrap();
        if step % 25 == 0 {
            let exact = examples
                .iter()
                .filter(|e| {
                    let g = generate_caption(&trainer.model, &e.input, DecodeStrategy::Greedy).unwrap();
                    g.ids == e.target_ids[..e.target_ids.len() - 1]
                })
                .count();
            eprintln!("step {step} loss {loss:.4} exact {exact}/20 t={:?}", start.elapsed());
            if exact == 20 {
                done = Some(step);
                break;
            }
        }
    }
    assert!(done.is_some());
}

#[test]
fn label_controls_marker_word() {
    let config = CaptionerConfig::desk();
    let (vocab, examples, held) = common::conditioning_corpus(30, 20, &config);
    let (model, log) = train_captioner(&config, vocab, &examples, &[], 150, 0).unwrap();
    eprintln!("final loss {:?}", log.losses.last());
    let rate = |label: ConditionLabel| {
        held.iter()
            .filter(|bytes| {
                let input = fixture_caption_input(bytes, label, &config);
                let g = generate_caption(&model, &input, DecodeStrategy::Greedy).unwrap();
                g.text.split_whitespace().any(|w| w == common::MARKER)
            })
            .count() as f64
            / held.len() as f64
    };
    let (s, v) = (rate(common::subjective()), rate(common::visible()));
    eprintln!("subjective {s} visible {v}");
    assert!(s >= 0.9 && v <= 0.1);
}

fn tiny_config() -> CaptionerConfig {
    CaptionerConfig {
        enc_layers: 2,
        dec_layers: 2,
        heads: 2,
        model_dim: 16,
        ff_dim: 32,
        max_len: 12,
        ..CaptionerConfig::desk()
    }
}

#[test]
fn initial_loss_is_near_uniform() {
    let config = CaptionerConfig::desk();
    let (vocab, examples) = common::memorization_set(20, &config);
    let expected = (vocab.len() as f64).ln();
    let model = Captioner::new(config, vocab).unwrap();
    let batch: Vec<&CaptionExample> = examples.iter().collect();
    let loss = model.evaluate_loss(&batch).unwrap();
    assert!((loss - expected).abs() <= 0.1 * expected, "loss {loss} vs ln|V| {expected}");
}

#[test]
fn training_steps_are_deterministic() {
    let config = tiny_config();
    let (vocab, examples) = common::memorization_set(6, &config);
    let batch: Vec<&CaptionExample> = examples.iter().collect();
    let run = || {
        let mut t = CaptionTrainer::new(Captioner::new(config.clone(), vocab.clone()).unwrap());
        [t.step(&batch).unwrap(), t.step(&batch).unwrap()]
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.iter().all(|l| l.is_finite()));
}

#[test]
fn decoder_is_causal() {
    let config = tiny_config();
    let (vocab, examples) = common::memorization_set(2, &config);
    let model = Captioner::new(config, vocab).unwrap();
    let input = &examples[0].input;
    let base = Captioner::decoder_input(input.label, &examples[0].target_ids);
    let n = base.len();
    let logits = model.decoder_logits(input, &base).unwrap();
    for t in 0..n - 1 {
        let mut probe = base.clone();
        for slot in probe.iter_mut().skip(t + 1) {
            // Sentinel tokens after position t.
            *slot = coherence_core::caption::vocab::UNK;
        }
        let other = model.decoder_logits(input, &probe).unwrap();
        for r in 0..=t {
            assert_eq!(logits.row(r), other.row(r), "position {r} saw the future past {t}");
        }
        assert_ne!(logits.row(n - 1), other.row(n - 1));
    }
}

#[test]
fn gradients_match_finite_differences() {
    let config = tiny_config();
    let (vocab, examples) = common::memorization_set(3, &config);
    let mut model = Captioner::new(config, vocab).unwrap();
    let batch: Vec<&CaptionExample> = examples.iter().collect();
    let (_, grads) = model.loss_and_gradients(&batch).unwrap();
    let ids: Vec<_> = model.params.ids().collect();
    let h = 1e-5;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for id in ids {
        let Some(g) = grads.get(id).cloned() else { continue };
        let len = g.len();
        for k in [0, len / 2, len - 1] {
            let (r, c) = (k / g.ncols(), k % g.ncols());
            let orig = model.params.value(id)[[r, c]];
            model.params.value_mut(id)[[r, c]] = orig + h;
            let up = model.evaluate_loss(&batch).unwrap();
            model.params.value_mut(id)[[r, c]] = orig - h;
            let down = model.evaluate_loss(&batch).unwrap();
            model.params.value_mut(id)[[r, c]] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g[[r, c]];
            let denom = analytic.abs().max(numeric.abs());
            if denom > 1e-7 {
                let rel = (analytic - numeric).abs() / denom;
                worst = worst.max(rel);
                assert!(rel <= 1e-4, "{}[{r},{c}]: analytic {analytic} numeric {numeric}", model.params.name(id));
            }
            checked += 1;
        }
    }
    eprintln!("checked {checked} entries, worst relative error {worst:e}");
    assert!(checked > 50);
}

#[test]
fn beam_of_one_is_greedy_and_distributions_normalize() {
    let config = tiny_config();
    let (vocab, examples) = common::memorization_set(5, &config);
    let mut trainer = CaptionTrainer::new(Captioner::new(config, vocab).unwrap());
    let batch: Vec<&CaptionExample> = examples.iter().collect();
    for _ in 0..20 {
        trainer.step(&batch).unwrap();
    }
    let model = &trainer.model;
    for e in &examples {
        let greedy = generate_caption(model, &e.input, DecodeStrategy::Greedy).unwrap();
        let beam = generate_caption(model, &e.input, DecodeStrategy::beam(1)).unwrap();
        assert_eq!(greedy.ids, beam.ids);
        assert_eq!(greedy.text, beam.text);
        let wide = generate_caption(model, &e.input, DecodeStrategy::beam(4)).unwrap();
        assert!(wide.ids.len() < model.config.max_len || wide.truncated);
        let mut prefix = Vec::new();
        for &t in greedy.ids.iter().chain(std::iter::once(&0)) {
            let p = next_token_distribution(model, &e.input, &prefix).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prefix.push(t);
        }
    }
    assert!(generate_caption(model, &examples[0].input, DecodeStrategy::beam(9)).is_err());
}

#[test]
fn untrained_model_flags_truncation() {
    let mut config = tiny_config();
    config.max_len = 3;
    let (vocab, examples) = common::memorization_set(2, &config);
    let model = Captioner::new(config, vocab).unwrap();
    let g = generate_caption(&model, &examples[0].input, DecodeStrategy::Greedy).unwrap();
    if !g.ids.is_empty() && g.ids.len() == 3 {
        assert!(g.truncated);
    }
    assert!(g.ids.len() <= 3);
}

#[test]
fn checkpoint_round_trip() {
    let config = tiny_config();
    let (vocab, examples) = common::memorization_set(3, &config);
    let model = Captioner::new(config, vocab).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_captioner(&model, 7, dir.path()).unwrap();
    let (loaded, step) = load_captioner(dir.path()).unwrap();
    assert_eq!(step, 7);
    let batch: Vec<&CaptionExample> = examples.iter().collect();
    assert_eq!(model.evaluate_loss(&batch).unwrap(), loaded.evaluate_loss(&batch).unwrap());
    assert_eq!(
        generate_caption(&model, &examples[0].input, DecodeStrategy::Greedy).unwrap(),
        generate_caption(&loaded, &examples[0].input, DecodeStrategy::Greedy).unwrap()
    );
}
