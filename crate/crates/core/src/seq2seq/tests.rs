use super::*;
use crate::exec::Execution;
use crate::fst::{shortest_path, Semiring};
use crate::lm::{train_bigram, Smoothing};
use proptest::prelude::*;

fn vocabs() -> (Vocab, Vocab) {
    (Vocab::new(["a", "b", "c"]).unwrap(), Vocab::new(["p", "q"]).unwrap())
}

fn small(seed: u64, hidden: usize, range: f64) -> Seq2SeqParams {
    let (i, o) = vocabs();
    let cfg = ModelConfig {
        hidden,
        layers: 2,
        init_range: range,
        forget_bias: 1.0,
    };
    init_params(i, o, &cfg, seed)
}

fn seq(s: &str) -> Vec<String> {
    s.chars().map(|c| c.to_string()).collect()
}

// Straight-line LSTM cell written from the gate equations.
fn oracle_cell(p: &Seq2SeqParams, name: &str, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols, w) = p.tensor(&format!("{name}.w")).unwrap();
    let (_, _, b) = p.tensor(&format!("{name}.b")).unwrap();
    let hd = rows / 4;
    let input: Vec<f64> = x.iter().chain(h).copied().collect();
    assert_eq!(input.len(), cols);
    let pre = |gate: usize, j: usize| {
        let r = gate * hd + j;
        b[r] + (0..cols).map(|k| w[r * cols + k] * input[k]).sum::<f64>()
    };
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let mut hn = vec![0.0; hd];
    let mut cn = vec![0.0; hd];
    for j in 0..hd {
        let i = sig(pre(0, j));
        let f = sig(pre(1, j));
        let g = pre(2, j).tanh();
        let o = sig(pre(3, j));
        cn[j] = f * c[j] + i * g;
        hn[j] = o * cn[j].tanh();
    }
    (hn, cn)
}

fn oracle_encode(p: &Seq2SeqParams, letters: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let hd = p.hidden();
    let n_in = p.input_vocab().len();
    let mut h = vec![vec![0.0; hd]; 2];
    let mut c = vec![vec![0.0; hd]; 2];
    let mut order: Vec<usize> = letters.iter().rev().copied().collect();
    order.push(EOS_ID);
    for sym in order {
        let mut x = vec![0.0; n_in];
        x[sym] = 1.0;
        for l in 0..2 {
            let (hn, cn) = oracle_cell(p, &format!("encoder.{l}"), &x, &h[l], &c[l]);
            x = hn.clone();
            h[l] = hn;
            c[l] = cn;
        }
    }
    (h, c)
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn init_is_seeded_and_bounded() {
    let a = small(3, 5, 0.1);
    assert_eq!(a, small(3, 5, 0.1));
    assert_ne!(a.weights(), small(4, 5, 0.1).weights());
    for (name, rows, cols, _) in a.layout().tensors() {
        let (_, _, t) = a.tensor(&name).unwrap();
        assert_eq!(t.len(), rows * cols);
        if name.ends_with(".w") {
            assert!(t.iter().all(|w| (-0.1..=0.1).contains(w)));
        } else if name == "proj.b" {
            assert!(t.iter().all(|&w| w == 0.0));
        } else {
            assert!(t[..5].iter().all(|&w| w == 0.0));
            assert!(t[5..10].iter().all(|&w| w == 1.0));
            assert!(t[10..].iter().all(|&w| w == 0.0));
        }
    }
}

#[test]
fn default_architecture_is_two_by_hundred() {
    let (i, o) = vocabs();
    let p = init_params(i, o, &ModelConfig::default(), 0);
    assert_eq!(p.layout().layers, 2);
    assert_eq!(encode(&p, &seq("ab")).unwrap().len(), 100);
}

#[test]
fn encode_matches_oracle() {
    let p = small(11, 4, 0.5);
    let ids = p.input_vocab().encode(&seq("abca")).unwrap();
    let (h, _) = oracle_encode(&p, &ids);
    assert_close(&encode(&p, &seq("abca")).unwrap(), &h[1], 1e-12);
    assert_ne!(encode(&p, &seq("ab")).unwrap(), encode(&p, &seq("ba")).unwrap());
    assert!(matches!(encode(&p, &seq("az")), Err(Error::UnknownSymbols(_))));
}

#[test]
fn decoder_step_matches_oracle() {
    let p = small(5, 3, 0.5);
    let input = seq("cab");
    let ids = p.input_vocab().encode(&input).unwrap();
    let (mut h, mut c) = oracle_encode(&p, &ids);
    let ctx = h[1].clone();
    let state = initial_state(&p, &input).unwrap();
    let (next, pmf) = decoder_step(&p, &state, "p").unwrap();
    assert_eq!((next.clone(), pmf.clone()), decoder_step(&p, &state, "p").unwrap());

    let n_out = p.output_vocab().len();
    let prev = p.output_vocab().id("p").unwrap();
    let mut x = vec![0.0; n_out];
    x[prev] = 1.0;
    x.extend(&ctx);
    for l in 0..2 {
        let (hn, cn) = oracle_cell(&p, &format!("decoder.{l}"), &x, &h[l], &c[l]);
        x = hn.clone();
        h[l] = hn;
        c[l] = cn;
    }
    assert_close(&next.h[1], &h[1], 1e-12);
    let (rows, cols, w) = p.tensor("proj.w").unwrap();
    let (_, _, b) = p.tensor("proj.b").unwrap();
    let mut pin = h[1].clone();
    pin.extend((0..n_out).map(|k| if k == prev { 1.0 } else { 0.0 }));
    pin.extend(&ctx);
    let logits: Vec<f64> = (0..rows)
        .map(|r| b[r] + (0..cols).map(|k| w[r * cols + k] * pin[k]).sum::<f64>())
        .collect();
    let z: f64 = logits[1..].iter().map(|l| l.exp()).sum();
    let expect: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, l)| if k == BOS_ID { 0.0 } else { l.exp() / z })
        .collect();
    assert_close(&pmf, &expect, 1e-12);
    assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(pmf[1..].iter().all(|&x| x > 0.0));
}

#[test]
fn zero_projection_gives_uniform_loss() {
    let mut p = small(1, 3, 0.1);
    let (pw, _) = p.proj_slots();
    let end = p.layout().len();
    p.weights_mut()[pw..end].fill(0.0);
    let cfg = TrainingConfig::default();
    let batch = vec![Example::new(&seq("ab"), &["p", "q", "q"])];
    let (l, _) = loss_and_gradients(&p, &batch, &cfg).unwrap();
    // Four steps (three phones and the end marker) over {</s>, p, q}.
    assert!((l - 4.0 * 3f64.ln()).abs() < 1e-12);
}

fn micro() -> (Seq2SeqParams, Vec<Example>) {
    let cfg = ModelConfig {
        hidden: 2,
        layers: 2,
        init_range: 0.8,
        forget_bias: 1.0,
    };
    let p = init_params(
        Vocab::new(["a", "b"]).unwrap(),
        Vocab::new(["p", "q"]).unwrap(),
        &cfg,
        42,
    );
    let batch = vec![
        Example::new(&seq("ab"), &["q", "p"]),
        Example::new(&seq("b"), &["p"]),
        Example::new(&seq("aab"), &["p", "p", "q"]),
    ];
    (p, batch)
}

#[test]
fn gradients_match_finite_differences() {
    let (p, batch) = micro();
    let cfg = TrainingConfig {
        exec: Execution::Sequential,
        ..TrainingConfig::default()
    };
    let (_, g) = loss_and_gradients(&p, &batch, &cfg).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..p.weights().len() {
        let mut plus = p.clone();
        plus.weights_mut()[i] += h;
        let mut minus = p.clone();
        minus.weights_mut()[i] -= h;
        let numeric = (loss(&plus, &batch, &cfg).unwrap() - loss(&minus, &batch, &cfg).unwrap()) / (2.0 * h);
        let denom = g[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((g[i] - numeric).abs() / denom);
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn duplicated_batch_keeps_mean_loss() {
    let (p, batch) = micro();
    let cfg = TrainingConfig::default();
    let twice: Vec<Example> = batch.iter().chain(&batch).cloned().collect();
    let (a, ga) = loss_and_gradients(&p, &batch, &cfg).unwrap();
    let (b, gb) = loss_and_gradients(&p, &twice, &cfg).unwrap();
    assert!((a - b).abs() < 1e-12);
    assert_close(&ga, &gb, 1e-12);
}

#[test]
fn sequential_and_parallel_gradients_are_identical() {
    let p = small(2, 6, 0.1);
    let batch: Vec<Example> = (0..40)
        .map(|k| {
            let letters: String = (0..1 + k % 5).map(|j| ["a", "b", "c"][(k + j) % 3]).collect();
            Example::new(&seq(&letters), &[["p", "q"][k % 2]])
        })
        .collect();
    let s = TrainingConfig {
        exec: Execution::Sequential,
        ..TrainingConfig::default()
    };
    let q = TrainingConfig {
        exec: Execution::Parallel,
        ..TrainingConfig::default()
    };
    assert_eq!(
        loss_and_gradients(&p, &batch, &s).unwrap(),
        loss_and_gradients(&p, &batch, &q).unwrap()
    );
}

#[test]
fn overlong_sequences_are_rejected() {
    let (p, _) = micro();
    let cfg = TrainingConfig {
        max_len: 2,
        ..TrainingConfig::default()
    };
    assert!(loss_and_gradients(&p, &[Example::new(&seq("aab"), &["p"])], &cfg).is_err());
    assert!(loss_and_gradients(&p, &[], &cfg).is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let p = small(9, 3, 0.1);
    let text = write_checkpoint(&p);
    let back = parse_checkpoint(&text, "ckpt").unwrap();
    assert_eq!(back, p);
    assert_eq!(write_checkpoint(&back), text);
    let broken = text.replacen("tensor encoder.0.b", "tensor encoder.0.x", 1);
    assert!(parse_checkpoint(&broken, "ckpt").is_err());
}

fn toy_data() -> Vec<Example> {
    vec![
        Example::new(&seq("a"), &["p"]),
        Example::new(&seq("b"), &["q"]),
        Example::new(&seq("ab"), &["p", "q"]),
        Example::new(&seq("ba"), &["q", "p"]),
    ]
}

#[test]
fn schedule_and_determinism() {
    let cfg = TrainingConfig {
        max_epochs: 10,
        batch_size: 2,
        convergence: 0.0,
        seed: 5,
        ..TrainingConfig::default()
    };
    let run = || train(small(1, 4, 0.1), &toy_data(), &toy_data(), &cfg).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    let rates: Vec<f64> = a.history.iter().map(|r| r.learning_rate).collect();
    assert_eq!(rates, [0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.2, 0.2]);
}

#[test]
fn zero_epoch_adaptation_is_identity() {
    let p = small(1, 3, 0.1);
    let out = adapt(p.clone(), &toy_data(), &TrainingConfig::default(), 0).unwrap();
    assert_eq!(out.params, p);
    assert!(adapt(p, &[], &TrainingConfig::default(), 1).is_err());
}

#[test]
fn divergence_is_reported() {
    let mut p = small(1, 3, 0.1);
    let (pw, _) = p.proj_slots();
    p.weights_mut()[pw + 20] = f64::INFINITY;
    let cfg = TrainingConfig {
        max_epochs: 3,
        ..TrainingConfig::default()
    };
    let err = train(p, &toy_data(), &toy_data(), &cfg)
        .err()
        .expect("training should fail");
    assert!(matches!(err, Error::Numeric(_)), "{err}");
}

// Every phone sequence up to `max_len` with its fused score.
fn brute_force(
    p: &Seq2SeqParams,
    input: &[String],
    lm: Option<&crate::lm::BigramModel>,
    max_len: usize,
) -> (Vec<String>, f64) {
    let phones = p.output_vocab().symbols().to_vec();
    let mut seqs: Vec<Vec<String>> = vec![vec![]];
    let mut frontier: Vec<Vec<String>> = vec![vec![]];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| phones.iter().map(move |ph| [s.clone(), vec![ph.clone()]].concat()))
            .collect();
        seqs.extend(frontier.iter().cloned());
    }
    let mut best: Option<(Vec<String>, f64)> = None;
    for s in seqs {
        let mut state = initial_state(p, input).unwrap();
        let mut prev = BOS.to_string();
        let mut model = 0.0;
        for sym in s.iter().map(String::as_str).chain([EOS]) {
            let (next, pmf) = decoder_step(p, &state, &prev).unwrap();
            model += pmf[p.output_vocab().id(sym).unwrap()].ln();
            state = next;
            prev = sym.to_string();
        }
        let lmlp = lm.map_or(0.0, |m| m.score_sequence(&s).unwrap());
        let score = model + lmlp;
        let better = match &best {
            None => true,
            Some((bs, bv)) => score > *bv || (score == *bv && s < *bs),
        };
        if better {
            best = Some((s, score));
        }
    }
    best.unwrap()
}

fn toy_lm(seed: u64) -> crate::lm::BigramModel {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<Vec<String>> = (0..6)
        .map(|_| {
            (0..rng.gen_range(1..4))
                .map(|_| ["p", "q"][rng.gen_range(0..2)].to_string())
                .collect()
        })
        .collect();
    let vocab = crate::fst::SymbolTable::from_symbols(["p", "q"]).shared();
    train_bigram(vocab, &corpus, Smoothing::WittenBell).unwrap()
}

#[test]
fn exhaustive_beam_equals_brute_force() {
    let p = small(8, 4, 1.0);
    let input = seq("abc");
    let cfg = BeamConfig {
        beam: 8,
        max_len: 3,
        ..BeamConfig::default()
    };
    for seed in 0..5 {
        let lm = toy_lm(seed);
        let got = beam_decode_with_lm(&p, &input, FusionLm::Bigram(&lm), &cfg).unwrap();
        let (want, score) = brute_force(&p, &input, Some(&lm), 3);
        assert_eq!(got.phones, want);
        assert!((got.hypothesis.score - score).abs() < 1e-9);
        let h = &got.hypothesis;
        assert_eq!(h.score, h.model_log_prob + h.lm_log_prob);
    }
    let plain = beam_decode_with_lm(&p, &input, FusionLm::Uniform, &cfg).unwrap();
    assert_eq!(plain.phones, brute_force(&p, &input, None, 3).0);
}

#[test]
fn lm_zero_blocks_a_phone() {
    let p = small(8, 4, 1.0);
    let vocab = crate::fst::SymbolTable::from_symbols(["p", "q"]).shared();
    let lm = train_bigram(vocab, &[vec!["p".to_string()]], Smoothing::AddK(0.0)).unwrap();
    for w in [1, 2, 8] {
        let cfg = BeamConfig {
            beam: w,
            max_len: 4,
            ..BeamConfig::default()
        };
        let out = beam_decode_with_lm(&p, &seq("ab"), FusionLm::Bigram(&lm), &cfg).unwrap();
        assert!(!out.phones.iter().any(|s| s == "q"));
    }
}

#[test]
fn sausage_is_normalized_and_its_best_path_is_greedy() {
    let p = small(4, 4, 1.0);
    let phones = crate::fst::SymbolTable::from_symbols(["p", "q"]).shared();
    let input = seq("ba");
    let fst = output_distributions_to_fst(&p, &input, 5, &phones).unwrap();
    for s in 0..fst.num_states() {
        if fst.arcs(s).is_empty() {
            continue;
        }
        let total = Semiring::Log.sum(fst.arcs(s).iter().map(|a| a.weight));
        assert!(total.value().abs() < 1e-12);
    }
    let best = shortest_path(&fst, 1).unwrap();
    let (greedy, _) = greedy_decode(&p, &input, 5).unwrap();
    assert_eq!(phones.decode(&best[0].labels), greedy);
}

#[test]
fn dataset_round_trip() {
    let text = "# pairs\nab c\tp q\nb\tq\n";
    let data = parse_dataset(text, "d").unwrap();
    assert_eq!(data[0].letters, vec!["a", "b", "c"]);
    assert_eq!(data[1].phones, vec!["q"]);
    assert_eq!(parse_dataset(&write_dataset(&data), "d").unwrap(), data);
    assert!(parse_dataset("abc\n", "d").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn uniform_lm_is_model_only_argmax(seed in 0u64..1000) {
        let p = small(seed, 3, 1.0);
        let input = seq("ab");
        let cfg = BeamConfig { beam: 8, max_len: 3, ..BeamConfig::default() };
        let out = beam_decode_with_lm(&p, &input, FusionLm::Uniform, &cfg).unwrap();
        let (want, score) = brute_force(&p, &input, None, 3);
        prop_assert_eq!(out.hypothesis.lm_log_prob, 0.0);
        prop_assert_eq!(out.hypothesis.score, out.hypothesis.model_log_prob);
        prop_assert_eq!(out.phones, want);
        prop_assert!((out.hypothesis.score - score).abs() < 1e-12);
    }

    #[test]
    fn pmf_is_normalized(seed in 0u64..1000, prev in 0usize..4) {
        let p = small(seed, 3, 1.0);
        let state = initial_state(&p, &seq("abc")).unwrap();
        let (_, pmf) = p.step_ids(&state, prev);
        prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
