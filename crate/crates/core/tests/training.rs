use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanparse::autodiff::{Tape, Tensor};
use spanparse::decoder::cky_decode;
use spanparse::encoder::EncoderConfig;
use spanparse::model::{ParserModel, VectorSource, WordVocab};
use spanparse::scorer::{num_spans, LabelVocab, ScoreChart};
use spanparse::toy::{toy_treebank, ToyLanguage};
use spanparse::training::{
    label_vocab, margin_loss, train, BatchSampler, LanguageData, SamplerConfig, TrainConfig, TrainMode,
};
use spanparse::treebank::SpanSet;

#[test]
fn equal_fractions_are_uniform_for_any_exponent() {
    for a in [0.0, 0.3, 0.7, 1.0, 2.5] {
        assert_eq!(SamplerConfig::new(vec![0.5, 0.5], a).unwrap().probabilities(), vec![0.5, 0.5]);
    }
}

#[test]
fn smoothed_probabilities_match_reference_values() {
    let p = SamplerConfig::new(vec![0.8, 0.2], 0.7).unwrap().probabilities();
    // 0.8^0.7 / (0.8^0.7 + 0.2^0.7), computed to 40 digits
    assert!((p[0] - 0.725_200_425_324_004_7).abs() < 1e-15);
    assert!((p[1] - 0.274_799_574_675_995_2).abs() < 1e-15);
    assert!(SamplerConfig::new(vec![0.8, 0.3], 0.7).is_err());
    assert!(SamplerConfig::new(vec![1.0, 0.0], 0.7).is_err());
    assert!(SamplerConfig::new(vec![1.0], -0.1).is_err());
}

#[test]
fn batch_counts_match_multinomial_expectation() {
    let sizes: Vec<usize> = (1..=10).map(|k| k * k * 7).collect();
    let langs: Vec<String> = (0..10).map(|k| format!("l{k}")).collect();
    let sampler = SamplerConfig::from_sizes(&sizes, 0.7).unwrap();
    let p = sampler.probabilities();
    let mut batches = BatchSampler::new(sampler, &sizes, &langs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rounds = 400;
    let mut counts = [0usize; 10];
    let mut seen: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![0; s]).collect();
    for _ in 0..rounds {
        let batch = batches.next_batch(256, &mut rng);
        assert_eq!(batch.len(), 256);
        for (l, idx) in batch {
            counts[l] += 1;
            seen[l][idx] += 1;
        }
    }
    let draws = (rounds * 256) as f64;
    for k in 0..10 {
        let sd = (draws * p[k] * (1.0 - p[k])).sqrt();
        assert!((counts[k] as f64 - draws * p[k]).abs() < 4.0 * sd, "language {k}");
        // passes without replacement: per-sentence counts differ by at most one
        let (lo, hi) = (seen[k].iter().min().unwrap(), seen[k].iter().max().unwrap());
        assert!(hi - lo <= 1);
    }
}

fn random_gold(rng: &mut impl Rng, n: usize, vocab: &Arc<LabelVocab>) -> SpanSet {
    let chart = ScoreChart::from_fn(n, vocab.clone(), |_, _, _| rng.gen_range(-1.0..1.0));
    cky_decode(&chart).unwrap().span_set()
}

fn loss_at(values: &[f64], n: usize, vocab: &Arc<LabelVocab>, gold: &SpanSet) -> (f64, Vec<(usize, usize, usize)>) {
    let mut tape = Tape::new();
    let node = tape.param(Tensor::new(vec![num_spans(n), vocab.len()], values.to_vec()).unwrap());
    let chart = ScoreChart::new(n, vocab.clone(), values.to_vec()).unwrap();
    let loss = margin_loss(&mut tape, node, &chart, gold).unwrap();
    (loss.value, loss.predicted.spans)
}

#[test]
fn margin_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let vocab = Arc::new(LabelVocab::synthetic(4));
    let h = 1e-6;
    let mut checked = 0;
    for _ in 0..40 {
        let n = rng.gen_range(2..7);
        let gold = random_gold(&mut rng, n, &vocab);
        let l = vocab.len();
        let mut values: Vec<f64> = (0..num_spans(n) * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for row in values.chunks_mut(l) {
            row[0] = 0.0;
        }
        let mut tape = Tape::new();
        let node = tape.param(Tensor::new(vec![num_spans(n), l], values.clone()).unwrap());
        let chart = ScoreChart::new(n, vocab.clone(), values.clone()).unwrap();
        let loss = margin_loss(&mut tape, node, &chart, &gold).unwrap();
        if loss.value <= 1e-3 {
            continue;
        }
        let grad = tape.backward(loss.node).unwrap().get(node);
        for k in 0..values.len() {
            if k % l == 0 {
                continue;
            }
            let mut plus = values.clone();
            plus[k] += h;
            let mut minus = values.clone();
            minus[k] -= h;
            let (lp, tp) = loss_at(&plus, n, &vocab, &gold);
            let (lm, tm) = loss_at(&minus, n, &vocab, &gold);
            if tp != loss.predicted.spans || tm != loss.predicted.spans {
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            assert!((numeric - grad.data()[k]).abs() < 1e-6, "{numeric} vs {}", grad.data()[k]);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

fn tiny(mode: TrainMode, exponent: f64) -> TrainConfig {
    TrainConfig {
        mode,
        encoder: EncoderConfig {
            d_model: 16,
            num_heads: 2,
            d_ff: 16,
            num_layers: 1,
            max_len: 32,
            dropout: 0.1,
            ..Default::default()
        },
        head_hidden: 8,
        batch_size: Some(4),
        epochs: 2,
        exponent,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn paired_copy_ignores_exponent() {
    let tb = toy_treebank(ToyLanguage::A, 12, 5);
    let data = [
        LanguageData {
            code: "a".into(),
            train: tb.clone(),
            dev: Some(tb.clone()),
        },
        LanguageData {
            code: "a2".into(),
            train: tb.clone(),
            dev: Some(tb),
        },
    ];
    let run = |a| train(&tiny(TrainMode::Paired, a), &data, &VectorSource::None, |_| {}).unwrap();
    let (x, y) = (run(0.2), run(1.0));
    assert_eq!(x.log, y.log);
    for ((_, _, p), (_, _, q)) in x.model.params.iter().zip(y.model.params.iter()) {
        assert_eq!(p, q);
    }
}

#[test]
fn joint_model_is_compact() {
    let a = toy_treebank(ToyLanguage::A, 20, 1);
    let b = toy_treebank(ToyLanguage::B, 20, 2);
    let cfg = EncoderConfig {
        d_model: 256,
        num_heads: 8,
        d_ff: 1024,
        num_layers: 2,
        ..Default::default()
    };
    let words = WordVocab::from_treebanks([&a, &b], false);
    let langs = vec![("a".to_string(), label_vocab(&a)), ("b".to_string(), label_vocab(&b))];
    let model = ParserModel::new(cfg, 16, words, langs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let total = model.total_params();
    assert_eq!(model.languages(), vec!["a", "b"]);
    let heads: usize = ["a", "b"].iter().map(|l| model.head_params(l).unwrap()).sum();
    assert_eq!(model.encoder_params() + heads, total);
    for l in ["a", "b"] {
        let share = model.head_params(l).unwrap() as f64 / total as f64;
        assert!(share < 0.01, "{l}: {share}");
    }
    assert_eq!(model.params.iter().filter(|(_, n, _)| n.starts_with("head.")).count(), 8);
}
