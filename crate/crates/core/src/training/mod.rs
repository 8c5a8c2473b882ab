//! Monolingual, joint and paired training of a shared encoder with one span
//! classifier per language.

pub mod loss;
pub mod report;
pub mod sampler;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{clip_grad_norm, AdamConfig, AdamState, AutodiffError, Binding, Tape, Tensor};
use crate::decoder::{cky_decode, DecodeError};
use crate::encoder::{EncoderConfig, EncoderError, EncoderInput, VectorMode};
use crate::evaluation::{default_ignore_labels, labeled_prf, EvalError};
use crate::model::{ModelError, ParserModel, VectorSource, WordVocab};
use crate::scorer::{LabelVocab, ScorerError};
use crate::treebank::{tree_to_spans, SpanSet, TaggedWord, Tree, Treebank};

pub use loss::{margin_loss, MarginLoss};
pub use report::{paired_delta_report, DeltaReport};
pub use sampler::{BatchSampler, SamplerConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid sampler: {0}")]
    InvalidSampler(String),
    #[error("treebank for language {0:?} is empty")]
    EmptyTreebank(String),
    #[error("chart has length {chart} but gold tree has length {gold}")]
    LengthMismatch { chart: usize, gold: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("loss diverged at step {step} (value {value})")]
    DivergedLoss { step: usize, value: f64 },
    #[error("missing F1 for {tested} paired with {aux}")]
    MissingCell { tested: String, aux: String },
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Mono,
    Joint,
    Paired,
}

impl FromStr for TrainMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mono" => Ok(TrainMode::Mono),
            "joint" => Ok(TrainMode::Joint),
            "paired" => Ok(TrainMode::Paired),
            other => Err(format!("unknown training mode {other:?} (expected mono|joint|paired)")),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Mono => "mono",
            TrainMode::Joint => "joint",
            TrainMode::Paired => "paired",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
    /// Defaults to 32 in mono mode and 256 otherwise.
    pub batch_size: Option<usize>,
    /// Defaults to 1e-3 in scratch mode and 5e-5 with external vectors.
    pub lr: Option<f64>,
    /// Linear warmup; defaults to 160 steps in scratch mode, none otherwise.
    pub warmup_steps: Option<usize>,
    pub epochs: usize,
    /// Evaluate every this many steps; 0 evaluates after each epoch.
    pub eval_every: usize,
    pub exponent: f64,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    /// Stop once the mean dev F1 reaches this value.
    pub target_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Mono,
            encoder: EncoderConfig::default(),
            head_hidden: crate::model::DEFAULT_HEAD_HIDDEN,
            batch_size: None,
            lr: None,
            warmup_steps: None,
            epochs: 10,
            eval_every: 0,
            exponent: 0.7,
            seed: 0,
            clip_norm: None,
            target_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match self.mode {
            TrainMode::Mono => 32,
            TrainMode::Joint | TrainMode::Paired => 256,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(match self.encoder.mode {
            VectorMode::Scratch => 1e-3,
            VectorMode::Static | VectorMode::Context => 5e-5,
        })
    }

    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(match self.encoder.mode {
            VectorMode::Scratch => 160,
            VectorMode::Static | VectorMode::Context => 0,
        })
    }

    /// Learning rate at optimizer step `step` (1-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        let warmup = self.warmup();
        let base = self.learning_rate();
        if warmup == 0 || step >= warmup {
            base
        } else {
            base * step as f64 / warmup as f64
        }
    }

    pub fn validate(&self, num_languages: usize) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        match (self.mode, num_languages) {
            (TrainMode::Mono, 1) | (TrainMode::Paired, 2) => {}
            (TrainMode::Joint, n) if n >= 2 => {}
            (mode, n) => return bad(format!("{mode} mode cannot train {n} language(s)")),
        }
        if self.batch_size() == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate() > 0.0) {
            return bad("learning rate must be positive".into());
        }
        if self.head_hidden == 0 {
            return bad("head_hidden must be positive".into());
        }
        self.encoder.validate()?;
        Ok(())
    }
}

/// One language's treebanks.
#[derive(Clone, Debug)]
pub struct LanguageData {
    pub code: String,
    pub train: Treebank,
    pub dev: Option<Treebank>,
}

/// A sentence ready for the encoder.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub words: Vec<TaggedWord>,
    pub gold: SpanSet,
    pub input: EncoderInput,
}

pub fn prepare_examples(
    model: &ParserModel,
    vectors: &VectorSource,
    lang: &str,
    treebank: &Treebank,
) -> Result<Vec<Example>, TrainError> {
    treebank
        .entries
        .iter()
        .map(|(id, tree)| {
            let words = tree.tagged_words();
            let plain: Vec<String> = words.iter().map(|w| w.word.clone()).collect();
            let external = vectors.external(&model.config, lang, id, &plain)?;
            Ok(Example {
                id: id.clone(),
                gold: tree_to_spans(tree),
                input: model.input(&plain, external),
                words,
            })
        })
        .collect()
}

/// Parses examples in order; sentences that fail to decode get a flat tree.
pub fn parse_examples(model: &ParserModel, lang: &str, examples: &[Example]) -> Vec<Tree> {
    examples
        .par_iter()
        .map(|ex| {
            model
                .chart(lang, &ex.input)
                .and_then(|c| Ok(cky_decode(&c)?.tree(&ex.words)?))
                .unwrap_or_else(|_| fallback_tree(&ex.words))
        })
        .collect()
}

/// `(TOP (XX w1) (XX w2) ...)`.
pub fn fallback_tree(words: &[TaggedWord]) -> Tree {
    let plain: Vec<String> = words.iter().map(|w| w.word.clone()).collect();
    Tree::flat(&plain, crate::treebank::TOP_LABEL, "XX")
}

/// Labeled F1 of `model` on `gold`.
pub fn evaluate_model(model: &ParserModel, lang: &str, examples: &[Example], gold: &Treebank) -> Result<f64, TrainError> {
    let trees = parse_examples(model, lang, examples);
    let entries = examples.iter().map(|e| e.id.clone()).zip(trees).collect();
    let pred = Treebank {
        language: lang.to_string(),
        entries,
    };
    Ok(labeled_prf(gold, &pred, &default_ignore_labels())?.f1)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The best model by mean dev F1 (the final one when nothing was evaluated).
    pub model: ParserModel,
    pub log: Vec<String>,
    pub best_dev_f1: Option<f64>,
    /// Per-language dev F1 of the selected model.
    pub best_per_language: BTreeMap<String, f64>,
    pub steps: usize,
    pub epochs: usize,
}

const CHUNK: usize = 16;

/// Mean loss and mean gradients over a batch. Sentences in a chunk run in
/// parallel; gradients are summed in batch order.
fn batch_gradients(
    model: &ParserModel,
    examples: &[Vec<Example>],
    languages: &[String],
    picks: &[(usize, usize)],
    dropout_seed: u64,
) -> Result<(f64, Vec<Option<Tensor>>), TrainError> {
    let mut acc: Vec<Option<Tensor>> = vec![None; model.params.len()];
    let mut total = 0.0;
    for (c, chunk) in picks.chunks(CHUNK).enumerate() {
        let results: Vec<Result<(f64, Vec<Option<Tensor>>), TrainError>> = chunk
            .par_iter()
            .enumerate()
            .map(|(k, &(lang, idx))| {
                let ex = &examples[lang][idx];
                let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
                rng.set_stream((c * CHUNK + k) as u64);
                let mut tape = Tape::new();
                let mut bind = Binding::new(&model.params, true);
                let code = &languages[lang];
                let scores = model.score_node(&mut tape, &mut bind, code, &ex.input, Some(&mut rng as &mut dyn RngCore))?;
                let chart = model.head(code)?.chart_from_node(&tape, scores)?;
                let loss = margin_loss(&mut tape, scores, &chart, &ex.gold)?;
                let mut grads = tape.backward(loss.node)?;
                Ok((loss.value, bind.collect(&mut grads)))
            })
            .collect();
        for r in results {
            let (value, grads) = r?;
            total += value;
            for (slot, g) in acc.iter_mut().zip(grads) {
                match (slot.as_mut(), g) {
                    (Some(a), Some(g)) => a.add_assign(&g),
                    (None, Some(g)) => *slot = Some(g),
                    (_, None) => {}
                }
            }
        }
    }
    let scale = 1.0 / picks.len() as f64;
    for t in acc.iter_mut().flatten() {
        t.scale_in_place(scale);
    }
    Ok((total * scale, acc))
}

/// Label inventory of a treebank (collapsed unary chains included).
pub fn label_vocab(treebank: &Treebank) -> LabelVocab {
    LabelVocab::new(
        treebank
            .trees()
            .flat_map(|t| tree_to_spans(t).spans.into_iter().map(|s| s.label)),
    )
}

/// Trains a fresh model. `log` receives each training-log line as it is
/// produced.
pub fn train(
    config: &TrainConfig,
    data: &[LanguageData],
    vectors: &VectorSource,
    mut log: impl FnMut(&str),
) -> Result<TrainOutcome, TrainError> {
    config.validate(data.len())?;
    let codes: Vec<String> = data.iter().map(|d| d.code.clone()).collect();
    if codes.iter().collect::<HashSet<_>>().len() != codes.len() {
        return Err(TrainError::InvalidConfig("language codes must be distinct".into()));
    }
    if let Some(d) = data.iter().find(|d| d.train.is_empty()) {
        return Err(TrainError::EmptyTreebank(d.code.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let words = WordVocab::from_treebanks(data.iter().map(|d| &d.train), config.encoder.lowercase);
    let languages = data.iter().map(|d| (d.code.clone(), label_vocab(&d.train))).collect();
    let mut model = ParserModel::new(config.encoder.clone(), config.head_hidden, words, languages, &mut rng)?;

    let train_ex = data
        .iter()
        .map(|d| prepare_examples(&model, vectors, &d.code, &d.train))
        .collect::<Result<Vec<_>, _>>()?;
    let dev_ex = data
        .iter()
        .map(|d| {
            d.dev
                .as_ref()
                .map(|tb| prepare_examples(&model, vectors, &d.code, tb).map(|ex| (ex, tb)))
                .transpose()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let sizes: Vec<usize> = data.iter().map(|d| d.train.len()).collect();
    let sampler = SamplerConfig::from_sizes(&sizes, config.exponent)?;
    let mut batches = BatchSampler::new(sampler, &sizes, &codes)?;
    let total: usize = sizes.iter().sum();
    let batch = config.batch_size();
    let steps_per_epoch = total.div_ceil(batch);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.learning_rate(),
            ..AdamConfig::default()
        },
        model.params.len(),
    );

    let mut lines = Vec::new();
    let mut best: Option<(f64, crate::autodiff::ParamSet, BTreeMap<String, f64>)> = None;
    let mut step = 0;
    let mut epochs = 0;
    let (mut loss_sum, mut loss_steps) = (0.0, 0usize);

    let mut evaluate = |model: &ParserModel, step: usize, loss: f64, lines: &mut Vec<String>| -> Result<Option<f64>, TrainError> {
        let mut scores = BTreeMap::new();
        for (d, dev) in data.iter().zip(&dev_ex) {
            let f1 = match dev {
                Some((ex, tb)) => evaluate_model(model, &d.code, ex, tb)?,
                None => f64::NAN,
            };
            let line = format!("step={step} loss={loss:.6} lang={} devF1={f1:.2}", d.code);
            log(&line);
            lines.push(line);
            if !f1.is_nan() {
                scores.insert(d.code.clone(), f1);
            }
        }
        if scores.is_empty() {
            return Ok(None);
        }
        let mean = scores.values().sum::<f64>() / scores.len() as f64;
        if best.as_ref().is_none_or(|b| mean > b.0) {
            best = Some((mean, model.params.clone(), scores));
        }
        Ok(Some(mean))
    };

    'outer: for _ in 0..config.epochs {
        epochs += 1;
        for s in 0..steps_per_epoch {
            let size = batch.min(total - s * batch);
            let picks = batches.next_batch(size, &mut rng);
            let dropout_seed: u64 = rng.gen();
            let (loss, mut grads) = batch_gradients(&model, &train_ex, &codes, &picks, dropout_seed)?;
            step += 1;
            if !loss.is_finite() {
                return Err(TrainError::DivergedLoss { step, value: loss });
            }
            if let Some(max) = config.clip_norm {
                clip_grad_norm(&mut grads, max);
            }
            adam.step(model.params.tensors_mut(), &grads, config.lr_at(step))?;
            loss_sum += loss;
            loss_steps += 1;
            if config.eval_every > 0 && step % config.eval_every == 0 {
                let mean = evaluate(&model, step, loss_sum / loss_steps as f64, &mut lines)?;
                (loss_sum, loss_steps) = (0.0, 0);
                if reached(config.target_f1, mean) {
                    break 'outer;
                }
            }
        }
        if config.eval_every == 0 {
            let mean = evaluate(&model, step, loss_sum / loss_steps.max(1) as f64, &mut lines)?;
            (loss_sum, loss_steps) = (0.0, 0);
            if reached(config.target_f1, mean) {
                break;
            }
        }
    }

    let (best_dev_f1, best_per_language) = match best {
        Some((f1, params, per)) => {
            model.params = params;
            (Some(f1), per)
        }
        None => (None, BTreeMap::new()),
    };
    Ok(TrainOutcome {
        model,
        log: lines,
        best_dev_f1,
        best_per_language,
        steps: step,
        epochs,
    })
}

fn reached(target: Option<f64>, mean: Option<f64>) -> bool {
    matches!((target, mean), (Some(t), Some(m)) if m >= t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(mode: TrainMode) -> TrainConfig {
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
            seed: 5,
            ..Default::default()
        }
    }

    fn lang(code: &str, text: &str) -> LanguageData {
        let tb = Treebank::parse(code, text).unwrap();
        LanguageData {
            code: code.into(),
            dev: Some(tb.clone()),
            train: tb,
        }
    }

    const A: &str = "(S (NP (D the) (N cat)) (VP (V sat)))\n(S (NP (N dogs)) (VP (V bark)))\n(S (NP (D a) (N dog)) (VP (V ran) (ADV far)))";
    const B: &str = "(X (Y (P u) (Q v)) (R w))\n(X (R w) (Y (P u) (Q v)))";

    #[test]
    fn defaults() {
        let mut c = TrainConfig::default();
        assert_eq!((c.batch_size(), c.learning_rate(), c.warmup()), (32, 1e-3, 160));
        c.mode = TrainMode::Joint;
        c.encoder.mode = VectorMode::Context;
        assert_eq!((c.batch_size(), c.learning_rate(), c.warmup()), (256, 5e-5, 0));
        assert_eq!(c.lr_at(1), 5e-5);
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(80), 5e-4);
    }

    #[test]
    fn mode_language_counts() {
        assert!(TrainConfig::default().validate(2).is_err());
        let c = tiny_config(TrainMode::Paired);
        assert!(c.validate(3).is_err());
        assert!(c.validate(2).is_ok());
        assert!(tiny_config(TrainMode::Joint).validate(1).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let data = vec![lang("a", A), lang("b", B)];
        let cfg = tiny_config(TrainMode::Joint);
        let r1 = train(&cfg, &data, &VectorSource::None, |_| {}).unwrap();
        let r2 = train(&cfg, &data, &VectorSource::None, |_| {}).unwrap();
        assert_eq!(r1.log, r2.log);
        assert_eq!(
            r1.model.to_checkpoint().to_bytes().unwrap(),
            r2.model.to_checkpoint().to_bytes().unwrap()
        );
        assert_eq!(r1.log.len(), 2 * 2);
        assert!(r1.log[0].starts_with("step=2 loss="));
        assert!(r1.log[1].contains("lang=b devF1="));
    }

    #[test]
    fn head_isolation() {
        let data = [lang("a", A), lang("b", B)];
        let cfg = tiny_config(TrainMode::Joint);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let words = WordVocab::from_treebanks(data.iter().map(|d| &d.train), false);
        let langs = data.iter().map(|d| (d.code.clone(), label_vocab(&d.train))).collect();
        let mut model = ParserModel::new(cfg.encoder.clone(), 8, words, langs, &mut rng).unwrap();
        let ex: Vec<Vec<Example>> = data
            .iter()
            .map(|d| prepare_examples(&model, &VectorSource::None, &d.code, &d.train).unwrap())
            .collect();
        let before = model.clone();
        let (_, grads) = batch_gradients(&model, &ex, &["a".into(), "b".into()], &[(0, 0), (0, 1), (0, 2)], 9).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), model.params.len());
        adam.step(model.params.tensors_mut(), &grads, 1e-2).unwrap();
        for (id, name, t) in model.params.iter() {
            let old = before.params.get(id);
            if name.starts_with("head.b.") {
                assert_eq!(t, old, "{name} changed");
            } else if name.starts_with("head.a.w") {
                assert_ne!(t, old, "{name} did not change");
            }
        }
    }

    #[test]
    fn diverged_loss_detected() {
        let data = vec![lang("a", A)];
        let mut cfg = tiny_config(TrainMode::Mono);
        cfg.lr = Some(f64::INFINITY);
        cfg.warmup_steps = Some(0);
        let err = train(&cfg, &data, &VectorSource::None, |_| {}).unwrap_err();
        assert!(matches!(err, TrainError::DivergedLoss { .. }), "{err:?}");
    }

    #[test]
    fn empty_treebank() {
        let mut data = vec![lang("a", A)];
        data[0].train = Treebank::parse("a", "").unwrap();
        assert!(matches!(
            train(&tiny_config(TrainMode::Mono), &data, &VectorSource::None, |_| {}),
            Err(TrainError::EmptyTreebank(_))
        ));
    }
}
