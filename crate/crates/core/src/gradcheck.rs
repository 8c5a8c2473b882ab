//! Central finite-difference checks for every tape op and for the full
//! encode, score and margin-loss pipeline.
//!
//! The error of one coordinate is `|analytic - numeric| / max(|analytic|,
//! |numeric|, FLOOR)`; the floor keeps rounding noise on near-zero gradients
//! from dominating. Coordinates where a perturbation crosses a ReLU kink or
//! changes the loss-augmented tree are skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, Binding, NodeId, ParamSet, Tape, Tensor};
use crate::encoder::{self, EncoderConfig, EncoderInput};
use crate::scorer::{LabelVocab, LanguageHead};
use crate::training::margin_loss;
use crate::treebank::{LabeledSpan, SpanSet};

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub draws: usize,
    pub coordinates: usize,
    pub skipped: usize,
    pub max_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error < TOLERANCE && self.coordinates > 0
    }
}

fn random(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    t
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Reduces any node to a scalar through a fixed random weighting so every
/// output element contributes a distinct gradient.
fn probe(tape: &mut Tape, node: NodeId, seed: u64) -> Result<NodeId, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, tape.value(node).shape());
    let w = tape.constant(w);
    let m = tape.mul(node, w)?;
    Ok(tape.sum(m))
}

type OpFn = dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId, AutodiffError>;

/// Checks `f` at `inputs`; returns (max error, coordinates, skipped).
fn check_inputs(inputs: &[Tensor], f: &OpFn, probe_seed: u64) -> Result<(f64, usize, usize), AutodiffError> {
    let eval = |xs: &[Tensor]| -> Result<(f64, Vec<bool>), AutodiffError> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = xs.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &ids)?;
        let loss = probe(&mut tape, out, probe_seed)?;
        Ok((tape.value(loss).item(), tape.relu_pattern()))
    };
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &ids)?;
    let loss = probe(&mut tape, out, probe_seed)?;
    let base_pattern = tape.relu_pattern();
    let grads = tape.backward(loss)?;
    let (mut worst, mut coords, mut skipped) = (0.0f64, 0, 0);
    for (k, input) in inputs.iter().enumerate() {
        let g = grads.get(ids[k]);
        for idx in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= STEP;
            let (fp, pp) = eval(&plus)?;
            let (fm, pm) = eval(&minus)?;
            if pp != base_pattern || pm != base_pattern {
                skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * STEP);
            worst = worst.max(rel_error(g.data()[idx], numeric));
            coords += 1;
        }
    }
    Ok((worst, coords, skipped))
}

struct OpCase {
    name: &'static str,
    shapes: Vec<Vec<usize>>,
    f: Box<OpFn>,
}

fn op_cases() -> Vec<OpCase> {
    fn case(name: &'static str, shapes: Vec<Vec<usize>>, f: impl Fn(&mut Tape, &[NodeId]) -> Result<NodeId, AutodiffError> + 'static) -> OpCase {
        OpCase {
            name,
            shapes,
            f: Box::new(f),
        }
    }
    vec![
        case("matmul", vec![vec![3, 4], vec![4, 2]], |t, x| t.matmul(x[0], x[1])),
        case("transpose", vec![vec![3, 2]], |t, x| t.transpose(x[0])),
        case("add", vec![vec![3, 4], vec![3, 4]], |t, x| t.add(x[0], x[1])),
        case("add_broadcast", vec![vec![3, 4], vec![4]], |t, x| t.add(x[0], x[1])),
        case("sub", vec![vec![2, 5], vec![2, 5]], |t, x| t.sub(x[0], x[1])),
        case("mul", vec![vec![3, 4], vec![3, 4]], |t, x| t.mul(x[0], x[1])),
        case("mul_broadcast", vec![vec![3, 4], vec![4]], |t, x| t.mul(x[0], x[1])),
        case("relu", vec![vec![4, 5]], |t, x| Ok(t.relu(x[0]))),
        case("layer_norm", vec![vec![3, 6]], |t, x| t.layer_norm(x[0], 1e-6)),
        case("softmax", vec![vec![3, 5]], |t, x| Ok(t.softmax(x[0]))),
        case("gather", vec![vec![5, 3]], |t, x| t.gather(x[0], &[4, 0, 4, 2])),
        case("embedding_lookup", vec![vec![6, 2]], |t, x| t.embedding_lookup(x[0], &[1, 1, 5])),
        case("concat", vec![vec![2, 3], vec![2, 2]], |t, x| t.concat(&[x[0], x[1]])),
        case("slice", vec![vec![3, 6]], |t, x| t.slice(x[0], 1, 4)),
        case("scale", vec![vec![2, 3]], |t, x| Ok(t.scale(x[0], -1.7))),
        case("shift", vec![vec![2, 3]], |t, x| Ok(t.shift(x[0], 0.3))),
        case("dropout", vec![vec![2, 4]], |t, x| {
            let mask = Tensor::new(vec![2, 4], vec![0.0, 2.0, 2.0, 0.0, 2.0, 0.0, 2.0, 2.0])?;
            t.dropout(x[0], mask)
        }),
        case("sum", vec![vec![3, 3]], |t, x| Ok(t.sum(x[0]))),
        case("mlp_2layer", vec![vec![4, 3], vec![3, 5], vec![5], vec![5, 2], vec![2]], |t, x| {
            let h = t.matmul(x[0], x[1])?;
            let h = t.add(h, x[2])?;
            let h = t.relu(h);
            let o = t.matmul(h, x[3])?;
            t.add(o, x[4])
        }),
        case("attention_block", vec![vec![4, 6], vec![6, 6], vec![6, 6]], |t, x| {
            let q = t.matmul(x[0], x[1])?;
            let k = t.matmul(x[0], x[2])?;
            let kt = t.transpose(k)?;
            let s = t.matmul(q, kt)?;
            let s = t.scale(s, 0.5);
            let a = t.softmax(s);
            let o = t.matmul(a, x[0])?;
            t.layer_norm(o, 1e-6)
        }),
    ]
}

/// Every op (and two small compositions), `draws` random inputs each.
pub fn check_ops(draws: usize, seed: u64) -> Result<Vec<CheckResult>, AutodiffError> {
    let mut out = Vec::new();
    for (c, case) in op_cases().into_iter().enumerate() {
        let mut res = CheckResult {
            name: case.name.to_string(),
            draws,
            coordinates: 0,
            skipped: 0,
            max_error: 0.0,
        };
        for d in 0..draws {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((c * 1_000_003 + d) as u64);
            let inputs: Vec<Tensor> = case.shapes.iter().map(|s| random(&mut rng, s)).collect();
            let (err, coords, skipped) = check_inputs(&inputs, case.f.as_ref(), rng.gen())?;
            res.max_error = res.max_error.max(err);
            res.coordinates += coords;
            res.skipped += skipped;
        }
        out.push(res);
    }
    Ok(out)
}

fn pipeline_config() -> EncoderConfig {
    EncoderConfig {
        num_layers: 1,
        d_model: 8,
        num_heads: 2,
        d_ff: 8,
        dropout: 0.0,
        max_len: 16,
        ..Default::default()
    }
}

struct Pipeline {
    cfg: EncoderConfig,
    head: LanguageHead,
    input: EncoderInput,
    gold: SpanSet,
}

impl Pipeline {
    fn random(rng: &mut impl Rng, params: &mut ParamSet) -> Self {
        let cfg = pipeline_config();
        let vocab_size = 7;
        encoder::init_params(params, &cfg, vocab_size, rng);
        let head = LanguageHead::new("x", LabelVocab::synthetic(3));
        head.init_params(params, cfg.d_model, 6, rng);
        // jitter so ReLUs and the margin are active
        for t in params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x += rng.gen_range(-0.3..0.3));
        }
        let n = rng.gen_range(2..=4);
        let input = EncoderInput {
            word_ids: (0..n).map(|_| rng.gen_range(0..vocab_size)).collect(),
            external: None,
        };
        let mut spans = vec![LabeledSpan::new(0, n, head.vocab.get(1).clone())];
        if n > 2 {
            spans.push(LabeledSpan::new(0, 2, head.vocab.get(2).clone()));
        }
        let gold = SpanSet::new(n, spans);
        Pipeline { cfg, head, input, gold }
    }

    /// Loss, relu pattern, predicted spans and (when asked) parameter gradients.
    fn run(&self, params: &ParamSet, grads: bool) -> Result<(f64, Vec<bool>, Vec<(usize, usize, usize)>, Vec<Option<Tensor>>), AutodiffError> {
        let mut tape = Tape::new();
        let mut bind = Binding::new(params, true);
        let fence = encoder::encode(&mut tape, &mut bind, &self.cfg, &self.input, None).map_err(to_autodiff)?;
        let scores = self.head.score_node(&mut tape, &mut bind, fence).map_err(to_autodiff)?;
        let chart = self.head.chart_from_node(&tape, scores).map_err(to_autodiff)?;
        let loss = margin_loss(&mut tape, scores, &chart, &self.gold).map_err(to_autodiff)?;
        let g = if grads {
            let mut g = tape.backward(loss.node)?;
            bind.collect(&mut g)
        } else {
            Vec::new()
        };
        Ok((loss.value, tape.relu_pattern(), loss.predicted.spans.clone(), g))
    }
}

fn to_autodiff(e: impl std::fmt::Display) -> AutodiffError {
    AutodiffError::UnknownParam(e.to_string())
}

/// Encoder, span scorer and margin loss end to end, gradients with respect to
/// `coords_per_draw` randomly chosen parameter coordinates per draw.
pub fn check_pipeline(draws: usize, coords_per_draw: usize, seed: u64) -> Result<CheckResult, AutodiffError> {
    let mut res = CheckResult {
        name: "encode_score_margin".into(),
        draws,
        coordinates: 0,
        skipped: 0,
        max_error: 0.0,
    };
    for d in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(d as u64);
        let mut params = ParamSet::new();
        let pipe = Pipeline::random(&mut rng, &mut params);
        let (_, pattern, spans, grads) = pipe.run(&params, true)?;
        let sizes: Vec<usize> = params.iter().map(|(_, _, t)| t.len()).collect();
        let total: usize = sizes.iter().sum();
        for _ in 0..coords_per_draw {
            let mut flat = rng.gen_range(0..total);
            let mut p = 0;
            while flat >= sizes[p] {
                flat -= sizes[p];
                p += 1;
            }
            let analytic = grads[p].as_ref().map_or(0.0, |g| g.data()[flat]);
            let mut plus = params.clone();
            plus.tensors_mut()[p].data_mut()[flat] += STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[p].data_mut()[flat] -= STEP;
            let (fp, pp, sp, _) = pipe.run(&plus, false)?;
            let (fm, pm, sm, _) = pipe.run(&minus, false)?;
            if pp != pattern || pm != pattern || sp != spans || sm != spans {
                res.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * STEP);
            res.max_error = res.max_error.max(rel_error(analytic, numeric));
            res.coordinates += 1;
        }
    }
    Ok(res)
}

/// The full battery: every op plus the pipeline.
pub fn run_battery(draws: usize, seed: u64) -> Result<Vec<CheckResult>, AutodiffError> {
    let mut out = check_ops(draws, seed)?;
    out.push(check_pipeline(draws, 40, seed)?);
    Ok(out)
}
