//! Sentence encoder: token vectors, learned positions, a factored
//! self-attention stack, and fencepost (boundary) representations.
//!
//! Every hidden row is split into a content half and a position half. The
//! position half starts as the learned position embedding, and each
//! projection (queries, keys, values, output, feed-forward) is block-diagonal
//! over the two halves, so position information can only influence content
//! through attention weights.

pub mod subword;
pub mod vectors;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Binding, NodeId, ParamSet, Tape, Tensor};
pub use subword::toy_subword_tokenize;
pub use vectors::{
    align_last_subword, align_subwords, ContextVectorRecord, ContextVectors, StaticVectors,
    SubwordPick, VectorError,
};

/// Row index of the START boundary token in `enc.boundary_emb`.
const START: usize = 0;
const STOP: usize = 1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty sentence")]
    EmptySentence,
    #[error("no external vectors for sentence {0:?}")]
    MissingVectors(String),
    #[error("sentence of {len} words exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Vectors(#[from] VectorError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Source of token vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VectorMode {
    /// Learned word embeddings only.
    #[default]
    Scratch,
    /// Projected static word vectors.
    Static,
    /// Projected contextual subword vectors, aligned to words.
    Context,
}

impl std::str::FromStr for VectorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scratch" => Ok(VectorMode::Scratch),
            "static" | "static_vectors" => Ok(VectorMode::Static),
            "context" | "context_vectors" => Ok(VectorMode::Context),
            other => Err(format!("unknown mode {other:?} (expected scratch|static|context)")),
        }
    }
}

impl std::fmt::Display for VectorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VectorMode::Scratch => "scratch",
            VectorMode::Static => "static",
            VectorMode::Context => "context",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub mode: VectorMode,
    /// Width of external vectors (0 in scratch mode).
    pub d_ext: usize,
    /// Add learned word embeddings to projected external vectors.
    pub word_embeddings: bool,
    pub lowercase: bool,
    pub subword_pick: SubwordPick,
    pub max_len: usize,
    pub layer_norm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            num_layers: 2,
            d_model: 256,
            num_heads: 8,
            d_ff: 512,
            dropout: 0.1,
            mode: VectorMode::Scratch,
            d_ext: 0,
            word_embeddings: false,
            lowercase: false,
            subword_pick: SubwordPick::Last,
            max_len: 512,
            layer_norm_eps: 1e-6,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::InvalidConfig(m.to_string()));
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if self.d_model == 0 || !self.d_model.is_multiple_of(4) {
            return bad("d_model must be a positive multiple of 4");
        }
        if self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            return bad("num_heads must divide d_model");
        }
        if !(self.d_model / self.num_heads).is_multiple_of(2) {
            return bad("per-head width d_model/num_heads must be even");
        }
        if self.d_ff < 2 || !self.d_ff.is_multiple_of(2) {
            return bad("d_ff must be even and at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.mode != VectorMode::Scratch && self.d_ext == 0 {
            return bad("vector modes need d_ext > 0");
        }
        if self.max_len < 3 {
            return bad("max_len must be at least 3");
        }
        Ok(())
    }

    pub fn uses_word_embeddings(&self) -> bool {
        self.mode == VectorMode::Scratch || self.word_embeddings
    }

    fn half(&self) -> usize {
        self.d_model / 2
    }

    /// Per-head width within one half.
    fn head_half(&self) -> usize {
        self.d_model / self.num_heads / 2
    }
}

/// Fencepost rows `0..=n` of a sentence, `(n + 1, d_model)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRepr(pub Tensor);

impl BoundaryRepr {
    pub fn rows(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[1]
    }

    /// Forward half of fencepost `k`.
    pub fn forward(&self, k: usize) -> &[f64] {
        let h = self.width() / 2;
        &self.0.row(k)[..h]
    }

    /// Backward half of fencepost `k`.
    pub fn backward(&self, k: usize) -> &[f64] {
        let h = self.width() / 2;
        &self.0.row(k)[h..]
    }
}

/// What the encoder sees for one sentence.
#[derive(Clone, Debug, Default)]
pub struct EncoderInput {
    /// Word vocabulary ids, one per word (ignored unless word embeddings are on).
    pub word_ids: Vec<usize>,
    /// `(n, d_ext)` external vectors, already aligned to words.
    pub external: Option<Tensor>,
}

impl EncoderInput {
    pub fn len(&self) -> usize {
        self.word_ids
            .len()
            .max(self.external.as_ref().map(|e| e.shape()[0]).unwrap_or(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-a..a));
    t
}

fn layer_prefix(l: usize) -> String {
    format!("enc.l{l}")
}

/// Registers freshly initialized encoder parameters (names prefixed `enc.`).
pub fn init_params(params: &mut ParamSet, cfg: &EncoderConfig, vocab_size: usize, rng: &mut impl Rng) {
    let (d, half, hh) = (cfg.d_model, cfg.half(), cfg.head_half());
    let inner = cfg.num_heads * hh;
    let ff = cfg.d_ff / 2;
    if cfg.uses_word_embeddings() {
        params.insert("enc.word_emb", uniform(rng, &[vocab_size, half], 1, half));
    }
    if cfg.mode != VectorMode::Scratch {
        params.insert("enc.proj", uniform(rng, &[cfg.d_ext, half], cfg.d_ext, half));
    }
    params.insert("enc.boundary_emb", uniform(rng, &[2, half], 1, half));
    params.insert("enc.pos_emb", uniform(rng, &[cfg.max_len, half], 1, half));
    params.insert("enc.ln0.gain", Tensor::filled(&[d], 1.0));
    params.insert("enc.ln0.bias", Tensor::zeros(&[d]));
    for l in 0..cfg.num_layers {
        let p = layer_prefix(l);
        for part in ["c", "p"] {
            for m in ["q", "k", "v"] {
                params.insert(format!("{p}.attn.{m}_{part}"), uniform(rng, &[half, inner], half, inner));
            }
            params.insert(format!("{p}.attn.o_{part}"), uniform(rng, &[inner, half], inner, half));
            params.insert(format!("{p}.ff_{part}.w1"), uniform(rng, &[half, ff], half, ff));
            params.insert(format!("{p}.ff_{part}.b1"), Tensor::zeros(&[ff]));
            params.insert(format!("{p}.ff_{part}.w2"), uniform(rng, &[ff, half], ff, half));
            params.insert(format!("{p}.ff_{part}.b2"), Tensor::zeros(&[half]));
        }
        for ln in ["ln1", "ln2"] {
            params.insert(format!("{p}.{ln}.gain"), Tensor::filled(&[d], 1.0));
            params.insert(format!("{p}.{ln}.bias"), Tensor::zeros(&[d]));
        }
    }
}

/// Right-multiplies external vectors by the learned projection (no bias).
pub fn project(tape: &mut Tape, bind: &mut Binding, external: NodeId) -> Result<NodeId, EncoderError> {
    let w = bind.named(tape, "enc.proj")?;
    Ok(tape.matmul(external, w)?)
}

fn dropout(
    tape: &mut Tape,
    x: NodeId,
    p: f64,
    rng: &mut Option<&mut dyn RngCore>,
) -> Result<NodeId, EncoderError> {
    let Some(rng) = rng.as_mut() else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let mut mask = Tensor::zeros(tape.value(x).shape());
    for m in mask.data_mut() {
        *m = if rng.gen::<f64>() < p { 0.0 } else { keep };
    }
    Ok(tape.dropout(x, mask)?)
}

fn affine_norm(tape: &mut Tape, bind: &mut Binding, x: NodeId, name: &str, eps: f64) -> Result<NodeId, EncoderError> {
    let n = tape.layer_norm(x, eps)?;
    let g = bind.named(tape, &format!("{name}.gain"))?;
    let b = bind.named(tape, &format!("{name}.bias"))?;
    let scaled = tape.mul(n, g)?;
    Ok(tape.add(scaled, b)?)
}

fn attention(
    tape: &mut Tape,
    bind: &mut Binding,
    cfg: &EncoderConfig,
    x: NodeId,
    p: &str,
) -> Result<NodeId, EncoderError> {
    let (half, hh) = (cfg.half(), cfg.head_half());
    let xc = tape.slice(x, 0, half)?;
    let xp = tape.slice(x, half, cfg.d_model)?;
    let mut proj = |tape: &mut Tape, src: NodeId, name: String| -> Result<NodeId, EncoderError> {
        let w = bind.named(tape, &name)?;
        Ok(tape.matmul(src, w)?)
    };
    let qc = proj(tape, xc, format!("{p}.attn.q_c"))?;
    let kc = proj(tape, xc, format!("{p}.attn.k_c"))?;
    let vc = proj(tape, xc, format!("{p}.attn.v_c"))?;
    let qp = proj(tape, xp, format!("{p}.attn.q_p"))?;
    let kp = proj(tape, xp, format!("{p}.attn.k_p"))?;
    let vp = proj(tape, xp, format!("{p}.attn.v_p"))?;
    let scale = 1.0 / ((2 * hh) as f64).sqrt();
    let mut heads_c = Vec::with_capacity(cfg.num_heads);
    let mut heads_p = Vec::with_capacity(cfg.num_heads);
    for h in 0..cfg.num_heads {
        let (a, b) = (h * hh, (h + 1) * hh);
        let q = {
            let c = tape.slice(qc, a, b)?;
            let pp = tape.slice(qp, a, b)?;
            tape.concat(&[c, pp])?
        };
        let k = {
            let c = tape.slice(kc, a, b)?;
            let pp = tape.slice(kp, a, b)?;
            tape.concat(&[c, pp])?
        };
        let kt = tape.transpose(k)?;
        let logits = tape.matmul(q, kt)?;
        let logits = tape.scale(logits, scale);
        let weights = tape.softmax(logits);
        let v_c = tape.slice(vc, a, b)?;
        let v_p = tape.slice(vp, a, b)?;
        heads_c.push(tape.matmul(weights, v_c)?);
        heads_p.push(tape.matmul(weights, v_p)?);
    }
    let oc = tape.concat(&heads_c)?;
    let op = tape.concat(&heads_p)?;
    let wo_c = bind.named(tape, &format!("{p}.attn.o_c"))?;
    let wo_p = bind.named(tape, &format!("{p}.attn.o_p"))?;
    let out_c = tape.matmul(oc, wo_c)?;
    let out_p = tape.matmul(op, wo_p)?;
    Ok(tape.concat(&[out_c, out_p])?)
}

fn feed_forward(
    tape: &mut Tape,
    bind: &mut Binding,
    cfg: &EncoderConfig,
    x: NodeId,
    p: &str,
) -> Result<NodeId, EncoderError> {
    let half = cfg.half();
    let mut parts = Vec::with_capacity(2);
    for (part, (a, b)) in [("c", (0, half)), ("p", (half, cfg.d_model))] {
        let xs = tape.slice(x, a, b)?;
        let w1 = bind.named(tape, &format!("{p}.ff_{part}.w1"))?;
        let b1 = bind.named(tape, &format!("{p}.ff_{part}.b1"))?;
        let w2 = bind.named(tape, &format!("{p}.ff_{part}.w2"))?;
        let b2 = bind.named(tape, &format!("{p}.ff_{part}.b2"))?;
        let h = tape.matmul(xs, w1)?;
        let h = tape.add(h, b1)?;
        let h = tape.relu(h);
        let o = tape.matmul(h, w2)?;
        parts.push(tape.add(o, b2)?);
    }
    Ok(tape.concat(&parts)?)
}

/// Runs the stack over `[START] words [STOP]`, returning `(n + 2, d_model)`
/// token outputs. Dropout is applied only when `rng` is given.
pub fn encode_tokens(
    tape: &mut Tape,
    bind: &mut Binding,
    cfg: &EncoderConfig,
    input: &EncoderInput,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<NodeId, EncoderError> {
    let n = input.len();
    if n == 0 {
        return Err(EncoderError::EmptySentence);
    }
    if n + 2 > cfg.max_len {
        return Err(EncoderError::TooLong {
            len: n,
            max: cfg.max_len - 2,
        });
    }
    let half = cfg.half();

    let mut content: Option<NodeId> = None;
    if cfg.uses_word_embeddings() {
        let table = bind.named(tape, "enc.word_emb")?;
        content = Some(tape.embedding_lookup(table, &input.word_ids)?);
    }
    if cfg.mode != VectorMode::Scratch {
        let ext = input
            .external
            .as_ref()
            .ok_or_else(|| EncoderError::MissingVectors(String::new()))?;
        if ext.shape() != [n, cfg.d_ext] {
            return Err(AutodiffError::ShapeMismatch {
                op: "project",
                got: ext.shape().to_vec(),
                expected: vec![n, cfg.d_ext],
            }
            .into());
        }
        let ext = tape.constant(ext.clone());
        let projected = project(tape, bind, ext)?;
        content = Some(match content {
            Some(c) => tape.add(c, projected)?,
            None => projected,
        });
    }
    let content = content.expect("scratch mode always has word embeddings");
    let boundary = bind.named(tape, "enc.boundary_emb")?;
    let start = tape.gather(boundary, &[START])?;
    let stop = tape.gather(boundary, &[STOP])?;
    let tokens = tape_rows_concat(tape, &[start, content, stop])?;
    let tokens = dropout(tape, tokens, cfg.dropout, &mut rng)?;
    let pos_table = bind.named(tape, "enc.pos_emb")?;
    let positions: Vec<usize> = (0..n + 2).collect();
    let pos = tape.embedding_lookup(pos_table, &positions)?;
    let x = tape.concat(&[tokens, pos])?;
    debug_assert_eq!(tape.value(x).shape(), [n + 2, 2 * half]);
    let mut x = affine_norm(tape, bind, x, "enc.ln0", cfg.layer_norm_eps)?;

    for l in 0..cfg.num_layers {
        let p = layer_prefix(l);
        let a = attention(tape, bind, cfg, x, &p)?;
        let a = dropout(tape, a, cfg.dropout, &mut rng)?;
        let r = tape.add(x, a)?;
        x = affine_norm(tape, bind, r, &format!("{p}.ln1"), cfg.layer_norm_eps)?;
        let f = feed_forward(tape, bind, cfg, x, &p)?;
        let f = dropout(tape, f, cfg.dropout, &mut rng)?;
        let r = tape.add(x, f)?;
        x = affine_norm(tape, bind, r, &format!("{p}.ln2"), cfg.layer_norm_eps)?;
    }
    Ok(x)
}

/// Stacks 2-D nodes with equal widths vertically.
fn tape_rows_concat(tape: &mut Tape, parts: &[NodeId]) -> Result<NodeId, EncoderError> {
    // Vertical stacking as transpose / concat-last-dim / transpose keeps the op
    // set small.
    let mut ts = Vec::with_capacity(parts.len());
    for &p in parts {
        ts.push(tape.transpose(p)?);
    }
    let joined = tape.concat(&ts)?;
    Ok(tape.transpose(joined)?)
}

/// Converts `(n + 2, d)` token outputs into `(n + 1, d)` fenceposts.
///
/// Each token row is regrouped as forward = (first half of content, first half
/// of position) and backward = (second halves); fencepost `k` joins the forward
/// half of token `k` with the backward half of token `k + 1`.
pub fn fenceposts(tape: &mut Tape, cfg: &EncoderConfig, tokens: NodeId) -> Result<NodeId, EncoderError> {
    let t = tape.value(tokens).shape()[0];
    let (d, half) = (cfg.d_model, cfg.half());
    let q = half / 2;
    let fc = tape.slice(tokens, 0, q)?;
    let fp = tape.slice(tokens, half, half + q)?;
    let bc = tape.slice(tokens, q, half)?;
    let bp = tape.slice(tokens, half + q, d)?;
    let fwd = tape.concat(&[fc, fp])?;
    let bwd = tape.concat(&[bc, bp])?;
    let left: Vec<usize> = (0..t - 1).collect();
    let right: Vec<usize> = (1..t).collect();
    let f = tape.gather(fwd, &left)?;
    let b = tape.gather(bwd, &right)?;
    Ok(tape.concat(&[f, b])?)
}

/// Full pipeline: tokens through the stack, then fenceposts.
pub fn encode(
    tape: &mut Tape,
    bind: &mut Binding,
    cfg: &EncoderConfig,
    input: &EncoderInput,
    rng: Option<&mut dyn RngCore>,
) -> Result<NodeId, EncoderError> {
    let tokens = encode_tokens(tape, bind, cfg, input, rng)?;
    fenceposts(tape, cfg, tokens)
}

/// Inference-only encoding into a plain [`BoundaryRepr`].
pub fn encode_sentence(
    params: &ParamSet,
    cfg: &EncoderConfig,
    input: &EncoderInput,
) -> Result<BoundaryRepr, EncoderError> {
    let mut tape = Tape::new();
    let mut bind = Binding::new(params, false);
    let node = encode(&mut tape, &mut bind, cfg, input, None)?;
    Ok(BoundaryRepr(tape.value(node).clone()))
}
