//! Per-span label scores `s(i, j, l)` from fencepost representations.
//!
//! A span `(i, j)` is represented by `concat(f_j - f_i, b_i - b_j)` over the
//! forward/backward halves of its boundary rows, then scored by a
//! two-layer ReLU MLP owned by one language. Column 0 is the empty label and
//! is pinned to zero.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Binding, NodeId, ParamSet, Tape, Tensor};
use crate::encoder::BoundaryRepr;
use crate::treebank::{Label, SpanSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("span ({start},{end}) out of range for length {length}")]
    IndexOutOfRange {
        start: usize,
        end: usize,
        length: usize,
    },
    #[error("label {0} not in the head's vocabulary")]
    UnknownLabel(String),
    #[error("charts have different label vocabularies")]
    VocabMismatch,
    #[error("charts have different sentence lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no charts to ensemble")]
    EmptyEnsemble,
    #[error("score table has {got} entries, expected {expected}")]
    BadTable { got: usize, expected: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Number of spans `0 <= i < j <= n`.
pub fn num_spans(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of span `(i, j)` in the `(i asc, j asc)` enumeration.
pub fn span_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j <= n);
    i * (2 * n - i + 1) / 2 + (j - i - 1)
}

/// All spans in [`span_index`] order.
pub fn span_list(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(num_spans(n));
    for i in 0..n {
        for j in i + 1..=n {
            out.push((i, j));
        }
    }
    out
}

/// Label inventory of one language; index 0 is always the empty label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVocab {
    labels: Vec<Label>,
    index: HashMap<Label, usize>,
}

impl LabelVocab {
    /// Sorted, de-duplicated labels after the empty label.
    pub fn new(labels: impl IntoIterator<Item = Label>) -> Self {
        let mut named: Vec<Label> = labels.into_iter().filter(|l| !l.is_empty_marker()).collect();
        named.sort();
        named.dedup();
        let mut all = vec![Label::Empty];
        all.extend(named);
        let index = all.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        LabelVocab { labels: all, index }
    }

    /// `L - 1` placeholder labels `L1, L2, ...` (for tests and tools).
    pub fn synthetic(num_labels: usize) -> Self {
        let mut labels = vec![Label::Empty];
        for k in 1..num_labels {
            labels.push(Label::new(&format!("L{k}")).expect("valid"));
        }
        let index = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        LabelVocab { labels, index }
    }

    pub fn from_strings(names: &[String]) -> Result<Self, String> {
        let labels = names.iter().map(|n| Label::new(n)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(labels))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.len() <= 1
    }

    pub fn get(&self, idx: usize) -> &Label {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Named labels (excluding the empty label) as strings.
    pub fn names(&self) -> Vec<String> {
        self.labels[1..].iter().map(|l| l.to_string()).collect()
    }
}

/// Dense score table for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreChart {
    n: usize,
    vocab: Arc<LabelVocab>,
    scores: Vec<f64>,
}

impl ScoreChart {
    /// `scores` is laid out span-major in [`span_index`] order; the empty
    /// column is overwritten with 0.
    pub fn new(n: usize, vocab: Arc<LabelVocab>, mut scores: Vec<f64>) -> Result<Self, ScorerError> {
        let expected = num_spans(n) * vocab.len();
        if scores.len() != expected {
            return Err(ScorerError::BadTable {
                got: scores.len(),
                expected,
            });
        }
        let l = vocab.len();
        for row in scores.chunks_mut(l) {
            row[0] = 0.0;
        }
        Ok(ScoreChart { n, vocab, scores })
    }

    pub fn from_fn(n: usize, vocab: Arc<LabelVocab>, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let l = vocab.len();
        let mut scores = Vec::with_capacity(num_spans(n) * l);
        for (i, j) in span_list(n) {
            for k in 0..l {
                scores.push(if k == 0 { 0.0 } else { f(i, j, k) });
            }
        }
        ScoreChart { n, vocab, scores }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_labels(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &Arc<LabelVocab> {
        &self.vocab
    }

    pub fn get(&self, i: usize, j: usize, label: usize) -> f64 {
        self.scores[span_index(self.n, i, j) * self.vocab.len() + label]
    }

    /// Sets a non-empty cell; writes to column 0 are ignored.
    pub fn set(&mut self, i: usize, j: usize, label: usize, value: f64) {
        if label != 0 {
            let l = self.vocab.len();
            self.scores[span_index(self.n, i, j) * l + label] = value;
        }
    }

    pub fn span_scores(&self, i: usize, j: usize) -> &[f64] {
        let l = self.vocab.len();
        let k = span_index(self.n, i, j);
        &self.scores[k * l..(k + 1) * l]
    }

    pub fn raw(&self) -> &[f64] {
        &self.scores
    }

    /// Debug dump: one `i j label score` line per cell.
    pub fn dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (i, j) in span_list(self.n) {
            for (k, s) in self.span_scores(i, j).iter().enumerate() {
                writeln!(w, "{i} {j} {} {s}", self.vocab.get(k))?;
            }
        }
        Ok(())
    }
}

/// Span vector `concat(f_j - f_i, b_i - b_j)`.
pub fn span_vector(repr: &BoundaryRepr, i: usize, j: usize) -> Result<Vec<f64>, ScorerError> {
    let n = repr.rows().saturating_sub(1);
    if i >= j || j > n {
        return Err(ScorerError::IndexOutOfRange {
            start: i,
            end: j,
            length: n,
        });
    }
    let mut v: Vec<f64> = repr.forward(j).iter().zip(repr.forward(i)).map(|(a, b)| a - b).collect();
    v.extend(repr.backward(i).iter().zip(repr.backward(j)).map(|(a, b)| a - b));
    Ok(v)
}

/// One language's MLP span classifier. Parameters live in the model's
/// [`ParamSet`] under `head.<language>.`.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageHead {
    pub language: String,
    pub vocab: Arc<LabelVocab>,
}

impl LanguageHead {
    pub fn new(language: impl Into<String>, vocab: LabelVocab) -> Self {
        LanguageHead {
            language: language.into(),
            vocab: Arc::new(vocab),
        }
    }

    pub fn prefix(&self) -> String {
        format!("head.{}.", self.language)
    }

    fn name(&self, part: &str) -> String {
        format!("head.{}.{part}", self.language)
    }

    pub fn init_params(&self, params: &mut ParamSet, d_model: usize, d_hidden: usize, rng: &mut impl Rng) {
        let l = self.vocab.len();
        let a1 = (6.0 / (d_model + d_hidden) as f64).sqrt();
        let a2 = (6.0 / (d_hidden + l) as f64).sqrt();
        let mut w1 = Tensor::zeros(&[d_model, d_hidden]);
        w1.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-a1..a1));
        let mut w2 = Tensor::zeros(&[d_hidden, l]);
        w2.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-a2..a2));
        params.insert(self.name("w1"), w1);
        params.insert(self.name("b1"), Tensor::zeros(&[d_hidden]));
        params.insert(self.name("w2"), w2);
        params.insert(self.name("b2"), Tensor::zeros(&[l]));
    }

    pub fn parameter_count(&self, params: &ParamSet) -> usize {
        params.count_with_prefix(&self.prefix())
    }

    /// Records `(num_spans, L)` scores for every span of the sentence whose
    /// fenceposts are `fence`.
    pub fn score_node(&self, tape: &mut Tape, bind: &mut Binding, fence: NodeId) -> Result<NodeId, ScorerError> {
        let shape = tape.value(fence).shape().to_vec();
        let (rows, d) = (shape[0], shape[1]);
        let w1 = bind.named(tape, &self.name("w1"))?;
        if tape.value(w1).shape()[0] != d {
            return Err(AutodiffError::ShapeMismatch {
                op: "score_chart",
                got: vec![d],
                expected: vec![tape.value(w1).shape()[0]],
            }
            .into());
        }
        let n = rows - 1;
        let spans = span_list(n);
        let starts: Vec<usize> = spans.iter().map(|s| s.0).collect();
        let ends: Vec<usize> = spans.iter().map(|s| s.1).collect();
        let h = d / 2;
        let fwd = tape.slice(fence, 0, h)?;
        let bwd = tape.slice(fence, h, d)?;
        let fj = tape.gather(fwd, &ends)?;
        let fi = tape.gather(fwd, &starts)?;
        let bi = tape.gather(bwd, &starts)?;
        let bj = tape.gather(bwd, &ends)?;
        let df = tape.sub(fj, fi)?;
        let db = tape.sub(bi, bj)?;
        let v = tape.concat(&[df, db])?;
        let b1 = bind.named(tape, &self.name("b1"))?;
        let w2 = bind.named(tape, &self.name("w2"))?;
        let b2 = bind.named(tape, &self.name("b2"))?;
        let hidden = tape.matmul(v, w1)?;
        let hidden = tape.add(hidden, b1)?;
        let hidden = tape.relu(hidden);
        let out = tape.matmul(hidden, w2)?;
        let out = tape.add(out, b2)?;
        let l = self.vocab.len();
        let mut mask = Tensor::filled(&[l], 1.0);
        mask.data_mut()[0] = 0.0;
        let mask = tape.constant(mask);
        Ok(tape.mul(out, mask)?)
    }

    pub fn chart_from_node(&self, tape: &Tape, node: NodeId) -> Result<ScoreChart, ScorerError> {
        let v = tape.value(node);
        let n_spans = v.shape()[0];
        // invert n(n+1)/2 = n_spans
        let n = (((8 * n_spans + 1) as f64).sqrt() as usize - 1) / 2;
        ScoreChart::new(n, self.vocab.clone(), v.data().to_vec())
    }
}

/// Scores every span of a sentence with `head` (inference only).
pub fn score_chart(repr: &BoundaryRepr, head: &LanguageHead, params: &ParamSet) -> Result<ScoreChart, ScorerError> {
    let mut tape = Tape::new();
    let mut bind = Binding::new(params, false);
    let fence = tape.constant(repr.0.clone());
    let node = head.score_node(&mut tape, &mut bind, fence)?;
    head.chart_from_node(&tape, node)
}

/// `s(T)`: sum of the chart cells of the tree's spans; empty-label spans add 0.
pub fn tree_score(chart: &ScoreChart, spans: &SpanSet) -> Result<f64, ScorerError> {
    let mut total = 0.0;
    for s in &spans.spans {
        if s.start >= s.end || s.end > chart.len() {
            return Err(ScorerError::IndexOutOfRange {
                start: s.start,
                end: s.end,
                length: chart.len(),
            });
        }
        if s.label.is_empty_marker() {
            continue;
        }
        let k = chart
            .vocab()
            .index_of(&s.label)
            .ok_or_else(|| ScorerError::UnknownLabel(s.label.to_string()))?;
        total += chart.get(s.start, s.end, k);
    }
    Ok(total)
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Cellwise mean of `k` charts over the same sentence and label vocabulary.
///
/// Cells are summed pairwise in chart order, so `k` identical charts with
/// `k` a power of two average back to the exact input.
pub fn ensemble_chart(charts: &[ScoreChart]) -> Result<ScoreChart, ScorerError> {
    let first = charts.first().ok_or(ScorerError::EmptyEnsemble)?;
    for c in &charts[1..] {
        if c.n != first.n {
            return Err(ScorerError::LengthMismatch(first.n, c.n));
        }
        if !Arc::ptr_eq(&c.vocab, &first.vocab) && *c.vocab != *first.vocab {
            return Err(ScorerError::VocabMismatch);
        }
    }
    let k = charts.len() as f64;
    let mut cell = vec![0.0; charts.len()];
    let scores = (0..first.scores.len())
        .map(|idx| {
            for (slot, c) in cell.iter_mut().zip(charts) {
                *slot = c.scores[idx];
            }
            pairwise_sum(&cell) / k
        })
        .collect();
    ScoreChart::new(first.n, first.vocab.clone(), scores)
}
