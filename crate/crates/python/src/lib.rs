//! Python bindings: trees, score charts and decoding, evaluation, sampling
//! and trained parsers.

use std::collections::HashSet;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use spanparse::decoder::{brute_force_decode, cky_decode, Decoded};
use spanparse::evaluation::{self, default_ignore_labels, labeled_prf};
use spanparse::model::ParserModel;
use spanparse::scorer::{self, LabelVocab, ScoreChart};
use spanparse::training::SamplerConfig;
use spanparse::treebank::{self, TaggedWord, Treebank};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A bracketed constituency tree.
#[pyclass(module = "spanparse_py", from_py_object)]
#[derive(Clone)]
struct Tree {
    inner: treebank::Tree,
}

#[pymethods]
impl Tree {
    /// Parses one tree from bracketed text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Tree> {
        let mut trees = treebank::parse_bracketed(text).map_err(err)?;
        if trees.len() != 1 {
            return Err(err(format!("expected one tree, found {}", trees.len())));
        }
        Ok(Tree { inner: trees.remove(0) })
    }

    fn words(&self) -> Vec<String> {
        self.inner.words()
    }

    fn tags(&self) -> Vec<String> {
        self.inner.tagged_words().into_iter().map(|w| w.tag).collect()
    }

    /// Labeled spans `(start, end, label)` after unary collapse.
    fn spans(&self) -> Vec<(usize, usize, String)> {
        treebank::tree_to_spans(&treebank::collapse_unaries(&self.inner))
            .sorted()
            .into_iter()
            .map(|s| (s.start, s.end, s.label.to_string()))
            .collect()
    }

    fn collapse(&self) -> Tree {
        Tree {
            inner: treebank::collapse_unaries(&self.inner),
        }
    }

    fn expand(&self) -> Tree {
        Tree {
            inner: treebank::expand_unaries(&self.inner),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __str__(&self) -> String {
        treebank::serialize(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Tree({:?})", treebank::serialize(&self.inner))
    }

    fn __eq__(&self, other: &Tree) -> bool {
        self.inner == other.inner
    }
}

/// All trees in a bracketed text.
#[pyfunction]
fn parse_trees(text: &str) -> PyResult<Vec<Tree>> {
    Ok(treebank::parse_bracketed(text)
        .map_err(err)?
        .into_iter()
        .map(|inner| Tree { inner })
        .collect())
}

/// Span scores over `n` words with labels `0..num_labels`; label 0 is the
/// empty label and always scores 0.
#[pyclass(module = "spanparse_py", from_py_object)]
#[derive(Clone)]
struct Chart {
    inner: ScoreChart,
}

fn decoded(d: Decoded) -> (f64, Vec<(usize, usize, usize)>) {
    (d.score, d.spans)
}

#[pymethods]
impl Chart {
    /// `scores` is span-major in `span_list(n)` order, `num_labels` per span.
    #[new]
    fn new(n: usize, num_labels: usize, scores: Vec<f64>) -> PyResult<Chart> {
        let vocab = Arc::new(LabelVocab::synthetic(num_labels));
        Ok(Chart {
            inner: ScoreChart::new(n, vocab, scores).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_labels(&self) -> usize {
        self.inner.num_labels()
    }

    fn get(&self, i: usize, j: usize, label: usize) -> PyResult<f64> {
        if i >= j || j > self.inner.len() || label >= self.inner.num_labels() {
            return Err(err(format!("no cell ({i}, {j}, {label})")));
        }
        Ok(self.inner.get(i, j, label))
    }

    /// Best tree as `(score, [(start, end, label), ...])`.
    fn decode(&self) -> PyResult<(f64, Vec<(usize, usize, usize)>)> {
        cky_decode(&self.inner).map(decoded).map_err(err)
    }

    /// Exhaustive search; only for short sentences.
    fn brute_force(&self) -> PyResult<(f64, Vec<(usize, usize, usize)>)> {
        brute_force_decode(&self.inner).map(decoded).map_err(err)
    }
}

#[pyfunction]
fn span_list(n: usize) -> Vec<(usize, usize)> {
    scorer::span_list(n)
}

/// Cellwise mean of charts over the same sentence and labels.
#[pyfunction]
fn ensemble(charts: Vec<Chart>) -> PyResult<Chart> {
    let inner: Vec<ScoreChart> = charts.into_iter().map(|c| c.inner).collect();
    Ok(Chart {
        inner: scorer::ensemble_chart(&inner).map_err(err)?,
    })
}

fn treebank_of(text: &str) -> PyResult<Treebank> {
    Treebank::parse("py", text).map_err(err)
}

fn ignore_set(labels: Option<Vec<String>>) -> HashSet<String> {
    labels.map(|l| l.into_iter().collect()).unwrap_or_else(default_ignore_labels)
}

/// Labeled bracket scores of `pred` against `gold` (bracketed texts).
#[pyfunction]
#[pyo3(signature = (gold, pred, ignore_labels=None))]
fn evaluate(gold: &str, pred: &str, ignore_labels: Option<Vec<String>>) -> PyResult<EvalResult> {
    let r = labeled_prf(&treebank_of(gold)?, &treebank_of(pred)?, &ignore_set(ignore_labels)).map_err(err)?;
    Ok(EvalResult {
        precision: r.precision,
        recall: r.recall,
        f1: r.f1,
        exact_match: r.exact_match,
        matched: r.matched,
        gold: r.gold,
        predicted: r.predicted,
    })
}

#[pyclass(module = "spanparse_py", get_all)]
struct EvalResult {
    precision: f64,
    recall: f64,
    f1: f64,
    exact_match: f64,
    matched: usize,
    gold: usize,
    predicted: usize,
}

#[pymethods]
impl EvalResult {
    fn __repr__(&self) -> String {
        format!(
            "EvalResult(P={:.2}, R={:.2}, F1={:.2}, exact={:.2})",
            self.precision, self.recall, self.f1, self.exact_match
        )
    }
}

/// Paired bootstrap test that system A beats B; returns `(delta, p_value)`.
#[pyfunction]
#[pyo3(signature = (gold, pred_a, pred_b, resamples=10000, seed=0, ignore_labels=None))]
fn bootstrap(
    gold: &str,
    pred_a: &str,
    pred_b: &str,
    resamples: usize,
    seed: u64,
    ignore_labels: Option<Vec<String>>,
) -> PyResult<(f64, f64)> {
    let r = evaluation::bootstrap_significance(
        &treebank_of(gold)?,
        &treebank_of(pred_a)?,
        &treebank_of(pred_b)?,
        &ignore_set(ignore_labels),
        resamples,
        seed,
    )
    .map_err(err)?;
    Ok((r.delta, r.p_value))
}

#[pyfunction]
fn relative_error_delta(f1_base: f64, f1_new: f64) -> PyResult<f64> {
    evaluation::relative_error_delta(f1_base, f1_new).map_err(err)
}

/// Language sampling probabilities `f^a / sum f^a`.
#[pyfunction]
fn sampling_probabilities(fractions: Vec<f64>, exponent: f64) -> PyResult<Vec<f64>> {
    Ok(SamplerConfig::new(fractions, exponent).map_err(err)?.probabilities())
}

#[pyfunction]
fn toy_subword_tokenize(word: &str) -> Vec<String> {
    spanparse::encoder::toy_subword_tokenize(word)
}

/// A trained checkpoint.
#[pyclass(module = "spanparse_py")]
struct Parser {
    model: ParserModel,
}

impl Parser {
    fn language(&self, lang: Option<String>) -> PyResult<String> {
        match lang {
            Some(l) => Ok(l),
            None => match self.model.languages().as_slice() {
                [only] => Ok(only.clone()),
                many => Err(err(format!("lang required; model has {}", many.join(",")))),
            },
        }
    }
}

#[pymethods]
impl Parser {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Parser> {
        Ok(Parser {
            model: ParserModel::load(path).map_err(err)?,
        })
    }

    fn languages(&self) -> Vec<String> {
        self.model.languages()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.model.total_params()
    }

    #[pyo3(signature = (words, lang=None))]
    fn chart(&self, words: Vec<String>, lang: Option<String>) -> PyResult<Chart> {
        let lang = self.language(lang)?;
        let input = self.model.input(&words, None);
        Ok(Chart {
            inner: self.model.chart(&lang, &input).map_err(err)?,
        })
    }

    /// Parses pre-tokenized words; tags are taken from `tags` or set to `XX`.
    #[pyo3(signature = (words, lang=None, tags=None))]
    fn parse(&self, words: Vec<String>, lang: Option<String>, tags: Option<Vec<String>>) -> PyResult<Tree> {
        let lang = self.language(lang)?;
        let tags = tags.unwrap_or_else(|| vec!["XX".into(); words.len()]);
        if tags.len() != words.len() {
            return Err(err("tags and words differ in length"));
        }
        let tagged: Vec<TaggedWord> = words
            .into_iter()
            .zip(tags)
            .map(|(word, tag)| TaggedWord { word, tag })
            .collect();
        let tree = self.model.parse(&lang, &tagged, None).map_err(err)?;
        Ok(Tree {
            inner: treebank::expand_unaries(&tree),
        })
    }
}

#[pymodule]
fn spanparse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tree>()?;
    m.add_class::<Chart>()?;
    m.add_class::<EvalResult>()?;
    m.add_class::<Parser>()?;
    m.add_function(wrap_pyfunction!(parse_trees, m)?)?;
    m.add_function(wrap_pyfunction!(span_list, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error_delta, m)?)?;
    m.add_function(wrap_pyfunction!(sampling_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(toy_subword_tokenize, m)?)?;
    Ok(())
}
