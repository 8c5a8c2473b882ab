//! Labeled bracket scoring, paired bootstrap significance and relative error.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::treebank::{expand_unaries, Tree, Treebank};

pub const DEFAULT_IGNORE_LABELS: [&str; 4] = ["TOP", "ROOT", "VROOT", "S1"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("gold has {gold} sentences but prediction has {pred}")]
    SentenceCountMismatch { gold: usize, pred: usize },
    #[error("sentence {0}: gold and predicted token counts differ")]
    TokenCountMismatch(String),
    #[error("relative error is undefined for a base F1 of 100")]
    DegenerateBase,
    #[error("F1 value {0} outside [0, 100]")]
    OutOfRange(f64),
    #[error("need at least one resample")]
    NoResamples,
}

pub fn default_ignore_labels() -> HashSet<String> {
    DEFAULT_IGNORE_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Bracket counts for one sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SentenceCounts {
    pub matched: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl SentenceCounts {
    pub fn exact(&self) -> bool {
        self.matched == self.gold && self.matched == self.predicted
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub matched: usize,
    pub gold: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub exact_match: f64,
    pub sentences: Vec<SentenceCounts>,
}

impl EvalReport {
    pub fn from_counts(sentences: Vec<SentenceCounts>) -> Self {
        let (m, g, p) = sum_counts(sentences.iter());
        let (precision, recall, f1) = prf(m, g, p);
        let exact = sentences.iter().filter(|s| s.exact()).count();
        let exact_match = if sentences.is_empty() {
            0.0
        } else {
            100.0 * exact as f64 / sentences.len() as f64
        };
        EvalReport {
            matched: m,
            gold: g,
            predicted: p,
            precision,
            recall,
            f1,
            exact_match,
            sentences,
        }
    }

    /// `P=.. R=.. F1=.. exact=.. n=..` with two decimals.
    pub fn summary(&self) -> String {
        format!(
            "P={:.2} R={:.2} F1={:.2} exact={:.2} n={}",
            self.precision,
            self.recall,
            self.f1,
            self.exact_match,
            self.sentences.len()
        )
    }
}

fn sum_counts<'a>(it: impl Iterator<Item = &'a SentenceCounts>) -> (usize, usize, usize) {
    it.fold((0, 0, 0), |(m, g, p), s| (m + s.matched, g + s.gold, p + s.predicted))
}

/// Precision, recall and F1 in percent from corpus counts.
pub fn prf(matched: usize, gold: usize, predicted: usize) -> (f64, f64, f64) {
    let p = if predicted == 0 {
        0.0
    } else {
        100.0 * matched as f64 / predicted as f64
    };
    let r = if gold == 0 {
        0.0
    } else {
        100.0 * matched as f64 / gold as f64
    };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Multiset of `(start, end, label)` brackets. Preterminals are never
/// brackets; ignored labels are dropped when they span the whole sentence.
pub fn brackets(tree: &Tree, ignore: &HashSet<String>) -> HashMap<(usize, usize, String), usize> {
    fn walk(
        t: &Tree,
        offset: usize,
        n: usize,
        ignore: &HashSet<String>,
        out: &mut HashMap<(usize, usize, String), usize>,
    ) -> usize {
        match t {
            Tree::Leaf { .. } => 1,
            Tree::Internal { label, children } => {
                let mut width = 0;
                for c in children {
                    width += walk(c, offset + width, n, ignore, out);
                }
                let text = label.to_string();
                if !(width == n && ignore.contains(&text)) {
                    *out.entry((offset, offset + width, text)).or_insert(0) += 1;
                }
                width
            }
        }
    }
    let expanded = expand_unaries(tree);
    let mut out = HashMap::new();
    walk(&expanded, 0, expanded.len(), ignore, &mut out);
    out
}

pub fn sentence_counts(gold: &Tree, pred: &Tree, ignore: &HashSet<String>) -> SentenceCounts {
    let g = brackets(gold, ignore);
    let p = brackets(pred, ignore);
    let matched = g
        .iter()
        .map(|(k, &c)| c.min(p.get(k).copied().unwrap_or(0)))
        .sum();
    SentenceCounts {
        matched,
        gold: g.values().sum(),
        predicted: p.values().sum(),
    }
}

/// Corpus-level labeled precision/recall/F1 over aligned treebanks.
pub fn labeled_prf(gold: &Treebank, pred: &Treebank, ignore: &HashSet<String>) -> Result<EvalReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::SentenceCountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counts = Vec::with_capacity(gold.len());
    for ((id, g), (_, p)) in gold.entries.iter().zip(&pred.entries) {
        if g.len() != p.len() {
            return Err(EvalError::TokenCountMismatch(id.clone()));
        }
        counts.push(sentence_counts(g, p, ignore));
    }
    Ok(EvalReport::from_counts(counts))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapResult {
    pub p_value: f64,
    pub resamples: usize,
    /// F1(A) - F1(B) on the full corpus.
    pub delta: f64,
}

impl BootstrapResult {
    pub fn summary(&self) -> String {
        format!("delta={:.2} p={:.4} resamples={}", self.delta, self.p_value, self.resamples)
    }
}

/// Paired bootstrap over per-sentence counts: the fraction of resamples with
/// `delta* - delta >= delta`. Resample `r` draws from its own ChaCha stream,
/// so the result does not depend on thread scheduling.
pub fn bootstrap_from_counts(
    a: &[SentenceCounts],
    b: &[SentenceCounts],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::SentenceCountMismatch {
            gold: a.len(),
            pred: b.len(),
        });
    }
    if resamples == 0 {
        return Err(EvalError::NoResamples);
    }
    let f1 = |c: &[SentenceCounts]| {
        let (m, g, p) = sum_counts(c.iter());
        prf(m, g, p).2
    };
    let delta = f1(a) - f1(b);
    let n = a.len();
    let hits: usize = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let (mut ca, mut cb) = ((0, 0, 0), (0, 0, 0));
            for _ in 0..n {
                let k = rng.gen_range(0..n);
                ca = (ca.0 + a[k].matched, ca.1 + a[k].gold, ca.2 + a[k].predicted);
                cb = (cb.0 + b[k].matched, cb.1 + b[k].gold, cb.2 + b[k].predicted);
            }
            let d = prf(ca.0, ca.1, ca.2).2 - prf(cb.0, cb.1, cb.2).2;
            usize::from(d - delta >= delta)
        })
        .sum();
    Ok(BootstrapResult {
        p_value: hits as f64 / resamples as f64,
        resamples,
        delta,
    })
}

/// Paired bootstrap test that system A beats system B.
pub fn bootstrap_significance(
    gold: &Treebank,
    pred_a: &Treebank,
    pred_b: &Treebank,
    ignore: &HashSet<String>,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, EvalError> {
    let a = labeled_prf(gold, pred_a, ignore)?;
    let b = labeled_prf(gold, pred_b, ignore)?;
    bootstrap_from_counts(&a.sentences, &b.sentences, resamples, seed)
}

/// Percent change in error rate going from `f1_base` to `f1_new`.
pub fn relative_error_delta(f1_base: f64, f1_new: f64) -> Result<f64, EvalError> {
    for v in [f1_base, f1_new] {
        if !(0.0..=100.0).contains(&v) {
            return Err(EvalError::OutOfRange(v));
        }
    }
    if f1_base == 100.0 {
        return Err(EvalError::DegenerateBase);
    }
    let (e_base, e_new) = (100.0 - f1_base, 100.0 - f1_new);
    Ok((e_new - e_base) / e_base * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tb(text: &str) -> Treebank {
        Treebank::parse("x", text).unwrap()
    }

    #[test]
    fn hand_counted_pair() {
        let gold = tb("(S (NP (A a) (B b)) (C c))");
        let pred = tb("(S (A a) (VP (B b) (C c)))");
        let r = labeled_prf(&gold, &pred, &default_ignore_labels()).unwrap();
        assert_eq!((r.matched, r.gold, r.predicted), (1, 2, 2));
        assert_eq!((r.precision, r.recall, r.f1), (50.0, 50.0, 50.0));
        assert_eq!(r.exact_match, 0.0);
    }

    #[test]
    fn self_evaluation() {
        let gold = tb("(TOP (S (NP (A a) (B b)) (C c)))\n(S (X x) (Y y))");
        let r = labeled_prf(&gold, &gold, &default_ignore_labels()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.exact_match), (100.0, 100.0, 100.0, 100.0));
        assert_eq!(r.summary(), "P=100.00 R=100.00 F1=100.00 exact=100.00 n=2");
        // TOP root is not a bracket
        assert_eq!(r.gold, 3);
    }

    #[test]
    fn multiset_matching() {
        // gold: NP over (0,1) once; pred: a unary chain NP -> NP over (0,1)
        let gold = tb("(S (NP (A a)) (B b))");
        let pred = tb("(S (NP (NP (A a))) (B b))");
        let r = labeled_prf(&gold, &pred, &HashSet::new()).unwrap();
        assert_eq!((r.matched, r.gold, r.predicted), (2, 2, 3));
        let r = labeled_prf(&pred, &pred, &HashSet::new()).unwrap();
        assert_eq!(r.matched, 3);
        let r = labeled_prf(&pred, &gold, &HashSet::new()).unwrap();
        assert_eq!((r.matched, r.gold, r.predicted), (2, 3, 2));
    }

    #[test]
    fn mismatches_rejected() {
        let a = tb("(S (A a) (B b))");
        let b = tb("(S (A a))");
        assert!(matches!(
            labeled_prf(&a, &b, &HashSet::new()),
            Err(EvalError::TokenCountMismatch(_))
        ));
        let two = tb("(S (A a) (B b))\n(S (A a) (B b))");
        assert!(matches!(
            labeled_prf(&a, &two, &HashSet::new()),
            Err(EvalError::SentenceCountMismatch { gold: 1, pred: 2 })
        ));
    }

    #[test]
    fn relative_error() {
        let d = relative_error_delta(91.40, 91.12).unwrap();
        assert!((d - 3.255_813_953_488_4).abs() < 1e-9);
        assert_eq!(relative_error_delta(80.0, 80.0).unwrap(), 0.0);
        assert!((relative_error_delta(90.0, 95.0).unwrap() + 50.0).abs() < 1e-12);
        assert_eq!(relative_error_delta(100.0, 90.0), Err(EvalError::DegenerateBase));
        assert!(matches!(relative_error_delta(101.0, 90.0), Err(EvalError::OutOfRange(_))));
    }

    fn uniform_counts(n: usize, matched: usize, total: usize) -> Vec<SentenceCounts> {
        vec![
            SentenceCounts {
                matched,
                gold: total,
                predicted: total,
            };
            n
        ]
    }

    #[test]
    fn bootstrap_identical_systems() {
        let a = uniform_counts(20, 3, 5);
        let r = bootstrap_from_counts(&a, &a, 1000, 7).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.delta, 0.0);
    }

    #[test]
    fn bootstrap_dominant_system() {
        let a = uniform_counts(50, 4, 4);
        let b = uniform_counts(50, 2, 4);
        let r = bootstrap_from_counts(&a, &b, 10_000, 1).unwrap();
        assert!(r.p_value < 0.05);
        assert_eq!(r, bootstrap_from_counts(&a, &b, 10_000, 1).unwrap());
    }

    #[test]
    fn bootstrap_p_shrinks_with_separation() {
        // B alternates between perfect and imperfect sentences; A gains a
        // fixed number of matches on the imperfect ones.
        let b: Vec<SentenceCounts> = (0..40)
            .map(|i| SentenceCounts {
                matched: if i % 2 == 0 { 10 } else { 2 },
                gold: 10,
                predicted: 10,
            })
            .collect();
        let mut last = 1.0;
        for gap in 0..=4 {
            let a: Vec<SentenceCounts> = b
                .iter()
                .enumerate()
                .map(|(i, s)| SentenceCounts {
                    matched: if i % 2 == 0 { s.matched } else { s.matched + gap },
                    ..*s
                })
                .collect();
            let p = bootstrap_from_counts(&a, &b, 2000, 3).unwrap().p_value;
            assert!(p <= last, "gap {gap}: p={p} > {last}");
            last = p;
        }
    }

    fn counts_strategy() -> impl Strategy<Value = SentenceCounts> {
        (0usize..6, 0usize..6, 0usize..6).prop_map(|(m, g, p)| SentenceCounts {
            matched: m.min(g).min(p),
            gold: g,
            predicted: p,
        })
    }

    proptest! {
        #[test]
        fn swapping_gold_and_pred_swaps_p_and_r(counts in prop::collection::vec(counts_strategy(), 1..20)) {
            let swapped: Vec<_> = counts.iter().map(|c| SentenceCounts { matched: c.matched, gold: c.predicted, predicted: c.gold }).collect();
            let a = EvalReport::from_counts(counts);
            let b = EvalReport::from_counts(swapped);
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert_eq!(a.f1, b.f1);
        }

        #[test]
        fn rates_bounded(counts in prop::collection::vec(counts_strategy(), 0..20)) {
            let r = EvalReport::from_counts(counts);
            for v in [r.precision, r.recall, r.f1, r.exact_match] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }

        #[test]
        fn adding_a_match_never_lowers_f1(counts in prop::collection::vec(counts_strategy(), 1..20), k in 0usize..20) {
            let k = k % counts.len();
            let mut more = counts.clone();
            more[k].matched += 1;
            more[k].gold += 1;
            more[k].predicted += 1;
            prop_assert!(EvalReport::from_counts(more).f1 >= EvalReport::from_counts(counts).f1 - 1e-12);
        }

        #[test]
        fn unmatched_prediction_never_raises_precision(counts in prop::collection::vec(counts_strategy(), 1..20), k in 0usize..20) {
            let k = k % counts.len();
            let mut more = counts.clone();
            more[k].predicted += 1;
            prop_assert!(EvalReport::from_counts(more).precision <= EvalReport::from_counts(counts).precision + 1e-12);
        }
    }
}
