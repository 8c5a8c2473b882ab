//! Exact argmax over span-factored trees.
//!
//! A tree is a binary bracketing of `0..n` with one label per span; spans
//! labeled with the empty label (index 0) are dropped on output, which is how
//! n-ary trees arise. The root span `(0, n)` may not take the empty label.
//!
//! Ties resolve to the lowest split point, then the lowest label index.

use std::collections::HashMap;

use thiserror::Error;

use crate::scorer::{num_spans, span_index, ScoreChart};
use crate::treebank::{Label, LabeledSpan, SpanSet, TaggedWord, Tree, TreebankError};

/// Default upper bound on sentence length for the cubic chart.
pub const MAX_DECODE_LEN: usize = 300;

/// Longest sentence [`brute_force_decode`] accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("cannot decode an empty chart")]
    EmptyChart,
    #[error("sentence of length {n} exceeds the limit of {max}")]
    SentenceTooLong { n: usize, max: usize },
    #[error("gold span ({start},{end}) out of range for length {n}")]
    GoldOutOfRange { start: usize, end: usize, n: usize },
    #[error(transparent)]
    Treebank(#[from] TreebankError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartCell {
    pub score: f64,
    pub label: usize,
    /// `i < k < j`, or `None` for width-1 spans.
    pub split: Option<usize>,
}

/// A decoded binary tree as `(start, end, label index)` triples in pre-order.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub score: f64,
    pub n: usize,
    pub spans: Vec<(usize, usize, usize)>,
    labels: Vec<Label>,
}

impl Decoded {
    /// Non-empty labeled spans.
    pub fn span_set(&self) -> SpanSet {
        let spans = self
            .spans
            .iter()
            .filter(|s| s.2 != 0)
            .map(|&(i, j, l)| LabeledSpan::new(i, j, self.labels[l].clone()))
            .collect();
        SpanSet::new(self.n, spans)
    }

    /// Collapsed tree over `words`.
    pub fn tree(&self, words: &[TaggedWord]) -> Result<Tree, DecodeError> {
        Ok(crate::treebank::spans_to_tree(&self.span_set(), words)?)
    }
}

fn run_cky(n: usize, num_labels: usize, score: &impl Fn(usize, usize, usize) -> f64) -> Vec<ChartCell> {
    let mut cells = vec![
        ChartCell {
            score: f64::NEG_INFINITY,
            label: 0,
            split: None,
        };
        num_spans(n)
    ];
    for width in 1..=n {
        for i in 0..=n - width {
            let j = i + width;
            let is_root = i == 0 && j == n;
            let mut best_label = if is_root { 1 } else { 0 };
            let mut best_label_score = score(i, j, best_label);
            for l in best_label + 1..num_labels {
                let s = score(i, j, l);
                if s > best_label_score {
                    best_label_score = s;
                    best_label = l;
                }
            }
            let (total, split) = if width == 1 {
                (best_label_score, None)
            } else {
                let mut best_k = i + 1;
                let mut best_split = f64::NEG_INFINITY;
                for k in i + 1..j {
                    let s = cells[span_index(n, i, k)].score + cells[span_index(n, k, j)].score;
                    if s > best_split {
                        best_split = s;
                        best_k = k;
                    }
                }
                (best_label_score + best_split, Some(best_k))
            };
            cells[span_index(n, i, j)] = ChartCell {
                score: total,
                label: best_label,
                split,
            };
        }
    }
    cells
}

fn backtrack(cells: &[ChartCell], n: usize, i: usize, j: usize, out: &mut Vec<(usize, usize, usize)>) {
    let cell = cells[span_index(n, i, j)];
    out.push((i, j, cell.label));
    if let Some(k) = cell.split {
        backtrack(cells, n, i, k, out);
        backtrack(cells, n, k, j, out);
    }
}

fn check_chart(chart: &ScoreChart, max_len: usize) -> Result<(), DecodeError> {
    if chart.is_empty() || chart.num_labels() < 2 {
        return Err(DecodeError::EmptyChart);
    }
    if chart.len() > max_len {
        return Err(DecodeError::SentenceTooLong {
            n: chart.len(),
            max: max_len,
        });
    }
    Ok(())
}

fn decode_with(chart: &ScoreChart, score: impl Fn(usize, usize, usize) -> f64) -> Decoded {
    let n = chart.len();
    let cells = run_cky(n, chart.num_labels(), &score);
    let mut spans = Vec::with_capacity(2 * n - 1);
    backtrack(&cells, n, 0, n, &mut spans);
    let labels = (0..chart.num_labels()).map(|k| chart.vocab().get(k).clone()).collect();
    Decoded {
        score: cells[span_index(n, 0, n)].score,
        n,
        spans,
        labels,
    }
}

/// Highest-scoring tree under `chart`.
pub fn cky_decode(chart: &ScoreChart) -> Result<Decoded, DecodeError> {
    cky_decode_bounded(chart, MAX_DECODE_LEN)
}

pub fn cky_decode_bounded(chart: &ScoreChart, max_len: usize) -> Result<Decoded, DecodeError> {
    check_chart(chart, max_len)?;
    Ok(decode_with(chart, |i, j, l| chart.get(i, j, l)))
}

/// Unit Hamming cost of labeling `(i, j)` with `l` against a gold tree, where
/// non-gold spans carry the empty label.
pub struct HammingCost {
    gold: HashMap<(usize, usize), Option<usize>>,
}

impl HammingCost {
    pub fn new(chart: &ScoreChart, gold: &SpanSet) -> Result<Self, DecodeError> {
        let mut map = HashMap::new();
        for s in &gold.spans {
            if s.start >= s.end || s.end > chart.len() {
                return Err(DecodeError::GoldOutOfRange {
                    start: s.start,
                    end: s.end,
                    n: chart.len(),
                });
            }
            if !s.label.is_empty_marker() {
                map.insert((s.start, s.end), chart.vocab().index_of(&s.label));
            }
        }
        Ok(HammingCost { gold: map })
    }

    pub fn cost(&self, i: usize, j: usize, l: usize) -> f64 {
        match (self.gold.get(&(i, j)), l) {
            (None, 0) => 0.0,
            (None, _) => 1.0,
            (Some(_), 0) => 1.0,
            (Some(g), l) => {
                if *g == Some(l) {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Total cost of a decoded tree.
    pub fn tree_cost(&self, decoded: &Decoded) -> f64 {
        decoded.spans.iter().map(|&(i, j, l)| self.cost(i, j, l)).sum()
    }
}

/// Best tree under `s(i,j,l) + cost(i,j,l)`; the returned score includes the
/// cost term.
pub fn loss_augmented_decode(chart: &ScoreChart, gold: &SpanSet) -> Result<Decoded, DecodeError> {
    check_chart(chart, MAX_DECODE_LEN)?;
    let cost = HammingCost::new(chart, gold)?;
    Ok(decode_with(chart, |i, j, l| chart.get(i, j, l) + cost.cost(i, j, l)))
}

#[derive(Debug)]
enum Bracketing {
    Leaf(usize),
    Split {
        i: usize,
        j: usize,
        left: Box<Bracketing>,
        right: Box<Bracketing>,
    },
}

/// Every binary bracketing of `i..j`, splits in ascending order.
fn bracketings(i: usize, j: usize) -> Vec<Bracketing> {
    if j - i == 1 {
        return vec![Bracketing::Leaf(i)];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        let lefts = bracketings(i, k);
        let rights = bracketings(k, j);
        for l in &lefts {
            for r in &rights {
                out.push(Bracketing::Split {
                    i,
                    j,
                    left: Box::new(clone_bracketing(l)),
                    right: Box::new(clone_bracketing(r)),
                });
            }
        }
    }
    out
}

fn clone_bracketing(b: &Bracketing) -> Bracketing {
    match b {
        Bracketing::Leaf(i) => Bracketing::Leaf(*i),
        Bracketing::Split { i, j, left, right } => Bracketing::Split {
            i: *i,
            j: *j,
            left: Box::new(clone_bracketing(left)),
            right: Box::new(clone_bracketing(right)),
        },
    }
}

/// Number of binary bracketings of `n` tokens (the Catalan number `C(n-1)`).
pub fn count_bracketings(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        bracketings(0, n).len()
    }
}

/// Exhaustive search over all bracketings of `n` tokens. Given a bracketing
/// the objective separates over spans, so each span independently takes its
/// best label (empty excluded at the root).
pub fn brute_force_decode_with(
    n: usize,
    num_labels: usize,
    score: impl Fn(usize, usize, usize) -> f64,
) -> Result<(f64, Vec<(usize, usize, usize)>), DecodeError> {
    if n == 0 || num_labels < 2 {
        return Err(DecodeError::EmptyChart);
    }
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(DecodeError::SentenceTooLong {
            n,
            max: BRUTE_FORCE_MAX_LEN,
        });
    }
    let best_label = |i: usize, j: usize| {
        let first = if i == 0 && j == n { 1 } else { 0 };
        let mut best = (first, score(i, j, first));
        for l in first + 1..num_labels {
            let s = score(i, j, l);
            if s > best.1 {
                best = (l, s);
            }
        }
        best
    };
    fn evaluate(
        b: &Bracketing,
        best_label: &impl Fn(usize, usize) -> (usize, f64),
        out: &mut Vec<(usize, usize, usize)>,
    ) -> f64 {
        match b {
            Bracketing::Leaf(i) => {
                let (l, s) = best_label(*i, i + 1);
                out.push((*i, i + 1, l));
                s
            }
            Bracketing::Split { i, j, left, right } => {
                let (l, s) = best_label(*i, *j);
                out.push((*i, *j, l));
                let ls = evaluate(left, best_label, out);
                let rs = evaluate(right, best_label, out);
                s + (ls + rs)
            }
        }
    }
    let mut best: Option<(f64, Vec<(usize, usize, usize)>)> = None;
    for b in bracketings(0, n) {
        let mut spans = Vec::new();
        let total = evaluate(&b, &best_label, &mut spans);
        if best.as_ref().is_none_or(|(s, _)| total > *s) {
            best = Some((total, spans));
        }
    }
    Ok(best.expect("at least one bracketing"))
}

/// Exhaustive counterpart of [`cky_decode`] for `n <= 8`.
pub fn brute_force_decode(chart: &ScoreChart) -> Result<Decoded, DecodeError> {
    let (score, spans) = brute_force_decode_with(chart.len(), chart.num_labels(), |i, j, l| chart.get(i, j, l))?;
    let labels = (0..chart.num_labels()).map(|k| chart.vocab().get(k).clone()).collect();
    Ok(Decoded {
        score,
        n: chart.len(),
        spans,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{tree_score, LabelVocab};
    use crate::treebank::{parse_bracketed, serialize, tree_to_spans};
    use rand::{Rng, SeedableRng};
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn words(n: usize) -> Vec<TaggedWord> {
        (0..n)
            .map(|i| TaggedWord {
                word: format!("w{i}"),
                tag: "T".into(),
            })
            .collect()
    }

    fn random_chart(rng: &mut impl Rng, n: usize, l: usize) -> ScoreChart {
        ScoreChart::from_fn(n, Arc::new(LabelVocab::synthetic(l)), |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn single_word() {
        let vocab = Arc::new(LabelVocab::synthetic(3));
        let chart = ScoreChart::from_fn(1, vocab, |_, _, l| if l == 2 { -0.5 } else { -1.0 });
        let d = cky_decode(&chart).unwrap();
        assert_eq!(d.spans, vec![(0, 1, 2)]);
        assert_eq!(d.score, -0.5);
    }

    #[test]
    fn forced_optimum_recovers_gold() {
        let gold_tree = parse_bracketed("(S (NP (A a) (B b)) (VP (C c) (D d) (E e)))").unwrap().remove(0);
        let gold = tree_to_spans(&gold_tree);
        let vocab = Arc::new(LabelVocab::new(gold.spans.iter().map(|s| s.label.clone())));
        let chart = ScoreChart::from_fn(5, vocab.clone(), |i, j, l| {
            if gold.label_of(i, j) == Some(vocab.get(l)) {
                10.0
            } else {
                -10.0
            }
        });
        let d = cky_decode(&chart).unwrap();
        let tree = d.tree(&gold_tree.tagged_words()).unwrap();
        assert_eq!(serialize(&tree), serialize(&gold_tree));
        assert_eq!(tree_score(&chart, &d.span_set()).unwrap(), d.score);
    }

    #[test]
    fn catalan_counts() {
        let expected = [1, 1, 2, 5, 14, 42, 132, 429];
        for (n, &c) in (1..=8).zip(&expected) {
            assert_eq!(count_bracketings(n), c);
        }
    }

    #[test]
    fn brute_force_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let chart = random_chart(&mut rng, 9, 2);
        assert!(matches!(brute_force_decode(&chart), Err(DecodeError::SentenceTooLong { n: 9, .. })));
    }

    #[test]
    fn decode_limit_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let chart = random_chart(&mut rng, 6, 2);
        assert!(matches!(
            cky_decode_bounded(&chart, 5),
            Err(DecodeError::SentenceTooLong { n: 6, max: 5 })
        ));
    }

    #[test]
    fn cky_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let l = rng.gen_range(2..=4);
            let chart = random_chart(&mut rng, n, l);
            let a = cky_decode(&chart).unwrap();
            let b = brute_force_decode(&chart).unwrap();
            assert_eq!(a.score, b.score);
            assert_eq!(a.span_set().sorted(), b.span_set().sorted());
            let t = a.tree(&words(n)).unwrap();
            assert!((tree_score(&chart, &tree_to_spans(&t)).unwrap() - a.score).abs() < 1e-9);
        }
    }

    #[test]
    fn output_is_valid_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(1..=12);
            let chart = random_chart(&mut rng, n, 4);
            let d = cky_decode(&chart).unwrap();
            let root = d.spans[0];
            assert_eq!((root.0, root.1), (0, n));
            assert_ne!(root.2, 0);
            assert_eq!(d.spans.len(), 2 * n - 1);
            d.tree(&words(n)).unwrap();
        }
    }

    #[test]
    fn loss_augmented_gold_dominates() {
        let gold_tree = parse_bracketed("(S (NP (A a) (B b)) (C c))").unwrap().remove(0);
        let gold = tree_to_spans(&gold_tree);
        let vocab = Arc::new(LabelVocab::new(gold.spans.iter().map(|s| s.label.clone())));
        let chart = ScoreChart::from_fn(3, vocab.clone(), |i, j, l| {
            if gold.label_of(i, j) == Some(vocab.get(l)) {
                100.0
            } else {
                -100.0
            }
        });
        let d = loss_augmented_decode(&chart, &gold).unwrap();
        assert_eq!(d.span_set().sorted(), gold.sorted());
        assert_eq!(d.score, tree_score(&chart, &gold).unwrap());
    }

    #[test]
    fn loss_augmented_zero_chart_scores_errors() {
        let gold_tree = parse_bracketed("(S (NP (A a) (B b)) (C c) (D d))").unwrap().remove(0);
        let gold = tree_to_spans(&gold_tree);
        let vocab = Arc::new(LabelVocab::new(gold.spans.iter().map(|s| s.label.clone())));
        let chart = ScoreChart::from_fn(4, vocab, |_, _, _| 0.0);
        let d = loss_augmented_decode(&chart, &gold).unwrap();
        let predicted = d.span_set();
        let wrong = predicted
            .spans
            .iter()
            .filter(|s| gold.label_of(s.start, s.end) != Some(&s.label))
            .count();
        let missed_gold = d
            .spans
            .iter()
            .filter(|s| s.2 == 0 && gold.label_of(s.0, s.1).is_some())
            .count();
        assert_eq!(d.score, (wrong + missed_gold) as f64);
        assert!(d.score >= 1.0);
    }

    #[test]
    fn loss_augmented_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = rng.gen_range(1..=5);
            let chart = random_chart(&mut rng, n, 3);
            // random gold tree: decode another random chart
            let gold = cky_decode(&random_chart(&mut rng, n, 3)).unwrap().span_set();
            let cost = HammingCost::new(&chart, &gold).unwrap();
            let d = loss_augmented_decode(&chart, &gold).unwrap();
            let (bf, _) =
                brute_force_decode_with(n, 3, |i, j, l| chart.get(i, j, l) + cost.cost(i, j, l)).unwrap();
            assert_eq!(d.score, bf);
            let rescored = cost.tree_cost(&d) + tree_score(&chart, &d.span_set()).unwrap();
            assert!((rescored - d.score).abs() < 1e-9);
        }
    }

    /// Best labeled total of every bracketing, in enumeration order, with
    /// whether it contains `(si, sj)`.
    fn bracketing_totals(n: usize, l: usize, score: impl Fn(usize, usize, usize) -> f64, si: usize, sj: usize) -> Vec<(f64, bool, Vec<(usize, usize, usize)>)> {
        bracketings(0, n)
            .iter()
            .map(|b| {
                let mut spans = Vec::new();
                fn walk(b: &Bracketing, out: &mut Vec<(usize, usize)>) {
                    match b {
                        Bracketing::Leaf(i) => out.push((*i, i + 1)),
                        Bracketing::Split { i, j, left, right } => {
                            out.push((*i, *j));
                            walk(left, out);
                            walk(right, out);
                        }
                    }
                }
                let mut ranges = Vec::new();
                walk(b, &mut ranges);
                let mut total = 0.0;
                for &(i, j) in &ranges {
                    let first = usize::from(i == 0 && j == n);
                    let best = (first..l).fold((first, f64::NEG_INFINITY), |acc, k| {
                        let s = score(i, j, k);
                        if s > acc.1 {
                            (k, s)
                        } else {
                            acc
                        }
                    });
                    spans.push((i, j, best.0));
                    total += best.1;
                }
                (total, ranges.contains(&(si, sj)), spans)
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn shifting_one_span_is_monotone(seed in any::<u64>(), n in 2usize..=6, l in 2usize..=4, c in -3.0f64..3.0, pick in any::<usize>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chart = random_chart(&mut rng, n, l);
            let spans = crate::scorer::span_list(n);
            let (si, sj) = spans[pick % spans.len()];
            let base = bracketing_totals(n, l, |i, j, k| chart.get(i, j, k), si, sj);
            let shifted = bracketing_totals(n, l, |i, j, k| chart.get(i, j, k) + if (i, j) == (si, sj) { c } else { 0.0 }, si, sj);
            for (b, s) in base.iter().zip(&shifted) {
                let expected = if b.1 { c } else { 0.0 };
                prop_assert!((s.0 - b.0 - expected).abs() < 1e-9);
                prop_assert_eq!(&b.2, &s.2);
            }
            let argmax = |v: &[(f64, bool, Vec<(usize, usize, usize)>)]| {
                let mut sorted: Vec<_> = v.iter().filter(|t| t.1).collect();
                sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
                (sorted[0].2.clone(), sorted.get(1).map_or(f64::INFINITY, |t| sorted[0].0 - t.0))
            };
            let (before, gap) = argmax(&base);
            let (after, _) = argmax(&shifted);
            if gap > 1e-9 {
                prop_assert_eq!(before, after);
            }
        }
    }

    #[test]
    fn cubic_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let time = |n: usize, rng: &mut ChaCha8Rng| {
            let chart = random_chart(rng, n, 4);
            (0..7)
                .map(|_| {
                    let t = std::time::Instant::now();
                    for _ in 0..20 {
                        std::hint::black_box(cky_decode(&chart).unwrap());
                    }
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min)
        };
        let small = time(20, &mut rng);
        let large = time(40, &mut rng);
        assert!(large / small <= 10.0, "n=20 {small:.6}s, n=40 {large:.6}s");
    }

    #[test]
    fn empty_chart_rejected() {
        let chart = ScoreChart::from_fn(0, Arc::new(LabelVocab::synthetic(2)), |_, _, _| 0.0);
        assert_eq!(cky_decode(&chart), Err(DecodeError::EmptyChart));
    }
}
