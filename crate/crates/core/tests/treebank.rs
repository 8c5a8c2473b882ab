use proptest::prelude::*;
use spanparse::treebank::{
    collapse_unaries, expand_unaries, parse_bracketed, serialize, spans_to_tree, tree_to_spans, Label, LabeledSpan,
    SpanSet, TaggedWord, Tree, TreebankError,
};

const FIXTURE: &str = include_str!("fixtures/roundtrip.mrg");

/// Independent reader: s-expressions over whitespace-split tokens.
#[derive(Debug, PartialEq)]
enum Node {
    Phrase(String, Vec<Node>),
    Word(String, String),
}

fn reference_read(text: &str) -> Vec<Node> {
    let spaced = text.replace('(', " ( ").replace(')', " ) ");
    let toks: Vec<&str> = spaced.split_whitespace().collect();
    fn node(toks: &[&str], pos: &mut usize, top: bool) -> Node {
        assert_eq!(toks[*pos], "(");
        *pos += 1;
        let label = if toks[*pos] == "(" {
            assert!(top);
            "TOP".to_string()
        } else {
            *pos += 1;
            toks[*pos - 1].to_string()
        };
        if toks[*pos] != "(" {
            let word = toks[*pos].to_string();
            assert_eq!(toks[*pos + 1], ")");
            *pos += 2;
            return Node::Word(label, word);
        }
        let mut kids = Vec::new();
        while toks[*pos] == "(" {
            kids.push(node(toks, pos, false));
        }
        assert_eq!(toks[*pos], ")");
        *pos += 1;
        Node::Phrase(label, kids)
    }
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < toks.len() {
        out.push(node(&toks, &mut pos, true));
    }
    out
}

fn to_node(t: &Tree) -> Node {
    match t {
        Tree::Leaf { word, pos_tag, .. } => Node::Word(pos_tag.clone(), word.clone()),
        Tree::Internal { label, children } => Node::Phrase(label.to_string(), children.iter().map(to_node).collect()),
    }
}

#[test]
fn reader_agrees_with_reference_on_fixtures() {
    let ours = parse_bracketed(FIXTURE).unwrap();
    let reference = reference_read(FIXTURE);
    assert!(ours.len() >= 10);
    assert_eq!(ours.len(), reference.len());
    for (a, b) in ours.iter().zip(&reference) {
        assert_eq!(&to_node(a), b);
    }
    let wrapped = parse_bracketed("( (S (NP (NN x))))").unwrap();
    assert_eq!(to_node(&wrapped[0]), reference_read("(TOP (S (NP (NN x))))")[0]);
}

#[test]
fn leaves_are_numbered_left_to_right() {
    for t in parse_bracketed(FIXTURE).unwrap() {
        let mut positions = Vec::new();
        fn walk(t: &Tree, out: &mut Vec<usize>) {
            match t {
                Tree::Leaf { position, .. } => out.push(*position),
                Tree::Internal { children, .. } => children.iter().for_each(|c| walk(c, out)),
            }
        }
        walk(&t, &mut positions);
        assert_eq!(positions, (0..t.len()).collect::<Vec<_>>());
    }
}

#[test]
fn unbalanced_and_empty_input() {
    assert!(matches!(
        parse_bracketed("(S (NP (NN a))"),
        Err(TreebankError::UnbalancedBrackets { .. })
    ));
    assert!(parse_bracketed("(S ())").is_err());
}

/// Walks single-phrase-child chains by hand and returns every chain label.
fn chain_labels(t: &Tree, out: &mut Vec<String>) {
    if let Tree::Internal { label, children } = t {
        let mut names = vec![label.to_string()];
        let mut cur = children;
        while cur.len() == 1 {
            match &cur[0] {
                Tree::Internal { label, children } => {
                    names.push(label.to_string());
                    cur = children;
                }
                Tree::Leaf { .. } => break,
            }
        }
        out.push(names.join("::"));
        cur.iter().for_each(|c| chain_labels(c, out));
    }
}

fn collapsed_labels(t: &Tree, out: &mut Vec<String>) {
    if let Tree::Internal { label, children } = t {
        out.push(label.to_string());
        children.iter().for_each(|c| collapsed_labels(c, out));
    }
}

#[test]
fn collapse_matches_chain_walker() {
    let mut trees = parse_bracketed(FIXTURE).unwrap();
    trees.push(parse_bracketed("(S (VP (NP (NN x))))").unwrap().remove(0));
    for t in &trees {
        let (mut expected, mut got) = (Vec::new(), Vec::new());
        chain_labels(t, &mut expected);
        collapsed_labels(&collapse_unaries(t), &mut got);
        assert_eq!(got, expected);
    }
    let deep = collapse_unaries(&trees.last().unwrap().clone());
    assert_eq!(deep.label().unwrap().to_string(), "S::VP::NP");
}

#[test]
fn composite_labels_serialize_expanded() {
    for src in [
        "(S (VP (VB go)))",
        "(TOP (S (VP (VB Go))))",
        "(S (NP (NNP Mary)) (VP (VP (VB sing))))",
    ] {
        let t = parse_bracketed(src).unwrap().remove(0);
        let c = collapse_unaries(&t);
        let text = serialize(&c);
        assert!(!text.contains("::"));
        assert_eq!(text, src);
    }
}

#[test]
fn fixture_round_trip() {
    for t in parse_bracketed(FIXTURE).unwrap() {
        let spans = tree_to_spans(&collapse_unaries(&t));
        let rebuilt = expand_unaries(&spans_to_tree(&spans, &t.tagged_words()).unwrap());
        assert_eq!(rebuilt, t);
        let text = serialize(&t);
        assert_eq!(parse_bracketed(&text).unwrap(), vec![t]);
    }
}

#[test]
fn empty_span_is_dropped() {
    let words: Vec<TaggedWord> = (0..3)
        .map(|i| TaggedWord {
            word: format!("x{i}"),
            tag: "T".into(),
        })
        .collect();
    let s = Label::new("S").unwrap();
    let vp = Label::new("VP").unwrap();
    let spans = SpanSet::new(
        3,
        vec![
            LabeledSpan::new(0, 3, s.clone()),
            LabeledSpan::new(0, 2, Label::Empty),
            LabeledSpan::new(2, 3, vp.clone()),
        ],
    );
    let t = spans_to_tree(&spans, &words).unwrap();
    assert_eq!(serialize(&t), "(S (T x0) (T x1) (VP (T x2)))");
    // the only labeled tree over 3 words with these two non-empty spans
    assert_eq!(tree_to_spans(&t).sorted(), vec![LabeledSpan::new(0, 3, s), LabeledSpan::new(2, 3, vp)]);
}

fn arb_tree() -> impl Strategy<Value = String> {
    let leaf = "[a-z]{1,3}".prop_map(|w| format!("(T {w})"));
    leaf.prop_recursive(4, 24, 3, |inner| {
        (prop::sample::select(vec!["A", "B", "C"]), prop::collection::vec(inner, 1..4))
            .prop_map(|(l, kids)| format!("({l} {})", kids.join(" ")))
    })
    .prop_map(|body| format!("(R {body})"))
}

proptest! {
    #[test]
    fn spans_are_nested_and_round_trip(src in arb_tree()) {
        let t = parse_bracketed(&src).unwrap().remove(0);
        let spans = tree_to_spans(&collapse_unaries(&t));
        for a in &spans.spans {
            for b in &spans.spans {
                prop_assert!(!(a.start < b.start && b.start < a.end && a.end < b.end));
            }
        }
        let rebuilt = expand_unaries(&spans_to_tree(&spans, &t.tagged_words()).unwrap());
        prop_assert_eq!(serialize(&rebuilt), serialize(&t));
        prop_assert_eq!(rebuilt, t);
    }
}
