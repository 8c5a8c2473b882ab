//! Bracketed constituency trees and their labeled-span form.
//!
//! A tree over `n` tokens is equivalently a set of labeled spans
//! `(start, end, label)` over fenceposts `0..=n`. Unary chains are collapsed
//! into composite labels joined with `::` so that each span carries exactly
//! one label; [`expand_unaries`] undoes this exactly.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

/// Separator between atoms of a collapsed unary-chain label.
pub const UNARY_SEPARATOR: &str = "::";

/// Label given to an unlabeled top-level wrapper `( ... )`.
pub const TOP_LABEL: &str = "TOP";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreebankError {
    #[error("unbalanced brackets (line {line})")]
    UnbalancedBrackets { line: usize },
    #[error("empty node (line {line})")]
    EmptyNode { line: usize },
    #[error("illegal label character in {label:?} (line {line})")]
    IllegalLabelCharacter { line: usize, label: String },
    #[error("malformed node (line {line}): {message}")]
    MalformedNode { line: usize, message: String },
    #[error("spans ({a_start},{a_end}) and ({b_start},{b_end}) overlap or repeat")]
    OverlappingSpans {
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },
    #[error("no labeled span covers the whole sentence")]
    MissingRootSpan,
    #[error("span ({start},{end}) is out of range for length {length}")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        length: usize,
    },
    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),
    #[error("i/o error reading {path}: {message}")]
    Io { path: String, message: String },
}

/// A constituent label, or the reserved empty label for spans that are not
/// constituents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Empty,
    Named(Arc<str>),
}

impl Label {
    /// Validates and wraps a label. Composite labels must have non-empty atoms.
    pub fn new(text: &str) -> Result<Label, String> {
        if text.is_empty() {
            return Err("empty label".to_string());
        }
        if text.chars().any(|c| c.is_whitespace() || c == '(' || c == ')') {
            return Err(format!("label {text:?} contains whitespace or parentheses"));
        }
        if text.split(UNARY_SEPARATOR).any(str::is_empty) {
            return Err(format!("label {text:?} has an empty atom"));
        }
        Ok(Label::Named(Arc::from(text)))
    }

    pub fn is_empty_marker(&self) -> bool {
        matches!(self, Label::Empty)
    }

    /// The label text; `None` for the empty label.
    pub fn text(&self) -> Option<&str> {
        match self {
            Label::Empty => None,
            Label::Named(t) => Some(t),
        }
    }

    pub fn atoms(&self) -> Vec<&str> {
        match self {
            Label::Empty => Vec::new(),
            Label::Named(t) => t.split(UNARY_SEPARATOR).collect(),
        }
    }

    /// Joins `self` over `inner` into a composite label.
    pub fn join(&self, inner: &Label) -> Label {
        match (self, inner) {
            (Label::Empty, x) | (x, Label::Empty) => x.clone(),
            (Label::Named(a), Label::Named(b)) => {
                Label::Named(Arc::from(format!("{a}{UNARY_SEPARATOR}{b}").as_str()))
            }
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Empty => f.write_str("∅"),
            Label::Named(t) => f.write_str(t),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: Label) -> Self {
        LabeledSpan { start, end, label }
    }
}

/// Labeled spans of one sentence of `length` tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanSet {
    pub spans: Vec<LabeledSpan>,
    pub length: usize,
}

impl SpanSet {
    pub fn new(length: usize, spans: Vec<LabeledSpan>) -> Self {
        SpanSet { spans, length }
    }

    /// Spans sorted by (start, longest first, label).
    pub fn sorted(&self) -> Vec<LabeledSpan> {
        let mut spans = self.spans.clone();
        spans.sort_by(|a, b| {
            (a.start, std::cmp::Reverse(a.end), &a.label).cmp(&(
                b.start,
                std::cmp::Reverse(b.end),
                &b.label,
            ))
        });
        spans
    }

    /// Label of span `(start, end)` if present and non-empty.
    pub fn label_of(&self, start: usize, end: usize) -> Option<&Label> {
        self.spans
            .iter()
            .find(|s| s.start == start && s.end == end && !s.label.is_empty_marker())
            .map(|s| &s.label)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedWord {
    pub word: String,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tree {
    Internal { label: Label, children: Vec<Tree> },
    Leaf {
        position: usize,
        word: String,
        pos_tag: String,
    },
}

impl Tree {
    pub fn internal(label: Label, children: Vec<Tree>) -> Tree {
        Tree::Internal { label, children }
    }

    pub fn leaf(position: usize, word: impl Into<String>, pos_tag: impl Into<String>) -> Tree {
        Tree::Leaf {
            position,
            word: word.into(),
            pos_tag: pos_tag.into(),
        }
    }

    pub fn label(&self) -> Option<&Label> {
        match self {
            Tree::Internal { label, .. } => Some(label),
            Tree::Leaf { .. } => None,
        }
    }

    pub fn children(&self) -> &[Tree] {
        match self {
            Tree::Internal { children, .. } => children,
            Tree::Leaf { .. } => &[],
        }
    }

    pub fn tagged_words(&self) -> Vec<TaggedWord> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |word, tag| {
            out.push(TaggedWord {
                word: word.to_string(),
                tag: tag.to_string(),
            })
        });
        out
    }

    pub fn words(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |word, _| out.push(word.to_string()));
        out
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.visit_leaves(&mut |_, _| n += 1);
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn visit_leaves(&self, f: &mut impl FnMut(&str, &str)) {
        match self {
            Tree::Leaf { word, pos_tag, .. } => f(word, pos_tag),
            Tree::Internal { children, .. } => {
                for c in children {
                    c.visit_leaves(f);
                }
            }
        }
    }

    /// (start, end) covered by this subtree.
    pub fn extent(&self) -> (usize, usize) {
        match self {
            Tree::Leaf { position, .. } => (*position, position + 1),
            Tree::Internal { children, .. } => {
                let first = children.first().map(|c| c.extent().0).unwrap_or(0);
                let last = children.last().map(|c| c.extent().1).unwrap_or(first);
                (first, last)
            }
        }
    }

    /// Renumbers leaves left to right from 0.
    pub fn renumber(&mut self) {
        fn go(t: &mut Tree, next: &mut usize) {
            match t {
                Tree::Leaf { position, .. } => {
                    *position = *next;
                    *next += 1;
                }
                Tree::Internal { children, .. } => children.iter_mut().for_each(|c| go(c, next)),
            }
        }
        let mut next = 0;
        go(self, &mut next);
    }

    /// Flat `(TOP (XX w1) (XX w2) ...)` tree, used when decoding fails.
    pub fn flat(words: &[String], label: &str, tag: &str) -> Tree {
        let children = words
            .iter()
            .enumerate()
            .map(|(i, w)| Tree::leaf(i, w.clone(), tag))
            .collect();
        Tree::internal(Label::Named(Arc::from(label)), children)
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(Token<'_>, usize)> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let mut start: Option<usize> = None;
        for (i, c) in line.char_indices() {
            if c == '(' || c == ')' || c.is_whitespace() {
                if let Some(s) = start.take() {
                    out.push((Token::Atom(&line[s..i]), line_no));
                }
                match c {
                    '(' => out.push((Token::Open, line_no)),
                    ')' => out.push((Token::Close, line_no)),
                    _ => {}
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            out.push((Token::Atom(&line[s..]), line_no));
        }
    }
    out
}

/// Drops SPMRL morphological decorations (`NP##case=nom##` becomes `NP`).
fn strip_decorations(label: &str) -> &str {
    match label.find("##") {
        Some(i) if i > 0 => &label[..i],
        _ => label,
    }
}

struct Reader<'a> {
    tokens: Vec<(Token<'a>, usize)>,
    pos: usize,
    next_leaf: usize,
}

impl<'a> Reader<'a> {
    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|t| t.1)
            .unwrap_or(1)
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn make_label(&self, raw: &str, line: usize) -> Result<Label, TreebankError> {
        if raw.contains(UNARY_SEPARATOR) {
            return Err(TreebankError::IllegalLabelCharacter {
                line,
                label: raw.to_string(),
            });
        }
        Label::new(strip_decorations(raw)).map_err(|_| TreebankError::IllegalLabelCharacter {
            line,
            label: raw.to_string(),
        })
    }

    /// Reads one node; the opening bracket is the current token.
    fn node(&mut self, top_level: bool) -> Result<Tree, TreebankError> {
        let open_line = self.line();
        self.pos += 1;
        let label_raw = match self.peek() {
            Some(Token::Atom(a)) => {
                let a = *a;
                self.pos += 1;
                Some(a)
            }
            Some(_) => None,
            None => return Err(TreebankError::UnbalancedBrackets { line: open_line }),
        };
        match self.peek() {
            None => return Err(TreebankError::UnbalancedBrackets { line: open_line }),
            Some(Token::Close) => return Err(TreebankError::EmptyNode { line: open_line }),
            Some(Token::Atom(word)) => {
                let word = *word;
                let line = self.line();
                self.pos += 1;
                let tag = match label_raw {
                    Some(t) => strip_decorations(t).to_string(),
                    None => {
                        return Err(TreebankError::MalformedNode {
                            line,
                            message: format!("word {word:?} has no tag"),
                        })
                    }
                };
                match self.peek() {
                    Some(Token::Close) => self.pos += 1,
                    None => return Err(TreebankError::UnbalancedBrackets { line: open_line }),
                    Some(_) => {
                        return Err(TreebankError::MalformedNode {
                            line,
                            message: format!("preterminal {tag:?} has more than one child"),
                        })
                    }
                }
                let leaf = Tree::leaf(self.next_leaf, word, tag);
                self.next_leaf += 1;
                return Ok(leaf);
            }
            Some(Token::Open) => {}
        }
        let label = match label_raw {
            Some(raw) => self.make_label(raw, open_line)?,
            None if top_level => Label::Named(Arc::from(TOP_LABEL)),
            None => {
                return Err(TreebankError::MalformedNode {
                    line: open_line,
                    message: "unlabeled inner node".to_string(),
                })
            }
        };
        let mut children = Vec::new();
        loop {
            match self.peek() {
                Some(Token::Open) => children.push(self.node(false)?),
                Some(Token::Close) => {
                    self.pos += 1;
                    break;
                }
                Some(Token::Atom(a)) => {
                    return Err(TreebankError::MalformedNode {
                        line: self.line(),
                        message: format!("bare token {a:?} among phrase children"),
                    })
                }
                None => return Err(TreebankError::UnbalancedBrackets { line: open_line }),
            }
        }
        Ok(Tree::internal(label, children))
    }
}

/// Reads every bracketed tree in `text`. Leaf positions are assigned left to
/// right within each tree.
pub fn parse_bracketed(text: &str) -> Result<Vec<Tree>, TreebankError> {
    let mut reader = Reader {
        tokens: tokenize(text),
        pos: 0,
        next_leaf: 0,
    };
    let mut trees = Vec::new();
    while let Some(tok) = reader.peek() {
        match tok {
            Token::Open => {
                reader.next_leaf = 0;
                trees.push(reader.node(true)?);
            }
            Token::Close => {
                return Err(TreebankError::UnbalancedBrackets {
                    line: reader.line(),
                })
            }
            Token::Atom(a) => {
                return Err(TreebankError::MalformedNode {
                    line: reader.line(),
                    message: format!("token {a:?} outside any tree"),
                })
            }
        }
    }
    Ok(trees)
}

/// Single-line bracket string. Composite labels are expanded and empty-label
/// nodes are spliced into their parent.
pub fn serialize(tree: &Tree) -> String {
    fn go(t: &Tree, out: &mut String) {
        match t {
            Tree::Leaf { word, pos_tag, .. } => {
                out.push('(');
                out.push_str(pos_tag);
                out.push(' ');
                out.push_str(word);
                out.push(')');
            }
            Tree::Internal { label, children } => {
                let atoms = label.atoms();
                for (k, atom) in atoms.iter().enumerate() {
                    if k > 0 {
                        out.push(' ');
                    }
                    out.push('(');
                    out.push_str(atom);
                }
                for (k, c) in children.iter().enumerate() {
                    if k > 0 || !atoms.is_empty() {
                        out.push(' ');
                    }
                    go(c, out);
                }
                for _ in &atoms {
                    out.push(')');
                }
            }
        }
    }
    let mut out = String::new();
    go(tree, &mut out);
    out
}

/// Merges chains of single-phrase-child nodes into composite labels.
pub fn collapse_unaries(tree: &Tree) -> Tree {
    match tree {
        Tree::Leaf { .. } => tree.clone(),
        Tree::Internal { label, children } => {
            let mut label = label.clone();
            let mut node_children = children;
            while let [only @ Tree::Internal { .. }] = node_children.as_slice() {
                if let Tree::Internal {
                    label: inner,
                    children: inner_children,
                } = only
                {
                    label = label.join(inner);
                    node_children = inner_children;
                }
            }
            Tree::internal(label, node_children.iter().map(collapse_unaries).collect())
        }
    }
}

/// Inverse of [`collapse_unaries`].
pub fn expand_unaries(tree: &Tree) -> Tree {
    match tree {
        Tree::Leaf { .. } => tree.clone(),
        Tree::Internal { label, children } => {
            let children: Vec<Tree> = children.iter().map(expand_unaries).collect();
            let atoms = label.atoms();
            if atoms.len() <= 1 {
                return Tree::internal(label.clone(), children);
            }
            let mut node = None;
            for atom in atoms.iter().rev() {
                let inner = match node.take() {
                    None => children.clone(),
                    Some(t) => vec![t],
                };
                node = Some(Tree::internal(Label::Named(Arc::from(*atom)), inner));
            }
            node.expect("at least one atom")
        }
    }
}

/// One span per phrase node of the collapsed tree; preterminals excluded.
pub fn tree_to_spans(tree: &Tree) -> SpanSet {
    fn go(t: &Tree, out: &mut Vec<LabeledSpan>) {
        if let Tree::Internal { label, children } = t {
            let (start, end) = t.extent();
            out.push(LabeledSpan::new(start, end, label.clone()));
            children.iter().for_each(|c| go(c, out));
        }
    }
    let collapsed = collapse_unaries(tree);
    let mut spans = Vec::new();
    go(&collapsed, &mut spans);
    SpanSet::new(tree.len(), spans)
}

/// Rebuilds the collapsed tree from nested spans; empty-label spans are
/// dropped.
pub fn spans_to_tree(spans: &SpanSet, words: &[TaggedWord]) -> Result<Tree, TreebankError> {
    let n = words.len();
    let mut kept: Vec<LabeledSpan> = spans
        .spans
        .iter()
        .filter(|s| !s.label.is_empty_marker())
        .cloned()
        .collect();
    for s in &kept {
        if s.start >= s.end || s.end > n {
            return Err(TreebankError::SpanOutOfRange {
                start: s.start,
                end: s.end,
                length: n,
            });
        }
    }
    kept.sort_by_key(|a| (a.start, std::cmp::Reverse(a.end)));
    match kept.first() {
        Some(root) if root.start == 0 && root.end == n => {}
        _ => return Err(TreebankError::MissingRootSpan),
    }
    // Stack-based nesting check: in (start asc, end desc) order each span must
    // sit strictly inside the innermost open span that contains its start.
    let mut open: Vec<&LabeledSpan> = Vec::new();
    for s in &kept {
        while let Some(top) = open.last() {
            if s.start >= top.end {
                open.pop();
            } else {
                break;
            }
        }
        if let Some(top) = open.last() {
            if s.end > top.end || (s.start == top.start && s.end == top.end) {
                return Err(TreebankError::OverlappingSpans {
                    a_start: top.start,
                    a_end: top.end,
                    b_start: s.start,
                    b_end: s.end,
                });
            }
        }
        open.push(s);
    }

    fn build(spans: &[LabeledSpan], idx: &mut usize, words: &[TaggedWord]) -> Tree {
        let me = spans[*idx].clone();
        *idx += 1;
        let mut children = Vec::new();
        let mut pos = me.start;
        while pos < me.end {
            if *idx < spans.len() && spans[*idx].start == pos && spans[*idx].end <= me.end {
                let child = build(spans, idx, words);
                pos = child.extent().1;
                children.push(child);
            } else {
                children.push(Tree::leaf(pos, words[pos].word.clone(), words[pos].tag.clone()));
                pos += 1;
            }
        }
        Tree::internal(me.label, children)
    }
    let mut idx = 0;
    Ok(build(&kept, &mut idx, words))
}

/// A language's treebank: sentence ids paired with trees.
#[derive(Clone, Debug, PartialEq)]
pub struct Treebank {
    pub language: String,
    pub entries: Vec<(String, Tree)>,
}

impl Treebank {
    pub fn new(language: impl Into<String>, entries: Vec<(String, Tree)>) -> Result<Self, TreebankError> {
        let mut seen = HashSet::new();
        for (id, _) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(TreebankError::DuplicateId(id.clone()));
            }
        }
        Ok(Treebank {
            language: language.into(),
            entries,
        })
    }

    /// Trees get 1-based sequential ids.
    pub fn from_trees(language: impl Into<String>, trees: Vec<Tree>) -> Self {
        let entries = trees
            .into_iter()
            .enumerate()
            .map(|(i, t)| ((i + 1).to_string(), t))
            .collect();
        Treebank {
            language: language.into(),
            entries,
        }
    }

    pub fn parse(language: impl Into<String>, text: &str) -> Result<Self, TreebankError> {
        Ok(Self::from_trees(language, parse_bracketed(text)?))
    }

    pub fn read(language: impl Into<String>, path: impl AsRef<Path>) -> Result<Self, TreebankError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| TreebankError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(language, &text)
    }

    pub fn to_bracketed(&self) -> String {
        let mut out = String::new();
        for (_, t) in &self.entries {
            out.push_str(&serialize(t));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.entries.iter().map(|(_, t)| t)
    }
}
