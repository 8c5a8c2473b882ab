//! Small synthetic treebanks for tests and demos.
//!
//! Both toy languages draw words from one shared vocabulary and use the same
//! phrase shapes, but label their constituents with disjoint label sets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::treebank::{Label, Tree, Treebank};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyLanguage {
    A,
    B,
}

impl ToyLanguage {
    pub fn code(self) -> &'static str {
        match self {
            ToyLanguage::A => "a",
            ToyLanguage::B => "b",
        }
    }

    fn label(self, role: Role) -> &'static str {
        match (self, role) {
            (ToyLanguage::A, Role::Clause) => "S",
            (ToyLanguage::A, Role::Noun) => "NP",
            (ToyLanguage::A, Role::Verb) => "VP",
            (ToyLanguage::A, Role::Prep) => "PP",
            (ToyLanguage::B, Role::Clause) => "CL",
            (ToyLanguage::B, Role::Noun) => "ARG",
            (ToyLanguage::B, Role::Verb) => "PRED",
            (ToyLanguage::B, Role::Prep) => "REL",
        }
    }
}

#[derive(Clone, Copy)]
enum Role {
    Clause,
    Noun,
    Verb,
    Prep,
}

const DET: &[&str] = &["the", "a", "every"];
const ADJ: &[&str] = &["big", "small", "red", "old"];
const NOUN: &[&str] = &["cat", "dog", "bird", "fish", "man", "park"];
const VERB: &[&str] = &["sees", "likes", "chases", "sleeps"];
const PREP: &[&str] = &["with", "near", "in"];

struct Gen<'r> {
    lang: ToyLanguage,
    rng: &'r mut ChaCha8Rng,
    words: Vec<(String, String)>,
}

impl Gen<'_> {
    fn leaf(&mut self, pool: &[&str], tag: &str) -> Tree {
        let w = pool.choose(self.rng).unwrap().to_string();
        self.words.push((w.clone(), tag.to_string()));
        Tree::leaf(self.words.len() - 1, w, tag)
    }

    fn node(&self, role: Role, children: Vec<Tree>) -> Tree {
        Tree::internal(Label::new(self.lang.label(role)).unwrap(), children)
    }

    fn noun_phrase(&mut self, depth: usize) -> Tree {
        let mut kids = Vec::new();
        match self.rng.gen_range(0..4) {
            0 => kids.push(self.leaf(NOUN, "N")),
            1 => {
                kids.push(self.leaf(DET, "D"));
                kids.push(self.leaf(ADJ, "J"));
                kids.push(self.leaf(NOUN, "N"));
            }
            _ => {
                kids.push(self.leaf(DET, "D"));
                kids.push(self.leaf(NOUN, "N"));
            }
        }
        if depth == 0 && self.rng.gen_bool(0.25) {
            let np = self.node(Role::Noun, kids);
            let pp = self.prep_phrase(depth + 1);
            return self.node(Role::Noun, vec![np, pp]);
        }
        self.node(Role::Noun, kids)
    }

    fn prep_phrase(&mut self, depth: usize) -> Tree {
        let p = self.leaf(PREP, "P");
        let np = self.noun_phrase(depth + 1);
        self.node(Role::Prep, vec![p, np])
    }

    fn verb_phrase(&mut self) -> Tree {
        let v = self.leaf(VERB, "V");
        let mut kids = vec![v];
        match self.rng.gen_range(0..3) {
            0 => {}
            1 => kids.push(self.noun_phrase(0)),
            _ => {
                kids.push(self.noun_phrase(1));
                kids.push(self.prep_phrase(1));
            }
        }
        self.node(Role::Verb, kids)
    }

    fn clause(&mut self) -> Tree {
        let np = self.noun_phrase(0);
        let vp = self.verb_phrase();
        self.node(Role::Clause, vec![np, vp])
    }
}

/// `count` sentences of `lang`, deterministic in `seed`.
pub fn toy_trees(lang: ToyLanguage, count: usize, seed: u64) -> Vec<Tree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut g = Gen {
                lang,
                rng: &mut rng,
                words: Vec::new(),
            };
            g.clause()
        })
        .collect()
}

pub fn toy_treebank(lang: ToyLanguage, count: usize, seed: u64) -> Treebank {
    Treebank::from_trees(lang.code(), toy_trees(lang, count, seed))
}
