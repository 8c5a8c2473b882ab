//! Span-based constituency parsing: bracketed treebanks, a small
//! reverse-mode autodiff engine, a factored self-attention encoder, per-language
//! span classifiers, exact chart decoding, multilingual training and
//! evalb-style evaluation.

pub mod autodiff;
pub mod treebank;
pub mod decoder;
pub mod encoder;
pub mod scorer;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod model;
pub mod evaluation;
pub mod gradcheck;
pub mod training;
pub mod toy;
