//! A shared encoder with one span classifier per language, plus the word
//! vocabulary and checkpoint (de)serialization.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Binding, NodeId, ParamSet, Tape, Tensor};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::decoder::{cky_decode, DecodeError};
use crate::encoder::{
    align_subwords, encode, init_params, ContextVectors, EncoderConfig, EncoderError, EncoderInput, StaticVectors,
    VectorMode,
};
use crate::scorer::{LabelVocab, LanguageHead, ScoreChart, ScorerError};
use crate::treebank::{TaggedWord, Tree, Treebank};

pub const UNK: &str = "<unk>";
pub const DEFAULT_HEAD_HIDDEN: usize = 250;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no head for language {0:?}")]
    UnknownLanguage(String),
    #[error("bad checkpoint metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl From<crate::autodiff::AutodiffError> for ModelError {
    fn from(e: crate::autodiff::AutodiffError) -> Self {
        ModelError::Encoder(e.into())
    }
}

/// Word-to-id map; id 0 is the unknown word.
#[derive(Clone, Debug, PartialEq)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    lowercase: bool,
}

impl WordVocab {
    pub fn new(words: impl IntoIterator<Item = String>, lowercase: bool) -> Self {
        let mut all = vec![UNK.to_string()];
        let mut index = HashMap::new();
        index.insert(UNK.to_string(), 0);
        for w in words {
            let w = if lowercase { w.to_lowercase() } else { w };
            if !index.contains_key(&w) {
                index.insert(w.clone(), all.len());
                all.push(w);
            }
        }
        WordVocab {
            words: all,
            index,
            lowercase,
        }
    }

    /// Vocabulary over every word of `treebanks`, in first-seen order.
    pub fn from_treebanks<'a>(treebanks: impl IntoIterator<Item = &'a Treebank>, lowercase: bool) -> Self {
        let words = treebanks
            .into_iter()
            .flat_map(|tb| tb.trees().flat_map(|t| t.words()).collect::<Vec<_>>());
        Self::new(words, lowercase)
    }

    pub fn id(&self, word: &str) -> usize {
        let found = if self.lowercase {
            self.index.get(&word.to_lowercase())
        } else {
            self.index.get(word)
        };
        found.copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }
}

/// External vectors available to a model.
#[derive(Clone, Debug, Default)]
pub enum VectorSource {
    #[default]
    None,
    Static(StaticVectors),
    Context(ContextVectors),
}

impl VectorSource {
    /// `(n, d_ext)` external vectors for a sentence, or `None` in scratch mode.
    /// Context records are looked up as `<lang>:<id>` first, then `<id>`.
    pub fn external(
        &self,
        cfg: &EncoderConfig,
        lang: &str,
        id: &str,
        words: &[String],
    ) -> Result<Option<Tensor>, EncoderError> {
        match (cfg.mode, self) {
            (VectorMode::Scratch, _) => Ok(None),
            (VectorMode::Static, VectorSource::Static(v)) => {
                check_dim(cfg, v.dim)?;
                Ok(Some(v.lookup(words)))
            }
            (VectorMode::Context, VectorSource::Context(v)) => {
                check_dim(cfg, v.d_ext)?;
                let record = v
                    .get(&format!("{lang}:{id}"))
                    .or_else(|| v.get(id))
                    .ok_or_else(|| EncoderError::MissingVectors(id.to_string()))?;
                Ok(Some(align_subwords(record, cfg.subword_pick, Some(words.len()))?))
            }
            _ => Err(EncoderError::MissingVectors(id.to_string())),
        }
    }
}

fn check_dim(cfg: &EncoderConfig, dim: usize) -> Result<(), EncoderError> {
    if dim != cfg.d_ext {
        return Err(EncoderError::InvalidConfig(format!(
            "vector dimension {dim} does not match d_ext {}",
            cfg.d_ext
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    format: String,
    encoder: EncoderConfig,
    head_hidden: usize,
    lowercase: bool,
    words: Vec<String>,
    labels: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct ParserModel {
    pub config: EncoderConfig,
    pub head_hidden: usize,
    pub params: ParamSet,
    pub words: WordVocab,
    pub heads: BTreeMap<String, LanguageHead>,
}

impl ParserModel {
    /// Fresh model: encoder parameters first, then heads in language order.
    pub fn new(
        config: EncoderConfig,
        head_hidden: usize,
        words: WordVocab,
        languages: Vec<(String, LabelVocab)>,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamSet::new();
        init_params(&mut params, &config, words.len(), rng);
        let mut heads = BTreeMap::new();
        for (lang, vocab) in languages {
            heads.insert(lang.clone(), LanguageHead::new(lang, vocab));
        }
        for head in heads.values() {
            head.init_params(&mut params, config.d_model, head_hidden, rng);
        }
        Ok(ParserModel {
            config,
            head_hidden,
            params,
            words,
            heads,
        })
    }

    pub fn head(&self, lang: &str) -> Result<&LanguageHead, ModelError> {
        self.heads
            .get(lang)
            .ok_or_else(|| ModelError::UnknownLanguage(lang.to_string()))
    }

    pub fn languages(&self) -> Vec<String> {
        self.heads.keys().cloned().collect()
    }

    pub fn input(&self, words: &[String], external: Option<Tensor>) -> EncoderInput {
        EncoderInput {
            word_ids: words.iter().map(|w| self.words.id(w)).collect(),
            external,
        }
    }

    /// Records the `(num_spans, L)` score node for a sentence.
    pub fn score_node(
        &self,
        tape: &mut Tape,
        bind: &mut Binding,
        lang: &str,
        input: &EncoderInput,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<NodeId, ModelError> {
        let head = self.head(lang)?;
        let fence = encode(tape, bind, &self.config, input, rng)?;
        Ok(head.score_node(tape, bind, fence)?)
    }

    pub fn chart(&self, lang: &str, input: &EncoderInput) -> Result<ScoreChart, ModelError> {
        let mut tape = Tape::new();
        let mut bind = Binding::new(&self.params, false);
        let node = self.score_node(&mut tape, &mut bind, lang, input, None)?;
        Ok(self.head(lang)?.chart_from_node(&tape, node)?)
    }

    pub fn parse(&self, lang: &str, words: &[TaggedWord], external: Option<Tensor>) -> Result<Tree, ModelError> {
        let plain: Vec<String> = words.iter().map(|w| w.word.clone()).collect();
        let chart = self.chart(lang, &self.input(&plain, external))?;
        Ok(cky_decode(&chart)?.tree(words)?)
    }

    pub fn total_params(&self) -> usize {
        self.params.total_count()
    }

    pub fn encoder_params(&self) -> usize {
        self.params.count_with_prefix("enc.")
    }

    pub fn head_params(&self, lang: &str) -> Result<usize, ModelError> {
        Ok(self.head(lang)?.parameter_count(&self.params))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Metadata {
            format: "spanparse".into(),
            encoder: self.config.clone(),
            head_hidden: self.head_hidden,
            lowercase: self.words.lowercase,
            words: self.words.words[1..].to_vec(),
            labels: self
                .heads
                .iter()
                .map(|(lang, h)| (lang.clone(), h.vocab.names()))
                .collect(),
        };
        let mut ck = Checkpoint::new(serde_json::to_string(&meta).expect("metadata serializes"));
        for (_, name, t) in self.params.iter() {
            ck.tensors.push((name.to_string(), t.clone()));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        let meta: Metadata = serde_json::from_str(&ck.metadata).map_err(|e| ModelError::Metadata(e.to_string()))?;
        meta.encoder.validate()?;
        let words = WordVocab::new(meta.words, meta.lowercase);
        let mut heads = BTreeMap::new();
        for (lang, labels) in meta.labels {
            let vocab = LabelVocab::from_strings(&labels).map_err(ModelError::Metadata)?;
            heads.insert(lang.clone(), LanguageHead::new(lang, vocab));
        }
        let mut params = ParamSet::new();
        for (name, t) in &ck.tensors {
            params.insert(name.clone(), t.clone());
        }
        let model = ParserModel {
            config: meta.encoder,
            head_hidden: meta.head_hidden,
            params,
            words,
            heads,
        };
        model.check_params()?;
        Ok(model)
    }

    /// Every parameter a fresh model would create is present with the same shape.
    fn check_params(&self) -> Result<(), ModelError> {
        let languages = self
            .heads
            .iter()
            .map(|(l, h)| (l.clone(), (*h.vocab).clone()))
            .collect();
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let reference = ParserModel::new(
            self.config.clone(),
            self.head_hidden,
            self.words.clone(),
            languages,
            &mut rng,
        )?;
        for (_, name, t) in reference.params.iter() {
            match self.params.by_name(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(ModelError::Metadata(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(ModelError::Metadata(format!("missing parameter {name}"))),
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        Ok(self.to_checkpoint().write(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}
