//! External vector inputs: fastText-style static text vectors and `CTXV1`
//! contextual subword vector files.
//!
//! `CTXV1` layout (all little-endian):
//!
//! ```text
//! "CTXV1\0" | u32 version | u32 d_ext | u32 record_count
//! record := u16 id_len | id bytes | u32 num_subwords | u32 num_words
//!           | u32 word_end_indices[num_words]
//!           | f32 subword_matrix[num_subwords * d_ext]
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;

pub const CTXV1_MAGIC: &[u8; 6] = b"CTXV1\0";
pub const CTXV1_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("not a CTXV1 file (bad magic)")]
    BadMagic,
    #[error("unsupported CTXV1 version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("word index {index} out of range for {num_subwords} subwords in {id:?}")]
    AlignmentOutOfRange {
        id: String,
        index: usize,
        num_subwords: usize,
    },
    #[error("sentence {id:?} has {expected} words but the record aligns {got}")]
    WordCountMismatch { id: String, expected: usize, got: usize },
    #[error("static vectors line {line}: {message}")]
    StaticFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Which subword of a multi-piece word represents it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubwordPick {
    First,
    #[default]
    Last,
}

/// Externally produced subword vectors for one sentence plus the index of
/// each word's final subword.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextVectorRecord {
    pub id: String,
    /// `(num_subwords, d_ext)`.
    pub subword_matrix: Tensor,
    pub word_end_indices: Vec<usize>,
}

impl ContextVectorRecord {
    pub fn num_subwords(&self) -> usize {
        self.subword_matrix.shape()[0]
    }

    pub fn d_ext(&self) -> usize {
        self.subword_matrix.shape()[1]
    }

    pub fn num_words(&self) -> usize {
        self.word_end_indices.len()
    }

    /// Indices strictly increasing, in range, and the last one closes the
    /// subword sequence.
    pub fn validate(&self) -> Result<(), VectorError> {
        let invalid = |reason: String| VectorError::InvalidRecord {
            id: self.id.clone(),
            reason,
        };
        let ns = self.num_subwords();
        if self.word_end_indices.is_empty() {
            return Err(invalid("no words".into()));
        }
        for &i in &self.word_end_indices {
            if i >= ns {
                return Err(VectorError::AlignmentOutOfRange {
                    id: self.id.clone(),
                    index: i,
                    num_subwords: ns,
                });
            }
        }
        if self.word_end_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("word_end_indices not strictly increasing".into()));
        }
        if *self.word_end_indices.last().unwrap() != ns - 1 {
            return Err(invalid("last word does not end at the final subword".into()));
        }
        Ok(())
    }
}

/// One row per word: the vector of its last (or first) subword.
pub fn align_subwords(
    record: &ContextVectorRecord,
    pick: SubwordPick,
    expected_words: Option<usize>,
) -> Result<Tensor, VectorError> {
    if let Some(n) = expected_words {
        if n != record.num_words() {
            return Err(VectorError::WordCountMismatch {
                id: record.id.clone(),
                expected: n,
                got: record.num_words(),
            });
        }
    }
    let ns = record.num_subwords();
    let d = record.d_ext();
    let mut data = Vec::with_capacity(record.num_words() * d);
    for (w, &end) in record.word_end_indices.iter().enumerate() {
        let idx = match pick {
            SubwordPick::Last => end,
            SubwordPick::First if w == 0 => 0,
            SubwordPick::First => record.word_end_indices[w - 1] + 1,
        };
        if idx >= ns || end >= ns {
            return Err(VectorError::AlignmentOutOfRange {
                id: record.id.clone(),
                index: end.max(idx),
                num_subwords: ns,
            });
        }
        data.extend_from_slice(record.subword_matrix.row(idx));
    }
    Ok(Tensor::new(vec![record.num_words(), d], data).expect("consistent shape"))
}

/// Last-subword alignment.
pub fn align_last_subword(record: &ContextVectorRecord) -> Result<Tensor, VectorError> {
    align_subwords(record, SubwordPick::Last, None)
}

/// An in-memory `CTXV1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextVectors {
    pub d_ext: usize,
    pub records: Vec<ContextVectorRecord>,
    index: HashMap<String, usize>,
}

impl ContextVectors {
    pub fn new(d_ext: usize, records: Vec<ContextVectorRecord>) -> Result<Self, VectorError> {
        let mut index = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.d_ext() != d_ext {
                return Err(VectorError::InvalidRecord {
                    id: r.id.clone(),
                    reason: format!("dimension {} differs from header {}", r.d_ext(), d_ext),
                });
            }
            r.validate()?;
            if index.insert(r.id.clone(), i).is_some() {
                return Err(VectorError::InvalidRecord {
                    id: r.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(ContextVectors { d_ext, records, index })
    }

    pub fn get(&self, id: &str) -> Option<&ContextVectorRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CTXV1_MAGIC);
        out.extend_from_slice(&CTXV1_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d_ext as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.id.len() as u16).to_le_bytes());
            out.extend_from_slice(r.id.as_bytes());
            out.extend_from_slice(&(r.num_subwords() as u32).to_le_bytes());
            out.extend_from_slice(&(r.num_words() as u32).to_le_bytes());
            for &i in &r.word_end_indices {
                out.extend_from_slice(&(i as u32).to_le_bytes());
            }
            for &x in r.subword_matrix.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VectorError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(6)? != CTXV1_MAGIC {
            return Err(VectorError::BadMagic);
        }
        let version = cur.u32()?;
        if version != CTXV1_VERSION {
            return Err(VectorError::UnsupportedVersion(version));
        }
        let d_ext = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let id_len = cur.u16()? as usize;
            let id = String::from_utf8(cur.take(id_len)?.to_vec()).map_err(|_| {
                VectorError::InvalidRecord {
                    id: String::new(),
                    reason: "id is not UTF-8".into(),
                }
            })?;
            let num_subwords = cur.u32()? as usize;
            let num_words = cur.u32()? as usize;
            let mut ends = Vec::with_capacity(num_words.min(1 << 16));
            for _ in 0..num_words {
                ends.push(cur.u32()? as usize);
            }
            let payload = cur.take(num_subwords * d_ext * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let matrix = Tensor::new(vec![num_subwords, d_ext], data).expect("sized from header");
            records.push(ContextVectorRecord {
                id,
                subword_matrix: matrix,
                word_end_indices: ends,
            });
        }
        if cur.pos != bytes.len() {
            return Err(VectorError::TrailingBytes(bytes.len() - cur.pos));
        }
        ContextVectors::new(d_ext, records)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, VectorError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), VectorError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VectorError> {
        if self.bytes.len() - self.pos < n {
            return Err(VectorError::Truncated(self.bytes.len()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, VectorError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, VectorError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Word vectors in fastText text format.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticVectors {
    pub dim: usize,
    words: Vec<String>,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
}

impl StaticVectors {
    pub fn new(dim: usize) -> Self {
        StaticVectors {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, word: &str, vector: &[f64]) {
        assert_eq!(vector.len(), self.dim);
        match self.index.get(word) {
            Some(&i) => self.vectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.vectors.extend_from_slice(vector);
            }
        }
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// `(n, dim)` matrix for a sentence; unknown words fall back to their
    /// lowercase form, then to zeros.
    pub fn lookup(&self, words: &[String]) -> Tensor {
        let mut data = Vec::with_capacity(words.len() * self.dim);
        for w in words {
            match self.get(w).or_else(|| self.get(&w.to_lowercase())) {
                Some(v) => data.extend_from_slice(v),
                None => data.extend(std::iter::repeat_n(0.0, self.dim)),
            }
        }
        Tensor::new(vec![words.len(), self.dim], data).expect("sized")
    }

    pub fn parse(text: &str) -> Result<Self, VectorError> {
        let mut out: Option<StaticVectors> = None;
        let mut declared: Option<usize> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 {
                if let (Ok(count), Ok(dim)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                    declared = Some(count);
                    out = Some(StaticVectors::new(dim));
                    continue;
                }
            }
            let values: Result<Vec<f64>, _> = fields[1..].iter().map(|v| v.parse::<f64>()).collect();
            let values = values.map_err(|e| VectorError::StaticFormat {
                line: line_no,
                message: e.to_string(),
            })?;
            let sv = out.get_or_insert_with(|| StaticVectors::new(values.len()));
            if values.len() != sv.dim || values.is_empty() {
                return Err(VectorError::StaticFormat {
                    line: line_no,
                    message: format!("expected {} values, found {}", sv.dim, values.len()),
                });
            }
            sv.insert(fields[0], &values);
        }
        let sv = out.ok_or(VectorError::StaticFormat {
            line: 0,
            message: "no vectors".into(),
        })?;
        if let Some(count) = declared {
            if count != sv.len() {
                return Err(VectorError::StaticFormat {
                    line: 1,
                    message: format!("header declares {count} vectors, found {}", sv.len()),
                });
            }
        }
        Ok(sv)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, VectorError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for x in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Either vector file kind, detected by the `CTXV1` magic.
pub enum VectorFile {
    Context(ContextVectors),
    Static(StaticVectors),
}

impl VectorFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, VectorError> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(CTXV1_MAGIC) {
            Ok(VectorFile::Context(ContextVectors::from_bytes(&bytes)?))
        } else {
            let text = String::from_utf8(bytes).map_err(|_| VectorError::StaticFormat {
                line: 0,
                message: "not UTF-8 and not CTXV1".into(),
            })?;
            Ok(VectorFile::Static(StaticVectors::parse(&text)?))
        }
    }
}
