//! Bitag taggers: the standard joint HMM, a conditional tag-given-word
//! chain, and two further joint factorizations, all decoded by posterior
//! marginals.

mod lattice;
mod model;
mod tables;

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::treebank::Corpus;

pub use lattice::Marginals;
pub use model::{fit_deleted_interpolation, InterpolatedCondDist, MixtureKind, TaggerModel, Variant};
pub use tables::{EmpiricalTables, Vocab};

/// Reserved boundary symbol at positions `0` and `m+1`, for words and tags.
pub const END: &str = "⋆";
/// Reserved word standing for rare and unseen words.
pub const UNK: &str = "<unk>";

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("tagged corpus, line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("sentence {index}: {words} words but {tags} tags")]
    LengthMismatch { index: usize, words: usize, tags: usize },
    #[error("empty sentence")]
    EmptySentence,
    #[error("reserved symbol `{0}` in data")]
    Reserved(String),
    #[error("position {position}: no tag has nonzero probability, even under the tag-bigram fallback")]
    DeadColumn { position: usize },
    #[error("model file, line {line}: {msg}")]
    Model { line: usize, msg: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub tags: Vec<String>,
}

impl TaggedSentence {
    pub fn new(words: Vec<String>, tags: Vec<String>) -> Result<Self, HmmError> {
        if words.len() != tags.len() {
            return Err(HmmError::LengthMismatch {
                index: 0,
                words: words.len(),
                tags: tags.len(),
            });
        }
        if words.is_empty() {
            return Err(HmmError::EmptySentence);
        }
        for s in words.iter().chain(&tags) {
            if s == END || s == UNK {
                return Err(HmmError::Reserved(s.clone()));
            }
        }
        Ok(TaggedSentence { words, tags })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl fmt::Display for TaggedSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (w, t)) in self.words.iter().zip(&self.tags).enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{w}_{t}")?;
        }
        Ok(())
    }
}

/// Sentences of `(word, tag)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaggedCorpus {
    sentences: Vec<TaggedSentence>,
}

impl TaggedCorpus {
    pub fn new(sentences: Vec<TaggedSentence>) -> Self {
        TaggedCorpus { sentences }
    }

    pub fn sentences(&self) -> &[TaggedSentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn tokens(&self) -> usize {
        self.sentences.iter().map(TaggedSentence::len).sum()
    }

    /// One sentence per line, `word_tag` tokens separated by spaces.
    pub fn parse(text: &str) -> Result<Self, HmmError> {
        let mut sentences = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| HmmError::Format { line: i + 1, msg };
            let mut words = Vec::new();
            let mut tags = Vec::new();
            for tok in line.split_whitespace() {
                let mut parts = tok.split('_');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(w), Some(t), None) if !w.is_empty() && !t.is_empty() => {
                        words.push(w.to_owned());
                        tags.push(t.to_owned());
                    }
                    _ => return Err(bad(format!("token `{tok}` is not of the form word_tag"))),
                }
            }
            sentences.push(TaggedSentence::new(words, tags).map_err(|e| bad(e.to_string()))?);
        }
        Ok(TaggedCorpus { sentences })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, HmmError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), HmmError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Words and preterminal labels of every tree.
    pub fn from_trees(corpus: &Corpus) -> Result<Self, HmmError> {
        let mut sentences = Vec::with_capacity(corpus.len());
        for t in corpus.trees() {
            let mut words = Vec::new();
            let mut tags = Vec::new();
            for n in t.nodes().filter(|n| n.is_preterminal()) {
                tags.push(n.label().to_owned());
                words.push(n.children()[0].label().to_owned());
            }
            sentences.push(TaggedSentence::new(words, tags)?);
        }
        Ok(TaggedCorpus { sentences })
    }
}

/// Fraction of positions where `pred` and `gold` agree.
pub fn tagging_accuracy(pred: &[Vec<String>], gold: &TaggedCorpus) -> Result<f64, HmmError> {
    if pred.len() != gold.len() {
        return Err(HmmError::LengthMismatch {
            index: pred.len().min(gold.len()),
            words: gold.len(),
            tags: pred.len(),
        });
    }
    let mut right = 0usize;
    let mut total = 0usize;
    for (i, (p, g)) in pred.iter().zip(gold.sentences()).enumerate() {
        if p.len() != g.len() {
            return Err(HmmError::LengthMismatch {
                index: i,
                words: g.len(),
                tags: p.len(),
            });
        }
        right += p.iter().zip(&g.tags).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    Ok(if total == 0 { 1.0 } else { right as f64 / total as f64 })
}
