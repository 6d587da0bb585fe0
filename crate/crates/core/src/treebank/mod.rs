//! Bracketed treebanks: reading, writing, lexical stripping and
//! head-driven (de)binarization.

mod binarize;
mod bracketed;
mod heads;
mod tree;

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

pub use binarize::{binarize, debinarize, Binarizer, DEFAULT_MARKER};
pub use bracketed::{read_bracketed, write_bracketed};
pub use heads::{Direction, HeadRule, HeadRules};
pub use tree::{tree_yield, Nodes, Tree};

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("head rules, line {line}: {msg}")]
    HeadRules { line: usize, msg: String },
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Trees with per-tree identifiers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    trees: Vec<Tree>,
    ids: Vec<String>,
}

impl Corpus {
    /// Assigns 1-based positional ids.
    pub fn new(trees: Vec<Tree>) -> Self {
        let ids = (1..=trees.len()).map(|i| i.to_string()).collect();
        Corpus { trees, ids }
    }

    pub fn with_ids(trees: Vec<Tree>, ids: Vec<String>) -> Self {
        assert_eq!(trees.len(), ids.len(), "one id per tree");
        Corpus { trees, ids }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tree)> {
        self.ids.iter().map(String::as_str).zip(&self.trees)
    }

    /// Applies `f` to every tree, keeping ids.
    pub fn map(&self, f: impl Fn(&Tree) -> Tree) -> Corpus {
        Corpus {
            trees: self.trees.iter().map(f).collect(),
            ids: self.ids.clone(),
        }
    }

    pub fn try_map<E>(&self, f: impl Fn(&Tree) -> Result<Tree, E>) -> Result<Corpus, E> {
        Ok(Corpus {
            trees: self.trees.iter().map(f).collect::<Result<_, _>>()?,
            ids: self.ids.clone(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Corpus, TreebankError> {
        read_bracketed(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TreebankError> {
        std::fs::write(path, write_bracketed(self))?;
        Ok(())
    }

    /// Count of each root label.
    pub fn root_labels(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for t in &self.trees {
            *m.entry(t.label()).or_insert(0) += 1;
        }
        m
    }
}

/// Replaces every preterminal by a leaf carrying the preterminal's label.
pub fn strip_lexical(t: &Tree) -> Result<Tree, TreebankError> {
    if t.is_leaf() {
        return Err(TreebankError::Malformed(format!(
            "bare leaf `{}` has no preterminal parent",
            t.label()
        )));
    }
    strip_inner(t)
}

fn strip_inner(t: &Tree) -> Result<Tree, TreebankError> {
    if t.is_preterminal() {
        return Ok(Tree::leaf(t.label()));
    }
    let mut children = Vec::with_capacity(t.children().len());
    for c in t.children() {
        if c.is_leaf() {
            return Err(TreebankError::Malformed(format!(
                "leaf `{}` under `{}` which has {} children",
                c.label(),
                t.label(),
                t.children().len()
            )));
        }
        children.push(strip_inner(c)?);
    }
    Ok(Tree::node(t.label(), children))
}

/// Wraps every tree in a new root labelled `label`.
pub fn add_root(t: &Tree, label: &str) -> Tree {
    Tree::node(label, vec![t.clone()])
}
