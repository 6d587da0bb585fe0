//! Stochastic shift-reduce parsing over unary/binary trees: the move
//! algebra, joint and look-ahead conditioned move models, and beam search.

mod beam;
mod model;

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use thiserror::Error;

use crate::treebank::{Tree, TreebankError};

pub use beam::{parse_corpus, BeamConfig, BeamParse, ParsedCorpus};
pub use model::{estimate_conditional, estimate_conditional_fixed, estimate_joint, Flavor, MoveModel};

/// Empty-stack reading, end-of-input look-ahead and the final shifted symbol.
pub const STAR: &str = "⋆";

#[derive(Debug, Error)]
pub enum SrError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("node `{label}` has {arity} children; binarize the trees first")]
    Arity { label: String, arity: usize },
    #[error("move {index} ({mv}) cannot be applied to the current stack")]
    Inapplicable { index: usize, mv: Move },
    #[error("trees have several root labels ({0})")]
    MultipleRoots(String),
    #[error("invalid move sequence: {0}")]
    InvalidReplay(String),
    #[error("reserved symbol `{0}` in a tree")]
    Reserved(String),
    #[error("model file, line {line}: {msg}")]
    Model { line: usize, msg: String },
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// `shift(w)`, `reduce1(c)` or `reduce2(c)`. Orders by kind, then label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Shift(String),
    Reduce1(String),
    Reduce2(String),
}

impl Move {
    pub fn label(&self) -> &str {
        match self {
            Move::Shift(s) | Move::Reduce1(s) | Move::Reduce2(s) => s,
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Shift(s) => write!(f, "shift:{s}"),
            Move::Reduce1(s) => write!(f, "reduce1:{s}"),
            Move::Reduce2(s) => write!(f, "reduce2:{s}"),
        }
    }
}

impl FromStr for Move {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (k, l) = s.split_once(':').ok_or_else(|| format!("bad move `{s}`"))?;
        let l = l.to_owned();
        match k {
            "shift" => Ok(Move::Shift(l)),
            "reduce1" => Ok(Move::Reduce1(l)),
            "reduce2" => Ok(Move::Reduce2(l)),
            _ => Err(format!("bad move kind `{k}`")),
        }
    }
}

#[derive(Debug)]
struct Frame<L> {
    label: L,
    below: Option<Rc<Frame<L>>>,
    len: usize,
}

/// Persistent stack: pushes and pops share structure with the original.
#[derive(Debug)]
pub struct Stack<L> {
    head: Option<Rc<Frame<L>>>,
}

impl<L> Clone for Stack<L> {
    fn clone(&self) -> Self {
        Stack {
            head: self.head.clone(),
        }
    }
}

impl<L> Default for Stack<L> {
    fn default() -> Self {
        Stack { head: None }
    }
}

impl<L: Clone> Stack<L> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.head.as_ref().map_or(0, |f| f.len)
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_none()
    }

    pub fn push(&self, label: L) -> Self {
        let len = self.len() + 1;
        Stack {
            head: Some(Rc::new(Frame {
                label,
                below: self.head.clone(),
                len,
            })),
        }
    }

    pub fn pop(&self) -> Option<(L, Self)> {
        let f = self.head.as_ref()?;
        Some((f.label.clone(), Stack { head: f.below.clone() }))
    }

    pub fn top(&self) -> Option<&L> {
        self.head.as_ref().map(|f| &f.label)
    }

    pub fn second(&self) -> Option<&L> {
        self.head.as_ref()?.below.as_ref().map(|f| &f.label)
    }

    /// Bottom to top.
    pub fn to_vec(&self) -> Vec<L> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self.head.as_ref();
        while let Some(f) = cur {
            out.push(f.label.clone());
            cur = f.below.as_ref();
        }
        out.reverse();
        out
    }
}

impl Stack<String> {
    pub fn from_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        labels.into_iter().fold(Stack::new(), |s, l| s.push(l.into()))
    }

    /// Top label, or `⋆` for an empty stack.
    pub fn s1(&self) -> &str {
        self.top().map_or(STAR, String::as_str)
    }

    /// Next-to-top label, or `⋆` for a stack with fewer than two elements.
    pub fn s2(&self) -> &str {
        self.second().map_or(STAR, String::as_str)
    }
}

impl<L: PartialEq> PartialEq for Stack<L> {
    fn eq(&self, other: &Self) -> bool {
        let (mut a, mut b) = (self.head.as_ref(), other.head.as_ref());
        loop {
            match (a, b) {
                (None, None) => return true,
                (Some(x), Some(y)) if Rc::ptr_eq(x, y) => return true,
                (Some(x), Some(y)) if x.len == y.len && x.label == y.label => {
                    a = x.below.as_ref();
                    b = y.below.as_ref();
                }
                _ => return false,
            }
        }
    }
}

/// Applies one move; `None` if it is not applicable.
pub(crate) fn apply<L: Clone>(s: &Stack<L>, shift: bool, arity: usize, label: L) -> Option<Stack<L>> {
    if shift {
        return Some(s.push(label));
    }
    let mut cur = s.clone();
    for _ in 0..arity {
        cur = cur.pop()?.1;
    }
    Some(cur.push(label))
}

/// `shift(w)` pushes `w`; `reduce_i(c)` pops `i` labels and pushes `c`.
pub fn apply_move(s: &Stack<String>, m: &Move) -> Result<Stack<String>, SrError> {
    let r = match m {
        Move::Shift(w) => apply(s, true, 0, w.clone()),
        Move::Reduce1(c) => apply(s, false, 1, c.clone()),
        Move::Reduce2(c) => apply(s, false, 2, c.clone()),
    };
    r.ok_or_else(|| SrError::Inapplicable {
        index: 0,
        mv: m.clone(),
    })
}

/// Post-order move sequence of a unary/binary tree, ending in `shift(⋆)`.
pub fn oracle_moves(t: &Tree) -> Result<Vec<Move>, SrError> {
    fn walk(t: &Tree, out: &mut Vec<Move>) -> Result<(), SrError> {
        if t.label() == STAR {
            return Err(SrError::Reserved(STAR.to_owned()));
        }
        if t.is_leaf() {
            out.push(Move::Shift(t.label().to_owned()));
            return Ok(());
        }
        for c in t.children() {
            walk(c, out)?;
        }
        let l = t.label().to_owned();
        out.push(match t.children().len() {
            1 => Move::Reduce1(l),
            2 => Move::Reduce2(l),
            n => {
                return Err(SrError::Arity {
                    label: t.label().to_owned(),
                    arity: n,
                })
            }
        });
        Ok(())
    }
    if t.is_leaf() {
        return Err(SrError::InvalidReplay("a bare leaf is not a parse tree".into()));
    }
    let mut out = Vec::new();
    walk(t, &mut out)?;
    out.push(Move::Shift(STAR.to_owned()));
    Ok(out)
}

/// Replays a complete parse into its tree. The sequence must end with
/// `shift(⋆)` applied to a one-element stack.
pub fn rebuild(moves: &[Move]) -> Result<Tree, SrError> {
    let (last, body) = moves
        .split_last()
        .ok_or_else(|| SrError::InvalidReplay("no moves".into()))?;
    if *last != Move::Shift(STAR.to_owned()) {
        return Err(SrError::InvalidReplay("last move is not shift(⋆)".into()));
    }
    let mut stack: Vec<Tree> = Vec::new();
    for (i, m) in body.iter().enumerate() {
        let bad = || SrError::Inapplicable {
            index: i,
            mv: m.clone(),
        };
        match m {
            Move::Shift(w) if w == STAR => {
                return Err(SrError::InvalidReplay(format!("shift(⋆) at move {i} before the end")))
            }
            Move::Shift(w) => stack.push(Tree::leaf(w.clone())),
            Move::Reduce1(c) => {
                let a = stack.pop().ok_or_else(bad)?;
                stack.push(Tree::node(c.clone(), vec![a]));
            }
            Move::Reduce2(c) => {
                if stack.len() < 2 {
                    return Err(bad());
                }
                let b = stack.pop().unwrap();
                let a = stack.pop().unwrap();
                stack.push(Tree::node(c.clone(), vec![a, b]));
            }
        }
    }
    match <[Tree; 1]>::try_from(stack) {
        Ok([t]) if !t.is_leaf() => Ok(t),
        Ok(_) => Err(SrError::InvalidReplay("final stack holds a bare terminal".into())),
        Err(s) => Err(SrError::InvalidReplay(format!(
            "final stack has {} elements before shift(⋆)",
            s.len()
        ))),
    }
}
