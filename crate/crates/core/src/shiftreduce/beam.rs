use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use rayon::prelude::*;

use super::model::{MoveModel, STAR_ID};
use super::{apply, rebuild, Move, Stack};
use crate::num::Real;
use crate::treebank::{Binarizer, Tree};

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    /// A state that has just shifted its k-th word is dropped when it scores
    /// below `best · threshold`, `best` being the top state to shift k words.
    pub threshold: f64,
    /// Drop states whose top two symbols never formed a training context.
    pub require_observed_pairs: bool,
    /// Expansions allowed per class before the rest of the class is dropped.
    pub max_states: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            threshold: 1e-9,
            require_observed_pairs: true,
            max_states: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BeamParse<T> {
    /// Still binarized.
    pub tree: Tree,
    pub log_prob: T,
    pub moves: Vec<Move>,
}

struct History {
    mv: u32,
    prev: Option<Rc<History>>,
}

fn history_vec(h: &Option<Rc<History>>) -> Vec<u32> {
    let mut out = Vec::new();
    let mut cur = h.as_ref();
    while let Some(n) = cur {
        out.push(n.mv);
        cur = n.prev.as_ref();
    }
    out.reverse();
    out
}

struct State<T> {
    stack: Stack<u32>,
    score: T,
    hist: Option<Rc<History>>,
}

impl<T: Real> State<T> {
    fn extend(&self, stack: Stack<u32>, lp: T, mv: u32) -> Self {
        State {
            stack,
            score: self.score + lp,
            hist: Some(Rc::new(History {
                mv,
                prev: self.hist.clone(),
            })),
        }
    }

    fn context(&self) -> (u32, u32) {
        (
            self.stack.top().copied().unwrap_or(STAR_ID),
            self.stack.second().copied().unwrap_or(STAR_ID),
        )
    }
}

// Better states compare greater: higher score, then the smaller move sequence.
impl<T: Real> Ord for State<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .partial_cmp(&other.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| history_vec(&other.hist).cmp(&history_vec(&self.hist)))
    }
}

impl<T: Real> PartialOrd for State<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> PartialEq for State<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for State<T> {}

impl<T: Real> MoveModel<T> {
    /// Best-first beam search over move sequences. States are grouped by the
    /// number of words shifted; each group is pruned against its best member
    /// as it is entered, then closed under reductions. `None` when every
    /// analysis is pruned or has probability zero.
    pub fn beam_parse<S: AsRef<str>>(&self, words: &[S], cfg: &BeamConfig) -> Option<BeamParse<T>> {
        let m = words.len();
        if m == 0 {
            return None;
        }
        let ids: Vec<u32> = words.iter().map(|w| self.sym(w.as_ref())).collect::<Option<_>>()?;
        let look = |j: usize| ids.get(j).copied().unwrap_or(STAR_ID);
        let log_thr = T::lit(cfg.threshold.ln());
        let keep = |s: &State<T>| {
            !cfg.require_observed_pairs || {
                let (a, b) = s.context();
                self.pair_observed(a, b)
            }
        };

        let mut next: Vec<State<T>> = vec![State {
            stack: Stack::new(),
            score: T::zero(),
            hist: None,
        }];
        let mut done: Option<State<T>> = None;
        for j in 0..=m {
            let mut entering = std::mem::take(&mut next);
            if let Some(best) = entering
                .iter()
                .map(|s| s.score)
                .reduce(|a, b| if b > a { b } else { a })
            {
                let floor = best + log_thr;
                entering.retain(|s| s.score >= floor);
            }
            let mut heap: BinaryHeap<State<T>> = entering.into();
            let w = look(j);
            let mut expanded = 0;
            while let Some(st) = heap.pop() {
                expanded += 1;
                if expanded > cfg.max_states {
                    log::warn!("beam: class {j} exceeded {} states; dropping the rest", cfg.max_states);
                    break;
                }
                let (s1, s2) = st.context();
                for (id, p) in self.distribution_ids(s1, s2, w).into_iter().enumerate() {
                    if !(p > T::zero()) {
                        continue;
                    }
                    let id = id as u32;
                    let c = self.code(id);
                    if c.arity == 0 && c.sym != w {
                        continue;
                    }
                    let Some(stack) = apply(&st.stack, c.arity == 0, c.arity as usize, c.sym) else {
                        continue;
                    };
                    let new = st.extend(stack, p.ln(), id);
                    if c.arity == 0 && j == m {
                        if done.as_ref().is_none_or(|d| new > *d) {
                            done = Some(new);
                        }
                    } else if !keep(&new) {
                        continue;
                    } else if c.arity == 0 {
                        next.push(new);
                    } else {
                        heap.push(new);
                    }
                }
            }
            if j < m && next.is_empty() {
                return None;
            }
        }
        let done = done?;
        let moves: Vec<Move> = history_vec(&done.hist)
            .into_iter()
            .map(|i| self.moves()[i as usize].clone())
            .collect();
        let tree = rebuild(&moves).ok()?;
        Some(BeamParse {
            tree,
            log_prob: done.score,
            moves,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    /// Debinarized best parses in input order; `None` where the search failed.
    pub trees: Vec<Option<Tree>>,
    pub failures: usize,
}

/// Parses every sentence in parallel.
pub fn parse_corpus<T: Real>(
    model: &MoveModel<T>,
    sentences: &[Vec<String>],
    cfg: &BeamConfig,
    binarizer: &Binarizer,
) -> ParsedCorpus {
    let trees: Vec<Option<Tree>> = sentences
        .par_iter()
        .map(|s| model.beam_parse(s, cfg).map(|p| binarizer.debinarize(&p.tree)))
        .collect();
    let failures = trees.iter().filter(|t| t.is_none()).count();
    ParsedCorpus { trees, failures }
}
