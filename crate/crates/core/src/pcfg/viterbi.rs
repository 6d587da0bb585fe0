//! Max-product CKY over the chart form.
//!
//! Ties are broken by production order (lexicographic `(lhs, rhs)`), then by
//! split point, smallest first: candidates are visited in that order and only
//! a strictly better one replaces the incumbent.

use super::chart::{BinaryStep, Child, SpanChart};
use super::Pcfg;
use crate::num::Real;
use crate::treebank::Tree;

#[derive(Debug, Clone, Copy)]
enum Back {
    None,
    Lexical,
    Binary { step: u32, split: u32 },
    Unary { child: u32 },
}

fn child_score<T: Real>(chart: &SpanChart<T>, x: &[u32], c: Child, i: usize, k: usize) -> T {
    match c {
        Child::Node(n) => chart.get(i, k, n),
        Child::Term(t) => {
            if k == i + 1 && x[i] == t {
                T::zero()
            } else {
                T::neg_infinity()
            }
        }
    }
}

pub(crate) fn viterbi_parse<T: Real, S: AsRef<str>>(g: &Pcfg<T>, x: &[S]) -> Option<Tree> {
    if x.is_empty() {
        return None;
    }
    let cg = g.chart();
    let x = cg.encode(x)?;
    let n = x.len();
    let log_theta: Vec<T> = g.theta_vec().iter().map(|t| t.ln()).collect();
    let step_w = |s: &BinaryStep| s.rule.map_or(T::zero(), |r| log_theta[r as usize]);

    let mut best = SpanChart::new(n, cg.n_nodes, T::neg_infinity());
    let mut back = SpanChart::new(n, cg.n_nodes, Back::None);
    let mut scores = vec![T::neg_infinity(); cg.n_nodes];
    let mut ptrs = vec![Back::None; cg.n_nodes];

    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            scores.iter_mut().for_each(|s| *s = T::neg_infinity());
            ptrs.iter_mut().for_each(|p| *p = Back::None);
            if len == 1 {
                for &(a, r) in &cg.lexical[x[i] as usize] {
                    let cand = log_theta[r as usize];
                    if cand > scores[a as usize] {
                        scores[a as usize] = cand;
                        ptrs[a as usize] = Back::Lexical;
                    }
                }
            }
            for (si, s) in cg.binary.iter().enumerate() {
                let w = step_w(s);
                if w == T::neg_infinity() {
                    continue;
                }
                for k in i + 1..j {
                    let l = child_score(&best, &x, s.left, i, k);
                    if l == T::neg_infinity() {
                        continue;
                    }
                    let cand = w + l + child_score(&best, &x, s.right, k, j);
                    if cand > scores[s.parent as usize] {
                        scores[s.parent as usize] = cand;
                        ptrs[s.parent as usize] = Back::Binary {
                            step: si as u32,
                            split: k as u32,
                        };
                    }
                }
            }
            // Bellman-Ford style relaxation; log θ <= 0 so no cycle improves.
            loop {
                let mut changed = false;
                for u in &cg.unary {
                    let cand = scores[u.child as usize] + log_theta[u.rule as usize];
                    if cand > scores[u.parent as usize] {
                        scores[u.parent as usize] = cand;
                        ptrs[u.parent as usize] = Back::Unary { child: u.child };
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            best.span_mut(i, j).copy_from_slice(&scores);
            back.span_mut(i, j).copy_from_slice(&ptrs);
        }
    }

    let start = cg.start();
    if best.get(0, n, start) == T::neg_infinity() {
        return None;
    }
    let b = Builder { g, x: &x, back: &back };
    Some(b.node(start, 0, n))
}

struct Builder<'a, T> {
    g: &'a Pcfg<T>,
    x: &'a [u32],
    back: &'a SpanChart<Back>,
}

impl<T: Real> Builder<'_, T> {
    fn label(&self, n: u32) -> &str {
        &self.g.chart().nonterminals()[n as usize]
    }

    fn node(&self, n: u32, i: usize, j: usize) -> Tree {
        let cg = self.g.chart();
        match self.back.get(i, j, n) {
            Back::Lexical => Tree::node(self.label(n), vec![Tree::leaf(cg.terminal(self.x[i]))]),
            Back::Unary { child } => Tree::node(self.label(n), vec![self.node(child, i, j)]),
            Back::Binary { .. } => {
                let mut kids = Vec::new();
                self.expand(n, i, j, &mut kids);
                Tree::node(self.label(n), kids)
            }
            Back::None => unreachable!("no backpointer for a reachable cell"),
        }
    }

    /// Children produced by the binary step chain ending at node `n`.
    fn expand(&self, n: u32, i: usize, j: usize, out: &mut Vec<Tree>) {
        let cg = self.g.chart();
        let Back::Binary { step, split } = self.back.get(i, j, n) else {
            unreachable!("intermediate node without a binary backpointer")
        };
        let s = &cg.binary[step as usize];
        let k = split as usize;
        self.child(s.left, i, k, out);
        self.child(s.right, k, j, out);
    }

    fn child(&self, c: Child, i: usize, j: usize, out: &mut Vec<Tree>) {
        let cg = self.g.chart();
        match c {
            Child::Term(t) => out.push(Tree::leaf(cg.terminal(t))),
            Child::Node(m) if cg.is_nonterminal_node(m) => out.push(self.node(m, i, j)),
            Child::Node(m) => self.expand(m, i, j, out),
        }
    }
}
