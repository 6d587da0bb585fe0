//! Chart form of a PCFG and the Inside-Outside passes over it.
//!
//! Productions of arbitrary arity are left-factored into binary steps. A
//! production `A -> X1 .. Xk` with `k >= 3` gets private intermediate nodes
//! `[r,2] -> X1 X2`, `[r,i] -> [r,i-1] Xi` with weight one, and a final step
//! `A -> [r,k-1] Xk` carrying `θ_r`. Because intermediate nodes belong to a
//! single production, expected uses of a final step are exactly the
//! expected uses of the original production.
//!
//! Unary productions between nonterminals are folded in per span through the
//! closure `(I - U)^-1`, which also covers unary cycles.

use std::collections::HashMap;

use super::{Pcfg, PcfgError, Production};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Child {
    Node(u32),
    Term(u32),
}

#[derive(Debug, Clone)]
pub(crate) struct BinaryStep {
    pub parent: u32,
    pub left: Child,
    pub right: Child,
    /// Production whose final step this is; `None` for intermediate steps.
    pub rule: Option<u32>,
}

#[derive(Debug, Clone)]
pub(crate) struct UnaryStep {
    pub parent: u32,
    pub child: u32,
    pub rule: u32,
}

/// θ-independent structure of a grammar in chart form.
#[derive(Debug)]
pub(crate) struct ChartGrammar {
    nonterminals: Vec<String>,
    nt_index: HashMap<String, u32>,
    terminals: Vec<String>,
    t_index: HashMap<String, u32>,
    start: u32,
    /// Nonterminals followed by intermediate nodes.
    pub n_nodes: usize,
    /// Sorted by owning production.
    pub binary: Vec<BinaryStep>,
    /// Per terminal: `(parent, rule)` for productions `A -> a`, in rule order.
    pub lexical: Vec<Vec<(u32, u32)>>,
    /// In rule order.
    pub unary: Vec<UnaryStep>,
    /// Nonterminals touched by unary productions.
    unary_nodes: Vec<u32>,
}

impl ChartGrammar {
    pub fn compile(start: &str, productions: &[Production]) -> Result<Self, PcfgError> {
        let mut nonterminals: Vec<String> = productions.iter().map(|p| p.lhs.clone()).collect();
        nonterminals.dedup();
        let nt_index: HashMap<String, u32> = nonterminals
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let start = *nt_index
            .get(start)
            .ok_or_else(|| PcfgError::UnknownStart(start.to_owned()))?;

        let mut terminals: Vec<String> = productions
            .iter()
            .flat_map(|p| p.rhs.iter())
            .filter(|s| !nt_index.contains_key(*s))
            .cloned()
            .collect();
        terminals.sort();
        terminals.dedup();
        let t_index: HashMap<String, u32> = terminals
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();

        let sym = |s: &str| match nt_index.get(s) {
            Some(&n) => Child::Node(n),
            None => Child::Term(t_index[s]),
        };

        let mut n_nodes = nonterminals.len();
        let mut binary = Vec::new();
        let mut lexical = vec![Vec::new(); terminals.len()];
        let mut unary = Vec::new();

        for (r, p) in productions.iter().enumerate() {
            let r = r as u32;
            let lhs = nt_index[&p.lhs];
            match p.rhs.len() {
                0 => return Err(PcfgError::EmptyRhs(p.lhs.clone())),
                1 => match sym(&p.rhs[0]) {
                    Child::Term(t) => lexical[t as usize].push((lhs, r)),
                    Child::Node(b) => unary.push(UnaryStep {
                        parent: lhs,
                        child: b,
                        rule: r,
                    }),
                },
                k => {
                    let mut left = sym(&p.rhs[0]);
                    for (i, s) in p.rhs.iter().enumerate().skip(1) {
                        let last = i == k - 1;
                        let parent = if last {
                            lhs
                        } else {
                            n_nodes += 1;
                            (n_nodes - 1) as u32
                        };
                        binary.push(BinaryStep {
                            parent,
                            left,
                            right: sym(s),
                            rule: last.then_some(r),
                        });
                        left = Child::Node(parent);
                    }
                }
            }
        }

        let mut unary_nodes: Vec<u32> = unary.iter().flat_map(|u| [u.parent, u.child]).collect();
        unary_nodes.sort_unstable();
        unary_nodes.dedup();

        Ok(ChartGrammar {
            nonterminals,
            nt_index,
            terminals,
            t_index,
            start,
            n_nodes,
            binary,
            lexical,
            unary,
            unary_nodes,
        })
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn start_label(&self) -> &str {
        &self.nonterminals[self.start as usize]
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn nonterminal_id(&self, s: &str) -> Option<u32> {
        self.nt_index.get(s).copied()
    }

    pub fn terminal(&self, t: u32) -> &str {
        &self.terminals[t as usize]
    }

    pub fn is_nonterminal_node(&self, n: u32) -> bool {
        (n as usize) < self.nonterminals.len()
    }

    /// Terminal ids for `x`; `None` if some word is not a terminal.
    pub fn encode<S: AsRef<str>>(&self, x: &[S]) -> Option<Vec<u32>> {
        x.iter().map(|w| self.t_index.get(w.as_ref()).copied()).collect()
    }

    /// `(I - U)^-1` restricted to the nonterminals touched by unary rules.
    pub fn closure<T: Real>(&self, theta: &[T]) -> Result<Closure<T>, PcfgError> {
        let u = self.unary_nodes.len();
        if u == 0 {
            return Ok(Closure {
                nodes: Vec::new(),
                matrix: Vec::new(),
            });
        }
        let pos: HashMap<u32, usize> = self.unary_nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        // augmented [I - U | I]
        let w = 2 * u;
        let mut m = vec![T::zero(); u * w];
        for i in 0..u {
            m[i * w + i] = T::one();
            m[i * w + u + i] = T::one();
        }
        for s in &self.unary {
            let (a, b) = (pos[&s.parent], pos[&s.child]);
            m[a * w + b] -= theta[s.rule as usize];
        }
        let cycle = |i: usize| PcfgError::UnaryCycle(self.nonterminals[self.unary_nodes[i] as usize].clone());
        for col in 0..u {
            let piv = (col..u)
                .max_by(|&a, &b| m[a * w + col].abs().partial_cmp(&m[b * w + col].abs()).unwrap())
                .unwrap();
            if m[piv * w + col].abs() < T::lit(1e-13) {
                return Err(cycle(col));
            }
            if piv != col {
                for k in 0..w {
                    m.swap(piv * w + k, col * w + k);
                }
            }
            let d = m[col * w + col];
            for k in 0..w {
                m[col * w + k] /= d;
            }
            for row in 0..u {
                if row == col {
                    continue;
                }
                let f = m[row * w + col];
                if f != T::zero() {
                    for k in 0..w {
                        let v = m[col * w + k];
                        m[row * w + k] -= f * v;
                    }
                }
            }
        }
        let mut matrix = vec![T::zero(); u * u];
        for i in 0..u {
            for j in 0..u {
                let v = m[i * w + u + j];
                if !v.is_finite() || v < -T::lit(1e-9) {
                    return Err(cycle(i));
                }
                matrix[i * u + j] = v.max(T::zero());
            }
        }
        Ok(Closure {
            nodes: self.unary_nodes.clone(),
            matrix,
        })
    }
}

/// Unary closure `C = (I - U)^-1` over a subset of nonterminals.
#[derive(Debug, Clone)]
pub(crate) struct Closure<T> {
    nodes: Vec<u32>,
    matrix: Vec<T>,
}

impl<T: Real> Closure<T> {
    /// `v[nodes] <- C v[nodes]`
    fn apply(&self, v: &mut [T], scratch: &mut Vec<T>) {
        self.mul(v, scratch, false)
    }

    /// `v[nodes] <- Cᵀ v[nodes]`
    fn apply_transposed(&self, v: &mut [T], scratch: &mut Vec<T>) {
        self.mul(v, scratch, true)
    }

    fn mul(&self, v: &mut [T], scratch: &mut Vec<T>, transposed: bool) {
        let u = self.nodes.len();
        if u == 0 {
            return;
        }
        scratch.clear();
        scratch.extend(self.nodes.iter().map(|&n| v[n as usize]));
        for (i, &n) in self.nodes.iter().enumerate() {
            let mut acc = T::zero();
            for (j, &x) in scratch.iter().enumerate() {
                if x != T::zero() {
                    let c = if transposed {
                        self.matrix[j * u + i]
                    } else {
                        self.matrix[i * u + j]
                    };
                    acc += c * x;
                }
            }
            v[n as usize] = acc;
        }
    }
}

/// Per-sentence result of the Inside-Outside pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceExpectations<T> {
    /// `log Σ_{y ∈ τ(x)} P(y)`; `-inf` when `x` has no parse.
    pub log_marginal: T,
    /// `E[f_r | x]`, aligned with [`Pcfg::productions`]. All zero when `x`
    /// has no parse.
    pub expected_counts: Vec<T>,
}

impl<T: Real> SentenceExpectations<T> {
    pub fn is_parsable(&self) -> bool {
        self.log_marginal > T::neg_infinity()
    }
}

/// Dense triangular chart of per-span node scores.
pub(crate) struct SpanChart<T> {
    n: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> SpanChart<T> {
    pub fn new(n: usize, width: usize, fill: T) -> Self {
        SpanChart {
            n,
            width,
            data: vec![fill; (n + 1) * (n + 1) * width],
        }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        (i * (self.n + 1) + j) * self.width
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, node: u32) -> T {
        self.data[self.offset(i, j) + node as usize]
    }

    #[inline]
    pub fn span(&self, i: usize, j: usize) -> &[T] {
        let o = self.offset(i, j);
        &self.data[o..o + self.width]
    }

    #[inline]
    pub fn span_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let o = self.offset(i, j);
        &mut self.data[o..o + self.width]
    }
}

#[inline]
fn child_value<T: Real>(chart: &SpanChart<T>, x: &[u32], c: Child, i: usize, k: usize) -> T {
    match c {
        Child::Node(n) => chart.get(i, k, n),
        Child::Term(t) => {
            if k == i + 1 && x[i] == t {
                T::one()
            } else {
                T::zero()
            }
        }
    }
}

#[inline]
fn step_weight<T: Real>(theta: &[T], s: &BinaryStep) -> T {
    match s.rule {
        Some(r) => theta[r as usize],
        None => T::one(),
    }
}

fn inside<T: Real>(g: &Pcfg<T>, x: &[u32]) -> SpanChart<T> {
    let cg = g.chart();
    let theta = g.theta_vec();
    let n = x.len();
    let mut chart = SpanChart::new(n, cg.n_nodes, T::zero());
    let mut scores = vec![T::zero(); cg.n_nodes];
    let mut scratch = Vec::new();
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            scores.iter_mut().for_each(|s| *s = T::zero());
            if len == 1 {
                for &(a, r) in &cg.lexical[x[i] as usize] {
                    scores[a as usize] += theta[r as usize];
                }
            }
            for s in &cg.binary {
                let w = step_weight(theta, s);
                if w == T::zero() {
                    continue;
                }
                let mut acc = T::zero();
                for k in i + 1..j {
                    let l = child_value(&chart, x, s.left, i, k);
                    if l == T::zero() {
                        continue;
                    }
                    let r = child_value(&chart, x, s.right, k, j);
                    acc += l * r;
                }
                if acc != T::zero() {
                    scores[s.parent as usize] += w * acc;
                }
            }
            g.closure().apply(&mut scores, &mut scratch);
            chart.span_mut(i, j).copy_from_slice(&scores);
        }
    }
    chart
}

pub(crate) fn log_inside<T: Real, S: AsRef<str>>(g: &Pcfg<T>, x: &[S]) -> Result<T, PcfgError> {
    if x.is_empty() {
        return Err(PcfgError::EmptySentence);
    }
    let Some(ids) = g.chart().encode(x) else {
        return Ok(T::neg_infinity());
    };
    let chart = inside(g, &ids);
    Ok(chart.get(0, ids.len(), g.chart().start()).ln())
}

pub(crate) fn inside_outside<T: Real, S: AsRef<str>>(
    g: &Pcfg<T>,
    x: &[S],
) -> Result<SentenceExpectations<T>, PcfgError> {
    if x.is_empty() {
        return Err(PcfgError::EmptySentence);
    }
    let cg = g.chart();
    let theta = g.theta_vec();
    let mut expected = vec![T::zero(); theta.len()];
    let unparsable = |expected| SentenceExpectations {
        log_marginal: T::neg_infinity(),
        expected_counts: expected,
    };
    let Some(x) = cg.encode(x) else {
        return Ok(unparsable(expected));
    };
    let n = x.len();
    let beta = inside(g, &x);
    let z = beta.get(0, n, cg.start());
    if z == T::zero() {
        return Ok(unparsable(expected));
    }

    let mut alpha = SpanChart::new(n, cg.n_nodes, T::zero());
    alpha.span_mut(0, n)[cg.start() as usize] = T::one();
    let mut outer = vec![T::zero(); cg.n_nodes];
    let mut scratch = Vec::new();
    for len in (1..=n).rev() {
        for i in 0..=n - len {
            let j = i + len;
            outer.copy_from_slice(alpha.span(i, j));
            if outer.iter().all(|&v| v == T::zero()) {
                continue;
            }
            g.closure().apply_transposed(&mut outer, &mut scratch);

            for u in &cg.unary {
                let o = outer[u.parent as usize];
                if o != T::zero() {
                    expected[u.rule as usize] += o * theta[u.rule as usize] * beta.get(i, j, u.child);
                }
            }
            if len == 1 {
                for &(a, r) in &cg.lexical[x[i] as usize] {
                    expected[r as usize] += outer[a as usize] * theta[r as usize];
                }
            }
            for s in &cg.binary {
                let o = outer[s.parent as usize];
                let w = step_weight(theta, s);
                if o == T::zero() || w == T::zero() {
                    continue;
                }
                let ow = o * w;
                for k in i + 1..j {
                    let l = child_value(&beta, &x, s.left, i, k);
                    if l == T::zero() {
                        continue;
                    }
                    let r = child_value(&beta, &x, s.right, k, j);
                    if r == T::zero() {
                        continue;
                    }
                    if let Some(rule) = s.rule {
                        expected[rule as usize] += ow * l * r;
                    }
                    if let Child::Node(a) = s.left {
                        alpha.span_mut(i, k)[a as usize] += ow * r;
                    }
                    if let Child::Node(b) = s.right {
                        alpha.span_mut(k, j)[b as usize] += ow * l;
                    }
                }
            }
        }
    }
    for e in &mut expected {
        *e /= z;
    }
    Ok(SentenceExpectations {
        log_marginal: z.ln(),
        expected_counts: expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcfg::tests::ambiguous;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn ambiguous_pair() {
        let g = ambiguous(0.5);
        let e = g.inside_outside(&["a", "a"]).unwrap();
        assert!(close(e.log_marginal, 0.0));
        // rules: A -> a, S -> A A, S -> a a
        assert!(close(e.expected_counts[0], 1.0));
        assert!(close(e.expected_counts[1], 0.5));
        assert!(close(e.expected_counts[2], 0.5));

        let e = ambiguous(0.9).inside_outside(&["a", "a"]).unwrap();
        assert!(close(e.expected_counts[1], 0.9));
        assert!(close(e.expected_counts[0], 1.8));
    }

    #[test]
    fn unparsable_and_unknown() {
        let g = ambiguous(0.5);
        for x in [vec!["a"], vec!["a", "a", "a"], vec!["c", "a"]] {
            let e = g.inside_outside(&x).unwrap();
            assert!(!e.is_parsable(), "{x:?}");
            assert!(e.expected_counts.iter().all(|&c| c == 0.0));
        }
        assert!(matches!(g.inside_outside::<&str>(&[]), Err(PcfgError::EmptySentence)));
    }

    #[test]
    fn unary_self_loop_geometric() {
        // S -> S (p), S -> a (1-p): Z = 1, E[S -> S] = p / (1 - p)
        let p = 0.3;
        let g = Pcfg::new(
            "S",
            vec![(Production::new("S", ["S"]), p), (Production::new("S", ["a"]), 1.0 - p)],
        )
        .unwrap();
        let e = g.inside_outside(&["a"]).unwrap();
        assert!(close(e.log_marginal, 0.0));
        assert!(close(e.expected_counts[0], p / (1.0 - p)));
        assert!(close(e.expected_counts[1], 1.0));
    }

    #[test]
    fn unary_two_cycle() {
        // S -> A (1), A -> S (q), A -> a (1-q)
        // chains S (A S)^k A a: P = q^k (1-q); Z = 1, E[A -> S] = q/(1-q)
        let q = 0.4;
        let g = Pcfg::new(
            "S",
            vec![
                (Production::new("S", ["A"]), 1.0),
                (Production::new("A", ["S"]), q),
                (Production::new("A", ["a"]), 1.0 - q),
            ],
        )
        .unwrap();
        let e = g.inside_outside(&["a"]).unwrap();
        assert!(close(e.log_marginal, 0.0));
        let id = |l: &str, r: &str| g.rule_id(&Production::new(l, [r])).unwrap();
        assert!(close(e.expected_counts[id("A", "S")], q / (1.0 - q)));
        assert!(close(e.expected_counts[id("S", "A")], 1.0 / (1.0 - q)));
        assert!(close(e.expected_counts[id("A", "a")], 1.0));
    }

    #[test]
    fn certain_unary_cycle_rejected() {
        let r = Pcfg::<f64>::new(
            "S",
            vec![(Production::new("S", ["A"]), 1.0), (Production::new("A", ["S"]), 1.0)],
        );
        assert!(matches!(r, Err(PcfgError::UnaryCycle(_))));
    }

    #[test]
    fn long_rule_with_terminals() {
        // S -> a B c B (1), B -> b (0.5) | B B (0.5)
        let g = Pcfg::new(
            "S",
            vec![
                (Production::new("S", ["a", "B", "c", "B"]), 1.0),
                (Production::new("B", ["b"]), 0.5),
                (Production::new("B", ["B", "B"]), 0.5),
            ],
        )
        .unwrap();
        let e = g.inside_outside(&["a", "b", "c", "b"]).unwrap();
        assert!(close(e.log_marginal, 0.25f64.ln()));
        let e = g.inside_outside(&["a", "b", "b", "c", "b"]).unwrap();
        // one parse: B -> B B over "b b"
        assert!(close(e.log_marginal, (0.5f64 * 0.25 * 0.5).ln()));
        let bb = g.rule_id(&Production::new("B", ["B", "B"])).unwrap();
        assert!(close(e.expected_counts[bb], 1.0));
    }

    #[test]
    fn f32_agrees_with_f64() {
        let g64 = ambiguous(0.3);
        let g32 = Pcfg::<f32>::from_text(&g64.to_text()).unwrap();
        let a = g64.inside_outside(&["a", "a"]).unwrap();
        let b = g32.inside_outside(&["a", "a"]).unwrap();
        assert!((a.log_marginal - b.log_marginal as f64).abs() < 1e-6);
    }
}
