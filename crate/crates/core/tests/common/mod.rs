//! Brute-force oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use likelab::hmm::TaggerModel;
use likelab::pcfg::{Pcfg, Production};
use likelab::shiftreduce::{apply_move, Move, MoveModel, Stack, STAR};
use likelab::treebank::Tree;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub const NONTERMINALS: [&str; 4] = ["S", "A", "B", "C"];
pub const TERMINALS: [&str; 2] = ["a", "b"];

/// A random grammar with at most 4 nonterminals and 6 rules. Unary rules
/// between nonterminals only point to later nonterminals, so every string
/// has finitely many parses.
pub fn random_grammar(r: &mut ChaCha20Rng) -> Pcfg<f64> {
    let n_nt = r.gen_range(1..=4);
    let nts = &NONTERMINALS[..n_nt];
    let n_rules = r.gen_range(n_nt..=6);
    let mut lhs: Vec<usize> = (0..n_nt).collect();
    while lhs.len() < n_rules {
        lhs.push(r.gen_range(0..n_nt));
    }
    let mut rules: HashMap<Production, f64> = HashMap::new();
    for &l in &lhs {
        for _ in 0..20 {
            let len = r.gen_range(1..=3);
            let rhs: Vec<&str> = (0..len)
                .map(|_| {
                    let later = &nts[(l + 1).min(n_nt)..];
                    let pool_nt = if len == 1 { later } else { nts };
                    if !pool_nt.is_empty() && r.gen_bool(0.5) {
                        *pool_nt.choose(r).unwrap()
                    } else {
                        *TERMINALS.choose(r).unwrap()
                    }
                })
                .collect();
            let p = Production::new(nts[l], rhs);
            if let std::collections::hash_map::Entry::Vacant(e) = rules.entry(p) {
                e.insert(r.gen_range(0.1..1.0));
                break;
            }
        }
    }
    let mut totals: HashMap<String, f64> = HashMap::new();
    for (p, w) in &rules {
        *totals.entry(p.lhs.clone()).or_default() += w;
    }
    let rules = rules
        .into_iter()
        .map(|(p, w)| {
            let z = totals[&p.lhs];
            (p, w / z)
        })
        .collect();
    Pcfg::new("S", rules).unwrap()
}

fn expand(g: &Pcfg<f64>, sym: &str, x: &[&str], i: usize, j: usize) -> Vec<(Tree, f64)> {
    if !g.is_nonterminal(sym) {
        return if j == i + 1 && x[i] == sym {
            vec![(Tree::leaf(sym), 1.0)]
        } else {
            Vec::new()
        };
    }
    let mut out = Vec::new();
    for (r, p) in g.productions().iter().enumerate() {
        if p.lhs != sym {
            continue;
        }
        let theta = g.theta_vec()[r];
        for parts in splits(i, j, p.rhs.len()) {
            let mut partial: Vec<(Vec<Tree>, f64)> = vec![(Vec::new(), theta)];
            for (k, child) in p.rhs.iter().enumerate() {
                let subs = expand(g, child, x, parts[k], parts[k + 1]);
                let mut next = Vec::new();
                for (kids, w) in &partial {
                    for (t, v) in &subs {
                        let mut kids = kids.clone();
                        kids.push(t.clone());
                        next.push((kids, w * v));
                    }
                }
                partial = next;
                if partial.is_empty() {
                    break;
                }
            }
            out.extend(partial.into_iter().map(|(k, w)| (Tree::node(sym, k), w)));
        }
    }
    out
}

/// Boundaries `i = b0 < b1 < .. < bn = j` splitting `[i, j)` into `n`
/// non-empty parts.
fn splits(i: usize, j: usize, n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return if j > i { vec![vec![i, j]] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for m in i + 1..j {
        for mut rest in splits(m, j, n - 1) {
            rest.insert(0, i);
            out.push(rest);
        }
    }
    out
}

/// Every parse of `x` from the start symbol with its probability.
pub fn enumerate_parses(g: &Pcfg<f64>, x: &[&str]) -> Vec<(Tree, f64)> {
    expand(g, g.start(), x, 0, x.len())
}

pub fn rule_usage(g: &Pcfg<f64>, t: &Tree) -> Vec<f64> {
    let mut f = vec![0.0; g.len()];
    for n in t.nodes().filter(|n| !n.is_leaf()) {
        f[g.rule_id(&Production::at(n)).unwrap()] += 1.0;
    }
    f
}

/// `(Σ_y P(y), E[f_r | x])` by enumeration.
pub fn brute_expectations(g: &Pcfg<f64>, x: &[&str]) -> (f64, Vec<f64>) {
    let parses = enumerate_parses(g, x);
    let z: f64 = parses.iter().map(|(_, p)| p).sum();
    let mut e = vec![0.0; g.len()];
    for (t, p) in &parses {
        for (ei, fi) in e.iter_mut().zip(rule_usage(g, t)) {
            *ei += p * fi / z;
        }
    }
    (z, e)
}

/// All strings over `alphabet` of length `1..=max_len`.
pub fn all_strings<'a>(alphabet: &[&'a str], max_len: usize) -> Vec<Vec<&'a str>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<&str>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|s| {
                alphabet.iter().map(move |a| {
                    let mut s = s.clone();
                    s.push(*a);
                    s
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Samples a tree top-down, giving up past `max_nodes`.
pub fn sample_tree(g: &Pcfg<f64>, r: &mut ChaCha20Rng, max_nodes: usize) -> Option<Tree> {
    fn go(g: &Pcfg<f64>, sym: &str, r: &mut ChaCha20Rng, budget: &mut usize) -> Option<Tree> {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        if !g.is_nonterminal(sym) {
            return Some(Tree::leaf(sym));
        }
        let mut u: f64 = r.gen();
        let rules: Vec<usize> = (0..g.len()).filter(|&i| g.productions()[i].lhs == sym).collect();
        let mut pick = *rules.last().unwrap();
        for &i in &rules {
            if u < g.theta_vec()[i] {
                pick = i;
                break;
            }
            u -= g.theta_vec()[i];
        }
        let p = g.productions()[pick].clone();
        let kids = p.rhs.iter().map(|c| go(g, c, r, budget)).collect::<Option<Vec<_>>>()?;
        Some(Tree::node(sym, kids))
    }
    let mut budget = max_nodes;
    go(g, g.start(), r, &mut budget)
}

/// Posterior marginals (indexed by tag id) and the total mass, summing
/// `exp(sequence_log_prob)` over every sequence of real tags.
pub fn brute_marginals(m: &TaggerModel<f64>, words: &[&str]) -> (Vec<Vec<f64>>, f64) {
    let tags = m.vocab().real_tags().to_vec();
    let k = m.vocab().n_tags();
    let n = words.len();
    let mut post = vec![vec![0.0; k]; n];
    let mut z = 0.0;
    let total = tags.len().pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let seq: Vec<&str> = (0..n)
            .map(|_| {
                let t = &tags[c % tags.len()];
                c /= tags.len();
                t.as_str()
            })
            .collect();
        let p = m.sequence_log_prob(words, &seq).unwrap().exp();
        z += p;
        for (j, t) in seq.iter().enumerate() {
            post[j][m.vocab().tag_id(t).unwrap() as usize] += p;
        }
    }
    for row in &mut post {
        row.iter_mut().for_each(|v| *v /= z);
    }
    (post, z)
}

/// Per-position argmax; ties within a relative 1e-12 go to the smaller id.
pub fn argmax_tags(m: &TaggerModel<f64>, post: &[Vec<f64>]) -> Vec<String> {
    post.iter()
        .map(|p| {
            let best = p.iter().copied().fold(0.0, f64::max);
            let i = p.iter().position(|&v| v >= best - best * 1e-12).unwrap();
            m.vocab().tag(i as u32).to_owned()
        })
        .collect()
}

/// Every complete move sequence for `words` with non-zero probability, up to
/// `max_moves` moves, scored by `parse_log_prob`.
pub fn brute_sr_parses(m: &MoveModel<f64>, words: &[&str], max_moves: usize) -> Vec<(Vec<Move>, f64)> {
    fn go(
        m: &MoveModel<f64>,
        words: &[&str],
        stack: Stack<String>,
        j: usize,
        moves: &mut Vec<Move>,
        max_moves: usize,
        out: &mut Vec<(Vec<Move>, f64)>,
    ) {
        if moves.len() >= max_moves {
            return;
        }
        let look = words.get(j).copied().unwrap_or(STAR);
        for (mv, p) in m.distribution(stack.s1(), stack.s2(), look) {
            if p <= 0.0 {
                continue;
            }
            if let Move::Shift(w) = &mv {
                if w != look {
                    continue;
                }
            }
            let Ok(next) = apply_move(&stack, &mv) else {
                continue;
            };
            let shift = matches!(mv, Move::Shift(_));
            let done = shift && j == words.len();
            moves.push(mv);
            if done {
                let lp = m.parse_log_prob(moves, words).unwrap();
                out.push((moves.clone(), lp));
            } else {
                go(m, words, next, j + usize::from(shift), moves, max_moves, out);
            }
            moves.pop();
        }
    }
    let mut out = Vec::new();
    go(m, words, Stack::new(), 0, &mut Vec::new(), max_moves, &mut out);
    out
}

/// Highest score, then the lexicographically smallest move sequence.
pub fn best_sr_parse(parses: &[(Vec<Move>, f64)]) -> Option<&(Vec<Move>, f64)> {
    parses
        .iter()
        .reduce(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
}

/// A random `S`-rooted tree whose internal nodes have one or two children;
/// unary nodes sit directly above terminals so move models never loop on
/// unary moves.
pub fn random_binary_tree(r: &mut ChaCha20Rng, labels: &[&str], words: &[&str], leaves: usize) -> Tree {
    fn go(r: &mut ChaCha20Rng, labels: &[&str], words: &[&str], n: usize) -> Tree {
        let label = *labels.choose(r).unwrap();
        if n == 1 {
            let w = Tree::leaf(*words.choose(r).unwrap());
            return if r.gen_bool(0.6) { Tree::node(label, vec![w]) } else { w };
        }
        let k = r.gen_range(1..n);
        Tree::node(label, vec![go(r, labels, words, k), go(r, labels, words, n - k)])
    }
    let kids = if leaves == 1 {
        vec![Tree::leaf(*words.choose(r).unwrap())]
    } else {
        let k = r.gen_range(1..leaves);
        vec![go(r, labels, words, k), go(r, labels, words, leaves - k)]
    };
    Tree::node("S", kids)
}

/// A random tree with up to `max_children` children per node.
pub fn random_nary_tree(
    r: &mut ChaCha20Rng,
    labels: &[&str],
    words: &[&str],
    depth: usize,
    max_children: usize,
) -> Tree {
    let label = *labels.choose(r).unwrap();
    let n = r.gen_range(1..=max_children);
    let kids = (0..n)
        .map(|_| {
            if depth == 0 || r.gen_bool(0.4) {
                Tree::node(*labels.choose(r).unwrap(), vec![Tree::leaf(*words.choose(r).unwrap())])
            } else {
                random_nary_tree(r, labels, words, depth - 1, max_children)
            }
        })
        .collect();
    Tree::node(label, kids)
}

pub fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= abs.max(rel * a.abs().max(b.abs()))
}
