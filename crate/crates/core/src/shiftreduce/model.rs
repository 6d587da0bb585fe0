use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::{apply, oracle_moves, Move, SrError, Stack, STAR};
use crate::num::{fmt_sig17, Real};
use crate::smoothing::{fit_lambdas, CondTable, HeldoutEvent, LambdaFit, Lambdas, SmoothingConfig};
use crate::treebank::{tree_yield, Corpus};

pub(crate) const STAR_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// `P(m | s1, s2)`
    Joint,
    /// `P(m | s1, s2, w)` with `w` the look-ahead symbol.
    Conditional,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Joint => "joint",
            Flavor::Conditional => "cond",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "joint" => Ok(Flavor::Joint),
            "cond" | "conditional" => Ok(Flavor::Conditional),
            _ => Err(format!("unknown flavor `{s}`; expected joint or cond")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Code {
    /// 0 shift, 1 reduce1, 2 reduce2
    pub arity: u8,
    pub sym: u32,
}

type JointKey = (String, String, Move);
type LexKey = (String, String, String, Move);

/// Move distributions with structural zeros, over an interned symbol and
/// move inventory taken from training.
#[derive(Debug, Clone)]
pub struct MoveModel<T> {
    flavor: Flavor,
    symbols: Vec<String>,
    sym_ix: HashMap<String, u32>,
    start: u32,
    moves: Vec<Move>,
    codes: Vec<Code>,
    move_ix: HashMap<Move, u32>,
    joint: CondTable<(u32, u32)>,
    lex: CondTable<(u32, u32, u32)>,
    smoothing: SmoothingConfig,
    lambdas: Lambdas<T>,
    pairs: HashSet<(u32, u32)>,
}

/// One move event with its context.
struct Event {
    s1: String,
    s2: String,
    w: String,
    mv: Move,
}

fn events(corpus: &Corpus) -> Result<Vec<Event>, SrError> {
    let mut out = Vec::new();
    for t in corpus.trees() {
        let moves = oracle_moves(t)?;
        let words = tree_yield(t);
        let mut stack = Stack::<String>::new();
        let mut j = 0;
        for mv in moves {
            let w = words.get(j).map_or(STAR, String::as_str).to_owned();
            out.push(Event {
                s1: stack.s1().to_owned(),
                s2: stack.s2().to_owned(),
                w,
                mv: mv.clone(),
            });
            if matches!(mv, Move::Shift(_)) {
                j += 1;
            }
            stack = super::apply_move(&stack, &mv)?;
        }
    }
    Ok(out)
}

fn single_root(corpus: &Corpus) -> Result<String, SrError> {
    let roots = corpus.root_labels();
    match roots.len() {
        0 => Err(SrError::EmptyCorpus),
        1 => Ok(roots.keys().next().unwrap().to_string()),
        _ => Err(SrError::MultipleRoots(
            roots.keys().copied().collect::<Vec<_>>().join(", "),
        )),
    }
}

fn count_events(ev: &[Event], lexical: bool) -> (BTreeMap<JointKey, u64>, BTreeMap<LexKey, u64>) {
    let mut joint = BTreeMap::new();
    let mut lex = BTreeMap::new();
    for e in ev {
        *joint.entry((e.s1.clone(), e.s2.clone(), e.mv.clone())).or_insert(0) += 1;
        if lexical {
            *lex.entry((e.s1.clone(), e.s2.clone(), e.w.clone(), e.mv.clone()))
                .or_insert(0) += 1;
        }
    }
    (joint, lex)
}

/// Relative-frequency `P(m | s1, s2)` from the oracle moves of binarized
/// training trees.
pub fn estimate_joint<T: Real>(train: &Corpus) -> Result<MoveModel<T>, SrError> {
    let start = single_root(train)?;
    let ev = events(train)?;
    let (joint, lex) = count_events(&ev, false);
    let pairs = joint.keys().map(|(a, b, _)| (a.clone(), b.clone())).collect();
    let sm = SmoothingConfig::default();
    let lambdas = Lambdas::uniform(sm.n_buckets(), 2);
    MoveModel::assemble(Flavor::Joint, &start, joint, lex, pairs, sm, lambdas)
}

/// Look-ahead model mixing `P̂(m|s1,s2,w)` and `P̂(m|s1,s2)` with weights
/// fitted on `heldout` by deleted interpolation.
pub fn estimate_conditional<T: Real>(
    train: &Corpus,
    heldout: &Corpus,
    smoothing: &SmoothingConfig,
) -> Result<(MoveModel<T>, LambdaFit<T>), SrError> {
    if heldout.is_empty() {
        return Err(SrError::EmptyCorpus);
    }
    let probe = estimate_conditional_fixed(train, [T::lit(0.5), T::lit(0.5)], smoothing)?;
    let mut held = Vec::new();
    for e in events(heldout)? {
        let ids = [&e.s1, &e.s2, &e.w].map(|s| probe.sym_ix.get(s.as_str()).copied());
        let (Some(s1), Some(s2), Some(w)) = (ids[0], ids[1], ids[2]) else {
            continue;
        };
        let Some(&m) = probe.move_ix.get(&e.mv) else {
            continue;
        };
        // contexts where a component is undefined do not depend on λ
        if let (Some(a), Some(b)) = (probe.lex_component(s1, s2, w), probe.joint_component(s1, s2, Some(w))) {
            held.push(HeldoutEvent {
                bucket: smoothing.bucket_of(probe.lex.context_count(&(s1, s2, w))),
                probs: vec![a[m as usize], b[m as usize]],
            });
        }
    }
    let fit = fit_lambdas(&held, 2, smoothing);
    let mut model = probe;
    model.lambdas = fit.lambdas.clone();
    Ok((model, fit))
}

/// The look-ahead model with the same weights `(λ_lex, λ_ctx)` in every bucket.
pub fn estimate_conditional_fixed<T: Real>(
    train: &Corpus,
    weights: [T; 2],
    smoothing: &SmoothingConfig,
) -> Result<MoveModel<T>, SrError> {
    let start = single_root(train)?;
    let ev = events(train)?;
    let (joint, lex) = count_events(&ev, true);
    let pairs = joint.keys().map(|(a, b, _)| (a.clone(), b.clone())).collect();
    let lambdas = Lambdas::from_rows(vec![weights.to_vec(); smoothing.n_buckets()]);
    MoveModel::assemble(
        Flavor::Conditional,
        &start,
        joint,
        lex,
        pairs,
        smoothing.clone(),
        lambdas,
    )
}

impl<T: Real> MoveModel<T> {
    fn assemble(
        flavor: Flavor,
        start: &str,
        joint: BTreeMap<JointKey, u64>,
        lex: BTreeMap<LexKey, u64>,
        pairs: BTreeSet<(String, String)>,
        smoothing: SmoothingConfig,
        lambdas: Lambdas<T>,
    ) -> Result<Self, SrError> {
        let mut syms: BTreeSet<&str> = BTreeSet::new();
        let mut moves: BTreeSet<&Move> = BTreeSet::new();
        syms.insert(start);
        for (a, b, m) in joint.keys() {
            syms.extend([a.as_str(), b.as_str(), m.label()]);
            moves.insert(m);
        }
        for (a, b, w, m) in lex.keys() {
            syms.extend([a.as_str(), b.as_str(), w.as_str(), m.label()]);
            moves.insert(m);
        }
        for (a, b) in &pairs {
            syms.extend([a.as_str(), b.as_str()]);
        }
        syms.remove(STAR);
        let symbols: Vec<String> = std::iter::once(STAR).chain(syms).map(str::to_owned).collect();
        let sym_ix: HashMap<String, u32> = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        let moves: Vec<Move> = moves.into_iter().cloned().collect();
        let codes = moves
            .iter()
            .map(|m| Code {
                arity: match m {
                    Move::Shift(_) => 0,
                    Move::Reduce1(_) => 1,
                    Move::Reduce2(_) => 2,
                },
                sym: sym_ix[m.label()],
            })
            .collect();
        let move_ix: HashMap<Move, u32> = moves.iter().enumerate().map(|(i, m)| (m.clone(), i as u32)).collect();
        let mut jt = CondTable::new(moves.len());
        for ((a, b, m), c) in &joint {
            jt.add((sym_ix[a], sym_ix[b]), move_ix[m] as usize, *c);
        }
        let mut lt = CondTable::new(moves.len());
        for ((a, b, w, m), c) in &lex {
            lt.add((sym_ix[a], sym_ix[b], sym_ix[w]), move_ix[m] as usize, *c);
        }
        let pairs = pairs.iter().map(|(a, b)| (sym_ix[a], sym_ix[b])).collect();
        Ok(MoveModel {
            flavor,
            start: sym_ix[start],
            symbols,
            sym_ix,
            moves,
            codes,
            move_ix,
            joint: jt,
            lex: lt,
            smoothing,
            lambdas,
            pairs,
        })
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn start(&self) -> &str {
        &self.symbols[self.start as usize]
    }

    pub fn lambdas(&self) -> &Lambdas<T> {
        &self.lambdas
    }

    /// Every move seen in training, in lexicographic order.
    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    /// Stack symbols seen in training, `⋆` first.
    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// `(s1, s2)` pairs observed as move contexts in training, sorted.
    pub fn observed_pairs(&self) -> Vec<(String, String)> {
        let mut v: Vec<_> = self
            .pairs
            .iter()
            .map(|&(a, b)| (self.symbols[a as usize].clone(), self.symbols[b as usize].clone()))
            .collect();
        v.sort();
        v
    }

    pub(crate) fn sym(&self, s: &str) -> Option<u32> {
        self.sym_ix.get(s).copied()
    }

    pub(crate) fn code(&self, m: u32) -> Code {
        self.codes[m as usize]
    }

    pub(crate) fn move_id(&self, m: &Move) -> Option<u32> {
        self.move_ix.get(m).copied()
    }

    pub(crate) fn pair_observed(&self, s1: u32, s2: u32) -> bool {
        self.pairs.contains(&(s1, s2))
    }

    /// Structural zeros, plus the look-ahead restriction when `w` is given.
    fn allowed(&self, c: Code, s1: u32, s2: u32, w: Option<u32>) -> bool {
        let structural = match c.arity {
            1 => s1 != STAR_ID,
            2 => s2 != STAR_ID,
            _ if c.sym == STAR_ID => s1 == self.start && s2 == STAR_ID,
            _ => true,
        };
        structural && (c.arity != 0 || w.is_none_or(|w| c.sym == w))
    }

    /// Masked and renormalized counts, or `None` if nothing survives.
    fn masked(&self, row: Option<&[u64]>, s1: u32, s2: u32, w: Option<u32>) -> Option<Vec<T>> {
        let row = row?;
        let mut p: Vec<T> = row
            .iter()
            .zip(&self.codes)
            .map(|(&c, &code)| {
                if c > 0 && self.allowed(code, s1, s2, w) {
                    T::from_u64(c).unwrap()
                } else {
                    T::zero()
                }
            })
            .collect();
        let z: T = p.iter().copied().sum();
        if !(z > T::zero()) {
            return None;
        }
        p.iter_mut().for_each(|v| *v /= z);
        Some(p)
    }

    fn joint_component(&self, s1: u32, s2: u32, w: Option<u32>) -> Option<Vec<T>> {
        self.masked(self.joint.counts(&(s1, s2)), s1, s2, w)
    }

    fn lex_component(&self, s1: u32, s2: u32, w: u32) -> Option<Vec<T>> {
        self.masked(self.lex.counts(&(s1, s2, w)), s1, s2, Some(w))
    }

    /// Distribution over [`MoveModel::moves`] in context `(s1, s2)` with
    /// look-ahead `w` (ignored by the joint flavor). All zeros for a context
    /// the model cannot continue from.
    pub(crate) fn distribution_ids(&self, s1: u32, s2: u32, w: u32) -> Vec<T> {
        let zeros = || vec![T::zero(); self.moves.len()];
        match self.flavor {
            Flavor::Joint => self.joint_component(s1, s2, None).unwrap_or_else(zeros),
            Flavor::Conditional => {
                let ctx = self.joint_component(s1, s2, Some(w));
                match (self.lex_component(s1, s2, w), ctx) {
                    (Some(a), Some(b)) => {
                        let bucket = self.smoothing.bucket_of(self.lex.context_count(&(s1, s2, w)));
                        let l = self.lambdas.bucket(bucket);
                        a.iter().zip(&b).map(|(&x, &y)| l[0] * x + l[1] * y).collect()
                    }
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => zeros(),
                }
            }
        }
    }

    /// `P(m | s1, s2[, w])` by symbol; `0` for anything outside the inventory.
    pub fn prob(&self, m: &Move, s1: &str, s2: &str, w: &str) -> T {
        match (self.move_id(m), self.sym(s1), self.sym(s2), self.sym(w)) {
            (Some(m), Some(a), Some(b), Some(w)) => self.distribution_ids(a, b, w)[m as usize],
            _ => T::zero(),
        }
    }

    /// The move distribution of one context, keyed by move.
    pub fn distribution(&self, s1: &str, s2: &str, w: &str) -> Vec<(Move, T)> {
        match (self.sym(s1), self.sym(s2), self.sym(w)) {
            (Some(a), Some(b), Some(w)) => self.moves.iter().cloned().zip(self.distribution_ids(a, b, w)).collect(),
            _ => self.moves.iter().map(|m| (m.clone(), T::zero())).collect(),
        }
    }

    /// `Σ_k log P(m_k | context_k)` along the replay of `moves` over `words`.
    pub fn parse_log_prob<S: AsRef<str>>(&self, moves: &[Move], words: &[S]) -> Result<T, SrError> {
        let mut stack = Stack::<u32>::new();
        let mut j = 0;
        let mut total = T::zero();
        let mut done = false;
        for (i, m) in moves.iter().enumerate() {
            if done {
                return Err(SrError::InvalidReplay(format!("move {i} after shift(⋆)")));
            }
            let look = words.get(j).map_or(STAR, |w| w.as_ref());
            if let Move::Shift(x) = m {
                if x != look {
                    return Err(SrError::InvalidReplay(format!(
                        "move {i} shifts `{x}` but the next symbol is `{look}`"
                    )));
                }
                j += 1;
                done = x == STAR;
            }
            let (Some(id), Some(w)) = (self.move_id(m), self.sym(look)) else {
                return Ok(T::neg_infinity());
            };
            let s1 = stack.top().copied().unwrap_or(STAR_ID);
            let s2 = stack.second().copied().unwrap_or(STAR_ID);
            let c = self.code(id);
            stack = apply(&stack, c.arity == 0, c.arity as usize, c.sym).ok_or_else(|| SrError::Inapplicable {
                index: i,
                mv: m.clone(),
            })?;
            total += self.distribution_ids(s1, s2, w)[id as usize].ln();
        }
        if !done {
            return Err(SrError::InvalidReplay("sequence does not end with shift(⋆)".into()));
        }
        Ok(total)
    }

    /// Text sections: header, joint counts, look-ahead counts, per-bucket λ
    /// and the observed stack pairs.
    pub fn to_text(&self) -> String {
        let s = |i: u32| self.symbols[i as usize].as_str();
        let mut out = String::from("# likelab shift-reduce model\n");
        out.push_str(&format!("flavor\t{}\nstart\t{}\n", self.flavor, self.start()));
        out.push_str(&format!(
            "bucket_cap\t{}\nem_max_iters\t{}\nem_tol\t{}\n",
            self.smoothing.bucket_cap,
            self.smoothing.max_iters,
            fmt_sig17(self.smoothing.tol)
        ));
        let mut lines = Vec::new();
        for (&(a, b), row) in self.joint.iter() {
            for (m, &c) in row.iter().enumerate() {
                if c > 0 {
                    lines.push(format!("{}\t{}\t{}\t{c}", s(a), s(b), self.moves[m]));
                }
            }
        }
        lines.sort();
        out.push_str("[joint]\n");
        lines.iter().for_each(|l| out.push_str(&format!("{l}\n")));
        if self.flavor == Flavor::Conditional {
            let mut lines = Vec::new();
            for (&(a, b, w), row) in self.lex.iter() {
                for (m, &c) in row.iter().enumerate() {
                    if c > 0 {
                        lines.push(format!("{}\t{}\t{}\t{}\t{c}", s(a), s(b), s(w), self.moves[m]));
                    }
                }
            }
            lines.sort();
            out.push_str("[lex]\n");
            lines.iter().for_each(|l| out.push_str(&format!("{l}\n")));
            out.push_str("[lambdas]\n");
            for (b, row) in self.lambdas.rows().iter().enumerate() {
                out.push_str(&format!("{b}\t{}\t{}\n", fmt_sig17(row[0]), fmt_sig17(row[1])));
            }
        }
        out.push_str("[pairs]\n");
        for (a, b) in self.observed_pairs() {
            out.push_str(&format!("{a}\t{b}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SrError> {
        let bad = |line: usize, msg: String| SrError::Model { line, msg };
        let mut header = HashMap::new();
        let mut section = String::new();
        let mut joint = BTreeMap::new();
        let mut lex = BTreeMap::new();
        let mut pairs = BTreeSet::new();
        let mut rows: BTreeMap<usize, Vec<T>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_owned();
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let count = |s: &str| s.parse::<u64>().map_err(|_| bad(ln, format!("bad count `{s}`")));
            let mv = |s: &str| s.parse::<Move>().map_err(|e| bad(ln, e));
            match (section.as_str(), f.as_slice()) {
                ("", [k, v]) => {
                    header.insert(k.to_string(), v.to_string());
                }
                ("joint", [a, b, m, c]) => {
                    joint.insert((a.to_string(), b.to_string(), mv(m)?), count(c)?);
                }
                ("lex", [a, b, w, m, c]) => {
                    lex.insert((a.to_string(), b.to_string(), w.to_string(), mv(m)?), count(c)?);
                }
                ("lambdas", [b, x, y]) => {
                    let p = |s: &str| s.parse::<T>().map_err(|_| bad(ln, format!("bad weight `{s}`")));
                    let b = b.parse().map_err(|_| bad(ln, "bad bucket".into()))?;
                    rows.insert(b, vec![p(x)?, p(y)?]);
                }
                ("pairs", [a, b]) => {
                    pairs.insert((a.to_string(), b.to_string()));
                }
                _ => return Err(bad(ln, format!("unexpected line in section `{section}`"))),
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| bad(0, format!("missing header `{k}`")));
        let flavor: Flavor = get("flavor")?.parse().map_err(|e| bad(0, e))?;
        let smoothing = SmoothingConfig {
            bucket_cap: get("bucket_cap")?
                .parse()
                .map_err(|_| bad(0, "bad bucket_cap".into()))?,
            max_iters: get("em_max_iters")?
                .parse()
                .map_err(|_| bad(0, "bad em_max_iters".into()))?,
            tol: get("em_tol")?.parse().map_err(|_| bad(0, "bad em_tol".into()))?,
        };
        let lambdas = match flavor {
            Flavor::Joint => Lambdas::uniform(smoothing.n_buckets(), 2),
            Flavor::Conditional => {
                if rows.len() != smoothing.n_buckets() || rows.keys().copied().ne(0..smoothing.n_buckets()) {
                    return Err(bad(0, format!("[lambdas] needs buckets 0..{}", smoothing.n_buckets())));
                }
                Lambdas::from_rows(rows.into_values().collect())
            }
        };
        let start = get("start")?.clone();
        Self::assemble(flavor, &start, joint, lex, pairs, smoothing, lambdas)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SrError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SrError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
