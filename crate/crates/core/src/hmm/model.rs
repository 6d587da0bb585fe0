use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use super::tables::{encode, EmpiricalTables, Vocab, END_ID};
use super::{HmmError, TaggedCorpus};
use crate::num::{fmt_sig17, Real};
use crate::smoothing::{fit_lambdas, HeldoutEvent, LambdaFit, Lambdas, SmoothingConfig};

/// Which interpolated tag distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MixtureKind {
    /// `Pr0(T_j | W_j, T_{j-1})`, mixing `P̂(T|W)`, `P̂(T|T_prev)` and
    /// `P̂(T|W,T_prev)`. Defined over real tags; the final position is
    /// forced to the end marker.
    Pr0,
    /// `Pr1(T_j | W_{j-1}, T_{j-1})`, the same mixture over the previous
    /// word, defined over all tags including the end marker.
    Pr1,
}

/// Bucketed three-way λ-mixture of empirical tag distributions.
#[derive(Debug, Clone)]
pub struct InterpolatedCondDist<T> {
    kind: MixtureKind,
    tables: Arc<EmpiricalTables>,
    smoothing: SmoothingConfig,
    lambdas: Lambdas<T>,
}

impl<T: Real> InterpolatedCondDist<T> {
    pub fn with_lambdas(
        kind: MixtureKind,
        tables: Arc<EmpiricalTables>,
        smoothing: SmoothingConfig,
        lambdas: Lambdas<T>,
    ) -> Self {
        assert_eq!(lambdas.n_buckets(), smoothing.n_buckets(), "one λ row per bucket");
        assert_eq!(lambdas.n_components(), 3, "three components");
        InterpolatedCondDist {
            kind,
            tables,
            smoothing,
            lambdas,
        }
    }

    /// The same λ = `weights` in every bucket.
    pub fn fixed(kind: MixtureKind, tables: Arc<EmpiricalTables>, smoothing: SmoothingConfig, weights: [T; 3]) -> Self {
        let rows = vec![weights.to_vec(); smoothing.n_buckets()];
        Self::with_lambdas(kind, tables, smoothing, Lambdas::from_rows(rows))
    }

    pub fn kind(&self) -> MixtureKind {
        self.kind
    }

    pub fn lambdas(&self) -> &Lambdas<T> {
        &self.lambdas
    }

    pub fn smoothing(&self) -> &SmoothingConfig {
        &self.smoothing
    }

    fn codomain(&self) -> usize {
        let n = self.tables.vocab().n_tags();
        match self.kind {
            MixtureKind::Pr0 => n - 1,
            MixtureKind::Pr1 => n,
        }
    }

    /// Component probabilities of `t` and the bucket of the context. An
    /// unseen context contributes the uniform distribution.
    pub(crate) fn components(&self, w: u32, tp: u32, t: u32) -> ([T; 3], usize) {
        let tb = &self.tables;
        let u = T::one() / T::from_count(self.codomain());
        let t = t as usize;
        let (a, b, c, n) = match self.kind {
            MixtureKind::Pr0 => (
                tb.t_w.prob(&w, t),
                tb.t_tp_inner.prob(&tp, t),
                tb.t_w_tp.prob(&(w, tp), t),
                tb.t_w_tp.context_count(&(w, tp)),
            ),
            MixtureKind::Pr1 => (
                tb.t_wp.prob(&w, t),
                tb.trans.prob(&tp, t),
                tb.t_wp_tp.prob(&(w, tp), t),
                tb.t_wp_tp.context_count(&(w, tp)),
            ),
        };
        (
            [a.unwrap_or(u), b.unwrap_or(u), c.unwrap_or(u)],
            self.smoothing.bucket_of(n),
        )
    }

    pub(crate) fn prob_ids(&self, w: u32, tp: u32, t: u32) -> T {
        if self.kind == MixtureKind::Pr0 && (t == END_ID || w == END_ID) {
            return if t == END_ID && w == END_ID {
                T::one()
            } else {
                T::zero()
            };
        }
        let (p, b) = self.components(w, tp, t);
        self.lambdas.mix(b, &p)
    }

    /// Probability of tag `t` given word `w` and previous tag `tp` (for
    /// `Pr1`, `w` is the previous word).
    pub fn prob(&self, w: &str, tp: &str, t: &str) -> T {
        let v = self.tables.vocab();
        match (v.tag_id(tp), v.tag_id(t)) {
            (Some(tp), Some(t)) => self.prob_ids(v.word_id(w), tp, t),
            _ => T::zero(),
        }
    }

    /// The full distribution over tags for one context, indexed by tag id.
    pub fn distribution(&self, w: &str, tp: &str) -> Vec<T> {
        let v = self.tables.vocab();
        (0..v.n_tags()).map(|t| self.prob(w, tp, v.tag(t as u32))).collect()
    }
}

/// Fits per-bucket λ on `heldout` by EM.
pub fn fit_deleted_interpolation<T: Real>(
    tables: Arc<EmpiricalTables>,
    heldout: &TaggedCorpus,
    kind: MixtureKind,
    cfg: &SmoothingConfig,
) -> Result<(InterpolatedCondDist<T>, LambdaFit<T>), HmmError> {
    if heldout.is_empty() {
        return Err(HmmError::EmptyCorpus);
    }
    let probe =
        InterpolatedCondDist::with_lambdas(kind, tables.clone(), cfg.clone(), Lambdas::uniform(cfg.n_buckets(), 3));
    let mut events = Vec::new();
    for s in heldout.sentences() {
        let (w, t) = encode(tables.vocab(), &s.words, &s.tags);
        let last = match kind {
            MixtureKind::Pr0 => w.len() - 2,
            MixtureKind::Pr1 => w.len() - 1,
        };
        for j in 1..=last {
            if t[j] == u32::MAX || t[j - 1] == u32::MAX {
                continue;
            }
            let ctx_word = match kind {
                MixtureKind::Pr0 => w[j],
                MixtureKind::Pr1 => w[j - 1],
            };
            let (p, bucket) = probe.components(ctx_word, t[j - 1], t[j]);
            events.push(HeldoutEvent {
                bucket,
                probs: p.to_vec(),
            });
        }
    }
    let fit = fit_lambdas(&events, 3, cfg);
    let dist = InterpolatedCondDist::with_lambdas(kind, tables, cfg.clone(), fit.lambdas.clone());
    Ok((dist, fit))
}

/// The four tagging models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// `Π P̂(T_j|T_{j-1}) P̂(W_j|T_j)`
    Joint,
    /// `Π Pr0(T_j|W_j,T_{j-1})`
    Conditional,
    /// `Π P̂(W_j|T_j) Pr1(T_j|W_{j-1},T_{j-1})`
    JointPrevWord,
    /// `Π Pr0(T_j|W_j,T_{j-1}) P̂(W_j|T_{j-1})`
    JointNextEmission,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Joint,
        Variant::Conditional,
        Variant::JointPrevWord,
        Variant::JointNextEmission,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Joint => "joint",
            Variant::Conditional => "conditional",
            Variant::JointPrevWord => "joint-prev-word",
            Variant::JointNextEmission => "joint-next-emission",
        }
    }

    pub fn needs(self) -> Option<MixtureKind> {
        match self {
            Variant::Joint => None,
            Variant::Conditional | Variant::JointNextEmission => Some(MixtureKind::Pr0),
            Variant::JointPrevWord => Some(MixtureKind::Pr1),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            format!("unknown tagger variant `{s}`; expected one of {}", names.join(", "))
        })
    }
}

/// A trained tagger: empirical tables plus the mixture its variant needs.
#[derive(Debug, Clone)]
pub struct TaggerModel<T> {
    variant: Variant,
    tables: Arc<EmpiricalTables>,
    mixture: Option<InterpolatedCondDist<T>>,
}

impl<T: Real> TaggerModel<T> {
    /// `mixture` must be of the kind `variant` needs (and is ignored by
    /// [`Variant::Joint`]).
    pub fn new(
        variant: Variant,
        tables: Arc<EmpiricalTables>,
        mixture: Option<InterpolatedCondDist<T>>,
    ) -> Result<Self, HmmError> {
        let mixture = match variant.needs() {
            None => None,
            Some(kind) => match mixture {
                Some(m) if m.kind() == kind => Some(m),
                _ => {
                    return Err(HmmError::Model {
                        line: 0,
                        msg: format!("variant {variant} needs a {kind:?} mixture"),
                    })
                }
            },
        };
        Ok(TaggerModel {
            variant,
            tables,
            mixture,
        })
    }

    /// Collects tables from `train` and, when needed, fits λ on `heldout`.
    pub fn train(
        variant: Variant,
        train: &TaggedCorpus,
        heldout: &TaggedCorpus,
        cfg: &SmoothingConfig,
    ) -> Result<Self, HmmError> {
        let tables = Arc::new(EmpiricalTables::collect(train)?);
        let mixture = match variant.needs() {
            Some(kind) => Some(fit_deleted_interpolation(tables.clone(), heldout, kind, cfg)?.0),
            None => None,
        };
        Self::new(variant, tables, mixture)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn tables(&self) -> &EmpiricalTables {
        &self.tables
    }

    pub fn vocab(&self) -> &Vocab {
        self.tables.vocab()
    }

    pub fn mixture(&self) -> Option<&InterpolatedCondDist<T>> {
        self.mixture.as_ref()
    }

    fn pr(&self, w: u32, tp: u32, t: u32) -> T {
        self.mixture
            .as_ref()
            .expect("mixture checked at construction")
            .prob_ids(w, tp, t)
    }

    /// Factor of position `j` given the word ids at `j-1` and `j`.
    pub(crate) fn edge(&self, w_prev: u32, w: u32, tp: u32, t: u32, last: bool) -> T {
        if last != (t == END_ID) {
            return T::zero();
        }
        let tb = &self.tables;
        let emit = |t: u32, w: u32| tb.emit.prob::<T>(&t, w as usize).unwrap_or_else(T::zero);
        match self.variant {
            Variant::Joint => tb.trans.prob::<T>(&tp, t as usize).unwrap_or_else(T::zero) * emit(t, w),
            Variant::Conditional => self.pr(w, tp, t),
            Variant::JointPrevWord => emit(t, w) * self.pr(w_prev, tp, t),
            Variant::JointNextEmission => {
                self.pr(w, tp, t) * tb.emit_prev.prob::<T>(&tp, w as usize).unwrap_or_else(T::zero)
            }
        }
    }

    /// Factor used when every tag at a position has zero forward mass:
    /// the tag-bigram distribution alone.
    pub(crate) fn fallback_edge(&self, tp: u32, t: u32, last: bool) -> T {
        if last != (t == END_ID) {
            return T::zero();
        }
        let table = if last {
            &self.tables.trans
        } else {
            &self.tables.t_tp_inner
        };
        table.prob::<T>(&tp, t as usize).unwrap_or_else(T::zero)
    }

    /// Log of the variant's product over `j = 1..=m+1`; `-inf` if any factor
    /// is zero or a tag is unknown.
    pub fn sequence_log_prob<S: AsRef<str>>(&self, words: &[S], tags: &[S]) -> Result<T, HmmError> {
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
        let (w, t) = encode(self.vocab(), words, tags);
        if t.contains(&u32::MAX) {
            return Ok(T::neg_infinity());
        }
        let n = w.len() - 1;
        let mut s = T::zero();
        for j in 1..=n {
            s += self.edge(w[j - 1], w[j], t[j - 1], t[j], j == n).ln();
        }
        Ok(s)
    }

    /// Sectioned text: header, vocabulary, the two primary count tables,
    /// and per-bucket λ.
    pub fn to_text(&self) -> String {
        let v = self.vocab();
        let mut out = String::from("# likelab tagger\n");
        out.push_str(&format!("variant\t{}\n", self.variant));
        let sm = self.mixture.as_ref().map(|m| m.smoothing().clone()).unwrap_or_default();
        out.push_str(&format!(
            "bucket_cap\t{}\nem_max_iters\t{}\nem_tol\t{}\n",
            sm.bucket_cap,
            sm.max_iters,
            fmt_sig17(sm.tol)
        ));
        out.push_str("[tags]\n");
        for t in v.real_tags() {
            out.push_str(&format!("{t}\n"));
        }
        out.push_str("[words]\n");
        for w in v.known_words() {
            out.push_str(&format!("{w}\n"));
        }
        for (name, table) in [("full", self.tables.full()), ("full_prev", self.tables.full_prev())] {
            out.push_str(&format!("[{name}]\n"));
            for (&(w, tp, t), c) in table {
                out.push_str(&format!("{}\t{}\t{}\t{c}\n", v.word(w), v.tag(tp), v.tag(t)));
            }
        }
        if let Some(m) = &self.mixture {
            out.push_str(&format!("[lambdas {:?}]\n", m.kind()));
            for (b, row) in m.lambdas().rows().iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|&x| fmt_sig17(x)).collect();
                out.push_str(&format!("{b}\t{}\n", cells.join("\t")));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HmmError> {
        let mut header: BTreeMap<String, String> = BTreeMap::new();
        let mut sections: BTreeMap<String, Vec<(usize, &str)>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.insert(name.to_owned(), Vec::new());
                current = Some(name.to_owned());
                continue;
            }
            match &current {
                Some(s) => sections.get_mut(s).unwrap().push((i + 1, line)),
                None => {
                    let (k, v) = line.split_once('\t').ok_or(HmmError::Model {
                        line: i + 1,
                        msg: "expected `key<TAB>value`".into(),
                    })?;
                    header.insert(k.to_owned(), v.to_owned());
                }
            }
        }
        let bad = |line: usize, msg: String| HmmError::Model { line, msg };
        let get = |k: &str| header.get(k).ok_or_else(|| bad(0, format!("missing header `{k}`")));
        let variant: Variant = get("variant")?.parse().map_err(|e| bad(0, e))?;
        let smoothing = SmoothingConfig {
            bucket_cap: get("bucket_cap")?
                .parse()
                .map_err(|_| bad(0, "bad bucket_cap".into()))?,
            max_iters: get("em_max_iters")?
                .parse()
                .map_err(|_| bad(0, "bad em_max_iters".into()))?,
            tol: get("em_tol")?.parse().map_err(|_| bad(0, "bad em_tol".into()))?,
        };
        let lines_of = |name: &str| sections.get(name).cloned().unwrap_or_default();
        let tags = lines_of("tags").into_iter().map(|(_, l)| l.to_owned()).collect();
        let words = lines_of("words").into_iter().map(|(_, l)| l.to_owned()).collect();
        let vocab = Vocab::from_symbols(words, tags);
        let table = |name: &str| -> Result<BTreeMap<(u32, u32, u32), u64>, HmmError> {
            let mut m = BTreeMap::new();
            for (ln, l) in lines_of(name) {
                let f: Vec<&str> = l.split('\t').collect();
                if f.len() != 4 {
                    return Err(bad(ln, "expected four tab-separated fields".into()));
                }
                let w = vocab.word_id(f[0]);
                if vocab.word(w) != f[0] {
                    return Err(bad(ln, format!("word `{}` not in [words]", f[0])));
                }
                let tp = vocab
                    .tag_id(f[1])
                    .ok_or_else(|| bad(ln, format!("unknown tag `{}`", f[1])))?;
                let t = vocab
                    .tag_id(f[2])
                    .ok_or_else(|| bad(ln, format!("unknown tag `{}`", f[2])))?;
                let c: u64 = f[3].parse().map_err(|_| bad(ln, "bad count".into()))?;
                m.insert((w, tp, t), c);
            }
            Ok(m)
        };
        let full = table("full")?;
        let full_prev = table("full_prev")?;
        let tables = Arc::new(EmpiricalTables::from_parts(vocab, full, full_prev));
        let mixture = match variant.needs() {
            None => None,
            Some(kind) => {
                let name = format!("lambdas {kind:?}");
                let mut rows = vec![vec![T::zero(); 3]; smoothing.n_buckets()];
                let body = lines_of(&name);
                if body.len() != smoothing.n_buckets() {
                    return Err(bad(0, format!("[{name}] needs {} rows", smoothing.n_buckets())));
                }
                for (ln, l) in body {
                    let f: Vec<&str> = l.split('\t').collect();
                    let b: usize = f[0].parse().map_err(|_| bad(ln, "bad bucket".into()))?;
                    if f.len() != 4 || b >= rows.len() {
                        return Err(bad(ln, "expected bucket and three weights".into()));
                    }
                    for i in 0..3 {
                        rows[b][i] = f[i + 1].parse().map_err(|_| bad(ln, "bad weight".into()))?;
                    }
                }
                Some(InterpolatedCondDist::with_lambdas(
                    kind,
                    tables.clone(),
                    smoothing,
                    Lambdas::from_rows(rows),
                ))
            }
        };
        Self::new(variant, tables, mixture)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HmmError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HmmError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
