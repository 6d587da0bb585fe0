//! Probabilistic context-free grammars: relative-frequency estimation,
//! Inside-Outside expectations, conditional-likelihood gradient ascent and
//! CKY Viterbi parsing.

mod chart;
mod counts;
mod mcle;
mod viterbi;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::num::{fmt_sig17, simplex_tol, Real};
use crate::treebank::Tree;

pub use chart::SentenceExpectations;
pub use counts::{estimate_mle, extract_counts, RuleCounts};
pub use mcle::{
    cll_gradient, conditional_log_likelihood, corpus_likelihood, estimate_mcle, AscentConfig, CorpusLikelihood,
    McleOutcome, THETA_FLOOR,
};

use chart::{ChartGrammar, Closure};

#[derive(Debug, Error)]
pub enum PcfgError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty sentence")]
    EmptySentence,
    #[error("production with empty right-hand side for `{0}`")]
    EmptyRhs(String),
    #[error("duplicate production {0}")]
    Duplicate(Production),
    #[error("negative or non-finite weight for {0}")]
    BadWeight(Production),
    #[error("weights of `{lhs}` sum to {sum}, not 1")]
    NotNormalized { lhs: String, sum: f64 },
    #[error("nonterminal `{0}` has zero total count")]
    ZeroTotal(String),
    #[error("symbol `{0}` is used both as a terminal and as a nonterminal")]
    SymbolClash(String),
    #[error("trees have several root labels ({0}); wrap them under a common root")]
    MultipleRoots(String),
    #[error("start symbol `{0}` has no productions")]
    UnknownStart(String),
    #[error("unary productions form a cycle of probability one through `{0}`")]
    UnaryCycle(String),
    #[error("tree {id} is not derivable: {reason}")]
    Underivable { id: String, reason: String },
    #[error("theta of {0} is zero but the production is used in the corpus")]
    SingularGradient(Production),
    #[error("invalid ascent configuration: {0}")]
    Config(String),
    #[error("grammar file, line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// `lhs -> rhs`. Orders lexicographically by `(lhs, rhs)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Production {
    pub lhs: String,
    pub rhs: Vec<String>,
}

impl Production {
    pub fn new<S: Into<String>>(lhs: impl Into<String>, rhs: impl IntoIterator<Item = S>) -> Self {
        Production {
            lhs: lhs.into(),
            rhs: rhs.into_iter().map(Into::into).collect(),
        }
    }

    /// The production used at an internal node of `t`.
    pub fn at(t: &Tree) -> Self {
        Production {
            lhs: t.label().to_owned(),
            rhs: t.children().iter().map(|c| c.label().to_owned()).collect(),
        }
    }
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.lhs, self.rhs.join(" "))
    }
}

/// A PCFG whose weights satisfy the per-nonterminal normalization
/// constraint. Nonterminals are exactly the symbols with productions; every
/// other right-hand-side symbol is a terminal.
#[derive(Debug, Clone)]
pub struct Pcfg<T> {
    productions: Arc<Vec<Production>>,
    index: Arc<HashMap<Production, usize>>,
    chart: Arc<ChartGrammar>,
    theta: Vec<T>,
    closure: Closure<T>,
}

impl<T: Real> Pcfg<T> {
    pub fn new(start: &str, rules: Vec<(Production, T)>) -> Result<Self, PcfgError> {
        let mut rules = rules;
        rules.sort_by(|a, b| a.0.cmp(&b.0));
        for w in rules.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(PcfgError::Duplicate(w[0].0.clone()));
            }
        }
        let (productions, theta): (Vec<_>, Vec<_>) = rules.into_iter().unzip();
        for p in &productions {
            if p.rhs.is_empty() {
                return Err(PcfgError::EmptyRhs(p.lhs.clone()));
            }
        }
        let chart = ChartGrammar::compile(start, &productions)?;
        let index = productions.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        Self::assemble(Arc::new(productions), Arc::new(index), Arc::new(chart), theta)
    }

    fn assemble(
        productions: Arc<Vec<Production>>,
        index: Arc<HashMap<Production, usize>>,
        chart: Arc<ChartGrammar>,
        theta: Vec<T>,
    ) -> Result<Self, PcfgError> {
        let mut sums: BTreeMap<&str, (T, usize)> = BTreeMap::new();
        for (p, &w) in productions.iter().zip(&theta) {
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(PcfgError::BadWeight(p.clone()));
            }
            let e = sums.entry(&p.lhs).or_insert((T::zero(), 0));
            e.0 += w;
            e.1 += 1;
        }
        for (lhs, (sum, k)) in sums {
            if (sum - T::one()).abs() > simplex_tol::<T>(k) {
                return Err(PcfgError::NotNormalized {
                    lhs: lhs.to_owned(),
                    sum: sum.as_f64(),
                });
            }
        }
        let closure = chart.closure(&theta)?;
        Ok(Pcfg {
            productions,
            index,
            chart,
            theta,
            closure,
        })
    }

    /// Same rules with new weights, reusing the compiled chart structure.
    pub fn with_theta(&self, theta: Vec<T>) -> Result<Self, PcfgError> {
        assert_eq!(theta.len(), self.theta.len(), "one weight per production");
        Self::assemble(self.productions.clone(), self.index.clone(), self.chart.clone(), theta)
    }

    pub fn start(&self) -> &str {
        self.chart.start_label()
    }

    /// Productions in lexicographic `(lhs, rhs)` order. Weight vectors and
    /// gradients are aligned with this order.
    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn theta_vec(&self) -> &[T] {
        &self.theta
    }

    pub fn rule_id(&self, p: &Production) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn theta(&self, p: &Production) -> Option<T> {
        self.rule_id(p).map(|i| self.theta[i])
    }

    pub fn len(&self) -> usize {
        self.productions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.productions.is_empty()
    }

    pub fn is_nonterminal(&self, sym: &str) -> bool {
        self.chart.nonterminal_id(sym).is_some()
    }

    pub fn nonterminals(&self) -> &[String] {
        self.chart.nonterminals()
    }

    pub(crate) fn chart(&self) -> &ChartGrammar {
        &self.chart
    }

    pub(crate) fn closure(&self) -> &Closure<T> {
        &self.closure
    }

    /// Rule ids used by `t`, one entry per use, or a reason why `t` is not
    /// a derivation of this grammar.
    pub fn derivation(&self, t: &Tree) -> Result<Vec<usize>, String> {
        if t.label() != self.start() {
            return Err(format!(
                "root `{}` is not the start symbol `{}`",
                t.label(),
                self.start()
            ));
        }
        let mut used = Vec::new();
        let mut missing = Vec::new();
        for n in t.nodes() {
            if n.is_leaf() {
                if self.is_nonterminal(n.label()) {
                    missing.push(format!("leaf `{}` is a nonterminal", n.label()));
                }
                continue;
            }
            let p = Production::at(n);
            match self.rule_id(&p) {
                Some(r) => used.push(r),
                None => missing.push(format!("missing rule {p}")),
            }
        }
        if missing.is_empty() {
            Ok(used)
        } else {
            missing.sort();
            missing.dedup();
            Err(missing.join("; "))
        }
    }

    /// `Σ_r f_r(t) log θ_r`; `-inf` when `t` uses a production not in the
    /// grammar (see [`Pcfg::derivation`] for the diagnostic).
    pub fn tree_log_prob(&self, t: &Tree) -> T {
        match self.derivation(t) {
            Ok(rules) => rules.iter().map(|&r| self.theta[r].ln()).sum(),
            Err(reason) => {
                log::debug!("tree not derivable: {reason}");
                T::neg_infinity()
            }
        }
    }

    /// Grammar file text: a `#start:` header then one
    /// `LHS -> RHS_1 ... RHS_k<TAB>theta` line per production.
    pub fn to_text(&self) -> String {
        let mut out = format!("#start: {}\n", self.start());
        for (p, &w) in self.productions.iter().zip(&self.theta) {
            out.push_str(&format!("{p}\t{}\n", fmt_sig17(w)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PcfgError> {
        let mut start = None;
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            let bad = |msg: &str| PcfgError::Format {
                line: i + 1,
                msg: msg.to_owned(),
            };
            if let Some(s) = line.strip_prefix("#start:") {
                start = Some(s.trim().to_owned());
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (rule, w) = line.rsplit_once('\t').ok_or_else(|| bad("missing tab before weight"))?;
            let w: T = w.trim().parse().map_err(|_| bad("unparsable weight"))?;
            let (lhs, rhs) = rule.split_once(" -> ").ok_or_else(|| bad("missing ` -> `"))?;
            let lhs = lhs.trim();
            if lhs.is_empty() || lhs.contains(char::is_whitespace) {
                return Err(bad("bad left-hand side"));
            }
            rules.push((Production::new(lhs, rhs.split_whitespace()), w));
        }
        let start = start.ok_or(PcfgError::Format {
            line: 0,
            msg: "missing `#start:` header".into(),
        })?;
        Pcfg::new(&start, rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PcfgError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PcfgError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Inside-Outside pass over `x`.
    pub fn inside_outside<S: AsRef<str>>(&self, x: &[S]) -> Result<SentenceExpectations<T>, PcfgError> {
        chart::inside_outside(self, x)
    }

    /// `log Σ_{y ∈ τ(x)} P(y)`, `-inf` when `x` has no parse.
    pub fn log_marginal<S: AsRef<str>>(&self, x: &[S]) -> Result<T, PcfgError> {
        chart::log_inside(self, x)
    }

    /// Most probable parse of `x`, or `None` if there is none.
    pub fn viterbi_parse<S: AsRef<str>>(&self, x: &[S]) -> Option<Tree> {
        viterbi::viterbi_parse(self, x)
    }
}
