use std::collections::{BTreeMap, BTreeSet};

use super::{Pcfg, PcfgError, Production};
use crate::num::Real;
use crate::treebank::{Corpus, Tree};

/// Production usage counts `f_r` summed over a corpus, plus root labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleCounts<T> {
    counts: BTreeMap<Production, T>,
    roots: BTreeMap<String, T>,
}

impl<T: Real> Default for RuleCounts<T> {
    fn default() -> Self {
        RuleCounts {
            counts: BTreeMap::new(),
            roots: BTreeMap::new(),
        }
    }
}

impl<T: Real> RuleCounts<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, p: Production, c: T) {
        *self.counts.entry(p).or_insert_with(T::zero) += c;
    }

    pub fn add_tree(&mut self, t: &Tree) {
        *self.roots.entry(t.label().to_owned()).or_insert_with(T::zero) += T::one();
        for n in t.nodes().filter(|n| !n.is_leaf()) {
            self.add(Production::at(n), T::one());
        }
    }

    pub fn set_root(&mut self, label: &str, c: T) {
        self.roots.insert(label.to_owned(), c);
    }

    pub fn get(&self, p: &Production) -> T {
        self.counts.get(p).copied().unwrap_or_else(T::zero)
    }

    pub fn counts(&self) -> &BTreeMap<Production, T> {
        &self.counts
    }

    pub fn roots(&self) -> &BTreeMap<String, T> {
        &self.roots
    }

    /// Total count per left-hand side.
    pub fn by_lhs(&self) -> BTreeMap<&str, T> {
        let mut m = BTreeMap::new();
        for (p, &c) in &self.counts {
            *m.entry(p.lhs.as_str()).or_insert_with(T::zero) += c;
        }
        m
    }
}

/// Exact production counts over `corpus`. Leaves are terminals, internal
/// labels nonterminals; a symbol used as both is rejected.
pub fn extract_counts<T: Real>(corpus: &Corpus) -> Result<RuleCounts<T>, PcfgError> {
    if corpus.is_empty() {
        return Err(PcfgError::EmptyCorpus);
    }
    let mut leaves = BTreeSet::new();
    let mut internal = BTreeSet::new();
    let mut rc = RuleCounts::new();
    for t in corpus.trees() {
        if t.is_leaf() {
            return Err(PcfgError::SymbolClash(t.label().to_owned()));
        }
        for n in t.nodes() {
            if n.is_leaf() {
                leaves.insert(n.label());
            } else {
                internal.insert(n.label());
            }
        }
        rc.add_tree(t);
    }
    if let Some(s) = leaves.intersection(&internal).next() {
        return Err(PcfgError::SymbolClash((*s).to_owned()));
    }
    Ok(rc)
}

/// Relative-frequency estimate `θ_{A→α} = c(A→α) / Σ_α' c(A→α')`.
/// The start symbol is the single root label recorded in `counts`.
pub fn estimate_mle<T: Real>(counts: &RuleCounts<T>) -> Result<Pcfg<T>, PcfgError> {
    let roots: Vec<&str> = counts
        .roots
        .iter()
        .filter(|(_, &c)| c > T::zero())
        .map(|(r, _)| r.as_str())
        .collect();
    let start = match roots.as_slice() {
        [one] => *one,
        [] => return Err(PcfgError::EmptyCorpus),
        many => return Err(PcfgError::MultipleRoots(many.join(", "))),
    };
    let totals = counts.by_lhs();
    let mut rules = Vec::with_capacity(counts.counts.len());
    for (p, &c) in &counts.counts {
        let total = totals[p.lhs.as_str()];
        if !(total > T::zero()) {
            return Err(PcfgError::ZeroTotal(p.lhs.clone()));
        }
        rules.push((p.clone(), c / total));
    }
    Pcfg::new(start, rules)
}
