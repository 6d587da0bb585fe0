//! Conditional likelihood of trees given yields, its gradient, and
//! exponentiated-gradient ascent on the per-nonterminal simplex.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{Pcfg, PcfgError};
use crate::num::{log_sum_exp, Real};
use crate::treebank::{tree_yield, Corpus};

/// Weights below this are raised to it before dividing by θ in the gradient.
pub const THETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AscentConfig {
    pub max_iters: usize,
    /// Stop once the relative CLL improvement of an iteration falls below this.
    pub tol: f64,
    pub initial_step: f64,
    pub line_search_shrink: f64,
    pub max_shrinks: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            max_iters: 200,
            tol: 1e-6,
            initial_step: 1.0,
            line_search_shrink: 0.5,
            max_shrinks: 20,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<(), PcfgError> {
        let bad = |m: &str| Err(PcfgError::Config(m.to_owned()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.initial_step > 0.0) || !self.initial_step.is_finite() {
            return bad("initial_step must be positive");
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return bad("line_search_shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Corpus-level log-likelihoods: `log P(y⃗)`, `log P(x⃗)` and
/// `log P(y⃗|x⃗) = log P(y⃗) - log P(x⃗)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusLikelihood<T> {
    pub log_joint: T,
    pub log_marginal: T,
    pub log_conditional: T,
}

#[derive(Debug, Clone)]
pub struct McleOutcome<T> {
    pub grammar: Pcfg<T>,
    /// CLL of the initial grammar followed by the CLL after every accepted step.
    pub trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// A corpus reduced to what the likelihoods need: total rule usage and the
/// distinct yields with their multiplicities.
struct Prepared<T> {
    usage: Vec<T>,
    yields: Vec<(Vec<String>, T)>,
}

fn prepare<T: Real>(g: &Pcfg<T>, corpus: &Corpus) -> Result<Prepared<T>, PcfgError> {
    if corpus.is_empty() {
        return Err(PcfgError::EmptyCorpus);
    }
    let mut usage = vec![T::zero(); g.len()];
    let mut yields: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for (id, t) in corpus.iter() {
        let rules = g.derivation(t).map_err(|reason| PcfgError::Underivable {
            id: id.to_owned(),
            reason,
        })?;
        for r in rules {
            usage[r] += T::one();
        }
        *yields.entry(tree_yield(t)).or_insert(0) += 1;
    }
    Ok(Prepared {
        usage,
        yields: yields.into_iter().map(|(x, n)| (x, T::from_count(n))).collect(),
    })
}

impl<T: Real> Prepared<T> {
    fn log_joint(&self, theta: &[T]) -> T {
        let mut s = T::zero();
        for (&f, &w) in self.usage.iter().zip(theta) {
            if f > T::zero() {
                s += f * w.ln();
            }
        }
        s
    }

    fn likelihood(&self, g: &Pcfg<T>) -> Result<CorpusLikelihood<T>, PcfgError> {
        let per: Vec<T> = self
            .yields
            .par_iter()
            .map(|(x, n)| g.log_marginal(x).map(|l| *n * l))
            .collect::<Result<_, _>>()?;
        let log_marginal: T = per.into_iter().sum();
        let log_joint = self.log_joint(g.theta_vec());
        Ok(CorpusLikelihood {
            log_joint,
            log_marginal,
            log_conditional: log_joint - log_marginal,
        })
    }

    /// `Σ_i f_r(y_i) - E_θ(f_r | x_i)` for every rule.
    fn residual(&self, g: &Pcfg<T>) -> Result<Vec<T>, PcfgError> {
        let per: Vec<Vec<T>> = self
            .yields
            .par_iter()
            .map(|(x, n)| {
                let e = g.inside_outside(x)?;
                Ok(e.expected_counts.into_iter().map(|v| *n * v).collect())
            })
            .collect::<Result<_, PcfgError>>()?;
        let mut r = self.usage.clone();
        for e in per {
            for (ri, ei) in r.iter_mut().zip(e) {
                *ri -= ei;
            }
        }
        Ok(r)
    }
}

pub fn corpus_likelihood<T: Real>(g: &Pcfg<T>, corpus: &Corpus) -> Result<CorpusLikelihood<T>, PcfgError> {
    prepare(g, corpus)?.likelihood(g)
}

/// `Σ_i log P(y_i) - log Σ_{y ∈ τ(x_i)} P(y)`.
pub fn conditional_log_likelihood<T: Real>(g: &Pcfg<T>, corpus: &Corpus) -> Result<T, PcfgError> {
    Ok(corpus_likelihood(g, corpus)?.log_conditional)
}

/// `∂ CLL / ∂ θ_r = (1/θ_r) Σ_i (f_r(y_i) - E_θ(f_r | x_i))`, aligned with
/// [`Pcfg::productions`].
pub fn cll_gradient<T: Real>(g: &Pcfg<T>, corpus: &Corpus) -> Result<Vec<T>, PcfgError> {
    let prep = prepare(g, corpus)?;
    for (r, (&f, &w)) in prep.usage.iter().zip(g.theta_vec()).enumerate() {
        if f > T::zero() && w == T::zero() {
            return Err(PcfgError::SingularGradient(g.productions()[r].clone()));
        }
    }
    let floor = T::lit(THETA_FLOOR);
    let res = prep.residual(g)?;
    Ok(res
        .into_iter()
        .zip(g.theta_vec())
        .map(|(d, &w)| d / w.max(floor))
        .collect())
}

/// `θ_r ← θ_r · exp(η θ_r ∂_r)` followed by renormalization within each
/// left-hand side, computed in the log domain.
fn step<T: Real>(g: &Pcfg<T>, grad: &[T], eta: T) -> Result<Pcfg<T>, PcfgError> {
    let theta = g.theta_vec();
    let logs: Vec<T> = theta
        .iter()
        .zip(grad)
        .map(|(&w, &d)| {
            if w > T::zero() {
                w.ln() + eta * w * d
            } else {
                T::neg_infinity()
            }
        })
        .collect();
    let mut out = vec![T::zero(); theta.len()];
    let prods = g.productions();
    let mut lo = 0;
    while lo < prods.len() {
        let mut hi = lo + 1;
        while hi < prods.len() && prods[hi].lhs == prods[lo].lhs {
            hi += 1;
        }
        let z = log_sum_exp(&logs[lo..hi]);
        for r in lo..hi {
            out[r] = (logs[r] - z).exp();
        }
        lo = hi;
    }
    g.with_theta(out)
}

/// Gradient ascent on the conditional log-likelihood starting from `init`,
/// with a backtracking line search that only accepts improving steps.
pub fn estimate_mcle<T: Real>(
    corpus: &Corpus,
    init: &Pcfg<T>,
    cfg: &AscentConfig,
) -> Result<McleOutcome<T>, PcfgError> {
    cfg.validate()?;
    let prep = prepare(init, corpus)?;
    for (r, (&f, &w)) in prep.usage.iter().zip(init.theta_vec()).enumerate() {
        if f > T::zero() && w == T::zero() {
            return Err(PcfgError::SingularGradient(init.productions()[r].clone()));
        }
    }
    let floor = T::lit(THETA_FLOOR);
    let mut g = init.clone();
    let mut cll = prep.likelihood(&g)?.log_conditional;
    let mut trace = vec![cll];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        iterations += 1;
        let res = prep.residual(&g)?;
        if res.iter().all(|d| *d == T::zero()) {
            converged = true;
            break;
        }
        let grad: Vec<T> = res.iter().zip(g.theta_vec()).map(|(&d, &w)| d / w.max(floor)).collect();
        let mut eta = T::lit(cfg.initial_step);
        let mut accepted = None;
        for _ in 0..=cfg.max_shrinks {
            match step(&g, &grad, eta) {
                Ok(cand) => {
                    let c = prep.likelihood(&cand)?.log_conditional;
                    if c > cll {
                        accepted = Some((cand, c));
                        break;
                    }
                }
                // a step can push a unary cycle to probability one
                Err(PcfgError::UnaryCycle(_)) => {}
                Err(e) => return Err(e),
            }
            eta *= T::lit(cfg.line_search_shrink);
        }
        let Some((cand, c)) = accepted else {
            converged = true;
            break;
        };
        let rel = (c - cll) / cll.abs().max(T::min_positive_value());
        log::debug!("mcle iteration {iterations}: cll {c:e} (eta {eta:e})");
        g = cand;
        cll = c;
        trace.push(c);
        if rel < T::lit(cfg.tol) {
            converged = true;
            break;
        }
    }
    Ok(McleOutcome {
        grammar: g,
        trace,
        iterations,
        converged,
    })
}
