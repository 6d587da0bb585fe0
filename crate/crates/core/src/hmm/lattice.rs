//! Scaled forward-backward over the tag lattice and posterior decoding.

use rayon::prelude::*;

use super::model::TaggerModel;
use super::tables::{encode_words, END_ID};
use super::HmmError;
use crate::num::Real;

/// Per-position tag posteriors `Pr(t_j | w_1..w_m)`.
#[derive(Debug, Clone)]
pub struct Marginals<T> {
    /// Log of the lattice total: `log Σ_tags Π_j factor_j`.
    pub log_partition: T,
    /// `posteriors[j][t]` for `j = 0..m` (word `j+1`), indexed by tag id.
    pub posteriors: Vec<Vec<T>>,
    /// Positions (1-based) whose factors were replaced by the tag-bigram
    /// fallback; when non-empty `log_partition` is that of the patched lattice.
    pub fallback: Vec<usize>,
}

/// Relative tolerance under which two posteriors count as tied.
const TIE_TOL: f64 = 1e-12;

impl<T: Real> TaggerModel<T> {
    pub fn marginals<S: AsRef<str>>(&self, words: &[S]) -> Result<Marginals<T>, HmmError> {
        if words.is_empty() {
            return Err(HmmError::EmptySentence);
        }
        let w = encode_words(self.vocab(), words);
        let n = w.len() - 1; // m + 1
        let k = self.vocab().n_tags();
        let support = |j: usize| -> std::ops::Range<u32> {
            if j == 0 || j == n {
                END_ID..END_ID + 1
            } else {
                1..k as u32
            }
        };

        let mut psi: Vec<Vec<T>> = Vec::with_capacity(n + 1);
        psi.push(Vec::new());
        let mut alpha = vec![vec![T::zero(); k]; n + 1];
        alpha[0][END_ID as usize] = T::one();
        let mut scale = vec![T::one(); n + 1];
        let mut log_z = T::zero();
        let mut fallback = Vec::new();
        for j in 1..=n {
            let last = j == n;
            let mut m = vec![T::zero(); k * k];
            for tp in support(j - 1) {
                for t in support(j) {
                    m[tp as usize * k + t as usize] = self.edge(w[j - 1], w[j], tp, t, last);
                }
            }
            let mut col = forward_column(&alpha[j - 1], &m, k);
            let mut s: T = col.iter().copied().sum();
            if !(s > T::zero()) {
                for tp in support(j - 1) {
                    for t in support(j) {
                        m[tp as usize * k + t as usize] = self.fallback_edge(tp, t, last);
                    }
                }
                col = forward_column(&alpha[j - 1], &m, k);
                s = col.iter().copied().sum();
                if !(s > T::zero()) {
                    return Err(HmmError::DeadColumn { position: j });
                }
                fallback.push(j);
            }
            col.iter_mut().for_each(|v| *v /= s);
            alpha[j] = col;
            scale[j] = s;
            log_z += s.ln();
            psi.push(m);
        }

        let mut beta = vec![T::zero(); k];
        beta[END_ID as usize] = T::one();
        let mut posteriors = vec![Vec::new(); n - 1];
        for j in (1..n).rev() {
            // beta currently holds β̂_{j+1}
            let m = &psi[j + 1];
            let mut prev = vec![T::zero(); k];
            for tp in 0..k {
                let row = &m[tp * k..(tp + 1) * k];
                let v: T = row.iter().zip(&beta).map(|(&a, &b)| a * b).sum();
                prev[tp] = v / scale[j + 1];
            }
            beta = prev;
            let mut g: Vec<T> = alpha[j].iter().zip(&beta).map(|(&a, &b)| a * b).collect();
            let z: T = g.iter().copied().sum();
            g.iter_mut().for_each(|v| *v /= z);
            posteriors[j - 1] = g;
        }
        Ok(Marginals {
            log_partition: log_z,
            posteriors,
            fallback,
        })
    }

    /// Each position's most probable tag under the posterior marginals; ties
    /// go to the lexicographically smallest tag.
    pub fn posterior_decode<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<String>, HmmError> {
        let mg = self.marginals(words)?;
        let tol = T::lit(TIE_TOL);
        Ok(mg
            .posteriors
            .iter()
            .map(|p| {
                let best = p.iter().copied().fold(T::zero(), T::max);
                let t = p
                    .iter()
                    .position(|&v| v >= best - best * tol)
                    .expect("non-empty column");
                self.vocab().tag(t as u32).to_owned()
            })
            .collect())
    }

    /// Decodes every sentence in parallel; output order follows the input.
    pub fn tag_all(&self, sentences: &[Vec<String>]) -> Result<Vec<Vec<String>>, HmmError> {
        sentences.par_iter().map(|s| self.posterior_decode(s)).collect()
    }
}

fn forward_column<T: Real>(alpha: &[T], m: &[T], k: usize) -> Vec<T> {
    let mut col = vec![T::zero(); k];
    for (tp, &a) in alpha.iter().enumerate() {
        if a == T::zero() {
            continue;
        }
        for (c, &e) in col.iter_mut().zip(&m[tp * k..(tp + 1) * k]) {
            *c += a * e;
        }
    }
    col
}
