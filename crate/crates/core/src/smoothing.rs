//! Empirical conditional tables and bucketed deleted-interpolation weights.

use std::collections::HashMap;
use std::hash::Hash;

use crate::num::Real;

/// Counts `c(ctx, y)` over a dense outcome space `0..n_outcomes`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondTable<C: Hash + Eq> {
    n_outcomes: usize,
    rows: HashMap<C, Row>,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Row {
    total: u64,
    counts: Vec<u64>,
}

impl<C: Hash + Eq + Clone> CondTable<C> {
    pub fn new(n_outcomes: usize) -> Self {
        CondTable {
            n_outcomes,
            rows: HashMap::new(),
        }
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn add(&mut self, ctx: C, y: usize, n: u64) {
        assert!(y < self.n_outcomes, "outcome {y} out of range");
        let row = self.rows.entry(ctx).or_insert_with(|| Row {
            total: 0,
            counts: vec![0; self.n_outcomes],
        });
        row.total += n;
        row.counts[y] += n;
    }

    /// Number of events seen with context `ctx`.
    pub fn context_count(&self, ctx: &C) -> u64 {
        self.rows.get(ctx).map_or(0, |r| r.total)
    }

    pub fn count(&self, ctx: &C, y: usize) -> u64 {
        self.rows.get(ctx).map_or(0, |r| r.counts[y])
    }

    pub fn counts(&self, ctx: &C) -> Option<&[u64]> {
        self.rows.get(ctx).map(|r| r.counts.as_slice())
    }

    /// `P̂(y | ctx)`, or `None` when the context was never seen.
    pub fn prob<T: Real>(&self, ctx: &C, y: usize) -> Option<T> {
        let r = self.rows.get(ctx)?;
        Some(T::from_u64(r.counts[y]).unwrap() / T::from_u64(r.total).unwrap())
    }

    pub fn contexts(&self) -> impl Iterator<Item = &C> {
        self.rows.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&C, &[u64])> {
        self.rows.iter().map(|(c, r)| (c, r.counts.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Frequency bucketing for tied interpolation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingConfig {
    /// Largest bucket id; buckets are `0..=bucket_cap`.
    pub bucket_cap: usize,
    pub max_iters: usize,
    /// Relative heldout log-likelihood improvement below which EM stops.
    pub tol: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            bucket_cap: 16,
            max_iters: 100,
            tol: 1e-7,
        }
    }
}

impl SmoothingConfig {
    pub fn n_buckets(&self) -> usize {
        self.bucket_cap + 1
    }

    /// `min(floor(log2(count + 1)), cap)`.
    pub fn bucket_of(&self, count: u64) -> usize {
        let b = (u64::BITS - 1 - (count.saturating_add(1)).leading_zeros()) as usize;
        b.min(self.bucket_cap)
    }
}

/// Mixture weights, one simplex point per bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambdas<T> {
    weights: Vec<Vec<T>>,
}

impl<T: Real> Lambdas<T> {
    pub fn uniform(n_buckets: usize, n_components: usize) -> Self {
        let w = T::one() / T::from_count(n_components);
        Lambdas {
            weights: vec![vec![w; n_components]; n_buckets],
        }
    }

    pub fn from_rows(weights: Vec<Vec<T>>) -> Self {
        Lambdas { weights }
    }

    pub fn bucket(&self, b: usize) -> &[T] {
        &self.weights[b]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn n_buckets(&self) -> usize {
        self.weights.len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// `Σ_i λ_i p_i` with the weights of bucket `b`.
    pub fn mix(&self, b: usize, probs: &[T]) -> T {
        self.weights[b].iter().zip(probs).map(|(&l, &p)| l * p).sum()
    }
}

/// One heldout observation: its bucket and the probability each mixture
/// component assigns to it.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldoutEvent<T> {
    pub bucket: usize,
    pub probs: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct LambdaFit<T> {
    pub lambdas: Lambdas<T>,
    /// Heldout log-likelihood before the first update and after each one.
    pub trace: Vec<T>,
    pub iterations: usize,
    /// Events to which every component gives zero probability; no choice of
    /// weights can explain them, so they are left out.
    pub skipped: usize,
}

fn heldout_ll<T: Real>(l: &Lambdas<T>, events: &[&HeldoutEvent<T>]) -> T {
    events.iter().map(|e| l.mix(e.bucket, &e.probs).ln()).sum()
}

/// Deleted-interpolation EM: maximizes the heldout log-likelihood of the
/// bucketed mixture, starting from uniform weights. Buckets without heldout
/// events keep uniform weights.
pub fn fit_lambdas<T: Real>(events: &[HeldoutEvent<T>], n_components: usize, cfg: &SmoothingConfig) -> LambdaFit<T> {
    let nb = cfg.n_buckets();
    let usable: Vec<&HeldoutEvent<T>> = events
        .iter()
        .filter(|e| e.probs.iter().any(|&p| p > T::zero()))
        .collect();
    let skipped = events.len() - usable.len();
    if skipped > 0 {
        log::debug!("deleted interpolation: {skipped} heldout events have zero probability under every component");
    }
    let mut lambdas = Lambdas::uniform(nb, n_components);
    let mut ll = heldout_ll(&lambdas, &usable);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut acc = vec![vec![T::zero(); n_components]; nb];
    let mut seen = vec![T::zero(); nb];
    while iterations < cfg.max_iters && !usable.is_empty() {
        iterations += 1;
        acc.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = T::zero()));
        seen.iter_mut().for_each(|v| *v = T::zero());
        for e in &usable {
            let w = lambdas.bucket(e.bucket);
            let z = lambdas.mix(e.bucket, &e.probs);
            for i in 0..n_components {
                acc[e.bucket][i] += w[i] * e.probs[i] / z;
            }
            seen[e.bucket] += T::one();
        }
        let mut next = lambdas.clone();
        for ((row, a), &n) in next.weights.iter_mut().zip(&acc).zip(&seen) {
            if n > T::zero() {
                for (w, &x) in row.iter_mut().zip(a) {
                    *w = x / n;
                }
            }
        }
        let new_ll = heldout_ll(&next, &usable);
        // EM cannot decrease the likelihood; a drop is rounding noise.
        if new_ll < ll {
            break;
        }
        lambdas = next;
        let rel = (new_ll - ll) / ll.abs().max(T::min_positive_value());
        ll = new_ll;
        trace.push(ll);
        if rel < T::lit(cfg.tol) {
            break;
        }
    }
    LambdaFit {
        lambdas,
        trace,
        iterations,
        skipped,
    }
}
