//! Labelled bracket scoring and a paired bootstrap test on F-score.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::treebank::{read_bracketed, Corpus, Tree, TreebankError};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{gold} gold sentences but {pred} predictions")]
    CorpusLength { gold: usize, pred: usize },
    #[error("sentence {id}: gold has {gold} terminals, prediction has {pred}")]
    Misaligned { id: String, gold: usize, pred: usize },
    #[error("bootstrap needs at least one iteration")]
    NoIterations,
}

/// `(start, end, label)` with `0 ≤ start < end ≤ n`.
pub type Bracket = (usize, usize, String);

/// One bracket per internal node, the root included, as a multiset.
pub fn brackets(t: &Tree) -> HashMap<Bracket, usize> {
    fn walk(t: &Tree, start: usize, out: &mut HashMap<Bracket, usize>) -> usize {
        if t.is_leaf() {
            return start + 1;
        }
        let end = t.children().iter().fold(start, |s, c| walk(c, s, out));
        *out.entry((start, end, t.label().to_owned())).or_insert(0) += 1;
        end
    }
    let mut out = HashMap::new();
    walk(t, 0, &mut out);
    out
}

/// Bracket totals of one sentence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub matched: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.matched += o.matched;
        self.gold += o.gold;
        self.predicted += o.predicted;
    }
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.matched as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            1.0
        } else {
            self.matched as f64 / self.gold as f64
        }
    }

    pub fn f_score(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub matched: usize,
    pub gold: usize,
    pub predicted: usize,
    /// Sentences without a prediction.
    pub failures: usize,
}

impl EvalReport {
    fn from_counts(c: Counts, failures: usize) -> Self {
        EvalReport {
            precision: c.precision(),
            recall: c.recall(),
            f_score: c.f_score(),
            matched: c.matched,
            gold: c.gold,
            predicted: c.predicted,
            failures,
        }
    }

    pub const TSV_HEADER: &'static str = "system\tprecision\trecall\tf_score\tmatched\tgold\tpredicted\tfailures";

    pub fn tsv_row(&self, system: &str) -> String {
        format!(
            "{system}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
            self.precision, self.recall, self.f_score, self.matched, self.gold, self.predicted, self.failures
        )
    }
}

/// Per-sentence bracket counts; a missing prediction has no brackets.
pub fn sentence_counts(gold: &Corpus, pred: &[Option<Tree>]) -> Result<Vec<Counts>, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::CorpusLength {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    gold.iter()
        .zip(pred)
        .map(|((id, g), p)| {
            let gb = brackets(g);
            let gold_n = gb.values().sum();
            let Some(p) = p else {
                return Ok(Counts {
                    matched: 0,
                    gold: gold_n,
                    predicted: 0,
                });
            };
            let (gl, pl) = (g.leaves().len(), p.leaves().len());
            if gl != pl {
                return Err(EvalError::Misaligned {
                    id: id.to_owned(),
                    gold: gl,
                    pred: pl,
                });
            }
            let pb = brackets(p);
            let matched = pb.iter().map(|(b, &n)| n.min(gb.get(b).copied().unwrap_or(0))).sum();
            Ok(Counts {
                matched,
                gold: gold_n,
                predicted: pb.values().sum(),
            })
        })
        .collect()
}

/// Micro-averaged labelled precision, recall and F.
pub fn score_corpus(gold: &Corpus, pred: &[Option<Tree>]) -> Result<EvalReport, EvalError> {
    let per = sentence_counts(gold, pred)?;
    let mut total = Counts::default();
    per.iter().for_each(|&c| total += c);
    Ok(EvalReport::from_counts(
        total,
        pred.iter().filter(|p| p.is_none()).count(),
    ))
}

/// Wraps a corpus as a full set of predictions.
pub fn as_predictions(c: &Corpus) -> Vec<Option<Tree>> {
    c.trees().iter().cloned().map(Some).collect()
}

/// Marker line for a sentence without a parse in a predictions file.
pub const NO_PARSE: &str = "none";

/// One tree per line, [`NO_PARSE`] for a failure.
pub fn write_predictions(pred: &[Option<Tree>]) -> String {
    let mut out = String::new();
    for p in pred {
        match p {
            Some(t) => out.push_str(&t.to_string()),
            None => out.push_str(NO_PARSE),
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`write_predictions`]. Blank lines are skipped.
pub fn read_predictions(text: &str) -> Result<Vec<Option<Tree>>, TreebankError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == NO_PARSE {
            out.push(None);
            continue;
        }
        let c = read_bracketed(line).map_err(|e| TreebankError::Malformed(format!("line {}: {e}", i + 1)))?;
        match c.trees() {
            [t] => out.push(Some(t.clone())),
            _ => {
                return Err(TreebankError::Malformed(format!(
                    "line {}: expected exactly one tree",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub p_value: f64,
    pub iterations: usize,
    pub seed: u64,
    /// `F(A) − F(B)` on the full corpus.
    pub observed_delta_f: f64,
}

fn uniform_index(rng: &mut ChaCha20Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Paired bootstrap over sentences with `F(A) − F(B)` as the statistic.
///
/// Sentences are first put in a canonical order (sorted by their gold and
/// predicted trees) so the result does not depend on input order. Resample
/// `i` draws its indices from ChaCha20 seeded with `seed` on stream `i`, so
/// any thread count gives the same answer. The p-value uses the shift
/// method: the share of resampled deltas that lie at least `|δ|` away from
/// the observed `δ`, i.e. `(#{|δ* − δ| ≥ |δ|} + 1) / (B + 1)`.
pub fn bootstrap_test(
    gold: &Corpus,
    a: &[Option<Tree>],
    b: &[Option<Tree>],
    iterations: usize,
    seed: u64,
) -> Result<BootstrapResult, EvalError> {
    if iterations == 0 {
        return Err(EvalError::NoIterations);
    }
    let ca = sentence_counts(gold, a)?;
    let cb = sentence_counts(gold, b)?;
    let mut order: Vec<usize> = (0..gold.len()).collect();
    order.sort_by(|&i, &j| (&gold.trees()[i], &a[i], &b[i]).cmp(&(&gold.trees()[j], &a[j], &b[j])));
    let pairs: Vec<(Counts, Counts)> = order.iter().map(|&i| (ca[i], cb[i])).collect();
    let delta = |idx: &mut dyn Iterator<Item = usize>| {
        let (mut ta, mut tb) = (Counts::default(), Counts::default());
        for i in idx {
            ta += pairs[i].0;
            tb += pairs[i].1;
        }
        ta.f_score() - tb.f_score()
    };
    let observed = delta(&mut (0..pairs.len()));
    let n = pairs.len();
    let extreme: usize = (0..iterations)
        .into_par_iter()
        .map(|it| {
            if n == 0 {
                return 1;
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(it as u64);
            let d = delta(&mut (0..n).map(|_| uniform_index(&mut rng, n)));
            usize::from((d - observed).abs() >= observed.abs())
        })
        .sum();
    Ok(BootstrapResult {
        p_value: (extreme + 1) as f64 / (iterations + 1) as f64,
        iterations,
        seed,
        observed_delta_f: observed,
    })
}
