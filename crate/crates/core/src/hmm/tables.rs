use std::collections::{BTreeMap, HashMap};

use super::{HmmError, TaggedCorpus, END, UNK};
use crate::smoothing::CondTable;

pub(crate) const END_ID: u32 = 0;
pub(crate) const UNK_ID: u32 = 1;

/// Word and tag symbol tables. Word `0` and tag `0` are the end marker,
/// word `1` is the unknown word; the rest are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    word_ix: HashMap<String, u32>,
    tags: Vec<String>,
    tag_ix: HashMap<String, u32>,
}

impl Vocab {
    /// Keeps words seen at least `min_count` times; all tags are kept.
    pub fn build(train: &TaggedCorpus, min_count: usize) -> Self {
        let mut wc: BTreeMap<&str, usize> = BTreeMap::new();
        let mut tags: Vec<String> = Vec::new();
        for s in train.sentences() {
            for w in &s.words {
                *wc.entry(w).or_insert(0) += 1;
            }
            tags.extend(s.tags.iter().cloned());
        }
        tags.sort();
        tags.dedup();
        let words = wc
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(w, _)| w.to_owned())
            .collect();
        Self::from_symbols(words, tags)
    }

    /// `words` and `tags` without the reserved symbols.
    pub(crate) fn from_symbols(words: Vec<String>, tags: Vec<String>) -> Self {
        let words: Vec<String> = [END.to_owned(), UNK.to_owned()].into_iter().chain(words).collect();
        let tags: Vec<String> = std::iter::once(END.to_owned()).chain(tags).collect();
        let index = |v: &[String]| v.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Vocab {
            word_ix: index(&words),
            tag_ix: index(&tags),
            words,
            tags,
        }
    }

    pub fn word_id(&self, w: &str) -> u32 {
        self.word_ix.get(w).copied().unwrap_or(UNK_ID)
    }

    pub fn tag_id(&self, t: &str) -> Option<u32> {
        self.tag_ix.get(t).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn tag(&self, id: u32) -> &str {
        &self.tags[id as usize]
    }

    /// Including the end marker and the unknown word.
    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    /// Including the end marker.
    pub fn n_tags(&self) -> usize {
        self.tags.len()
    }

    /// Real words, without the reserved symbols.
    pub fn known_words(&self) -> &[String] {
        &self.words[2..]
    }

    /// Real tags, without the end marker.
    pub fn real_tags(&self) -> &[String] {
        &self.tags[1..]
    }
}

type Triple = (u32, u32, u32);

/// Training counts behind every empirical distribution the taggers use.
///
/// The two primary tables count `(w_j, t_{j-1}, t_j)` and
/// `(w_{j-1}, t_{j-1}, t_j)` for `j = 1..=m+1`, with end markers at both
/// boundaries; every other table is a marginal of one of them.
#[derive(Debug, Clone)]
pub struct EmpiricalTables {
    vocab: Vocab,
    full: BTreeMap<Triple, u64>,
    full_prev: BTreeMap<Triple, u64>,
    /// `t_{j-1} → t_j`
    pub(crate) trans: CondTable<u32>,
    /// `t_j → w_j`
    pub(crate) emit: CondTable<u32>,
    /// `t_{j-1} → w_j`
    pub(crate) emit_prev: CondTable<u32>,
    /// `w_j → t_j`, `t_{j-1} → t_j` and `(w_j, t_{j-1}) → t_j` over real words only.
    pub(crate) t_w: CondTable<u32>,
    pub(crate) t_tp_inner: CondTable<u32>,
    pub(crate) t_w_tp: CondTable<(u32, u32)>,
    /// `w_{j-1} → t_j` and `(w_{j-1}, t_{j-1}) → t_j`.
    pub(crate) t_wp: CondTable<u32>,
    pub(crate) t_wp_tp: CondTable<(u32, u32)>,
}

impl EmpiricalTables {
    /// Counts over `train`, with words seen fewer than twice mapped to the
    /// unknown word.
    pub fn collect(train: &TaggedCorpus) -> Result<Self, HmmError> {
        if train.is_empty() {
            return Err(HmmError::EmptyCorpus);
        }
        let vocab = Vocab::build(train, 2);
        let mut full = BTreeMap::new();
        let mut full_prev = BTreeMap::new();
        for s in train.sentences() {
            let (w, t) = encode(&vocab, &s.words, &s.tags);
            for j in 1..w.len() {
                *full.entry((w[j], t[j - 1], t[j])).or_insert(0) += 1;
                *full_prev.entry((w[j - 1], t[j - 1], t[j])).or_insert(0) += 1;
            }
        }
        Ok(Self::from_parts(vocab, full, full_prev))
    }

    pub(crate) fn from_parts(vocab: Vocab, full: BTreeMap<Triple, u64>, full_prev: BTreeMap<Triple, u64>) -> Self {
        let nt = vocab.n_tags();
        let nw = vocab.n_words();
        let mut trans = CondTable::new(nt);
        let mut emit = CondTable::new(nw);
        let mut emit_prev = CondTable::new(nw);
        let mut t_w = CondTable::new(nt);
        let mut t_tp_inner = CondTable::new(nt);
        let mut t_w_tp = CondTable::new(nt);
        for (&(w, tp, t), &c) in &full {
            trans.add(tp, t as usize, c);
            emit.add(t, w as usize, c);
            emit_prev.add(tp, w as usize, c);
            if w != END_ID {
                t_w.add(w, t as usize, c);
                t_tp_inner.add(tp, t as usize, c);
                t_w_tp.add((w, tp), t as usize, c);
            }
        }
        let mut t_wp = CondTable::new(nt);
        let mut t_wp_tp = CondTable::new(nt);
        for (&(wp, tp, t), &c) in &full_prev {
            t_wp.add(wp, t as usize, c);
            t_wp_tp.add((wp, tp), t as usize, c);
        }
        EmpiricalTables {
            vocab,
            full,
            full_prev,
            trans,
            emit,
            emit_prev,
            t_w,
            t_tp_inner,
            t_w_tp,
            t_wp,
            t_wp_tp,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub(crate) fn full(&self) -> &BTreeMap<Triple, u64> {
        &self.full
    }

    pub(crate) fn full_prev(&self) -> &BTreeMap<Triple, u64> {
        &self.full_prev
    }

    fn w(&self, w: &str) -> u32 {
        self.vocab.word_id(w)
    }

    fn t(&self, t: &str) -> Option<u32> {
        self.vocab.tag_id(t)
    }

    /// `c(t_j = t)` over `j = 1..=m+1`.
    pub fn tag_unigram(&self, t: &str) -> u64 {
        self.t(t).map_or(0, |t| self.emit.context_count(&t))
    }

    pub fn tag_bigram(&self, tp: &str, t: &str) -> u64 {
        match (self.t(tp), self.t(t)) {
            (Some(a), Some(b)) => self.trans.count(&a, b as usize),
            _ => 0,
        }
    }

    pub fn word_tag(&self, w: &str, t: &str) -> u64 {
        self.t(t).map_or(0, |t| self.emit.count(&t, self.w(w) as usize))
    }

    /// `c(w_{j-1} = wp, t_j = t)`
    pub fn prev_word_tag(&self, wp: &str, t: &str) -> u64 {
        self.t(t).map_or(0, |t| self.t_wp.count(&self.w(wp), t as usize))
    }

    /// `c(w_j = w, t_{j-1} = tp)`
    pub fn word_prev_tag(&self, w: &str, tp: &str) -> u64 {
        self.t(tp).map_or(0, |tp| self.emit_prev.count(&tp, self.w(w) as usize))
    }

    /// `c(w_j, t_{j-1}, t_j)`
    pub fn word_context(&self, w: &str, tp: &str, t: &str) -> u64 {
        match (self.t(tp), self.t(t)) {
            (Some(a), Some(b)) => self.full.get(&(self.w(w), a, b)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// `c(w_{j-1}, t_{j-1}, t_j)`
    pub fn prev_word_context(&self, wp: &str, tp: &str, t: &str) -> u64 {
        match (self.t(tp), self.t(t)) {
            (Some(a), Some(b)) => self.full_prev.get(&(self.w(wp), a, b)).copied().unwrap_or(0),
            _ => 0,
        }
    }
}

/// Word and tag ids with end markers at `0` and `m+1`. Unknown tags map to
/// `u32::MAX`.
pub(crate) fn encode<S: AsRef<str>>(vocab: &Vocab, words: &[S], tags: &[S]) -> (Vec<u32>, Vec<u32>) {
    let mut w = vec![END_ID];
    w.extend(words.iter().map(|x| vocab.word_id(x.as_ref())));
    w.push(END_ID);
    let mut t = vec![END_ID];
    t.extend(tags.iter().map(|x| vocab.tag_id(x.as_ref()).unwrap_or(u32::MAX)));
    t.push(END_ID);
    (w, t)
}

pub(crate) fn encode_words<S: AsRef<str>>(vocab: &Vocab, words: &[S]) -> Vec<u32> {
    let mut w = vec![END_ID];
    w.extend(words.iter().map(|x| vocab.word_id(x.as_ref())));
    w.push(END_ID);
    w
}
