//! Seeded generator for the bundled toy treebank: a small English-like
//! grammar with prepositional-phrase attachment ambiguity and words that
//! belong to two parts of speech.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::hmm::TaggedCorpus;
use crate::treebank::{write_bracketed, Corpus, Tree};

pub const DEFAULT_SEED: u64 = 20_021;
pub const MAX_LEN: usize = 12;

const LEXICON: &[(&str, &[&str])] = &[
    ("D", &["the", "a", "every"]),
    (
        "N",
        &["dog", "cat", "man", "woman", "telescope", "park", "duck", "saw", "hill"],
    ),
    ("A", &["big", "old", "small"]),
    ("V", &["saw", "duck", "watched", "ran", "liked", "walked"]),
    ("P", &["with", "in", "on"]),
];

struct Generator {
    rng: ChaCha20Rng,
}

impl Generator {
    fn word(&mut self, tag: &str) -> Tree {
        let words = LEXICON.iter().find(|(t, _)| *t == tag).unwrap().1;
        let w = words[self.rng.gen_range(0..words.len())];
        Tree::node(tag, vec![Tree::leaf(w)])
    }

    fn pick(&mut self, weights: &[f64]) -> usize {
        let mut u: f64 = self.rng.gen();
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    }

    fn np(&mut self, depth: usize) -> Tree {
        let w: &[f64] = if depth > 3 {
            &[0.55, 0.2, 0.0, 0.25]
        } else {
            &[0.4, 0.2, 0.15, 0.25]
        };
        match self.pick(w) {
            0 => Tree::node("NP", vec![self.word("D"), self.word("N")]),
            1 => Tree::node("NP", vec![self.word("D"), self.word("A"), self.word("N")]),
            2 => Tree::node("NP", vec![self.np(depth + 1), self.pp(depth + 1)]),
            _ => Tree::node("NP", vec![self.word("N")]),
        }
    }

    fn vp(&mut self, depth: usize) -> Tree {
        let w: &[f64] = if depth > 3 {
            &[0.6, 0.0, 0.0, 0.4]
        } else {
            &[0.4, 0.2, 0.15, 0.25]
        };
        match self.pick(w) {
            0 => Tree::node("VP", vec![self.word("V"), self.np(depth + 1)]),
            1 => Tree::node("VP", vec![self.word("V"), self.np(depth + 1), self.pp(depth + 1)]),
            2 => Tree::node("VP", vec![self.vp(depth + 1), self.pp(depth + 1)]),
            _ => Tree::node("VP", vec![self.word("V")]),
        }
    }

    fn pp(&mut self, depth: usize) -> Tree {
        Tree::node("PP", vec![self.word("P"), self.np(depth + 1)])
    }

    fn sentence(&mut self) -> Tree {
        loop {
            let t = Tree::node("S", vec![self.np(0), self.vp(0)]);
            if t.leaves().len() <= MAX_LEN {
                return t;
            }
        }
    }
}

/// `n` lexicalized trees, each with at most [`MAX_LEN`] words.
pub fn generate_treebank(n: usize, seed: u64) -> Corpus {
    let mut g = Generator {
        rng: ChaCha20Rng::seed_from_u64(seed),
    };
    Corpus::new((0..n).map(|_| g.sentence()).collect())
}

pub const TOY_HEAD_RULES: &str = "\
# parent: direction preferred-children
S: right VP
NP: right N NP
VP: left V VP
PP: left P
";

fn config(pipeline: &str, ext: &str, extra: &str) -> String {
    format!(
        "[experiment]
pipeline = {pipeline}
seed = 7
output_dir = ../out/{pipeline}

[data]
train = ../data/toy/train.{ext}
heldout = ../data/toy/heldout.{ext}
test = ../data/toy/test.{ext}
{extra}"
    )
}

/// Writes `data/toy/{train,heldout,test}.{mrg,tag}` (200/50/50 sentences),
/// `configs/toy.headrules` and one experiment config per pipeline under
/// `root`. Returns the written paths.
pub fn write_toy_bundle(root: &Path, seed: u64) -> io::Result<Vec<PathBuf>> {
    let all = generate_treebank(300, seed);
    let data = root.join("data/toy");
    let configs = root.join("configs");
    fs::create_dir_all(&data)?;
    fs::create_dir_all(&configs)?;
    let mut written = Vec::new();
    for (name, range) in [("train", 0..200), ("heldout", 200..250), ("test", 250..300)] {
        let part = Corpus::new(all.trees()[range].to_vec());
        let mrg = data.join(format!("{name}.mrg"));
        fs::write(&mrg, write_bracketed(&part))?;
        let tag = data.join(format!("{name}.tag"));
        let tagged = TaggedCorpus::from_trees(&part).map_err(io::Error::other)?;
        fs::write(&tag, tagged.to_text())?;
        written.extend([mrg, tag]);
    }
    let rules = configs.join("toy.headrules");
    fs::write(&rules, TOY_HEAD_RULES)?;
    written.push(rules);
    let files = [
        (
            "pcfg.cfg",
            config(
                "pcfg-mle-vs-mcle",
                "mrg",
                "\n[mcle]\nmax_iters = 200\ntol = 1e-6\ninitial_step = 1.0\nline_search_shrink = 0.5\n\n[bootstrap]\niterations = 10000\n",
            ),
        ),
        (
            "hmm.cfg",
            config("hmm-four-way", "tag", "\n[smoothing]\nbucket_cap = 16\nem_max_iters = 100\nem_tol = 1e-7\n"),
        ),
        (
            "sr.cfg",
            config(
                "sr-joint-vs-cond",
                "mrg",
                "head_rules = toy.headrules\n\n[smoothing]\nbucket_cap = 16\n\n[beam]\nthresholds = 1e-6 1e-9\nobserved_pairs = true\nmax_states = 10000\n",
            ),
        ),
    ];
    for (name, text) in files {
        let p = configs.join(name);
        fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}
