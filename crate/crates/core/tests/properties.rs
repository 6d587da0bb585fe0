mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::*;
use likelab::eval::{as_predictions, bootstrap_test, score_corpus};
use likelab::hmm::{EmpiricalTables, InterpolatedCondDist, MixtureKind, TaggedCorpus, TaggerModel, Variant};
use likelab::pcfg::{estimate_mcle, estimate_mle, extract_counts, AscentConfig, Pcfg};
use likelab::shiftreduce::{estimate_conditional_fixed, estimate_joint, oracle_moves, rebuild, Move, MoveModel, STAR};
use likelab::smoothing::{fit_lambdas, HeldoutEvent, SmoothingConfig};
use likelab::treebank::{
    read_bracketed, tree_yield, write_bracketed, Binarizer, Corpus, Direction, HeadRule, HeadRules, Tree,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

const LABELS: [&str; 4] = ["S", "NP", "VP", "PP"];

fn random_rules(r: &mut ChaCha20Rng) -> HeadRules {
    let mut rules = HeadRules::new();
    for l in LABELS {
        if r.gen_bool(0.7) {
            let direction = if r.gen_bool(0.5) {
                Direction::Left
            } else {
                Direction::Right
            };
            let preferences = LABELS.choose_multiple(r, 2).map(|s| s.to_string()).collect();
            rules.insert(l, HeadRule { direction, preferences });
        }
    }
    rules
}

fn random_corpus(r: &mut ChaCha20Rng, n: usize) -> Corpus {
    Corpus::new(
        (0..n)
            .map(|_| {
                let t = random_nary_tree(r, &LABELS, &["a", "b", "c"], 3, 4);
                Tree::node("S", t.children().to_vec())
            })
            .collect(),
    )
}

fn sr_corpus(r: &mut ChaCha20Rng) -> Corpus {
    Corpus::new(
        (0..r.gen_range(2..=8))
            .map(|_| {
                let n = r.gen_range(1..=4);
                random_binary_tree(r, &["A", "B"], &["a", "b"], n)
            })
            .collect(),
    )
}

fn random_tagged(r: &mut ChaCha20Rng, n: usize) -> TaggedCorpus {
    let lines: Vec<String> = (0..n)
        .map(|_| {
            (0..r.gen_range(1..=5))
                .map(|_| {
                    format!(
                        "{}_{}",
                        ["a", "b", "c"].choose(r).unwrap(),
                        ["X", "Y", "Z"].choose(r).unwrap()
                    )
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    TaggedCorpus::parse(&lines.join("\n")).unwrap()
}

fn theta_sums(g: &Pcfg<f64>) -> BTreeMap<String, f64> {
    let mut sums = BTreeMap::new();
    for (p, t) in g.productions().iter().zip(g.theta_vec()) {
        *sums.entry(p.lhs.clone()).or_insert(0.0) += t;
    }
    sums
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracketed_round_trip(seed in any::<u64>()) {
        let c = random_corpus(&mut rng(seed), 4);
        let back = read_bracketed(&write_bracketed(&c)).unwrap();
        prop_assert_eq!(back.trees(), c.trees());
    }

    #[test]
    fn binarization_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rules = random_rules(&mut r);
        let bin = Binarizer::default();
        for t in random_corpus(&mut r, 4).trees() {
            let b = bin.binarize(t, &rules);
            prop_assert!(b.nodes().all(|n| n.children().len() <= 2));
            prop_assert_eq!(tree_yield(&b), tree_yield(t));
            prop_assert_eq!(&bin.debinarize(&b), t);
        }
    }

    #[test]
    fn oracle_replay_round_trip(seed in any::<u64>(), leaves in 1usize..10) {
        let t = random_binary_tree(&mut rng(seed), &["A", "B", "C"], &["a", "b"], leaves);
        let moves = oracle_moves(&t).unwrap();
        prop_assert_eq!(moves.last(), Some(&Move::Shift(STAR.to_string())));
        prop_assert_eq!(rebuild(&moves).unwrap(), t);
    }

    #[test]
    fn mle_rows_sum_to_one(seed in any::<u64>()) {
        let c = random_corpus(&mut rng(seed), 5);
        let g = estimate_mle::<f64>(&extract_counts(&c).unwrap()).unwrap();
        for (lhs, s) in theta_sums(&g) {
            prop_assert!((s - 1.0).abs() <= 1e-12, "{} sums to {}", lhs, s);
        }
    }

    #[test]
    fn mcle_rows_sum_to_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_grammar(&mut r);
        let trees: Vec<Tree> = (0..20).filter_map(|_| sample_tree(&g, &mut r, 20)).take(4).collect();
        prop_assume!(!trees.is_empty());
        let c = Corpus::new(trees);
        let init = estimate_mle::<f64>(&extract_counts(&c).unwrap()).unwrap();
        let cfg = AscentConfig { max_iters: 5, ..AscentConfig::default() };
        let fit = estimate_mcle(&c, &init, &cfg).unwrap();
        for (lhs, s) in theta_sums(&fit.grammar) {
            prop_assert!((s - 1.0).abs() <= 1e-9, "{} sums to {}", lhs, s);
        }
        prop_assert!(fit.grammar.theta_vec().iter().all(|&t| t >= 0.0));
        prop_assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn lambdas_stay_on_simplex(seed in any::<u64>(), k in 1usize..5, n in 1usize..200) {
        let mut r = rng(seed);
        let events: Vec<HeldoutEvent<f64>> = (0..n)
            .map(|_| HeldoutEvent {
                bucket: r.gen_range(0..3),
                probs: (0..k).map(|_| if r.gen_bool(0.2) { 0.0 } else { r.gen::<f64>() }).collect(),
            })
            .collect();
        let fit = fit_lambdas(&events, k, &SmoothingConfig::default());
        for row in fit.lambdas.rows() {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12, "{:?}", row);
            prop_assert!(row.iter().all(|&l| l >= 0.0));
        }
        prop_assert!(fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()));
    }

    #[test]
    fn tag_mixtures_are_distributions(seed in any::<u64>(), w0 in 0.0f64..1.0, w1 in 0.0f64..1.0) {
        let mut r = rng(seed);
        let tables = Arc::new(EmpiricalTables::collect(&random_tagged(&mut r, 6)).unwrap());
        let weights = [w0 * w1, w0 * (1.0 - w1), 1.0 - w0];
        let vocab = tables.vocab().clone();
        for kind in [MixtureKind::Pr0, MixtureKind::Pr1] {
            let d = InterpolatedCondDist::<f64>::fixed(kind, tables.clone(), SmoothingConfig::default(), weights);
            for w in ["a", "b", "c", "zzz"] {
                for tp in 0..vocab.n_tags() {
                    let s: f64 = d.distribution(w, vocab.tag(tp as u32)).iter().sum();
                    prop_assert!((s - 1.0).abs() <= 1e-12, "{:?} at ({}, {}) sums to {}", kind, w, tp, s);
                }
            }
        }
    }

    #[test]
    fn conditional_tagger_normalizes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let train = random_tagged(&mut r, 8);
        let held = random_tagged(&mut r, 4);
        let m = TaggerModel::<f64>::train(Variant::Conditional, &train, &held, &SmoothingConfig::default()).unwrap();
        let len = r.gen_range(1..=4);
        let words: Vec<&str> = (0..len).map(|_| *["a", "b", "c", "d"].choose(&mut r).unwrap()).collect();
        let (_, z) = brute_marginals(&m, &words);
        prop_assert!((z - 1.0).abs() <= 1e-9, "total mass {}", z);
    }

    #[test]
    fn move_distributions_respect_structure(seed in any::<u64>(), l in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let c = sr_corpus(&mut r);
        let models: [MoveModel<f64>; 2] = [
            estimate_joint(&c).unwrap(),
            estimate_conditional_fixed(&c, [l, 1.0 - l], &SmoothingConfig::default()).unwrap(),
        ];
        for m in &models {
            let syms = m.symbols().to_vec();
            for s1 in &syms {
                for s2 in &syms {
                    for w in &syms {
                        let d = m.distribution(s1, s2, w);
                        let total: f64 = d.iter().map(|(_, p)| p).sum();
                        prop_assert!(total == 0.0 || (total - 1.0).abs() <= 1e-9);
                        for (mv, p) in &d {
                            let forbidden = match mv {
                                Move::Reduce1(_) => s1 == STAR,
                                Move::Reduce2(_) => s2 == STAR,
                                Move::Shift(x) if x == STAR => !(s1 == m.start() && s2 == STAR),
                                Move::Shift(_) => false,
                            };
                            prop_assert!(!forbidden || *p == 0.0, "P({}|{},{}) = {}", mv, s1, s2, p);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn joint_mass_is_sub_probability(seed in any::<u64>()) {
        let m = estimate_joint::<f64>(&sr_corpus(&mut rng(seed))).unwrap();
        let mut total = 0.0;
        for x in all_strings(&["a", "b"], 3) {
            total += brute_sr_parses(&m, &x, 16).iter().map(|(_, lp)| lp.exp()).sum::<f64>();
        }
        prop_assert!(total <= 1.0 + 1e-9, "mass {}", total);
    }

    #[test]
    fn scores_are_symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let gold = random_corpus(&mut r, 6);
        let rules = random_rules(&mut r);
        let pred = gold.map(|t| Binarizer::default().binarize(t, &rules));
        let ab = score_corpus(&gold, &as_predictions(&pred)).unwrap();
        let ba = score_corpus(&pred, &as_predictions(&gold)).unwrap();
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert_eq!(ab.f_score, ba.f_score);
    }

    #[test]
    fn scores_ignore_sentence_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let gold = random_corpus(&mut r, 8);
        let rules = random_rules(&mut r);
        let pred: Vec<Option<Tree>> = gold
            .trees()
            .iter()
            .map(|t| r.gen_bool(0.8).then(|| Binarizer::default().binarize(t, &rules)))
            .collect();
        let mut order: Vec<usize> = (0..gold.len()).collect();
        order.shuffle(&mut r);
        let gold2 = Corpus::new(order.iter().map(|&i| gold.trees()[i].clone()).collect());
        let pred2: Vec<Option<Tree>> = order.iter().map(|&i| pred[i].clone()).collect();
        let a = score_corpus(&gold, &pred).unwrap();
        let b = score_corpus(&gold2, &pred2).unwrap();
        prop_assert_eq!((a.matched, a.gold, a.predicted, a.failures), (b.matched, b.gold, b.predicted, b.failures));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bootstrap_ignores_sentence_order(seed in any::<u64>(), boot_seed in any::<u64>()) {
        let mut r = rng(seed);
        let gold = random_corpus(&mut r, 10);
        let rules = random_rules(&mut r);
        let a: Vec<Option<Tree>> = gold.trees().iter().map(|t| Some(Binarizer::default().binarize(t, &rules))).collect();
        let b: Vec<Option<Tree>> = gold.trees().iter().map(|t| r.gen_bool(0.7).then(|| t.clone())).collect();
        let mut order: Vec<usize> = (0..gold.len()).collect();
        order.shuffle(&mut r);
        let pick = |v: &[Option<Tree>]| order.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        let gold2 = Corpus::new(order.iter().map(|&i| gold.trees()[i].clone()).collect());
        let x = bootstrap_test(&gold, &a, &b, 300, boot_seed).unwrap();
        let y = bootstrap_test(&gold2, &pick(&a), &pick(&b), 300, boot_seed).unwrap();
        prop_assert_eq!(&x, &y);
        prop_assert!(x.p_value > 0.0 && x.p_value <= 1.0);
    }

    #[test]
    fn model_text_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_grammar(&mut r);
        prop_assert_eq!(Pcfg::<f64>::from_text(&g.to_text()).unwrap().to_text(), g.to_text());
        let c = sr_corpus(&mut r);
        let m = estimate_conditional_fixed::<f64>(&c, [0.3, 0.7], &SmoothingConfig::default()).unwrap();
        prop_assert_eq!(MoveModel::<f64>::from_text(&m.to_text()).unwrap().to_text(), m.to_text());
        let train = random_tagged(&mut r, 6);
        let held = random_tagged(&mut r, 3);
        for v in Variant::ALL {
            let t = TaggerModel::<f64>::train(v, &train, &held, &SmoothingConfig::default()).unwrap();
            prop_assert_eq!(TaggerModel::<f64>::from_text(&t.to_text()).unwrap().to_text(), t.to_text());
        }
    }
}
