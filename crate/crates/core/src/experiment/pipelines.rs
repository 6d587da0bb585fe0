use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::{ExperimentConfig, ExperimentError, Pipeline};
use crate::eval::{bootstrap_test, score_corpus, write_predictions, EvalReport};
use crate::hmm::{tagging_accuracy, TaggedCorpus, TaggedSentence, TaggerModel, Variant};
use crate::pcfg::{corpus_likelihood, estimate_mcle, estimate_mle, extract_counts, Pcfg};
use crate::shiftreduce::{estimate_conditional, estimate_joint, parse_corpus, BeamConfig};
use crate::treebank::{read_bracketed, strip_lexical, tree_yield, Binarizer, Corpus, HeadRules, Tree};

type Result<T> = std::result::Result<T, ExperimentError>;

/// What a pipeline run wrote.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub pipeline: Pipeline,
    /// Every file written, in write order; `metrics.tsv` and `metrics.json` last.
    pub files: Vec<PathBuf>,
    pub metrics_tsv: String,
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, text).map_err(|e| ExperimentError::io(&p, e))?;
        self.files.push(p);
        Ok(())
    }
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| ExperimentError::io(p, e))
}

fn read_trees(p: &Path) -> Result<Corpus> {
    Ok(read_bracketed(&read_text(p)?)?)
}

fn read_stripped(p: &Path) -> Result<Corpus> {
    Ok(read_trees(p)?.try_map(strip_lexical)?)
}

fn read_tagged(p: &Path) -> Result<TaggedCorpus> {
    if p.extension().is_some_and(|e| e == "mrg") {
        Ok(TaggedCorpus::from_trees(&read_trees(p)?)?)
    } else {
        Ok(TaggedCorpus::parse(&read_text(p)?)?)
    }
}

fn heldout(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.heldout.as_deref().ok_or_else(|| {
        ExperimentError::Config(vec![super::Diagnostic {
            line: None,
            message: format!("pipeline {} needs [data] heldout", cfg.pipeline),
        }])
    })
}

fn yields(c: &Corpus) -> Vec<Vec<String>> {
    c.trees().iter().map(tree_yield).collect()
}

fn viterbi_all(g: &Pcfg<f64>, sentences: &[Vec<String>]) -> Vec<Option<Tree>> {
    sentences.par_iter().map(|s| g.viterbi_parse(s)).collect()
}

fn report_json(r: &EvalReport) -> serde_json::Value {
    serde_json::to_value(r).expect("report serializes")
}

/// Runs one pipeline end to end, writing models, predictions and a metrics
/// table into the configured output directory.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| ExperimentError::io(&cfg.output_dir, e))?;
    let mut out = Out {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };
    log::info!("running {} into {}", cfg.pipeline, cfg.output_dir.display());
    let (tsv, json) = match cfg.pipeline {
        Pipeline::PcfgMleVsMcle => pcfg(cfg, &mut out)?,
        Pipeline::HmmFourWay => hmm(cfg, &mut out)?,
        Pipeline::SrJointVsCond => sr(cfg, &mut out)?,
    };
    out.write("metrics.tsv", &tsv)?;
    out.write(
        "metrics.json",
        &(serde_json::to_string_pretty(&json).expect("json serializes") + "\n"),
    )?;
    Ok(PipelineOutput {
        pipeline: cfg.pipeline,
        files: out.files,
        metrics_tsv: tsv,
    })
}

fn pcfg(cfg: &ExperimentConfig, out: &mut Out) -> Result<(String, serde_json::Value)> {
    let train = read_stripped(&cfg.train)?;
    let test = read_stripped(&cfg.test)?;
    let mle = estimate_mle::<f64>(&extract_counts(&train)?)?;
    let fit = estimate_mcle(&train, &mle, &cfg.ascent)?;
    let mcle = &fit.grammar;
    out.write("mle.grammar", &mle.to_text())?;
    out.write("mcle.grammar", &mcle.to_text())?;
    let mut trace = String::from("iteration\tconditional_log_likelihood\n");
    for (i, v) in fit.trace.iter().enumerate() {
        trace.push_str(&format!("{i}\t{v:.10}\n"));
    }
    out.write("mcle-trace.tsv", &trace)?;

    let sentences = yields(&test);
    let pred_mle = viterbi_all(&mle, &sentences);
    let pred_mcle = viterbi_all(mcle, &sentences);
    out.write("test-mle.mrg", &write_predictions(&pred_mle))?;
    out.write("test-mcle.mrg", &write_predictions(&pred_mcle))?;

    let mut tsv = String::from("# pcfg-mle-vs-mcle: likelihoods on train, brackets on test\n");
    tsv.push_str("estimator\tneg_log_p_y\tneg_log_p_y_given_x\tneg_log_p_x\tprecision\trecall\tf_score\tfailures\n");
    let mut rows = Vec::new();
    for (name, g, pred) in [("mle", &mle, &pred_mle), ("mcle", mcle, &pred_mcle)] {
        let l = corpus_likelihood(g, &train)?;
        let r = score_corpus(&test, pred)?;
        tsv.push_str(&format!(
            "{name}\t{:.4}\t{:.4}\t{:.4}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
            -l.log_joint, -l.log_conditional, -l.log_marginal, r.precision, r.recall, r.f_score, r.failures
        ));
        rows.push(json!({
            "estimator": name,
            "neg_log_p_y": -l.log_joint,
            "neg_log_p_y_given_x": -l.log_conditional,
            "neg_log_p_x": -l.log_marginal,
            "test": report_json(&r),
        }));
    }
    let b = bootstrap_test(&test, &pred_mcle, &pred_mle, cfg.bootstrap_iterations, cfg.seed)?;
    tsv.push_str("\n# paired bootstrap on F(mcle) - F(mle)\ndelta_f\tp_value\titerations\tseed\n");
    tsv.push_str(&format!(
        "{:.6}\t{:.6}\t{}\t{}\n",
        b.observed_delta_f, b.p_value, b.iterations, b.seed
    ));
    tsv.push_str(&format!(
        "\n# mcle: {} iterations, converged = {}\n",
        fit.iterations, fit.converged
    ));
    let json = json!({
        "pipeline": cfg.pipeline.name(),
        "estimators": rows,
        "bootstrap": b,
        "mcle_iterations": fit.iterations,
        "mcle_converged": fit.converged,
    });
    Ok((tsv, json))
}

fn hmm(cfg: &ExperimentConfig, out: &mut Out) -> Result<(String, serde_json::Value)> {
    let train = read_tagged(&cfg.train)?;
    let held = read_tagged(heldout(cfg)?)?;
    let test = read_tagged(&cfg.test)?;
    let words: Vec<Vec<String>> = test.sentences().iter().map(|s| s.words.clone()).collect();
    let mut tsv = String::from("# hmm-four-way: posterior-decoding accuracy on test\nvariant\taccuracy\ttokens\n");
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let model = TaggerModel::<f64>::train(v, &train, &held, &cfg.smoothing)?;
        out.write(&format!("tagger-{v}.model"), &model.to_text())?;
        let pred = model.tag_all(&words)?;
        let tagged = words
            .iter()
            .zip(&pred)
            .map(|(w, t)| TaggedSentence::new(w.clone(), t.clone()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        out.write(&format!("test-{v}.tag"), &TaggedCorpus::new(tagged).to_text())?;
        let acc = tagging_accuracy(&pred, &test)?;
        tsv.push_str(&format!("{v}\t{acc:.6}\t{}\n", test.tokens()));
        rows.push(json!({ "variant": v.name(), "accuracy": acc, "tokens": test.tokens() }));
    }
    Ok((tsv, json!({ "pipeline": cfg.pipeline.name(), "variants": rows })))
}

fn sr(cfg: &ExperimentConfig, out: &mut Out) -> Result<(String, serde_json::Value)> {
    let rules = match &cfg.head_rules {
        Some(p) => HeadRules::parse(&read_text(p)?)?,
        None => HeadRules::default(),
    };
    let bin = Binarizer::default();
    let train = read_stripped(&cfg.train)?;
    let held = read_stripped(heldout(cfg)?)?;
    let test = read_stripped(&cfg.test)?;
    let train_b = train.map(|t| bin.binarize(t, &rules));
    let held_b = held.map(|t| bin.binarize(t, &rules));

    let joint = estimate_joint::<f64>(&train_b)?;
    let (cond, _) = estimate_conditional::<f64>(&train_b, &held_b, &cfg.smoothing)?;
    let baseline = estimate_mle::<f64>(&extract_counts(&train)?)?;
    out.write("sr-joint.model", &joint.to_text())?;
    out.write("sr-cond.model", &cond.to_text())?;
    out.write("pcfg-baseline.grammar", &baseline.to_text())?;

    let sentences = yields(&test);
    let mut tsv = String::from("# sr-joint-vs-cond: labelled brackets on test\n");
    tsv.push_str("threshold\tparser\tprecision\trecall\tf_score\tfailures\n");
    let mut rows = Vec::new();
    let pred = viterbi_all(&baseline, &sentences);
    out.write("test-pcfg.mrg", &write_predictions(&pred))?;
    let r = score_corpus(&test, &pred)?;
    tsv.push_str(&format!(
        "-\tpcfg\t{:.6}\t{:.6}\t{:.6}\t{}\n",
        r.precision, r.recall, r.f_score, r.failures
    ));
    rows.push(json!({ "parser": "pcfg", "threshold": null, "test": report_json(&r) }));
    for &thr in &cfg.thresholds {
        let beam = BeamConfig {
            threshold: thr,
            ..cfg.beam.clone()
        };
        for (name, model) in [("joint", &joint), ("cond", &cond)] {
            let parsed = parse_corpus(model, &sentences, &beam, &bin);
            out.write(
                &format!("test-sr-{name}-{thr:e}.mrg"),
                &write_predictions(&parsed.trees),
            )?;
            let r = score_corpus(&test, &parsed.trees)?;
            tsv.push_str(&format!(
                "{thr:e}\t{name}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                r.precision, r.recall, r.f_score, r.failures
            ));
            rows.push(json!({ "parser": name, "threshold": thr, "test": report_json(&r) }));
        }
    }
    Ok((tsv, json!({ "pipeline": cfg.pipeline.name(), "results": rows })))
}
