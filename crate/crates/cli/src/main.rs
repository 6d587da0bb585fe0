use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use likelab::eval::{bootstrap_test, read_predictions, score_corpus, write_predictions, EvalReport};
use likelab::experiment::{load_config, run_pipeline, validate_config, ExperimentError};
use likelab::hmm::{TaggedCorpus, TaggedSentence, Variant};
use likelab::pcfg::{estimate_mcle, estimate_mle, extract_counts, AscentConfig, PcfgError};
use likelab::shiftreduce::{estimate_conditional, estimate_joint, parse_corpus, BeamConfig, Flavor};
use likelab::smoothing::SmoothingConfig;
use likelab::treebank::{read_bracketed, strip_lexical, tree_yield, Binarizer, Corpus, HeadRules};
use likelab::{synth, MoveModel, Pcfg, TaggerModel};

#[derive(Parser)]
#[command(
    name = "likelab",
    version,
    about = "Joint vs conditional estimation for PCFGs, HMM taggers and shift-reduce parsers"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for anything random (bootstrap resampling, toy data).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Mle,
    Mcle,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a PCFG from a treebank.
    TrainPcfg {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_enum, default_value = "mle")]
        mode: Mode,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Keep words as terminals instead of stripping them to their tags.
        #[arg(long)]
        lexical: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Viterbi-parse sentences with a PCFG.
    Parse {
        #[arg(long)]
        grammar: PathBuf,
        /// One sentence per line, or a .mrg treebank whose yields are parsed.
        #[arg(long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a bitag tagger.
    TrainTagger {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        heldout: PathBuf,
        #[arg(long, default_value_t = 16)]
        bucket_cap: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Tag sentences by posterior decoding.
    Tag {
        #[arg(long)]
        model: PathBuf,
        /// One sentence per line, or a .tag / .mrg file whose words are tagged.
        #[arg(long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a shift-reduce move model on binarized trees.
    TrainSr {
        #[arg(long, default_value = "joint")]
        flavor: Flavor,
        #[arg(long)]
        train: PathBuf,
        /// Needed by the cond flavor to fit interpolation weights.
        #[arg(long)]
        heldout: Option<PathBuf>,
        #[arg(long)]
        head_rules: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Beam-search parse with a shift-reduce model.
    ParseSr {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        beam: f64,
        #[arg(long)]
        no_observed_pair_filter: bool,
        #[arg(long, default_value_t = 10_000)]
        max_states: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Labelled precision and recall of predictions against a gold treebank.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// The gold trees are already stripped to tags.
        #[arg(long)]
        no_strip: bool,
    },
    /// Paired bootstrap test on F(a) - F(b).
    Bootstrap {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long)]
        no_strip: bool,
    },
    /// Run an experiment pipeline from a config file.
    Experiment { config: PathBuf },
    /// Check a config file and list every problem found.
    ValidateConfig { config: PathBuf },
    /// Write the bundled toy corpora and configs.
    GenToy {
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
}

/// Marks errors in configuration or arguments (exit status 2).
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl Common {
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.output_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_owned(),
        }
    }

    fn write(&self, p: &Path, text: &str) -> Result<()> {
        let p = self.resolve(p);
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        log::info!("wrote {}", p.display());
        Ok(())
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn read_trees(p: &Path) -> Result<Corpus> {
    read_bracketed(&read(p)?).with_context(|| format!("parsing {}", p.display()))
}

fn read_stripped(p: &Path) -> Result<Corpus> {
    read_trees(p)?
        .try_map(strip_lexical)
        .with_context(|| format!("stripping words from {}", p.display()))
}

fn has_ext(p: &Path, ext: &str) -> bool {
    p.extension().is_some_and(|e| e == ext)
}

fn read_tagged(p: &Path) -> Result<TaggedCorpus> {
    if has_ext(p, "mrg") {
        Ok(TaggedCorpus::from_trees(&read_trees(p)?)?)
    } else {
        TaggedCorpus::parse(&read(p)?).with_context(|| format!("parsing {}", p.display()))
    }
}

/// Token sequences to parse or tag: tree yields from `.mrg` (stripped to
/// tags when `strip`), words from `.tag`, otherwise one sentence per line.
fn read_sentences(p: &Path, strip: bool) -> Result<Vec<Vec<String>>> {
    if has_ext(p, "mrg") {
        let c = if strip { read_stripped(p)? } else { read_trees(p)? };
        return Ok(c.trees().iter().map(tree_yield).collect());
    }
    if has_ext(p, "tag") {
        return Ok(read_tagged(p)?.sentences().iter().map(|s| s.words.clone()).collect());
    }
    Ok(read(p)?
        .lines()
        .map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect())
}

fn head_rules(p: &Option<PathBuf>) -> Result<HeadRules> {
    match p {
        Some(p) => HeadRules::parse(&read(p)?).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        None => Ok(HeadRules::default()),
    }
}

fn read_gold(p: &Path, no_strip: bool) -> Result<Corpus> {
    if no_strip {
        read_trees(p)
    } else {
        read_stripped(p)
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::TrainPcfg {
            train,
            mode,
            max_iters,
            tol,
            lexical,
            out,
        } => {
            let corpus = if lexical {
                read_trees(&train)?
            } else {
                read_stripped(&train)?
            };
            let mle = estimate_mle::<f64>(&extract_counts(&corpus)?)?;
            let g = match mode {
                Mode::Mle => mle,
                Mode::Mcle => {
                    let cfg = AscentConfig {
                        max_iters,
                        tol,
                        ..AscentConfig::default()
                    };
                    cfg.validate().map_err(|e| config_err(e.to_string()))?;
                    let fit = estimate_mcle(&corpus, &mle, &cfg)?;
                    log::info!("mcle: {} iterations, converged = {}", fit.iterations, fit.converged);
                    fit.grammar
                }
            };
            c.write(&out, &g.to_text())
        }
        Command::Parse { grammar, input, out } => {
            let g = Pcfg::load(&grammar).with_context(|| format!("loading {}", grammar.display()))?;
            let sentences = read_sentences(&input, true)?;
            let pred: Vec<_> = sentences.par_iter().map(|s| g.viterbi_parse(s)).collect();
            let failures = pred.iter().filter(|p| p.is_none()).count();
            if failures > 0 {
                log::warn!("{failures} of {} sentences have no parse", pred.len());
            }
            c.write(&out, &write_predictions(&pred))
        }
        Command::TrainTagger {
            variant,
            train,
            heldout,
            bucket_cap,
            out,
        } => {
            let cfg = SmoothingConfig {
                bucket_cap,
                ..SmoothingConfig::default()
            };
            let m = TaggerModel::train(variant, &read_tagged(&train)?, &read_tagged(&heldout)?, &cfg)?;
            c.write(&out, &m.to_text())
        }
        Command::Tag { model, input, out } => {
            let m = TaggerModel::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let sentences = read_sentences(&input, false)?;
            let tags = m.tag_all(&sentences)?;
            let tagged = sentences
                .into_iter()
                .zip(tags)
                .map(|(w, t)| TaggedSentence::new(w, t))
                .collect::<Result<Vec<_>, _>>()?;
            c.write(&out, &TaggedCorpus::new(tagged).to_text())
        }
        Command::TrainSr {
            flavor,
            train,
            heldout,
            head_rules: rules,
            out,
        } => {
            let rules = head_rules(&rules)?;
            let bin = Binarizer::default();
            let corpus = read_stripped(&train)?.map(|t| bin.binarize(t, &rules));
            let m: MoveModel = match flavor {
                Flavor::Joint => estimate_joint(&corpus)?,
                Flavor::Conditional => {
                    let Some(h) = heldout else {
                        return Err(config_err("--flavor cond needs --heldout"));
                    };
                    let h = read_stripped(&h)?.map(|t| bin.binarize(t, &rules));
                    estimate_conditional(&corpus, &h, &SmoothingConfig::default())?.0
                }
            };
            c.write(&out, &m.to_text())
        }
        Command::ParseSr {
            model,
            input,
            beam,
            no_observed_pair_filter,
            max_states,
            out,
        } => {
            if !(beam > 0.0 && beam <= 1.0) {
                return Err(config_err(format!("--beam must lie in (0, 1], got {beam}")));
            }
            let m = MoveModel::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let cfg = BeamConfig {
                threshold: beam,
                require_observed_pairs: !no_observed_pair_filter,
                max_states,
            };
            let sentences = read_sentences(&input, true)?;
            let parsed = parse_corpus(&m, &sentences, &cfg, &Binarizer::default());
            if parsed.failures > 0 {
                log::warn!("{} of {} sentences have no parse", parsed.failures, sentences.len());
            }
            c.write(&out, &write_predictions(&parsed.trees))
        }
        Command::Eval {
            gold,
            pred,
            json,
            no_strip,
        } => {
            let g = read_gold(&gold, no_strip)?;
            let p = read_predictions(&read(&pred)?).with_context(|| format!("parsing {}", pred.display()))?;
            let r = score_corpus(&g, &p)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                println!("{}\n{}", EvalReport::TSV_HEADER, r.tsv_row(&pred.display().to_string()));
            }
            Ok(())
        }
        Command::Bootstrap {
            gold,
            a,
            b,
            iterations,
            no_strip,
        } => {
            if iterations == 0 {
                return Err(config_err("--iterations must be positive"));
            }
            let g = read_gold(&gold, no_strip)?;
            let pa = read_predictions(&read(&a)?)?;
            let pb = read_predictions(&read(&b)?)?;
            let r = bootstrap_test(&g, &pa, &pb, iterations, c.seed.unwrap_or(0))?;
            println!("delta_f\tp_value\titerations\tseed");
            println!(
                "{:.6}\t{:.6}\t{}\t{}",
                r.observed_delta_f, r.p_value, r.iterations, r.seed
            );
            Ok(())
        }
        Command::Experiment { config } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            if let Some(d) = &c.output_dir {
                cfg.output_dir = d.clone();
            }
            let out = run_pipeline(&cfg)?;
            print!("{}", out.metrics_tsv);
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let diags = validate_config(&config)?;
            if diags.is_empty() {
                println!("{}: ok", config.display());
                return Ok(());
            }
            for d in &diags {
                eprintln!("{}: {d}", config.display());
            }
            Err(config_err(format!(
                "{} problem(s) in {}",
                diags.len(),
                config.display()
            )))
        }
        Command::GenToy { root } => {
            let root = c.resolve(&root);
            let written = synth::write_toy_bundle(&root, c.seed.unwrap_or(synth::DEFAULT_SEED))?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|c| {
        c.is::<ConfigError>()
            || matches!(c.downcast_ref::<ExperimentError>(), Some(ExperimentError::Config(_)))
            || matches!(c.downcast_ref::<PcfgError>(), Some(PcfgError::Config(_)))
    });
    if config {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
