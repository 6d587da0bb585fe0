//! Experiment configs and the three comparison pipelines.

mod pipelines;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::eval::EvalError;
use crate::hmm::HmmError;
use crate::pcfg::{AscentConfig, PcfgError};
use crate::shiftreduce::{BeamConfig, SrError};
use crate::smoothing::SmoothingConfig;
use crate::treebank::TreebankError;

pub use pipelines::{run_pipeline, PipelineOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    PcfgMleVsMcle,
    HmmFourWay,
    SrJointVsCond,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::PcfgMleVsMcle, Pipeline::HmmFourWay, Pipeline::SrJointVsCond];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::PcfgMleVsMcle => "pcfg-mle-vs-mcle",
            Pipeline::HmmFourWay => "hmm-four-way",
            Pipeline::SrJointVsCond => "sr-joint-vs-cond",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Pipeline::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Pipeline::ALL.iter().map(|p| p.name()).collect();
            format!("unknown pipeline `{s}`; expected one of {}", names.join(", "))
        })
    }
}

/// One problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<Diagnostic>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error(transparent)]
    Pcfg(#[from] PcfgError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Sr(#[from] SrError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub train: PathBuf,
    pub heldout: Option<PathBuf>,
    pub test: PathBuf,
    pub head_rules: Option<PathBuf>,
    pub ascent: AscentConfig,
    pub bootstrap_iterations: usize,
    pub smoothing: SmoothingConfig,
    pub beam: BeamConfig,
    /// Beam thresholds to compare; each one gets its own rows.
    pub thresholds: Vec<f64>,
}

type Sections = BTreeMap<String, BTreeMap<String, (String, usize)>>;

const KEYS: &[(&str, &[&str])] = &[
    ("experiment", &["pipeline", "seed", "output_dir"]),
    ("data", &["train", "heldout", "test", "head_rules"]),
    (
        "mcle",
        &["max_iters", "tol", "initial_step", "line_search_shrink", "max_shrinks"],
    ),
    ("bootstrap", &["iterations"]),
    ("smoothing", &["bucket_cap", "em_max_iters", "em_tol"]),
    ("beam", &["thresholds", "observed_pairs", "max_states"]),
];

fn parse_sections(text: &str, diags: &mut Vec<Diagnostic>) -> Sections {
    let mut out = Sections::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let mut err = |m: String| {
            diags.push(Diagnostic {
                line: Some(ln),
                message: m,
            })
        };
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_owned();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                let names: Vec<_> = KEYS.iter().map(|(s, _)| *s).collect();
                err(format!(
                    "unknown section [{name}]; expected one of {}",
                    names.join(", ")
                ));
            }
            out.entry(name.clone()).or_default();
            section = Some(name);
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            err(format!("expected `key = value`, found `{line}`"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(sec) = &section else {
            err(format!("`{k}` appears before any section header"));
            continue;
        };
        if let Some((_, keys)) = KEYS.iter().find(|(s, _)| s == sec) {
            if !keys.contains(&k) {
                err(format!(
                    "unknown key `{k}` in [{sec}]; expected one of {}",
                    keys.join(", ")
                ));
                continue;
            }
        }
        let entries = out.entry(sec.clone()).or_default();
        if entries.insert(k.to_owned(), (v.to_owned(), ln)).is_some() {
            err(format!("duplicate key `{k}` in [{sec}]"));
        }
    }
    out
}

struct Reader<'a> {
    sections: &'a Sections,
    base: &'a Path,
    diags: &'a mut Vec<Diagnostic>,
}

impl Reader<'_> {
    fn raw(&self, sec: &str, key: &str) -> Option<(&str, usize)> {
        self.sections.get(sec)?.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn value<V: FromStr>(&mut self, sec: &str, key: &str, default: V) -> V
    where
        V::Err: fmt::Display,
    {
        match self.raw(sec, key) {
            None => default,
            Some((v, line)) => match v.parse() {
                Ok(x) => x,
                Err(e) => {
                    self.diags.push(Diagnostic {
                        line: Some(line),
                        message: format!("[{sec}] {key}: cannot parse `{v}`: {e}"),
                    });
                    default
                }
            },
        }
    }

    fn path(&mut self, sec: &str, key: &str, required: bool, must_exist: bool) -> Option<PathBuf> {
        match self.raw(sec, key) {
            None => {
                if required {
                    self.diags.push(Diagnostic {
                        line: None,
                        message: format!("missing required key `{key}` in [{sec}]"),
                    });
                }
                None
            }
            Some((v, line)) => {
                let p = self.base.join(v);
                if must_exist && !p.exists() {
                    self.diags.push(Diagnostic {
                        line: Some(line),
                        message: format!("[{sec}] {key}: `{}` does not exist", p.display()),
                    });
                }
                Some(p)
            }
        }
    }
}

/// Parses a config; relative paths are taken relative to `base`. Returns
/// every problem found, not just the first.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let sections = parse_sections(text, &mut diags);
    let mut r = Reader {
        sections: &sections,
        base,
        diags: &mut diags,
    };
    let pipeline = match r.raw("experiment", "pipeline") {
        None => {
            r.diags.push(Diagnostic {
                line: None,
                message: "missing required key `pipeline` in [experiment]".into(),
            });
            None
        }
        Some((v, line)) => match v.parse::<Pipeline>() {
            Ok(p) => Some(p),
            Err(e) => {
                r.diags.push(Diagnostic {
                    line: Some(line),
                    message: e,
                });
                None
            }
        },
    };
    let seed = r.value("experiment", "seed", 0u64);
    let output_dir = r.path("experiment", "output_dir", true, false);
    let train = r.path("data", "train", true, true);
    let needs_heldout = matches!(pipeline, Some(Pipeline::HmmFourWay | Pipeline::SrJointVsCond));
    let heldout = r.path("data", "heldout", needs_heldout, true);
    let test = r.path("data", "test", true, true);
    let head_rules = r.path("data", "head_rules", false, true);

    let d = AscentConfig::default();
    let ascent = AscentConfig {
        max_iters: r.value("mcle", "max_iters", d.max_iters),
        tol: r.value("mcle", "tol", d.tol),
        initial_step: r.value("mcle", "initial_step", d.initial_step),
        line_search_shrink: r.value("mcle", "line_search_shrink", d.line_search_shrink),
        max_shrinks: r.value("mcle", "max_shrinks", d.max_shrinks),
    };
    if let Err(e) = ascent.validate() {
        r.diags.push(Diagnostic {
            line: None,
            message: format!("[mcle] {e}"),
        });
    }
    let bootstrap_iterations = r.value("bootstrap", "iterations", 10_000usize);
    if bootstrap_iterations == 0 {
        r.diags.push(Diagnostic {
            line: None,
            message: "[bootstrap] iterations must be positive".into(),
        });
    }
    let sd = SmoothingConfig::default();
    let smoothing = SmoothingConfig {
        bucket_cap: r.value("smoothing", "bucket_cap", sd.bucket_cap),
        max_iters: r.value("smoothing", "em_max_iters", sd.max_iters),
        tol: r.value("smoothing", "em_tol", sd.tol),
    };
    if !(smoothing.tol > 0.0) {
        r.diags.push(Diagnostic {
            line: None,
            message: "[smoothing] em_tol must be positive".into(),
        });
    }
    let bd = BeamConfig::default();
    let beam = BeamConfig {
        threshold: bd.threshold,
        require_observed_pairs: r.value("beam", "observed_pairs", bd.require_observed_pairs),
        max_states: r.value("beam", "max_states", bd.max_states),
    };
    let thresholds = match r.raw("beam", "thresholds") {
        None => vec![1e-6, 1e-9],
        Some((v, line)) => {
            let parsed: Result<Vec<f64>, _> = v.split_whitespace().map(str::parse).collect();
            match parsed {
                Ok(t) if !t.is_empty() && t.iter().all(|&x| x > 0.0 && x <= 1.0) => t,
                _ => {
                    r.diags.push(Diagnostic {
                        line: Some(line),
                        message: format!("[beam] thresholds: expected numbers in (0, 1], found `{v}`"),
                    });
                    Vec::new()
                }
            }
        }
    };
    if beam.max_states == 0 {
        r.diags.push(Diagnostic {
            line: None,
            message: "[beam] max_states must be positive".into(),
        });
    }
    match (pipeline, output_dir, train, test) {
        (Some(pipeline), Some(output_dir), Some(train), Some(test)) if diags.is_empty() => Ok(ExperimentConfig {
            pipeline,
            seed,
            output_dir,
            train,
            heldout,
            test,
            head_rules,
            ascent,
            bootstrap_iterations,
            smoothing,
            beam,
            thresholds,
        }),
        _ => Err(diags),
    }
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(ExperimentError::Config)
}

/// Every problem in the config at `path`; empty when it is valid.
pub fn validate_config(path: &Path) -> Result<Vec<Diagnostic>, ExperimentError> {
    match load_config(path) {
        Ok(_) => Ok(Vec::new()),
        Err(ExperimentError::Config(d)) => Ok(d),
        Err(e) => Err(e),
    }
}
