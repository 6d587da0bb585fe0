//! Joint and conditional likelihood estimation for PCFGs, bitag HMM taggers
//! and stochastic shift-reduce parsers, with the treebank transforms and
//! evaluation needed to compare them.
//!
//! Models are generic over the scalar type ([`num::Real`], implemented for
//! `f32` and `f64`); the aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod experiment;
pub mod hmm;
pub mod num;
pub mod pcfg;
pub mod shiftreduce;
pub mod smoothing;
pub mod synth;
pub mod treebank;

pub use treebank::{Corpus, Tree};

pub type Pcfg = pcfg::Pcfg<f64>;
pub type TaggerModel = hmm::TaggerModel<f64>;
pub type InterpolatedCondDist = hmm::InterpolatedCondDist<f64>;
pub type MoveModel = shiftreduce::MoveModel<f64>;
pub type Lambdas = smoothing::Lambdas<f64>;
