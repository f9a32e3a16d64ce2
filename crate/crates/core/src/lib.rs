//! Exact laboratory for memory-bounded multi-pass streaming learning.
//!
//! The crate has three layers. The substrate is bit-packed GF(2) linear
//! algebra ([`gf2`]) and learning-task matrices with expectation norms
//! ([`learning_matrix`]). On top of it sit the analysis tools: extractor
//! certification ([`extractor_cert`]), the layered multi-pass
//! branching-program model with its two modification stages
//! ([`branching_program`]), and the exact posterior engines and lemma
//! verifiers ([`posterior_engine`]). The third layer is the algorithmic
//! payoff: block circuits compiled to metered streaming evaluation
//! ([`block_circuit`]), the multi-pass parity learner and its baselines
//! ([`multipass_learner`]), and the seeded experiment harness
//! ([`experiment`]).

pub mod block_circuit;
pub mod branching_program;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod extractor_cert;
pub mod gf2;
pub mod learning_matrix;
pub mod multipass_learner;
pub mod posterior_engine;
pub mod rng;

pub use error::{Error, Result};
