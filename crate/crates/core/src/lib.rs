//! Constrained machine translation through templates.
//!
//! Constraints are lifted into nonterminal templates on both sides so an
//! ordinary sequence-to-sequence model can learn where each constrained
//! phrase goes. This crate builds the serialized training and inference
//! strings, validates and reconstructs model outputs, mines simulated
//! constraints from word alignments and scores the results.
//!
//! - [`lexical`] and [`structural`]: the two serialization modes.
//! - [`template`], [`matching`], [`tokens`], [`vocab`]: shared building blocks.
//! - [`miner`]: phrase extraction and constraint sampling.
//! - [`metrics`]: BLEU, exact match, window overlap, weighted TER and
//!   structure checks.
//! - [`corpus_io`]: file formats.
//! - [`pipeline`]: the end-to-end operations behind the `ctmt` binary.
//! - [`synth`]: seeded synthetic corpora.

pub mod corpus_io;
pub mod lexical;
pub mod matching;
pub mod metrics;
pub mod miner;
pub mod pipeline;
pub mod structural;
pub mod synth;
pub mod template;
pub mod tokens;
pub mod vocab;
