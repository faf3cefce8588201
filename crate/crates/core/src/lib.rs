//! Post-processing and evaluation for `$`-marked grammatical error detection.
//!
//! A sequence-to-sequence model rewrites its input with erroneous spans
//! bracketed by `$`. Its output is rarely a faithful copy of the input, so it
//! is reconciled character by character against the input ([`reconcile`]),
//! with whole-word repair and a rule-based detector ([`rules`]) as fallbacks,
//! and an exact-match table of known sentences ([`lookup`]) short-circuiting
//! everything. [`pipeline`] wires the stages into ablation variants and
//! [`eval`] scores predictions by average Levenshtein distance.

pub mod corpus;
pub mod eval;
pub mod lookup;
pub mod pipeline;
pub mod reconcile;
pub mod rules;
pub mod simgen;
pub mod textnorm;
mod tokens;
pub mod tsv;

pub use corpus::{parse_marked, strip_markers, CorpusRecord, MarkedSentence, Span, MARKER};
pub use eval::levenshtein;
pub use pipeline::AblationVariant;
pub use textnorm::{normalize, NormConfig};
