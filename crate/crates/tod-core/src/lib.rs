//! Desk-scale end-to-end task-oriented dialogue harness.
//!
//! The crate covers the full loop for a small multi-domain dialogue system:
//!
//! - [`ontology`]: synthetic multi-domain ontology and entity database with
//!   bucketed query results.
//! - [`corpus`]: dialogue sessions with gold belief states, system acts and
//!   delexicalized responses; flat special-token serialization, the matching
//!   parser, a seeded generator, and a MultiWOZ-schema importer.
//! - [`tokenizer`]: closed-vocabulary word tokenizer.
//! - [`model`]: mini decoder-only transformer with exact reverse-mode
//!   gradients and greedy decoding.
//! - [`objectives`]: language-model loss, success/BLEU reward, REINFORCE
//!   loss, and their weighted combination.
//! - [`metrics`]: inform rate, success rate, corpus BLEU, combined score.
//! - [`trainer`]: epoch loop with gradient accumulation, AdamW, and
//!   validation-based checkpoint selection.
//! - [`evalreport`]: oracle-free inference pipeline and the analysis report
//!   (overall / domain split / turn buckets).

pub mod corpus;
pub mod error;
pub mod evalreport;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod ontology;
pub mod tokenizer;
pub mod trainer;

pub use error::{CoreError, Result};
