//! Guided decoding and data tooling for procedural plan generation.
//!
//! The centre of the crate is [`decoder`], a step-wise beam search that
//! ranks partial plans by a mix of length-normalised sequence likelihood and
//! a step verifier's validity score. Model access goes through the traits in
//! [`scorer`]; a deterministic tree-shaped mock and an HTTP client/server
//! pair for the scorer wire protocol live there too.
//!
//! Around it sit the data pipeline pieces: [`datagen`] (prompt assembly and
//! goal bootstrapping), [`curation`] (critic thresholds and annotator
//! aggregation), [`verifier_data`] (pseudo-negative pairs) and [`embodied`]
//! (action translation, executability and LCS scoring).

pub mod bench;
pub mod curation;
pub mod datagen;
pub mod decoder;
pub mod embodied;
pub mod plan;
pub mod scorer;
pub mod seed;
pub mod verifier_data;

pub use decoder::{decode, decode_batch, DecodeOutput, DecodeParams, Hypothesis};
pub use plan::{Condition, ConditionCategory, Goal, Plan, PlanningInstance, Step, TaskKind};
pub use scorer::{ScorerBundle, StepCandidate};
