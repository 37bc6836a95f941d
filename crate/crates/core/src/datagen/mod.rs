//! Teacher-side data generation over the completion interface: randomized
//! plan-elicitation prompts, goal-pool bootstrapping, and condition and
//! revised-plan sampling.

mod conditions;
mod goals;
mod prompt;
mod template;

pub use conditions::{categorize, parse_conditions, sample_conditions, sample_counterfactual, ConditionSample};
pub use goals::{bootstrap_goals, normalize_goal, BootstrapConfig, BootstrapReport, GoalEntry, GoalPool, Provenance};
pub use prompt::{
    assemble_prompt, randomized_prefix, randomized_slots, PrefixSlots, PromptRecipe, W1, W2, W3, W4,
};
pub use template::{PromptTemplate, CONDITION_TEMPLATE, COUNTERFACTUAL_TEMPLATE};

use thiserror::Error;

use crate::plan::PlanError;
use crate::scorer::ScorerError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("invalid recipe: {0}")]
    Recipe(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("completion failed: {0}")]
    Completion(#[from] ScorerError),
    #[error("could not parse a plan from completion output {raw:?}: {reason}")]
    Unparseable { raw: String, reason: String },
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
    #[error("{0}")]
    Invalid(String),
}
