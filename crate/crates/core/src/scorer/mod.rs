//! Model-facing scoring contracts.
//!
//! The decoder talks to models only through three traits: a step
//! [`Proposer`], a sequence [`Likelihood`] and a step [`Verifier`]. A fourth,
//! [`Completion`], is raw text completion used by the data generation
//! tools. [`ScorerBundle`] groups them behind shared handles so one bundle
//! can be cloned into many worker threads.
//!
//! Implementations shipped here: [`mock::MockWorld`] (an exact tree-shaped
//! oracle), [`remote::RemoteScorer`] (HTTP client for the wire protocol) and
//! [`server::ScorerServer`] (serves any bundle over the same protocol).

pub mod mock;
pub mod remote;
pub mod server;
pub mod wire;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{Goal, PlanningInstance, Step};

/// Text carried by the distinguished end-of-plan candidate.
pub const END_OF_PLAN: &str = "<end-of-plan>";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScorerError {
    #[error("scorer unavailable at {endpoint} after {attempts} attempt(s): {message}")]
    Unavailable {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("protocol error in `{field}`: {message}")]
    Protocol { field: String, message: String },
    #[error("step {position} ({step:?}) is not on any path of the mock world")]
    OffTree { step: String, position: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{0} is not supported by this scorer")]
    Unsupported(&'static str),
}

impl ScorerError {
    pub(crate) fn protocol(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScorerError::Protocol {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// How a proposer should produce its candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DecodingMethod {
    Greedy {
        #[serde(default)]
        seed: u64,
    },
    Beam {
        beam_width: usize,
        #[serde(default)]
        seed: u64,
    },
    Nucleus {
        top_p: f64,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_temperature() -> f64 {
    1.0
}

impl DecodingMethod {
    pub fn seed(&self) -> u64 {
        match *self {
            DecodingMethod::Greedy { seed }
            | DecodingMethod::Beam { seed, .. }
            | DecodingMethod::Nucleus { seed, .. } => seed,
        }
    }

    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self {
            DecodingMethod::Greedy { seed }
            | DecodingMethod::Beam { seed, .. }
            | DecodingMethod::Nucleus { seed, .. } => *seed = new_seed,
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            DecodingMethod::Greedy { .. } => Ok(()),
            DecodingMethod::Beam { beam_width: 0, .. } => {
                Err("beam_width must be positive".into())
            }
            DecodingMethod::Beam { .. } => Ok(()),
            DecodingMethod::Nucleus { top_p, temperature, .. } => {
                if !(top_p > 0.0 && top_p <= 1.0) {
                    Err(format!("top_p must be in (0, 1], got {top_p}"))
                } else if !(temperature > 0.0 && temperature.is_finite()) {
                    Err(format!("temperature must be positive, got {temperature}"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl fmt::Display for DecodingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DecodingMethod::Greedy { .. } => write!(f, "greedy"),
            DecodingMethod::Beam { beam_width, .. } => write!(f, "beam(width={beam_width})"),
            DecodingMethod::Nucleus { top_p, temperature, .. } => {
                write!(f, "nucleus(p={top_p}, t={temperature})")
            }
        }
    }
}

/// A proposed next step. `terminal` marks the end-of-plan candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCandidate {
    pub text: String,
    pub logprob_sum: f64,
    pub token_count: u32,
    #[serde(default)]
    pub terminal: bool,
}

impl StepCandidate {
    pub fn step(text: impl Into<String>, logprob_sum: f64, token_count: u32) -> Self {
        Self {
            text: text.into(),
            logprob_sum,
            token_count,
            terminal: false,
        }
    }

    pub fn end_of_plan(logprob_sum: f64) -> Self {
        Self {
            text: END_OF_PLAN.to_string(),
            logprob_sum,
            token_count: 1,
            terminal: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLik {
    pub logprob_sum: f64,
    pub token_count: u32,
}

/// Sampling settings for raw text completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub top_p: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            top_p: 0.98,
            temperature: 0.9,
            max_tokens: 256,
            seed: 0,
        }
    }
}

pub trait Proposer: Send + Sync {
    /// At most `n` candidates for the step after `prefix`.
    fn propose(
        &self,
        instance: &PlanningInstance,
        prefix: &[Step],
        n: usize,
        method: &DecodingMethod,
    ) -> Result<Vec<StepCandidate>, ScorerError>;
}

pub trait Likelihood: Send + Sync {
    /// Natural-log probability of the generated steps, with their token count.
    fn loglik(&self, instance: &PlanningInstance, steps: &[Step]) -> Result<LogLik, ScorerError>;
}

pub trait Verifier: Send + Sync {
    /// Validity of `candidate` as the next step, in `[0, 1]`.
    fn verify(&self, goal: &Goal, prefix: &[Step], candidate: &Step) -> Result<f64, ScorerError>;
}

pub trait Completion: Send + Sync {
    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<String, ScorerError>;
}

/// Completion backed by a closure; handy for scripted teachers in tests.
pub struct FnCompletion<F>(pub F);

impl<F> Completion for FnCompletion<F>
where
    F: Fn(&str, &SamplingParams) -> Result<String, ScorerError> + Send + Sync,
{
    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<String, ScorerError> {
        (self.0)(prompt, params)
    }
}

/// The model interfaces the engine needs, behind shared handles.
#[derive(Clone)]
pub struct ScorerBundle {
    pub proposer: Arc<dyn Proposer>,
    pub likelihood: Arc<dyn Likelihood>,
    pub verifier: Arc<dyn Verifier>,
    pub completion: Option<Arc<dyn Completion>>,
}

impl ScorerBundle {
    pub fn new(
        proposer: Arc<dyn Proposer>,
        likelihood: Arc<dyn Likelihood>,
        verifier: Arc<dyn Verifier>,
    ) -> Self {
        Self {
            proposer,
            likelihood,
            verifier,
            completion: None,
        }
    }

    /// One object serving all three scoring roles.
    pub fn from_shared<T>(scorer: Arc<T>) -> Self
    where
        T: Proposer + Likelihood + Verifier + 'static,
    {
        Self::new(scorer.clone(), scorer.clone(), scorer)
    }

    pub fn with_completion(mut self, completion: Arc<dyn Completion>) -> Self {
        self.completion = Some(completion);
        self
    }

    pub fn with_verifier(mut self, verifier: Arc<dyn Verifier>) -> Self {
        self.verifier = verifier;
        self
    }
}

impl fmt::Debug for ScorerBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScorerBundle")
            .field("completion", &self.completion.is_some())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_wire_shape() {
        let m = DecodingMethod::Nucleus { top_p: 0.9, temperature: 1.0, seed: 3 };
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"kind":"nucleus","top_p":0.9,"temperature":1.0,"seed":3}"#
        );
        let b: DecodingMethod = serde_json::from_str(r#"{"kind":"beam","beam_width":5,"seed":1}"#).unwrap();
        assert_eq!(b, DecodingMethod::Beam { beam_width: 5, seed: 1 });
    }

    #[test]
    fn method_validation() {
        assert!(DecodingMethod::Nucleus { top_p: 0.0, temperature: 1.0, seed: 0 }.validate().is_err());
        assert!(DecodingMethod::Nucleus { top_p: 1.0, temperature: 1.0, seed: 0 }.validate().is_ok());
        assert!(DecodingMethod::Nucleus { top_p: 0.5, temperature: 0.0, seed: 0 }.validate().is_err());
        assert!(DecodingMethod::Beam { beam_width: 0, seed: 0 }.validate().is_err());
    }

    #[test]
    fn sampling_defaults() {
        let p = SamplingParams::default();
        assert_eq!((p.top_p, p.temperature), (0.98, 0.9));
    }
}
