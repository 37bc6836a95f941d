//! JSON bodies of the scorer wire protocol.
//!
//! | route           | request                                                       | response |
//! |-----------------|---------------------------------------------------------------|----------|
//! | `/v1/propose`   | `{task, goal, condition?, initial_plan?, prefix_steps, n, method}` | `{candidates: [{text, logprob_sum, token_count, terminal}]}` |
//! | `/v1/loglik`    | `{task, goal, condition?, initial_plan?, steps}`              | `{logprob_sum, token_count}` |
//! | `/v1/verify`    | `{goal, prefix_steps, candidate_step}`                        | `{validity}` |
//! | `/v1/complete`  | `{prompt, max_tokens, top_p, temperature, seed}`              | `{text}` |
//!
//! Log-probabilities are natural logs. Errors come back as a non-2xx status
//! with `{error, field?}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DecodingMethod, LogLik, SamplingParams, ScorerError, StepCandidate};
use crate::plan::{steps_from_texts, Condition, Goal, Plan, PlanningInstance, Step, TaskKind};

pub const PROPOSE: &str = "/v1/propose";
pub const LOGLIK: &str = "/v1/loglik";
pub const VERIFY: &str = "/v1/verify";
pub const COMPLETE: &str = "/v1/complete";

/// Instance fields shared by propose and loglik requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFields {
    pub task: TaskKind,
    pub goal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_plan: Option<Vec<String>>,
}

impl TaskFields {
    pub fn from_instance(instance: &PlanningInstance) -> Self {
        Self {
            task: instance.kind(),
            goal: instance.goal().text().to_string(),
            condition: instance.condition().map(|c| c.text().to_string()),
            initial_plan: instance.initial_plan().map(Plan::texts),
        }
    }

    pub fn to_instance(&self) -> Result<PlanningInstance, ScorerError> {
        let bad = |e: crate::plan::PlanError| ScorerError::InvalidRequest(e.to_string());
        let goal = Goal::new("remote", &self.goal).map_err(bad)?;
        let condition = self
            .condition
            .as_deref()
            .map(|c| Condition::new(c, None))
            .transpose()
            .map_err(bad)?;
        let initial = self
            .initial_plan
            .as_deref()
            .map(Plan::from_texts)
            .transpose()
            .map_err(bad)?;
        PlanningInstance::new("remote", self.task, goal, condition, initial).map_err(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeRequest {
    #[serde(flatten)]
    pub task: TaskFields,
    pub prefix_steps: Vec<String>,
    pub n: usize,
    pub method: DecodingMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposeResponse {
    pub candidates: Vec<StepCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoglikRequest {
    #[serde(flatten)]
    pub task: TaskFields,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub goal: String,
    pub prefix_steps: Vec<String>,
    pub candidate_step: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub validity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub top_p: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl CompleteRequest {
    pub fn new(prompt: &str, params: &SamplingParams) -> Self {
        Self {
            prompt: prompt.to_string(),
            max_tokens: params.max_tokens,
            top_p: params.top_p,
            temperature: params.temperature,
            seed: params.seed,
        }
    }

    pub fn params(&self) -> SamplingParams {
        SamplingParams {
            top_p: self.top_p,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

pub(crate) fn to_steps(texts: &[String], field: &str) -> Result<Vec<Step>, ScorerError> {
    steps_from_texts(texts).map_err(|e| ScorerError::InvalidRequest(format!("{field}: {e}")))
}

// Response validation. Each check names the offending field.

fn field<'a>(v: &'a Value, name: &str, path: &str) -> Result<&'a Value, ScorerError> {
    v.get(name)
        .ok_or_else(|| ScorerError::protocol(path, "missing field"))
}

fn finite_f64(v: &Value, path: &str) -> Result<f64, ScorerError> {
    let x = v
        .as_f64()
        .ok_or_else(|| ScorerError::protocol(path, format!("expected a number, got {v}")))?;
    if !x.is_finite() {
        return Err(ScorerError::protocol(path, "not finite"));
    }
    Ok(x)
}

fn count(v: &Value, path: &str) -> Result<u32, ScorerError> {
    v.as_u64()
        .and_then(|x| u32::try_from(x).ok())
        .ok_or_else(|| ScorerError::protocol(path, format!("expected a non-negative integer, got {v}")))
}

pub fn parse_propose_response(body: &Value, n: usize) -> Result<Vec<StepCandidate>, ScorerError> {
    let list = field(body, "candidates", "candidates")?
        .as_array()
        .ok_or_else(|| ScorerError::protocol("candidates", "expected an array"))?;
    if list.len() > n {
        return Err(ScorerError::protocol(
            "candidates",
            format!("{} candidates returned for n = {n}", list.len()),
        ));
    }
    list.iter()
        .enumerate()
        .map(|(i, c)| {
            let at = |f: &str| format!("candidates[{i}].{f}");
            let text = field(c, "text", &at("text"))?
                .as_str()
                .ok_or_else(|| ScorerError::protocol(at("text"), "expected a string"))?;
            let logprob_sum = finite_f64(field(c, "logprob_sum", &at("logprob_sum"))?, &at("logprob_sum"))?;
            if logprob_sum > 1e-9 {
                return Err(ScorerError::protocol(at("logprob_sum"), format!("{logprob_sum} > 0")));
            }
            let token_count = count(field(c, "token_count", &at("token_count"))?, &at("token_count"))?;
            if token_count == 0 {
                return Err(ScorerError::protocol(at("token_count"), "must be >= 1"));
            }
            let terminal = match c.get("terminal") {
                None => false,
                Some(t) => t
                    .as_bool()
                    .ok_or_else(|| ScorerError::protocol(at("terminal"), "expected a boolean"))?,
            };
            if !terminal && (text.trim().is_empty() || text.contains(['\n', '\r'])) {
                return Err(ScorerError::protocol(at("text"), "step text must be non-empty and single-line"));
            }
            Ok(StepCandidate {
                text: text.to_string(),
                logprob_sum,
                token_count,
                terminal,
            })
        })
        .collect()
}

pub fn parse_loglik_response(body: &Value) -> Result<LogLik, ScorerError> {
    let logprob_sum = finite_f64(field(body, "logprob_sum", "logprob_sum")?, "logprob_sum")?;
    let token_count = count(field(body, "token_count", "token_count")?, "token_count")?;
    Ok(LogLik {
        logprob_sum,
        token_count,
    })
}

pub fn parse_verify_response(body: &Value) -> Result<f64, ScorerError> {
    let validity = finite_f64(field(body, "validity", "validity")?, "validity")?;
    if !(0.0..=1.0).contains(&validity) {
        return Err(ScorerError::protocol("validity", format!("{validity} outside [0, 1]")));
    }
    Ok(validity)
}

pub fn parse_complete_response(body: &Value) -> Result<String, ScorerError> {
    field(body, "text", "text")?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ScorerError::protocol("text", "expected a string"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn verify_passthrough_and_range() {
        assert_eq!(parse_verify_response(&json!({"validity": 0.93})).unwrap(), 0.93);
        let err = parse_verify_response(&json!({"validity": 1.2})).unwrap_err();
        assert!(matches!(err, ScorerError::Protocol { ref field, .. } if field == "validity"));
        assert!(parse_verify_response(&json!({"valid": 0.5})).is_err());
    }

    #[test]
    fn propose_cardinality() {
        let c = json!({"text": "a", "logprob_sum": -0.1, "token_count": 1, "terminal": false});
        let body = json!({"candidates": [c.clone(), c.clone(), c]});
        assert_eq!(parse_propose_response(&body, 3).unwrap().len(), 3);
        let err = parse_propose_response(&body, 2).unwrap_err();
        assert!(matches!(err, ScorerError::Protocol { ref field, .. } if field == "candidates"));
    }

    #[test]
    fn propose_field_errors_are_located() {
        let body = json!({"candidates": [
            {"text": "a", "logprob_sum": -0.1, "token_count": 1},
            {"text": "b", "logprob_sum": -0.1, "token_count": 0}
        ]});
        let err = parse_propose_response(&body, 5).unwrap_err();
        assert_eq!(
            err,
            ScorerError::protocol("candidates[1].token_count", "must be >= 1")
        );
    }

    #[test]
    fn request_shape() {
        let req = ProposeRequest {
            task: TaskFields {
                task: TaskKind::Planning,
                goal: "g".into(),
                condition: None,
                initial_plan: None,
            },
            prefix_steps: vec!["a".into()],
            n: 2,
            method: DecodingMethod::Greedy { seed: 0 },
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"task":"planning","goal":"g","prefix_steps":["a"],"n":2,"method":{"kind":"greedy","seed":0}}"#
        );
    }
}
