//! HTTP client for the scorer wire protocol.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::wire::{self, CompleteRequest, LoglikRequest, ProposeRequest, TaskFields, VerifyRequest};
use super::{
    Completion, DecodingMethod, Likelihood, LogLik, Proposer, SamplingParams, ScorerBundle,
    ScorerError, StepCandidate, Verifier,
};
use crate::plan::{step_texts, Goal, PlanningInstance, Step};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
            multiplier: 2,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * self.multiplier.saturating_pow(attempt)
    }
}

/// Connection-pooled client; safe to share between threads.
#[derive(Clone)]
pub struct RemoteScorer {
    base: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl RemoteScorer {
    pub fn new(endpoint: &str, timeout: Duration, retry: RetryPolicy) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(timeout)
            .max_idle_connections_per_host(16)
            .build();
        Self {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
            retry,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    fn post<T: Serialize>(&self, route: &str, body: &T) -> Result<Value, ScorerError> {
        let url = format!("{}{}", self.base, route);
        let payload = serde_json::to_value(body).expect("request serialises");
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry.backoff(attempt - 1));
            }
            match self.agent.post(&url).send_json(payload.clone()) {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| ScorerError::protocol("body", e.to_string()))?;
                    return serde_json::from_str(&text)
                        .map_err(|e| ScorerError::protocol("body", format!("invalid JSON: {e}")));
                }
                Err(ureq::Error::Status(code, resp)) if code >= 500 => {
                    last = format!("HTTP {code}: {}", resp.into_string().unwrap_or_default());
                    log::warn!("{url}: {last} (attempt {})", attempt + 1);
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    let parsed: Option<wire::ErrorBody> = serde_json::from_str(&text).ok();
                    let (field, message) = match parsed {
                        Some(b) => (b.field.unwrap_or_else(|| "request".into()), b.error),
                        None => ("request".to_string(), text),
                    };
                    return Err(ScorerError::protocol(field, format!("HTTP {code}: {message}")));
                }
                Err(ureq::Error::Transport(t)) => {
                    last = t.to_string();
                    log::warn!("{url}: {last} (attempt {})", attempt + 1);
                }
            }
        }
        Err(ScorerError::Unavailable {
            endpoint: self.base.clone(),
            attempts,
            message: last,
        })
    }
}

impl Proposer for RemoteScorer {
    fn propose(
        &self,
        instance: &PlanningInstance,
        prefix: &[Step],
        n: usize,
        method: &DecodingMethod,
    ) -> Result<Vec<StepCandidate>, ScorerError> {
        let req = ProposeRequest {
            task: TaskFields::from_instance(instance),
            prefix_steps: step_texts(prefix),
            n,
            method: *method,
        };
        let body = self.post(wire::PROPOSE, &req)?;
        wire::parse_propose_response(&body, n)
    }
}

impl Likelihood for RemoteScorer {
    fn loglik(&self, instance: &PlanningInstance, steps: &[Step]) -> Result<LogLik, ScorerError> {
        let req = LoglikRequest {
            task: TaskFields::from_instance(instance),
            steps: step_texts(steps),
        };
        let body = self.post(wire::LOGLIK, &req)?;
        wire::parse_loglik_response(&body)
    }
}

impl Verifier for RemoteScorer {
    fn verify(&self, goal: &Goal, prefix: &[Step], candidate: &Step) -> Result<f64, ScorerError> {
        let req = VerifyRequest {
            goal: goal.text().to_string(),
            prefix_steps: step_texts(prefix),
            candidate_step: candidate.text().to_string(),
        };
        let body = self.post(wire::VERIFY, &req)?;
        wire::parse_verify_response(&body)
    }
}

impl Completion for RemoteScorer {
    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<String, ScorerError> {
        let body = self.post(wire::COMPLETE, &CompleteRequest::new(prompt, params))?;
        wire::parse_complete_response(&body)
    }
}

/// A bundle whose every call goes over the wire protocol.
pub fn remote_bundle(endpoint: &str, timeout: Duration, retry: RetryPolicy) -> ScorerBundle {
    let scorer = Arc::new(RemoteScorer::new(endpoint, timeout, retry));
    ScorerBundle::from_shared(scorer.clone()).with_completion(scorer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_backoff_doubles_from_250ms() {
        let r = RetryPolicy::default();
        assert_eq!(r.attempts, 3);
        assert_eq!(r.backoff(0), Duration::from_millis(250));
        assert_eq!(r.backoff(1), Duration::from_millis(500));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        // port 9 on loopback is closed in the sandbox; connection is refused quickly
        let retry = RetryPolicy {
            attempts: 2,
            initial_backoff: Duration::from_millis(1),
            multiplier: 2,
        };
        let scorer = RemoteScorer::new("http://127.0.0.1:9", Duration::from_millis(500), retry);
        let goal = Goal::new("g", "x").unwrap();
        let cand = Step::new(1, "a").unwrap();
        match scorer.verify(&goal, &[], &cand) {
            Err(ScorerError::Unavailable { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected unavailable, got {other:?}"),
        }
    }
}
