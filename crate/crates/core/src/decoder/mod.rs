//! Verifier-guided step-wise beam search.
//!
//! Each iteration expands every partial plan in a beam of size K with up to
//! N proposed next steps, scores every extension with
//!
//! ```text
//! v = alpha * (loglik_sum / token_count) + (1 - alpha) * ln(clamp(validity, eps, 1))
//! ```
//!
//! where `validity` is the verifier's score for the newest step, and keeps
//! the K best. Extensions that end the plan move to a finished pool; the
//! search stops once K plans have finished, the beam empties, or
//! `max_steps` iterations have run. The best finished plan wins.
//!
//! Ending a plan is an explicit candidate from the proposer (see
//! [`crate::scorer::END_OF_PLAN`]); its log-probability and token count are
//! added to the plan's likelihood, like an end-of-sequence token. A step
//! that merely restates the goal also ends the plan.

pub mod trace;

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{Plan, PlanningInstance, Step};
use crate::scorer::{DecodingMethod, ScorerBundle, ScorerError, StepCandidate};
use crate::seed::SeedMixer;

pub use trace::{DecodeTrace, IterationRecord, MergeEvent, PoolEntry, ReplayMismatch};

/// How verifier scores enter the value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifierTerm {
    /// Only the newest step's validity.
    #[default]
    Current,
    /// Sum of log validities over all steps so far.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodShare {
    #[serde(flatten)]
    pub method: DecodingMethod,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub alpha: f64,
    pub beam_k: usize,
    pub candidates_n: usize,
    pub method_mix: Vec<MethodShare>,
    pub max_steps: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub verifier_term: VerifierTerm,
    pub goal_restatement_ends: bool,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            beam_k: 5,
            candidates_n: 10,
            method_mix: vec![
                MethodShare {
                    method: DecodingMethod::Beam { beam_width: 5, seed: 0 },
                    count: 5,
                },
                MethodShare {
                    method: DecodingMethod::Nucleus {
                        top_p: 0.9,
                        temperature: 1.0,
                        seed: 0,
                    },
                    count: 5,
                },
            ],
            max_steps: 16,
            epsilon: 1e-6,
            seed: 0,
            verifier_term: VerifierTerm::Current,
            goal_restatement_ends: true,
        }
    }
}

impl DecodeParams {
    /// Greedy-only mix proposing `n` candidates.
    pub fn greedy(alpha: f64, beam_k: usize, n: usize) -> Self {
        Self {
            alpha,
            beam_k,
            candidates_n: n,
            method_mix: vec![MethodShare {
                method: DecodingMethod::Greedy { seed: 0 },
                count: n,
            }],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: String| Err(DecodeError::InvalidParams(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if self.beam_k == 0 {
            return bad("beam_k must be positive".into());
        }
        if self.candidates_n == 0 {
            return bad("candidates_n must be positive".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.01) {
            return bad(format!("epsilon must be in (0, 0.01], got {}", self.epsilon));
        }
        let total: usize = self.method_mix.iter().map(|s| s.count).sum();
        if total != self.candidates_n {
            return bad(format!(
                "method_mix counts sum to {total}, expected candidates_n = {}",
                self.candidates_n
            ));
        }
        for share in &self.method_mix {
            share.method.validate().map_err(DecodeError::InvalidParams)?;
        }
        Ok(())
    }

    fn uses_verifier(&self) -> bool {
        self.alpha < 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub steps: Vec<Step>,
    pub loglik_sum: f64,
    pub token_count: u32,
    /// One entry per step; `None` when the verifier was not consulted.
    pub verifier_log_scores: Vec<Option<f64>>,
    pub value: f64,
    pub complete: bool,
    pub lineage: Vec<usize>,
}

impl Hypothesis {
    fn root() -> Self {
        Self {
            steps: Vec::new(),
            loglik_sum: 0.0,
            token_count: 0,
            verifier_log_scores: Vec::new(),
            value: 0.0,
            complete: false,
            lineage: Vec::new(),
        }
    }

    pub fn step_texts(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.text().to_string()).collect()
    }

    pub fn normalized_loglik(&self) -> f64 {
        self.loglik_sum / f64::from(self.token_count.max(1))
    }
}

/// `ln(clamp(validity, eps, 1))`.
pub fn log_validity(validity: f64, epsilon: f64) -> f64 {
    validity.clamp(epsilon, 1.0).ln()
}

/// The value of a hypothesis with at least one step.
pub fn value(hyp: &Hypothesis, alpha: f64, term: VerifierTerm) -> f64 {
    let lm = alpha * hyp.normalized_loglik();
    if alpha >= 1.0 {
        return lm;
    }
    let verifier = match term {
        VerifierTerm::Current => hyp.verifier_log_scores.last().copied().flatten().unwrap_or(0.0),
        VerifierTerm::Cumulative => hyp.verifier_log_scores.iter().flatten().sum(),
    };
    lm + (1.0 - alpha) * verifier
}

/// Ranking used everywhere: higher value first, then shorter lineage,
/// then lexicographically smaller lineage.
pub fn rank_order(va: f64, la: &[usize], vb: f64, lb: &[usize]) -> Ordering {
    vb.total_cmp(&va)
        .then_with(|| la.len().cmp(&lb.len()))
        .then_with(|| la.cmp(lb))
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    rank_order(a.value, &a.lineage, b.value, &b.lineage)
}

/// The `k` best hypotheses in rank order.
pub fn select_top_k(mut pool: Vec<Hypothesis>, k: usize) -> Vec<Hypothesis> {
    pool.sort_by(rank);
    pool.truncate(k);
    pool
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("invalid decode parameters: {0}")]
    InvalidParams(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("scorer failed while extending {hypothesis:?}: {source}")]
    Scorer {
        source: ScorerError,
        hypothesis: Vec<String>,
    },
    #[error("proposer returned an unusable step {text:?} after {hypothesis:?}: {reason}")]
    InvalidCandidate {
        text: String,
        reason: String,
        hypothesis: Vec<String>,
    },
}

/// A failed decode with the iterations completed before the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct DecodeFailure {
    pub error: DecodeError,
    pub trace: DecodeTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Finished,
    BeamExhausted,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    pub plan: Plan,
    pub best: Hypothesis,
    pub stop: StopReason,
    pub trace: DecodeTrace,
}

/// The expansion of one beam, before selection.
#[derive(Debug, Clone, Default)]
pub struct CandidatePool {
    pub hypotheses: Vec<Hypothesis>,
    pub merged: Vec<MergeEvent>,
    pub empty_ends_skipped: usize,
    pub capped: usize,
}

fn normalize_line(text: &str) -> String {
    let t = text.trim();
    let t = t
        .strip_prefix("Goal:")
        .or_else(|| t.strip_prefix("goal:"))
        .unwrap_or(t);
    t.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!'])
        .to_lowercase()
}

/// Whether a step is just the goal said again.
pub fn restates_goal(step: &str, goal: &str) -> bool {
    let s = normalize_line(step);
    !s.is_empty() && s == normalize_line(goal)
}

enum Job<'a> {
    Extend { parent: &'a Hypothesis, candidate: StepCandidate, index: usize },
    End { parent: &'a Hypothesis, candidate: StepCandidate, index: usize },
}

fn scorer_err(source: ScorerError, parent: &Hypothesis) -> DecodeError {
    DecodeError::Scorer {
        source,
        hypothesis: parent.step_texts(),
    }
}

fn method_seed(params: &DecodeParams, share_index: usize, method: &DecodingMethod) -> u64 {
    SeedMixer::new(params.seed)
        .u64(share_index as u64)
        .u64(method.seed())
        .finish()
}

/// Proposes, merges and scores all one-step extensions of `beam`.
pub fn expand(
    beam: &[Hypothesis],
    instance: &PlanningInstance,
    bundle: &ScorerBundle,
    params: &DecodeParams,
) -> Result<CandidatePool, DecodeError> {
    let mut jobs = Vec::new();
    let mut seen: HashSet<(Vec<String>, bool, String)> = HashSet::new();
    let mut pool = CandidatePool::default();

    for parent in beam {
        debug_assert!(!parent.complete, "complete hypotheses are never expanded");
        let prefix_texts = parent.step_texts();
        let mut index = 0;
        for (si, share) in params.method_mix.iter().enumerate() {
            if share.count == 0 {
                continue;
            }
            let method = share.method.with_seed(method_seed(params, si, &share.method));
            let proposed = bundle
                .proposer
                .propose(instance, &parent.steps, share.count, &method)
                .map_err(|e| scorer_err(e, parent))?;
            if proposed.len() > share.count {
                return Err(scorer_err(
                    ScorerError::protocol("candidates", format!("{} returned for n = {}", proposed.len(), share.count)),
                    parent,
                ));
            }
            for candidate in proposed {
                let i = index;
                index += 1;
                let key = (prefix_texts.clone(), candidate.terminal, candidate.text.clone());
                if !seen.insert(key) {
                    pool.merged.push(MergeEvent {
                        parent: parent.lineage.clone(),
                        candidate_index: i,
                        text: candidate.text,
                        terminal: candidate.terminal,
                    });
                    continue;
                }
                if candidate.terminal {
                    if parent.steps.is_empty() {
                        pool.empty_ends_skipped += 1;
                    } else {
                        jobs.push(Job::End { parent, candidate, index: i });
                    }
                } else if parent.steps.len() >= params.max_steps {
                    pool.capped += 1;
                } else {
                    jobs.push(Job::Extend { parent, candidate, index: i });
                }
            }
        }
    }

    let goal = instance.goal();
    let scored: Vec<Result<Hypothesis, DecodeError>> = jobs
        .into_par_iter()
        .map(|job| match job {
            Job::End { parent, candidate, index } => {
                let mut h = parent.clone();
                h.loglik_sum += candidate.logprob_sum;
                h.token_count += candidate.token_count;
                h.complete = true;
                h.lineage.push(index);
                h.value = value(&h, params.alpha, params.verifier_term);
                Ok(h)
            }
            Job::Extend { parent, candidate, index } => {
                let step = Step::new(parent.steps.len() + 1, &candidate.text).map_err(|e| {
                    DecodeError::InvalidCandidate {
                        text: candidate.text.clone(),
                        reason: e.to_string(),
                        hypothesis: parent.step_texts(),
                    }
                })?;
                let mut steps = parent.steps.clone();
                steps.push(step.clone());
                let ll = bundle
                    .likelihood
                    .loglik(instance, &steps)
                    .map_err(|e| scorer_err(e, parent))?;
                let log_score = if params.uses_verifier() {
                    let v = bundle
                        .verifier
                        .verify(goal, &parent.steps, &step)
                        .map_err(|e| scorer_err(e, parent))?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(scorer_err(
                            ScorerError::protocol("validity", format!("{v} outside [0, 1]")),
                            parent,
                        ));
                    }
                    Some(log_validity(v, params.epsilon))
                } else {
                    None
                };
                let mut scores = parent.verifier_log_scores.clone();
                scores.push(log_score);
                let mut lineage = parent.lineage.clone();
                lineage.push(index);
                let complete = params.goal_restatement_ends && restates_goal(step.text(), goal.text());
                let mut h = Hypothesis {
                    steps,
                    loglik_sum: ll.logprob_sum,
                    token_count: ll.token_count,
                    verifier_log_scores: scores,
                    value: 0.0,
                    complete,
                    lineage,
                };
                h.value = value(&h, params.alpha, params.verifier_term);
                Ok(h)
            }
        })
        .collect();
    pool.hypotheses = scored.into_iter().collect::<Result<_, _>>()?;
    Ok(pool)
}

/// Decodes one instance.
pub fn decode(
    instance: &PlanningInstance,
    bundle: &ScorerBundle,
    params: &DecodeParams,
) -> Result<DecodeOutput, DecodeFailure> {
    let mut trace = DecodeTrace::default();
    if let Err(error) = params.validate() {
        return Err(DecodeFailure { error, trace });
    }
    let mut beam = vec![Hypothesis::root()];
    let mut finished: Vec<Hypothesis> = Vec::new();
    // last non-empty beam, the fallback when nothing finishes
    let mut frontier: Vec<Hypothesis> = Vec::new();
    let mut stop = StopReason::MaxSteps;

    // one extra round lets plans of exactly max_steps steps end
    for iteration in 1..=params.max_steps + 1 {
        if beam.is_empty() {
            stop = StopReason::BeamExhausted;
            break;
        }
        let pool = match expand(&beam, instance, bundle, params) {
            Ok(p) => p,
            Err(error) => return Err(DecodeFailure { error, trace }),
        };
        let pool_entries: Vec<PoolEntry> = pool.hypotheses.iter().map(PoolEntry::from_hypothesis).collect();
        let selected = select_top_k(pool.hypotheses, params.beam_k);
        let expanded = beam.iter().map(|h| h.lineage.clone()).collect();
        let mut next = Vec::new();
        let mut newly_finished = Vec::new();
        for h in &selected {
            if h.complete {
                newly_finished.push(h.lineage.clone());
                finished.push(h.clone());
            } else {
                next.push(h.clone());
            }
        }
        trace.iterations.push(IterationRecord {
            iteration,
            expanded,
            pool: pool_entries,
            merged: pool.merged,
            empty_ends_skipped: pool.empty_ends_skipped,
            capped: pool.capped,
            selected: selected.iter().map(|h| h.lineage.clone()).collect(),
            finished: newly_finished,
        });
        if !next.is_empty() {
            frontier = next.clone();
        }
        beam = next;
        if finished.len() >= params.beam_k {
            stop = StopReason::Finished;
            break;
        }
    }
    if stop == StopReason::MaxSteps && beam.is_empty() {
        stop = StopReason::BeamExhausted;
    }

    let (best, terminal) = match finished.into_iter().min_by(rank) {
        Some(h) => (h, true),
        None => match frontier.into_iter().min_by(rank) {
            Some(h) => (h, false),
            None => (Hypothesis::root(), false),
        },
    };
    let plan = Plan::new(best.steps.clone(), terminal && !best.steps.is_empty())
        .expect("hypothesis steps are contiguous");
    Ok(DecodeOutput {
        plan,
        best,
        stop,
        trace,
    })
}

/// Decodes many instances on up to `parallelism` threads. Results are in
/// input order and do not depend on `parallelism`.
pub fn decode_batch(
    instances: &[PlanningInstance],
    bundle: &ScorerBundle,
    params: &DecodeParams,
    parallelism: usize,
) -> Vec<Result<DecodeOutput, DecodeFailure>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        instances
            .par_iter()
            .map(|inst| decode(inst, bundle, params))
            .collect()
    })
}
