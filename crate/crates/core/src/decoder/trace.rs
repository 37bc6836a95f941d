//! Per-iteration decode records.

use serde::{Deserialize, Serialize};

use super::{rank_order, Hypothesis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub lineage: Vec<usize>,
    pub steps: Vec<String>,
    pub complete: bool,
    pub loglik_sum: f64,
    pub token_count: u32,
    /// ln of the clamped validity of the newest step, when queried.
    pub verifier_log_score: Option<f64>,
    pub value: f64,
}

impl PoolEntry {
    pub(crate) fn from_hypothesis(h: &Hypothesis) -> Self {
        Self {
            lineage: h.lineage.clone(),
            steps: h.steps.iter().map(|s| s.text().to_string()).collect(),
            complete: h.complete,
            loglik_sum: h.loglik_sum,
            token_count: h.token_count,
            verifier_log_score: h.verifier_log_scores.last().copied().flatten(),
            value: h.value,
        }
    }
}

/// A candidate dropped because the same (prefix, text) was already pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub parent: Vec<usize>,
    pub candidate_index: usize,
    pub text: String,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Lineages of the beam members expanded this iteration.
    pub expanded: Vec<Vec<usize>>,
    pub pool: Vec<PoolEntry>,
    pub merged: Vec<MergeEvent>,
    /// End-of-plan proposals ignored because the plan was still empty.
    pub empty_ends_skipped: usize,
    /// Step proposals dropped because the plan already had `max_steps` steps.
    pub capped: usize,
    pub selected: Vec<Vec<usize>>,
    /// Subset of `selected` that went to the finished pool.
    pub finished: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayMismatch {
    #[error("iteration {iteration}: re-selection gives {expected:?}, trace has {found:?}")]
    Selection {
        iteration: usize,
        expected: Vec<Vec<usize>>,
        found: Vec<Vec<usize>>,
    },
    #[error("iteration {iteration}: expanded {found:?} but the previous beam was {expected:?}")]
    Beam {
        iteration: usize,
        expected: Vec<Vec<usize>>,
        found: Vec<Vec<usize>>,
    },
    #[error("iteration {iteration}: complete hypothesis {lineage:?} was expanded")]
    ExpandedComplete { iteration: usize, lineage: Vec<usize> },
}

impl DecodeTrace {
    /// Re-runs selection on every recorded pool and checks the recorded
    /// beams and selections follow from it.
    pub fn replay(&self, beam_k: usize) -> Result<(), ReplayMismatch> {
        let mut beam: Vec<Vec<usize>> = vec![Vec::new()];
        let mut finished: Vec<Vec<usize>> = Vec::new();
        for rec in &self.iterations {
            if rec.expanded != beam {
                return Err(ReplayMismatch::Beam {
                    iteration: rec.iteration,
                    expected: beam,
                    found: rec.expanded.clone(),
                });
            }
            if let Some(l) = rec.expanded.iter().find(|l| finished.contains(l)) {
                return Err(ReplayMismatch::ExpandedComplete {
                    iteration: rec.iteration,
                    lineage: l.clone(),
                });
            }
            let mut order: Vec<&PoolEntry> = rec.pool.iter().collect();
            order.sort_by(|a, b| rank_order(a.value, &a.lineage, b.value, &b.lineage));
            let expected: Vec<Vec<usize>> = order.iter().take(beam_k).map(|e| e.lineage.clone()).collect();
            if expected != rec.selected {
                return Err(ReplayMismatch::Selection {
                    iteration: rec.iteration,
                    expected,
                    found: rec.selected.clone(),
                });
            }
            beam = order
                .iter()
                .take(beam_k)
                .filter(|e| !e.complete)
                .map(|e| e.lineage.clone())
                .collect();
            finished.extend(order.iter().take(beam_k).filter(|e| e.complete).map(|e| e.lineage.clone()));
        }
        Ok(())
    }

    /// One JSON line per iteration, each tagged with `instance_id`.
    pub fn to_jsonl(&self, instance_id: &str) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            instance_id: &'a str,
            #[serde(flatten)]
            record: &'a IterationRecord,
        }
        let mut out = String::new();
        for record in &self.iterations {
            out.push_str(&serde_json::to_string(&Line { instance_id, record }).expect("trace serialises"));
            out.push('\n');
        }
        out
    }
}
