//! Critic-threshold filtering of generated tuples, precision/recall
//! threshold sweeps, and aggregation of annotator ratings into validity
//! labels.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TupleKind {
    Plan,
    Condition,
    Counterfactual,
}

impl std::str::FromStr for TupleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plan" => Ok(TupleKind::Plan),
            "condition" => Ok(TupleKind::Condition),
            "counterfactual" => Ok(TupleKind::Counterfactual),
            _ => Err(format!("unknown tuple kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accepted,
    Rejected,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationRecord {
    pub tuple_kind: TupleKind,
    /// The (goal, plan[, condition[, revised plan]]) tuple, kept opaque.
    pub payload: Value,
    #[serde(default)]
    pub critic_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    /// Gold acceptability, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdPolicy {
    pub plan: f64,
    pub condition: f64,
    pub counterfactual: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            plan: 0.65,
            condition: 0.76,
            counterfactual: 0.82,
        }
    }
}

impl ThresholdPolicy {
    pub fn threshold(&self, kind: TupleKind) -> f64 {
        match kind {
            TupleKind::Plan => self.plan,
            TupleKind::Condition => self.condition,
            TupleKind::Counterfactual => self.counterfactual,
        }
    }

    pub fn validate(&self) -> Result<(), CurationError> {
        for (name, t) in [("plan", self.plan), ("condition", self.condition), ("counterfactual", self.counterfactual)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(CurationError::Threshold(name, t));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurationError {
    #[error("{0} threshold {1} is outside [0, 1]")]
    Threshold(&'static str, f64),
    #[error("no records to evaluate")]
    Empty,
    #[error("record {0} has no gold label")]
    MissingLabel(usize),
    #[error("record {0} has no usable critic score")]
    MissingScore(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partition {
    pub accepted: Vec<CurationRecord>,
    pub rejected: Vec<CurationRecord>,
    pub pending: Vec<CurationRecord>,
}

/// Decided copies of `records`, in input order.
pub fn decide_all(records: &[CurationRecord], policy: &ThresholdPolicy) -> Vec<CurationRecord> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            match r.critic_score {
                Some(s) if s.is_finite() && (0.0..=1.0).contains(&s) => {
                    r.decision = Some(if s >= policy.threshold(r.tuple_kind) {
                        Decision::Accepted
                    } else {
                        Decision::Rejected
                    });
                    r.diagnostic = None;
                }
                Some(s) => {
                    r.decision = Some(Decision::Pending);
                    r.diagnostic = Some(format!("critic score {s} outside [0, 1]"));
                }
                None => {
                    r.decision = Some(Decision::Pending);
                    r.diagnostic = Some("missing critic score".into());
                }
            }
            r
        })
        .collect()
}

/// Accepts records scoring at or above their kind's threshold.
pub fn curate(records: &[CurationRecord], policy: &ThresholdPolicy) -> Partition {
    let mut out = Partition::default();
    for r in decide_all(records, policy) {
        match r.decision {
            Some(Decision::Accepted) => out.accepted.push(r),
            Some(Decision::Rejected) => out.rejected.push(r),
            _ => out.pending.push(r),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub tau: f64,
    /// `None` when nothing is accepted.
    pub precision: Option<f64>,
    /// `None` when there are no positives at all.
    pub recall: Option<f64>,
    pub accepted: usize,
}

/// Precision and recall of the `score >= tau` rule at each threshold.
pub fn pr_curve(scored: &[(f64, bool)], thresholds: &[f64]) -> Result<Vec<PrPoint>, CurationError> {
    if scored.is_empty() {
        return Err(CurationError::Empty);
    }
    let positives = scored.iter().filter(|(_, l)| *l).count();
    Ok(thresholds
        .iter()
        .map(|&tau| {
            let mut tp = 0usize;
            let mut accepted = 0usize;
            for &(s, l) in scored {
                if s >= tau {
                    accepted += 1;
                    tp += usize::from(l);
                }
            }
            PrPoint {
                tau,
                precision: (accepted > 0).then(|| tp as f64 / accepted as f64),
                recall: (positives > 0).then(|| tp as f64 / positives as f64),
                accepted,
            }
        })
        .collect())
}

/// Distinct scores in ascending order; sweeping these covers every
/// operating point of the threshold family.
pub fn distinct_thresholds(scored: &[(f64, bool)]) -> Vec<f64> {
    let mut t: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Score/label pairs of labelled records.
pub fn scored_labels(records: &[CurationRecord]) -> Result<Vec<(f64, bool)>, CurationError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s = r.critic_score.filter(|s| s.is_finite()).ok_or(CurationError::MissingScore(i))?;
            let l = r.label.ok_or(CurationError::MissingLabel(i))?;
            Ok((s, l))
        })
        .collect()
}

/// Tab-separated `tau precision recall accepted`, `NaN` for undefined values.
pub fn pr_report(points: &[PrPoint]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| format!("{x:.6}"));
    let mut out = String::from("tau\tprecision\trecall\taccepted\n");
    for p in points {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", p.tau, fmt(p.precision), fmt(p.recall), p.accepted));
    }
    out
}

/// Five-point answers used in the plan annotation task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Likert {
    Definitely,
    Mostly,
    Somewhat,
    NotReally,
    NotAtAll,
}

impl Likert {
    /// The first three answers count as 1.
    pub fn binarize(self) -> u8 {
        match self {
            Likert::Definitely | Likert::Mostly | Likert::Somewhat => 1,
            Likert::NotReally | Likert::NotAtAll => 0,
        }
    }
}

/// Three annotators' binary ratings per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBundle {
    pub achievability: [u8; 3],
    pub topicality: [u8; 3],
    pub ordering: [u8; 3],
    pub completeness: [u8; 3],
}

impl AnnotationBundle {
    pub fn from_likert(
        achievability: [Likert; 3],
        topicality: [Likert; 3],
        ordering: [Likert; 3],
        completeness: [Likert; 3],
    ) -> Self {
        let b = |r: [Likert; 3]| r.map(Likert::binarize);
        Self {
            achievability: b(achievability),
            topicality: b(topicality),
            ordering: b(ordering),
            completeness: b(completeness),
        }
    }
}

fn mean(r: [u8; 3]) -> f64 {
    r.iter().map(|&x| f64::from(x.min(1))).sum::<f64>() / 3.0
}

/// Valid when achievability, topicality and ordering each average above
/// 0.25 and completeness averages at least 0.65.
pub fn aggregate_plan_validity(b: &AnnotationBundle) -> bool {
    mean(b.achievability) > 0.25 && mean(b.topicality) > 0.25 && mean(b.ordering) > 0.25 && mean(b.completeness) >= 0.65
}

/// Critic fine-tuning defaults for the model service. Nothing in this
/// crate trains a critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticHyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Early stopping watches validation loss.
    pub early_stopping: bool,
}

pub fn critic_defaults(kind: TupleKind) -> CriticHyperparams {
    let (batch_size, learning_rate) = match kind {
        TupleKind::Plan => (16, 1e-6),
        TupleKind::Condition => (32, 1e-5),
        TupleKind::Counterfactual => (32, 1e-6),
    };
    CriticHyperparams {
        batch_size,
        learning_rate,
        early_stopping: true,
    }
}
