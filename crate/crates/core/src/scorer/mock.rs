//! A finite tree of steps standing in for a language model.
//!
//! Each node carries a step text, its probability given the parent, and the
//! verifier validity of taking that step. Whatever probability mass a
//! node's children leave over is the probability of ending the plan there.
//! One step counts as one token.
//!
//! Fixture format (JSON, `format = "mock-world/1"`):
//!
//! ```json
//! {
//!   "format": "mock-world/1",
//!   "goal": "make tea",
//!   "nodes": {
//!     "0":   {"step": "boil water", "prob": 0.6, "validity": 0.9},
//!     "1":   {"step": "buy tea",    "prob": 0.4, "validity": 0.5},
//!     "0/0": {"step": "steep tea",  "prob": 1.0, "validity": 1.0}
//!   },
//!   "completions": [{"contains": "Goal:", "text": "Step 1: ..."}]
//! }
//! ```
//!
//! Keys are `/`-separated child indices from the root; siblings must be
//! numbered contiguously from 0 and have distinct step texts.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Completion, DecodingMethod, Likelihood, LogLik, Proposer, SamplingParams, ScorerError,
    StepCandidate, Verifier,
};
use crate::plan::{Goal, PlanningInstance, Step};
use crate::seed::SeedMixer;

pub const FIXTURE_FORMAT: &str = "mock-world/1";

/// Residual mass below this is treated as zero.
const MASS_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read fixture {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed fixture: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported fixture format {0:?}")]
    Format(String),
    #[error("bad node path {0:?}")]
    BadPath(String),
    #[error("node {path}: {message}")]
    Node { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub step: String,
    pub prob: f64,
    pub validity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCompletion {
    pub contains: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureFile {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    goal: Option<String>,
    nodes: BTreeMap<String, NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    completions: Vec<ScriptedCompletion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockNode {
    pub step: String,
    pub prob: f64,
    pub validity: f64,
    pub children: Vec<usize>,
}

/// Node 0 is the root; it carries no step.
#[derive(Debug, Clone, PartialEq)]
pub struct MockWorld {
    goal: Option<String>,
    nodes: Vec<MockNode>,
    completions: Vec<ScriptedCompletion>,
}

pub const ROOT: usize = 0;

fn parse_path(key: &str) -> Result<Vec<usize>, WorldError> {
    if key.is_empty() {
        return Err(WorldError::BadPath(key.to_string()));
    }
    key.split('/')
        .map(|part| part.parse::<usize>().map_err(|_| WorldError::BadPath(key.to_string())))
        .collect()
}

fn path_key(path: &[usize]) -> String {
    path.iter().map(usize::to_string).collect::<Vec<_>>().join("/")
}

impl MockWorld {
    /// Builds a world from `(path, node)` entries in any order.
    pub fn from_entries(
        goal: Option<String>,
        entries: Vec<(Vec<usize>, NodeSpec)>,
    ) -> Result<Self, WorldError> {
        let mut entries = entries;
        entries.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        let mut nodes = vec![MockNode {
            step: String::new(),
            prob: 1.0,
            validity: 1.0,
            children: Vec::new(),
        }];
        let mut ids: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        ids.insert(Vec::new(), ROOT);
        for (path, spec) in entries {
            let key = path_key(&path);
            let node_err = |message: String| WorldError::Node {
                path: key.clone(),
                message,
            };
            let (last, parent_path) = path.split_last().ok_or_else(|| WorldError::BadPath(key.clone()))?;
            let parent = *ids
                .get(parent_path)
                .ok_or_else(|| node_err("parent node missing".into()))?;
            if *last != nodes[parent].children.len() {
                return Err(node_err(format!(
                    "child index {last} out of sequence (expected {})",
                    nodes[parent].children.len()
                )));
            }
            let step = spec.step.trim();
            if step.is_empty() || step.contains(['\n', '\r']) {
                return Err(node_err("step text must be non-empty and single-line".into()));
            }
            if !(spec.prob > 0.0 && spec.prob <= 1.0) {
                return Err(node_err(format!("prob {} outside (0, 1]", spec.prob)));
            }
            if !(0.0..=1.0).contains(&spec.validity) {
                return Err(node_err(format!("validity {} outside [0, 1]", spec.validity)));
            }
            if nodes[parent].children.iter().any(|&c| nodes[c].step == step) {
                return Err(node_err(format!("duplicate sibling step {step:?}")));
            }
            let id = nodes.len();
            nodes.push(MockNode {
                step: step.to_string(),
                prob: spec.prob,
                validity: spec.validity,
                children: Vec::new(),
            });
            nodes[parent].children.push(id);
            ids.insert(path.clone(), id);
        }
        for (path, &id) in &ids {
            let mass: f64 = nodes[id].children.iter().map(|&c| nodes[c].prob).sum();
            if mass > 1.0 + 1e-9 {
                return Err(WorldError::Node {
                    path: path_key(path),
                    message: format!("children probabilities sum to {mass} > 1"),
                });
            }
        }
        Ok(Self {
            goal,
            nodes,
            completions: Vec::new(),
        })
    }

    pub fn with_completions(mut self, completions: Vec<ScriptedCompletion>) -> Self {
        self.completions = completions;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: FixtureFile = serde_json::from_str(text)?;
        if file.format != FIXTURE_FORMAT {
            return Err(WorldError::Format(file.format));
        }
        let entries = file
            .nodes
            .into_iter()
            .map(|(k, v)| parse_path(&k).map(|p| (p, v)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_entries(file.goal, entries)?.with_completions(file.completions))
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut nodes = BTreeMap::new();
        let mut stack = vec![(ROOT, Vec::new())];
        while let Some((id, path)) = stack.pop() {
            for (i, &c) in self.nodes[id].children.iter().enumerate() {
                let mut p: Vec<usize> = path.clone();
                p.push(i);
                let n = &self.nodes[c];
                nodes.insert(
                    path_key(&p),
                    NodeSpec {
                        step: n.step.clone(),
                        prob: n.prob,
                        validity: n.validity,
                    },
                );
                stack.push((c, p));
            }
        }
        let file = FixtureFile {
            format: FIXTURE_FORMAT.to_string(),
            goal: self.goal.clone(),
            nodes,
            completions: self.completions.clone(),
        };
        serde_json::to_string_pretty(&file).expect("fixture serialises")
    }

    pub fn goal(&self) -> Option<&str> {
        self.goal.as_deref()
    }

    pub fn node(&self, id: usize) -> &MockNode {
        &self.nodes[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.nodes[id].children
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Probability of ending the plan at `id`.
    pub fn residual(&self, id: usize) -> f64 {
        let mass: f64 = self.nodes[id].children.iter().map(|&c| self.nodes[c].prob).sum();
        let r = 1.0 - mass;
        if r > MASS_EPS {
            r
        } else {
            0.0
        }
    }

    /// Node reached by following `steps` from the root.
    pub fn lookup<S: AsRef<str>>(&self, steps: &[S]) -> Result<usize, ScorerError> {
        let mut cur = ROOT;
        for (i, s) in steps.iter().enumerate() {
            let s = s.as_ref();
            cur = *self.nodes[cur]
                .children
                .iter()
                .find(|&&c| self.nodes[c].step == s)
                .ok_or_else(|| ScorerError::OffTree {
                    step: s.to_string(),
                    position: i + 1,
                })?;
        }
        Ok(cur)
    }

    /// Children (plus end-of-plan) ordered by probability, ties kept in
    /// child order with end-of-plan last.
    fn ranked(&self, id: usize) -> Vec<StepCandidate> {
        let mut out: Vec<StepCandidate> = self.nodes[id]
            .children
            .iter()
            .map(|&c| StepCandidate::step(self.nodes[c].step.clone(), self.nodes[c].prob.ln(), 1))
            .collect();
        let r = self.residual(id);
        if r > 0.0 {
            out.push(StepCandidate::end_of_plan(r.ln()));
        }
        // stable sort keeps child order (and END last) among equal probabilities
        out.sort_by(|a, b| b.logprob_sum.total_cmp(&a.logprob_sum));
        out
    }

    pub fn propose_steps(&self, prefix: &[Step], n: usize, method: &DecodingMethod) -> Vec<StepCandidate> {
        if n == 0 {
            return Vec::new();
        }
        let texts: Vec<&str> = prefix.iter().map(Step::text).collect();
        let Ok(node) = self.lookup(&texts) else {
            return vec![StepCandidate::end_of_plan(0.0)];
        };
        let ranked = self.ranked(node);
        match *method {
            DecodingMethod::Greedy { .. } | DecodingMethod::Beam { .. } => {
                ranked.into_iter().take(n).collect()
            }
            DecodingMethod::Nucleus { top_p, temperature, seed } => {
                let nucleus = nucleus_cut(&ranked, top_p, temperature);
                let mut rng = texts
                    .iter()
                    .fold(SeedMixer::new(seed), |m, t| m.str(t))
                    .rng();
                let mut pool: Vec<(StepCandidate, f64)> = nucleus;
                let mut out = Vec::new();
                while out.len() < n && !pool.is_empty() {
                    let total: f64 = pool.iter().map(|(_, w)| w).sum();
                    let mut u = rng.gen::<f64>() * total;
                    let mut pick = pool.len() - 1;
                    for (i, (_, w)) in pool.iter().enumerate() {
                        if u < *w {
                            pick = i;
                            break;
                        }
                        u -= w;
                    }
                    out.push(pool.remove(pick).0);
                }
                out
            }
        }
    }

    /// Sum of log probabilities along `steps`, one token per step.
    pub fn path_loglik<S: AsRef<str>>(&self, steps: &[S]) -> Result<LogLik, ScorerError> {
        let mut cur = ROOT;
        let mut sum = 0.0;
        for (i, s) in steps.iter().enumerate() {
            let s = s.as_ref();
            cur = *self.nodes[cur]
                .children
                .iter()
                .find(|&&c| self.nodes[c].step == s)
                .ok_or_else(|| ScorerError::OffTree {
                    step: s.to_string(),
                    position: i + 1,
                })?;
            sum += self.nodes[cur].prob.ln();
        }
        Ok(LogLik {
            logprob_sum: sum,
            token_count: steps.len() as u32,
        })
    }

    pub fn step_validity<S: AsRef<str>>(&self, prefix: &[S], candidate: &str) -> Result<f64, ScorerError> {
        let parent = self.lookup(prefix)?;
        self.nodes[parent]
            .children
            .iter()
            .find(|&&c| self.nodes[c].step == candidate)
            .map(|&c| self.nodes[c].validity)
            .ok_or_else(|| ScorerError::OffTree {
                step: candidate.to_string(),
                position: prefix.len() + 1,
            })
    }
}

/// Smallest probability-ranked prefix whose (tempered) mass reaches
/// `top_p`, paired with tempered weights.
pub(crate) fn nucleus_cut(ranked: &[StepCandidate], top_p: f64, temperature: f64) -> Vec<(StepCandidate, f64)> {
    let weights: Vec<f64> = ranked
        .iter()
        .map(|c| (c.logprob_sum / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::new();
    let mut cum = 0.0;
    for (c, w) in ranked.iter().zip(weights) {
        let p = w / total;
        out.push((c.clone(), p));
        cum += p;
        if cum >= top_p - 1e-12 {
            break;
        }
    }
    out
}

impl Proposer for MockWorld {
    fn propose(
        &self,
        _instance: &PlanningInstance,
        prefix: &[Step],
        n: usize,
        method: &DecodingMethod,
    ) -> Result<Vec<StepCandidate>, ScorerError> {
        method.validate().map_err(ScorerError::InvalidRequest)?;
        Ok(self.propose_steps(prefix, n, method))
    }
}

impl Likelihood for MockWorld {
    fn loglik(&self, _instance: &PlanningInstance, steps: &[Step]) -> Result<LogLik, ScorerError> {
        let texts: Vec<&str> = steps.iter().map(Step::text).collect();
        self.path_loglik(&texts)
    }
}

impl Verifier for MockWorld {
    fn verify(&self, _goal: &Goal, prefix: &[Step], candidate: &Step) -> Result<f64, ScorerError> {
        let texts: Vec<&str> = prefix.iter().map(Step::text).collect();
        self.step_validity(&texts, candidate.text())
    }
}

impl Completion for MockWorld {
    fn complete(&self, prompt: &str, _params: &SamplingParams) -> Result<String, ScorerError> {
        self.completions
            .iter()
            .find(|c| prompt.contains(&c.contains))
            .map(|c| c.text.clone())
            .ok_or(ScorerError::Unsupported("completion for this prompt"))
    }
}
