//! Executability and LCS evaluation of generated plans in a miniature
//! household environment.
//!
//! Each plan step is mapped to the grounded action whose surface form is
//! most similar to it, the resulting program is simulated against the
//! environment's precondition and effect rules, and the program is
//! compared with a gold program by longest common subsequence.

mod embed;
mod env;
mod lcs;

pub use embed::{tokens, Embedder, TokenEmbedder, VectorEmbedder};
pub use env::{
    executability, Action, ActionVocab, EnvState, Execution, MiniEnv, ObjectSpec, PredicateRule, VerbSpec,
    VocabEntry, HOUSEHOLD_ENV,
};
pub use lcs::{lcs_len, lcs_score};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::Plan;

pub const HOUSEHOLD_GOLD: &str = include_str!("../../assets/embodied/gold.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbodiedError {
    #[error("environment: {0}")]
    Env(String),
    #[error("unknown verb {0}")]
    UnknownVerb(String),
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("{action} takes {expected} arguments")]
    Arity { action: String, expected: usize },
    #[error("cannot parse action {0:?}")]
    BadAction(String),
    #[error("plans and gold programs are misaligned: {0}")]
    Misaligned(String),
    #[error("gold programs: {0}")]
    Gold(String),
}

/// The vocabulary entry most similar to `step`; earlier entries win ties.
pub fn translate_step(
    step: &str,
    vocab: &ActionVocab,
    embedder: &dyn Embedder,
    min_similarity: f64,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in vocab.entries.iter().enumerate() {
        let s = embedder.similarity(step, &e.surface);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.filter(|&(_, s)| s >= min_similarity)
}

/// One line of a gold program file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldProgram {
    pub goal_id: String,
    pub goal: String,
    pub program: Vec<Action>,
}

pub fn parse_gold(text: &str) -> Result<Vec<GoldProgram>, EmbodiedError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EmbodiedError::Gold(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn household_gold() -> Vec<GoldProgram> {
    parse_gold(HOUSEHOLD_GOLD).expect("bundled gold programs parse")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub min_similarity: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { min_similarity: 0.0 }
    }
}

/// Report line: `{goal_id, executability, lcs, program}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub goal_id: String,
    /// 1.0 when the translated program executes fully, else 0.0.
    pub executability: f64,
    pub first_failure: Option<usize>,
    pub lcs: f64,
    pub program: Vec<Action>,
    /// Steps with no action above the similarity floor.
    pub untranslated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: Vec<ItemReport>,
    pub executability: f64,
    pub mean_lcs: f64,
}

impl EvalReport {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for i in &self.items {
            out.push_str(&serde_json::to_string(i).expect("report serialises"));
            out.push('\n');
        }
        out
    }
}

/// Translates, simulates and scores each `(goal_id, plan)` against the gold
/// program with the same position and id.
pub fn evaluate(
    plans: &[(String, Plan)],
    env: &MiniEnv,
    vocab: &ActionVocab,
    golds: &[GoldProgram],
    embedder: &dyn Embedder,
    config: &EvalConfig,
) -> Result<EvalReport, EmbodiedError> {
    if plans.len() != golds.len() {
        return Err(EmbodiedError::Misaligned(format!("{} plans, {} gold programs", plans.len(), golds.len())));
    }
    if let Some(((id, _), g)) = plans.iter().zip(golds).find(|((id, _), g)| *id != g.goal_id) {
        return Err(EmbodiedError::Misaligned(format!("plan {id} paired with gold {}", g.goal_id)));
    }
    if vocab.is_empty() {
        return Err(EmbodiedError::Env("empty action vocabulary".into()));
    }
    let items: Vec<ItemReport> = plans
        .par_iter()
        .zip(golds)
        .map(|((id, plan), gold)| {
            let mut program = Vec::new();
            let mut untranslated = 0;
            for step in plan.steps() {
                match translate_step(step.text(), vocab, embedder, config.min_similarity) {
                    Some((i, _)) => program.push(vocab.entries[i].action.clone()),
                    None => untranslated += 1,
                }
            }
            let exec = env.execute(&program)?;
            Ok(ItemReport {
                goal_id: id.clone(),
                executability: if exec.executable { 1.0 } else { 0.0 },
                first_failure: exec.first_failure,
                lcs: lcs_score(&program, &gold.program),
                program,
                untranslated,
            })
        })
        .collect::<Result<_, EmbodiedError>>()?;
    let n = items.len().max(1) as f64;
    let executability = if items.is_empty() { 1.0 } else { items.iter().map(|i| i.executability).sum::<f64>() / n };
    let mean_lcs = if items.is_empty() { 1.0 } else { items.iter().map(|i| i.lcs).sum::<f64>() / n };
    Ok(EvalReport {
        items,
        executability,
        mean_lcs,
    })
}

/// Plans made of the gold programs' surface forms.
pub fn surface_plans(golds: &[GoldProgram], vocab: &ActionVocab) -> Result<Vec<(String, Plan)>, EmbodiedError> {
    golds
        .iter()
        .map(|g| {
            let texts = g
                .program
                .iter()
                .map(|a| {
                    vocab
                        .surface(a)
                        .map(str::to_string)
                        .ok_or_else(|| EmbodiedError::Gold(format!("{} is not in the vocabulary", a)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let plan = Plan::from_texts(&texts).map_err(|e| EmbodiedError::Gold(e.to_string()))?;
            Ok((g.goal_id.clone(), plan))
        })
        .collect()
}
