//! Positive and pseudo-negative (plan prefix, next step) pairs for training a
//! step verifier.
//!
//! Positions below are 1-based; `s_t` is step `t` of a gold plan of `T` steps.
//! Each perturbation is localised at the candidate step:
//!
//! | kind            | prefix                           | candidate | eligible                 |
//! |-----------------|----------------------------------|-----------|--------------------------|
//! | repeat-near     | `s_<t`                           | `s_{t-1}` | `2 <= t <= T`            |
//! | repeat-distant  | `s_<t`                           | `s_j`     | `3 <= t <= T, j <= t-2`  |
//! | missing         | `s_<t`                           | `s_t'`    | `t+2 <= t' <= T`         |
//! | reorder-near    | `s_<=t` with `t-1`, `t` swapped  | `s_{t+1}` | `2 <= t <= T-1`          |
//! | reorder-distant | `s_<t` with `i`, `j` swapped     | `s_t`     | `j >= i+2, j < t <= T`   |

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{Goal, Plan, Step};
use crate::seed::SeedMixer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    ReorderNear,
    ReorderDistant,
    RepeatNear,
    RepeatDistant,
    Missing,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::ReorderNear,
        PerturbationKind::ReorderDistant,
        PerturbationKind::RepeatNear,
        PerturbationKind::RepeatDistant,
        PerturbationKind::Missing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::ReorderNear => "reorder-near",
            PerturbationKind::ReorderDistant => "reorder-distant",
            PerturbationKind::RepeatNear => "repeat-near",
            PerturbationKind::RepeatDistant => "repeat-distant",
            PerturbationKind::Missing => "missing",
        }
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown perturbation kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierExample {
    pub goal: Goal,
    pub prefix: Vec<Step>,
    pub candidate: Step,
    pub label: Label,
    pub kind: Option<PerturbationKind>,
    pub source_plan_id: String,
}

impl VerifierExample {
    fn key(&self) -> (Vec<&str>, &str) {
        (self.prefix.iter().map(Step::text).collect(), self.candidate.text())
    }

    pub fn to_record(&self) -> ExampleRecord {
        ExampleRecord {
            goal: self.goal.text().to_string(),
            prefix: self.prefix.iter().map(|s| s.text().to_string()).collect(),
            candidate: self.candidate.text().to_string(),
            label: self.label,
            kind: self.kind,
            source_plan_id: self.source_plan_id.clone(),
        }
    }
}

/// Export line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub goal: String,
    pub prefix: Vec<String>,
    pub candidate: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PerturbationKind>,
    pub source_plan_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("per_kind must be positive")]
    PerKind,
    #[error("plan {0:?} has no steps")]
    EmptyPlan(String),
    #[error("no plans given")]
    NoPlans,
}

/// A gold plan and what it is for.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePlan {
    pub id: String,
    pub goal: Goal,
    pub plan: Plan,
}

fn texts(plan: &Plan) -> Vec<&str> {
    plan.steps().iter().map(Step::text).collect()
}

fn example(
    src: &SourcePlan,
    prefix: Vec<&str>,
    candidate: &str,
    label: Label,
    kind: Option<PerturbationKind>,
) -> VerifierExample {
    let prefix: Vec<Step> = prefix
        .iter()
        .enumerate()
        .map(|(i, t)| Step::new(i + 1, t).expect("plan texts are valid steps"))
        .collect();
    let candidate = Step::new(prefix.len() + 1, candidate).expect("plan texts are valid steps");
    VerifierExample {
        goal: src.goal.clone(),
        prefix,
        candidate,
        label,
        kind,
        source_plan_id: src.id.clone(),
    }
}

/// `(s_<t, s_t)` for every `t`.
pub fn positives(src: &SourcePlan) -> Vec<VerifierExample> {
    let s = texts(&src.plan);
    (0..s.len())
        .map(|t| example(src, s[..t].to_vec(), s[t], Label::Valid, None))
        .collect()
}

/// Eligible (prefix, candidate) pairs for `kind`, in position order.
/// Indices inside are 0-based.
fn eligible<'a>(s: &[&'a str], kind: PerturbationKind) -> Vec<(Vec<&'a str>, &'a str)> {
    let n = s.len();
    let mut out = Vec::new();
    match kind {
        PerturbationKind::RepeatNear => {
            for t in 1..n {
                out.push((s[..t].to_vec(), s[t - 1]));
            }
        }
        PerturbationKind::RepeatDistant => {
            for t in 2..n {
                for j in 0..t - 1 {
                    out.push((s[..t].to_vec(), s[j]));
                }
            }
        }
        PerturbationKind::Missing => {
            for t in 0..n {
                for tp in t + 2..n {
                    out.push((s[..t].to_vec(), s[tp]));
                }
            }
        }
        PerturbationKind::ReorderNear => {
            for t in 1..n.saturating_sub(1) {
                let mut prefix = s[..=t].to_vec();
                prefix.swap(t - 1, t);
                out.push((prefix, s[t + 1]));
            }
        }
        PerturbationKind::ReorderDistant => {
            for i in 0..n {
                for j in i + 2..n {
                    for t in j + 1..n {
                        let mut prefix = s[..t].to_vec();
                        prefix.swap(i, j);
                        out.push((prefix, s[t]));
                    }
                }
            }
        }
    }
    out
}

/// Up to `per_kind` invalid pairs for each of `kinds`, sampled without
/// replacement from the eligible positions. Pairs that coincide with a
/// positive of the same plan are never produced.
pub fn negatives(
    src: &SourcePlan,
    kinds: &[PerturbationKind],
    per_kind: usize,
    seed: u64,
) -> Result<Vec<VerifierExample>, PerturbError> {
    if per_kind == 0 {
        return Err(PerturbError::PerKind);
    }
    let s = texts(&src.plan);
    let valid: HashSet<(Vec<&str>, &str)> = (0..s.len()).map(|t| (s[..t].to_vec(), s[t])).collect();
    let mut out = Vec::new();
    for &kind in kinds {
        let pool: Vec<_> = eligible(&s, kind)
            .into_iter()
            .filter(|pair| !valid.contains(pair))
            .collect();
        let mut rng = SeedMixer::new(seed).str(kind.as_str()).str(&src.id).rng();
        let mut picks = index::sample(&mut rng, pool.len(), per_kind.min(pool.len())).into_vec();
        picks.sort_unstable();
        for i in picks {
            let (prefix, candidate) = &pool[i];
            out.push(example(src, prefix.clone(), candidate, Label::Invalid, Some(kind)));
        }
    }
    Ok(out)
}

/// Pairs per plan mirroring 47k pairs built from 3k plans.
pub const TARGET_PAIRS_PER_PLAN: f64 = 47_000.0 / 3_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub kinds: Vec<PerturbationKind>,
    pub per_kind: usize,
    pub seed: u64,
    /// Expected pairs per source plan; only reported in the manifest.
    pub target_pairs_per_plan: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kinds: PerturbationKind::ALL.to_vec(),
            per_kind: 2,
            seed: 0,
            target_pairs_per_plan: TARGET_PAIRS_PER_PLAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ratio {
    Value(f64),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub plans: usize,
    pub positives: usize,
    pub negatives: usize,
    pub total: usize,
    pub per_kind: BTreeMap<PerturbationKind, usize>,
    pub positive_negative_ratio: Ratio,
    pub target_total: f64,
    pub seed: u64,
    pub config: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<VerifierExample>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&serde_json::to_string(&e.to_record()).expect("record serialises"));
            out.push('\n');
        }
        out
    }
}

/// Positives then negatives for every plan, in input order.
pub fn build_dataset(plans: &[SourcePlan], config: &DatasetConfig) -> Result<Dataset, PerturbError> {
    if plans.is_empty() {
        return Err(PerturbError::NoPlans);
    }
    if let Some(p) = plans.iter().find(|p| p.plan.is_empty()) {
        return Err(PerturbError::EmptyPlan(p.id.clone()));
    }
    let per_plan: Vec<Vec<VerifierExample>> = plans
        .par_iter()
        .map(|src| {
            let mut v = positives(src);
            if !config.kinds.is_empty() {
                v.extend(negatives(src, &config.kinds, config.per_kind, config.seed)?);
            }
            Ok(v)
        })
        .collect::<Result<_, PerturbError>>()?;
    let examples: Vec<VerifierExample> = per_plan.into_iter().flatten().collect();

    let positives = examples.iter().filter(|e| e.label == Label::Valid).count();
    let negatives = examples.len() - positives;
    let mut per_kind = BTreeMap::new();
    for e in &examples {
        if let Some(k) = e.kind {
            *per_kind.entry(k).or_insert(0) += 1;
        }
    }
    let ratio = if negatives == 0 {
        Ratio::Label("no-negatives".into())
    } else {
        Ratio::Value(positives as f64 / negatives as f64)
    };
    let manifest = DatasetManifest {
        plans: plans.len(),
        positives,
        negatives,
        total: examples.len(),
        per_kind,
        positive_negative_ratio: ratio,
        target_total: config.target_pairs_per_plan * plans.len() as f64,
        seed: config.seed,
        config: config.clone(),
    };
    Ok(Dataset { examples, manifest })
}

/// Whether every invalid pair differs from every valid pair of its plan.
pub fn collision_free(examples: &[VerifierExample]) -> bool {
    let valid: HashSet<(&str, (Vec<&str>, &str))> = examples
        .iter()
        .filter(|e| e.label == Label::Valid)
        .map(|e| (e.source_plan_id.as_str(), e.key()))
        .collect();
    examples
        .iter()
        .filter(|e| e.label == Label::Invalid)
        .all(|e| !valid.contains(&(e.source_plan_id.as_str(), e.key())))
}

const VERBS: &[&str] = &[
    "open", "close", "wash", "fill", "carry", "check", "fold", "heat", "cut", "sort", "wipe", "pack",
];
const NOUNS: &[&str] = &[
    "the door", "a towel", "the pan", "the list", "a box", "the shelf", "the sink", "a jar", "the lid",
    "the table",
];

/// `count` plans with distinct step texts and lengths uniform in
/// `min_len..=max_len`.
pub fn synthetic_plans(count: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<SourcePlan> {
    use rand::Rng;
    let mut rng = SeedMixer::new(seed).str("synthetic-plans").rng();
    (0..count)
        .map(|i| {
            let len = rng.gen_range(min_len..=max_len);
            let steps: Vec<String> = (0..len)
                .map(|k| {
                    let v = VERBS[rng.gen_range(0..VERBS.len())];
                    let n = NOUNS[rng.gen_range(0..NOUNS.len())];
                    format!("{v} {n} ({k})")
                })
                .collect();
            SourcePlan {
                id: format!("p{i}"),
                goal: Goal::new(format!("g{i}"), &format!("synthetic goal {i}")).expect("non-empty"),
                plan: Plan::from_texts(&steps).expect("non-empty steps"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(steps: &[&str]) -> SourcePlan {
        SourcePlan {
            id: "p".into(),
            goal: Goal::new("g", "do it").unwrap(),
            plan: Plan::from_texts(steps).unwrap(),
        }
    }

    fn pairs(v: &[VerifierExample]) -> Vec<(Vec<String>, String)> {
        v.iter()
            .map(|e| {
                (
                    e.prefix.iter().map(|s| s.text().to_string()).collect(),
                    e.candidate.text().to_string(),
                )
            })
            .collect()
    }

    fn p(prefix: &[&str], c: &str) -> (Vec<String>, String) {
        (prefix.iter().map(|s| s.to_string()).collect(), c.to_string())
    }

    #[test]
    fn positives_follow_the_plan() {
        let got = pairs(&positives(&src(&["a", "b", "c"])));
        assert_eq!(got, vec![p(&[], "a"), p(&["a"], "b"), p(&["a", "b"], "c")]);
        assert_eq!(positives(&src(&["a"])).len(), 1);
        assert_eq!(positives(&src(&["a", "b"])).len(), 2);
    }

    #[test]
    fn missing_from_the_start_skips_a_step() {
        let s = ["a", "b", "c", "d"];
        let first: Vec<_> = eligible(&s, PerturbationKind::Missing)
            .into_iter()
            .filter(|(prefix, _)| prefix.is_empty())
            .map(|(_, c)| c)
            .collect();
        assert_eq!(first, vec!["c", "d"]);
    }

    #[test]
    fn repeat_near_on_two_steps() {
        let got = negatives(&src(&["a", "b"]), &[PerturbationKind::RepeatNear], 3, 1).unwrap();
        assert_eq!(pairs(&got), vec![p(&["a"], "a")]);
    }

    #[test]
    fn short_plans_yield_nothing_silently() {
        let got = negatives(&src(&["a"]), &PerturbationKind::ALL, 2, 1).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn zero_per_kind_is_an_error() {
        assert_eq!(negatives(&src(&["a"]), &PerturbationKind::ALL, 0, 1), Err(PerturbError::PerKind));
    }

    #[test]
    fn golden_five_step_set() {
        // each pair below was checked by hand against the table in the module docs
        let got = negatives(&src(&["a", "b", "c", "d", "e"]), &PerturbationKind::ALL, 2, 7).unwrap();
        let kinds: Vec<_> = got.iter().map(|e| e.kind.unwrap()).collect();
        assert_eq!(got.len(), 10);
        assert_eq!(kinds.iter().filter(|k| **k == PerturbationKind::Missing).count(), 2);
        let again = negatives(&src(&["a", "b", "c", "d", "e"]), &PerturbationKind::ALL, 2, 7).unwrap();
        assert_eq!(got, again);
        let frozen = vec![
            p(&["b", "a"], "c"),
            p(&["a", "c", "b"], "d"),
            p(&["c", "b", "a"], "d"),
            p(&["a", "d", "c", "b"], "e"),
            p(&["a"], "a"),
            p(&["a", "b", "c", "d"], "d"),
            p(&["a", "b", "c", "d"], "a"),
            p(&["a", "b", "c", "d"], "b"),
            p(&[], "c"),
            p(&["a"], "e"),
        ];
        assert_eq!(pairs(&got), frozen);
    }

    #[test]
    fn duplicate_texts_do_not_collide() {
        let got = negatives(&src(&["a", "a", "b", "a"]), &PerturbationKind::ALL, 50, 3).unwrap();
        let mut all = positives(&src(&["a", "a", "b", "a"]));
        all.extend(got);
        assert!(collision_free(&all));
    }

    #[test]
    fn three_step_counting_example() {
        let cfg = DatasetConfig {
            kinds: vec![PerturbationKind::RepeatNear],
            per_kind: 1,
            ..DatasetConfig::default()
        };
        let d = build_dataset(&[src(&["a", "b", "c"])], &cfg).unwrap();
        assert_eq!(d.manifest.positives, 3);
        assert!(d.manifest.negatives <= 2);

        let none = DatasetConfig {
            kinds: vec![],
            ..DatasetConfig::default()
        };
        let d = build_dataset(&[src(&["a", "b", "c"])], &none).unwrap();
        assert_eq!(d.manifest.positive_negative_ratio, Ratio::Label("no-negatives".into()));
        assert_eq!(d.manifest.total, 3);
    }

    #[test]
    fn export_has_documented_fields() {
        let d = build_dataset(&[src(&["a", "b", "c"])], &DatasetConfig::default()).unwrap();
        let line = d.to_jsonl().lines().last().unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        for f in ["goal", "prefix", "candidate", "label", "kind", "source_plan_id"] {
            assert!(v.get(f).is_some(), "missing {f}");
        }
    }
}
