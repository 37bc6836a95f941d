use std::collections::HashSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::scorer::{Completion, SamplingParams};
use crate::seed::SeedMixer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Seed,
    Generated,
    Exemplar,
}

/// Persistence line: `{text, provenance, round}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalEntry {
    pub text: String,
    pub provenance: Provenance,
    pub round: usize,
}

/// Lowercased, whitespace-collapsed, without trailing punctuation.
pub fn normalize_goal(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!', '?'])
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoalPool {
    entries: Vec<GoalEntry>,
    keys: HashSet<String>,
    /// Completed bootstrap rounds, including aborted ones.
    pub iteration: usize,
}

impl GoalPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_seed<S: AsRef<str>>(goals: &[S]) -> Self {
        let mut p = Self::new();
        for g in goals {
            p.insert(g.as_ref(), Provenance::Seed, 0);
        }
        p
    }

    /// Adds `text` unless it is blank, multi-line or a duplicate after
    /// normalisation. Returns whether it was added.
    pub fn insert(&mut self, text: &str, provenance: Provenance, round: usize) -> bool {
        let text = text.trim();
        if text.is_empty() || text.contains(['\n', '\r']) {
            return false;
        }
        if !self.keys.insert(normalize_goal(text)) {
            return false;
        }
        self.entries.push(GoalEntry {
            text: text.to_string(),
            provenance,
            round,
        });
        true
    }

    pub fn contains(&self, text: &str) -> bool {
        self.keys.contains(&normalize_goal(text))
    }

    pub fn entries(&self) -> &[GoalEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DatagenError> {
        let mut p = Self::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: GoalEntry = serde_json::from_str(line)
                .map_err(|err| DatagenError::Invalid(format!("goal pool line {}: {err}", i + 1)))?;
            p.iteration = p.iteration.max(e.round);
            p.insert(&e.text, e.provenance, e.round);
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub rounds: usize,
    /// Exemplar goals shown per prompt.
    pub exemplars: usize,
    pub prompts_per_round: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            exemplars: 5,
            prompts_per_round: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// Goals added per round.
    pub added: Vec<usize>,
    /// `(round, message)` for rounds that were rolled back.
    pub aborted: Vec<(usize, String)>,
}

const GOAL_INSTRUCTION: &str = "Write down more everyday goals like the ones below, one per line.\n\n";

fn goal_prompt(exemplars: &[&str]) -> String {
    let mut p = String::from(GOAL_INSTRUCTION);
    for g in exemplars {
        p.push_str(&format!("Goal: {g}\n"));
    }
    p.push_str("Goal:");
    p
}

fn parse_goal_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| {
            let t = l.trim().trim_start_matches(['-', '*']).trim_start();
            let digits = t.chars().take_while(char::is_ascii_digit).count();
            let t = if digits > 0 && t[digits..].starts_with(['.', ')']) {
                t[digits + 1..].trim_start()
            } else {
                t
            };
            t.strip_prefix("Goal:").unwrap_or(t).trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

/// Grows `pool` by prompting with goals sampled from it. Prompts within a
/// round run concurrently; a round whose completions fail leaves the pool
/// as it was.
pub fn bootstrap_goals(
    pool: &GoalPool,
    completion: &dyn Completion,
    config: &BootstrapConfig,
    params: &SamplingParams,
) -> Result<(GoalPool, BootstrapReport), DatagenError> {
    if pool.is_empty() {
        return Err(DatagenError::Invalid("goal pool is empty".into()));
    }
    let mut pool = pool.clone();
    let mut report = BootstrapReport::default();
    for _ in 0..config.rounds {
        let round = pool.iteration + 1;
        let texts: Vec<&str> = pool.entries().iter().map(|e| e.text.as_str()).collect();
        let prompts: Vec<(String, u64)> = (0..config.prompts_per_round)
            .map(|i| {
                let mixer = SeedMixer::new(config.seed).u64(round as u64).u64(i as u64);
                let mut rng = mixer.rng();
                let k = config.exemplars.clamp(1, texts.len());
                let mut picks = index::sample(&mut rng, texts.len(), k).into_vec();
                picks.sort_unstable();
                let ex: Vec<&str> = picks.iter().map(|&j| texts[j]).collect();
                (goal_prompt(&ex), mixer.str("completion").finish())
            })
            .collect();
        let outputs: Result<Vec<String>, _> = prompts
            .par_iter()
            .map(|(prompt, seed)| {
                let p = SamplingParams { seed: *seed, ..*params };
                completion.complete(prompt, &p)
            })
            .collect();
        pool.iteration = round;
        match outputs {
            Ok(outputs) => {
                let mut next = pool.clone();
                let added = outputs
                    .iter()
                    .flat_map(|o| parse_goal_lines(o))
                    .filter(|g| next.insert(g, Provenance::Generated, round))
                    .count();
                pool = next;
                report.added.push(added);
            }
            Err(e) => {
                log::warn!("bootstrap round {round} aborted: {e}");
                report.added.push(0);
                report.aborted.push((round, e.to_string()));
            }
        }
    }
    Ok((pool, report))
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::scorer::{FnCompletion, ScorerError};

    fn seed_pool() -> GoalPool {
        GoalPool::from_seed(&["take a nap on the bed", "hire a dog walker", "bake a cake"])
    }

    #[test]
    fn grows_by_novel_goals_only() {
        let teacher = FnCompletion(|_: &str, _: &SamplingParams| {
            Ok("Hire a dog walker.\nplant a tree\n2. Plant  a tree\nGoal: clean the garage".to_string())
        });
        let cfg = BootstrapConfig { rounds: 1, prompts_per_round: 1, ..BootstrapConfig::default() };
        let (p, r) = bootstrap_goals(&seed_pool(), &teacher, &cfg, &SamplingParams::default()).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(r.added, vec![2]);
        assert!(p.contains("clean the garage"));
        assert_eq!(p.entries()[4].provenance, Provenance::Generated);
        assert_eq!(p.entries()[4].round, 1);
    }

    #[test]
    fn duplicates_only_leave_pool_unchanged() {
        let teacher = FnCompletion(|_: &str, _: &SamplingParams| Ok("bake a cake\nBAKE A CAKE".to_string()));
        let (p, _) = bootstrap_goals(&seed_pool(), &teacher, &BootstrapConfig::default(), &SamplingParams::default())
            .unwrap();
        assert_eq!(p.entries(), seed_pool().entries());
    }

    #[test]
    fn failed_round_is_rolled_back() {
        let calls = AtomicUsize::new(0);
        let teacher = FnCompletion(move |_: &str, _: &SamplingParams| {
            if calls.fetch_add(1, Ordering::SeqCst) == 1 {
                Err(ScorerError::Unsupported("x"))
            } else {
                Ok("wash the car".to_string())
            }
        });
        let cfg = BootstrapConfig { rounds: 1, prompts_per_round: 3, ..BootstrapConfig::default() };
        let (p, r) = bootstrap_goals(&seed_pool(), &teacher, &cfg, &SamplingParams::default()).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(r.aborted.len(), 1);
    }

    #[test]
    fn seeded_rounds_are_reproducible() {
        let teacher = FnCompletion(|prompt: &str, p: &SamplingParams| {
            let n = prompt.lines().count();
            Ok(format!("goal {} {}\ngoal {}", p.seed % 97, n, p.seed % 13))
        });
        let cfg = BootstrapConfig { rounds: 2, ..BootstrapConfig::default() };
        let a = bootstrap_goals(&seed_pool(), &teacher, &cfg, &SamplingParams::default()).unwrap().0;
        let b = bootstrap_goals(&seed_pool(), &teacher, &cfg, &SamplingParams::default()).unwrap().0;
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert!(a.len() >= seed_pool().len());
        assert_eq!(GoalPool::from_jsonl(&a.to_jsonl()).unwrap().entries(), a.entries());
    }

    #[test]
    fn empty_pool_rejected() {
        let teacher = FnCompletion(|_: &str, _: &SamplingParams| Ok(String::new()));
        assert!(bootstrap_goals(&GoalPool::new(), &teacher, &BootstrapConfig::default(), &SamplingParams::default()).is_err());
    }
}
