use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::plan::Plan;
use crate::seed::SeedMixer;

pub const W1: [&str; 2] = ["For a given goal", "Given a goal"];
pub const W2: [&str; 4] = ["write down", "break down into", "put down", "jot down"];
pub const W3: [&str; 7] = [
    "steps",
    "subgoals",
    "a list of steps",
    "several steps",
    "several subgoals",
    "some steps",
    "some small steps",
];
pub const W4: [&str; 3] = ["to achieve the goal", "for achieving the goal", "to attain the goal"];

/// Indices into `W1`..`W4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrefixSlots {
    pub w1: usize,
    pub w2: usize,
    pub w3: usize,
    pub w4: usize,
}

impl PrefixSlots {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let ok = self.w1 < W1.len() && self.w2 < W2.len() && self.w3 < W3.len() && self.w4 < W4.len();
        if ok {
            Ok(())
        } else {
            Err(DatagenError::Recipe(format!("slot index out of range: {self:?}")))
        }
    }

    pub fn render(&self) -> String {
        format!("{}, {} {} {}.\n\n", W1[self.w1], W2[self.w2], W3[self.w3], W4[self.w4])
    }

    /// Every slot combination, `w1` slowest.
    pub fn all() -> impl Iterator<Item = PrefixSlots> {
        (0..W1.len()).flat_map(|w1| {
            (0..W2.len()).flat_map(move |w2| {
                (0..W3.len()).flat_map(move |w3| (0..W4.len()).map(move |w4| PrefixSlots { w1, w2, w3, w4 }))
            })
        })
    }
}

pub fn randomized_slots(seed: u64) -> PrefixSlots {
    let mut rng = SeedMixer::new(seed).str("prompt-prefix").rng();
    PrefixSlots {
        w1: rng.gen_range(0..W1.len()),
        w2: rng.gen_range(0..W2.len()),
        w3: rng.gen_range(0..W3.len()),
        w4: rng.gen_range(0..W4.len()),
    }
}

/// `"{w1}, {w2} {w3} {w4}.\n\n"` with each slot drawn uniformly.
pub fn randomized_prefix(seed: u64) -> String {
    randomized_slots(seed).render()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecipe {
    pub slots: PrefixSlots,
    pub in_context: Vec<(String, Plan)>,
    pub target_goal: String,
}

/// Instruction, exemplar blocks separated by blank lines, then the target
/// goal left open at `Step 1:`.
pub fn assemble_prompt(recipe: &PromptRecipe) -> Result<String, DatagenError> {
    recipe.slots.validate()?;
    if recipe.in_context.is_empty() {
        return Err(DatagenError::Recipe("at least one exemplar is needed".into()));
    }
    let line = |field: &str, s: &str| -> Result<String, DatagenError> {
        let t = s.trim();
        if t.is_empty() || t.contains(['\n', '\r']) {
            return Err(DatagenError::Recipe(format!("{field} must be one non-empty line, got {s:?}")));
        }
        Ok(t.to_string())
    };
    let mut out = recipe.slots.render();
    for (i, (goal, plan)) in recipe.in_context.iter().enumerate() {
        if plan.is_empty() {
            return Err(DatagenError::Recipe(format!("exemplar {} has an empty plan", i + 1)));
        }
        out.push_str(&format!("Goal: {}\n", line("exemplar goal", goal)?));
        out.push_str(&plan.to_step_lines());
        out.push_str("\n\n");
    }
    out.push_str(&format!("Goal: {}\nStep 1:", line("target goal", &recipe.target_goal)?));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn nap() -> Plan {
        Plan::from_texts(&[
            "sit on the bed for a little",
            "pull back the blanket",
            "pull back the sheet",
            "fluff up the pillow",
            "lay down on the bed",
            "fall asleep on the bed",
            "take a nap on the bed",
        ])
        .unwrap()
    }

    #[test]
    fn enumerates_168_prefixes() {
        let all: HashSet<String> = PrefixSlots::all().map(|s| s.render()).collect();
        assert_eq!(all.len(), 168);
        assert!(all.contains("Given a goal, write down a list of steps to achieve the goal.\n\n"));
    }

    #[test]
    fn prefix_is_seed_stable() {
        assert_eq!(randomized_prefix(42), randomized_prefix(42));
    }

    #[test]
    fn prompt_ends_with_target() {
        let r = PromptRecipe {
            slots: PrefixSlots { w1: 1, w2: 0, w3: 2, w4: 0 },
            in_context: vec![("take a nap on the bed".into(), nap())],
            target_goal: "hire a dog walker".into(),
        };
        let p = assemble_prompt(&r).unwrap();
        assert!(p.starts_with("Given a goal, write down a list of steps to achieve the goal.\n\nGoal: take a nap on the bed\nStep 1: sit on the bed for a little\n"));
        assert!(p.contains("Step 7: take a nap on the bed\n\nGoal: hire a dog walker"));
        assert!(p.ends_with("Goal: hire a dog walker\nStep 1:"));
    }

    #[test]
    fn exemplars_keep_their_order() {
        let second = Plan::from_texts(&["find a leash"]).unwrap();
        let r = PromptRecipe {
            slots: PrefixSlots { w1: 0, w2: 0, w3: 0, w4: 0 },
            in_context: vec![("take a nap".into(), nap()), ("walk the dog".into(), second)],
            target_goal: "x".into(),
        };
        let p = assemble_prompt(&r).unwrap();
        assert!(p.find("Goal: take a nap").unwrap() < p.find("Goal: walk the dog").unwrap());
    }

    #[test]
    fn empty_exemplar_plan_rejected() {
        let r = PromptRecipe {
            slots: PrefixSlots { w1: 0, w2: 0, w3: 0, w4: 0 },
            in_context: vec![("g".into(), Plan::empty())],
            target_goal: "x".into(),
        };
        assert!(matches!(assemble_prompt(&r), Err(DatagenError::Recipe(_))));
    }
}
