use super::{DatagenError, PromptTemplate};
use crate::plan::{parse_plan, Condition, ConditionCategory, Goal, Plan};
use crate::scorer::{Completion, SamplingParams};

// checked in this order; user-specific phrases come before equipment so that
// "you need size specific equipment" is about the user
const SAFETY: &[&str] = &[
    "hot", "heavy", "fragile", "danger", "sharp", "breaks down", "broken", "runs out", "slippery", "fire",
    "burn", "unsafe", "toxic", "emergency", "storm", "icy",
];
const USER: &[&str] = &[
    "unable", "size", "allerg", "prefer", "budget", "afford", "vegetarian", "vegan", "injur", "disab",
    "beginner", "don't know", "do not know", "elderly", "pregnant", "diet", "left-handed",
];
const LOCATION: &[&str] = &[
    "store", "shop", "nearby", "local", "studio", "outside", "outdoors", "indoors", "office", "park", "city",
    "abroad", "closed", "beach", "gym", "library", "restaurant", "apartment", "country",
];
const EQUIPMENT: &[&str] = &[
    "laptop", "computer", "tool", "equipment", "clay", "phone", "machine", "device", "oven", "stove", "kit",
    "glove", "internet", "printer", "car",
];

fn matches(text: &str, keywords: &[&str]) -> bool {
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-').to_string())
        .collect();
    keywords.iter().any(|k| {
        if k.contains(' ') {
            text.contains(k)
        } else {
            words.iter().any(|w| w.starts_with(k))
        }
    })
}

/// Keyword guess at a condition's family.
pub fn categorize(text: &str) -> ConditionCategory {
    let t = text.to_lowercase();
    if matches(&t, SAFETY) {
        ConditionCategory::Safety
    } else if matches(&t, USER) {
        ConditionCategory::UserSpecification
    } else if matches(&t, LOCATION) {
        ConditionCategory::Location
    } else if matches(&t, EQUIPMENT) {
        ConditionCategory::Equipment
    } else {
        ConditionCategory::Other
    }
}

fn strip_condition_line(line: &str) -> &str {
    let mut t = line.trim();
    t = t.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 && t[digits..].starts_with(['.', ')']) {
        t = t[digits + 1..].trim_start();
    }
    for p in ["Condition:", "condition:"] {
        if let Some(rest) = t.strip_prefix(p) {
            t = rest.trim_start();
        }
    }
    for p in ["If ", "if "] {
        if let Some(rest) = t.strip_prefix(p) {
            t = rest.trim_start();
        }
    }
    t.trim_end_matches(['.', ',', ';']).trim()
}

/// One condition per non-empty line.
pub fn parse_conditions(text: &str) -> Vec<Condition> {
    text.lines()
        .map(strip_condition_line)
        .filter(|l| !l.is_empty())
        .filter_map(|l| Condition::new(l, Some(categorize(l))).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditionSample {
    pub conditions: Vec<Condition>,
    pub warnings: Vec<String>,
}

pub fn sample_conditions(
    goal: &Goal,
    plan: &Plan,
    completion: &dyn Completion,
    template: &PromptTemplate,
    params: &SamplingParams,
) -> Result<ConditionSample, DatagenError> {
    if plan.is_empty() {
        return Err(DatagenError::Invalid("condition sampling needs a non-empty plan".into()));
    }
    let prompt = template.render(&[("goal", goal.text()), ("plan", &plan.to_step_lines())])?;
    let raw = completion.complete(&prompt, params)?;
    let conditions = parse_conditions(&raw);
    let mut warnings = Vec::new();
    if conditions.is_empty() && !raw.trim().is_empty() {
        warnings.push(format!("no conditions found in completion output {raw:?}"));
    }
    Ok(ConditionSample { conditions, warnings })
}

/// Asks for a revision of `plan` under `condition` and parses the steps.
pub fn sample_counterfactual(
    goal: &Goal,
    plan: &Plan,
    condition: &Condition,
    completion: &dyn Completion,
    template: &PromptTemplate,
    params: &SamplingParams,
) -> Result<Plan, DatagenError> {
    if plan.is_empty() {
        return Err(DatagenError::Invalid("plan revision needs a non-empty plan".into()));
    }
    let prompt = template.render(&[
        ("goal", goal.text()),
        ("condition", condition.text()),
        ("plan", &plan.to_step_lines()),
    ])?;
    let raw = completion.complete(&prompt, params)?;
    match parse_plan(&raw) {
        Ok(p) if !p.is_empty() => Ok(p),
        Ok(_) => Err(DatagenError::Unparseable {
            raw,
            reason: "no `Step k:` lines".into(),
        }),
        Err(e) => Err(DatagenError::Unparseable {
            raw,
            reason: e.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{FnCompletion, ScorerError};

    fn fixed(text: &'static str) -> FnCompletion<impl Fn(&str, &SamplingParams) -> Result<String, ScorerError>> {
        FnCompletion(move |_: &str, _: &SamplingParams| Ok(text.to_string()))
    }

    fn lint() -> (Goal, Plan) {
        (
            Goal::new("lint", "empty lint filter").unwrap(),
            Plan::from_texts(&["find lint filter", "remove lint filter", "clean lint filter", "replace lint filter"])
                .unwrap(),
        )
    }

    #[test]
    fn table_four_examples_categorize() {
        use ConditionCategory::*;
        let cases = [
            ("there are no local gardening stores nearby", Location),
            ("you want to sing the lyrics in a recording studio", Location),
            ("you want to use a laptop or computer", Equipment),
            ("you don't have the right tools or clay", Equipment),
            ("the plates are too heavy or fragile", Safety),
            ("the car breaks down or runs out of gas", Safety),
            ("you are unable to read sheet music", UserSpecification),
            ("you need size specific equipment", UserSpecification),
            ("the store is closed", Location),
            ("the lint trap is too hot to touch", Safety),
        ];
        for (text, want) in cases {
            assert_eq!(categorize(text), want, "{text}");
        }
    }

    #[test]
    fn store_closed_is_one_location_condition() {
        let (g, p) = lint();
        let s = sample_conditions(&g, &p, &fixed("If the store is closed"), &PromptTemplate::condition(), &SamplingParams::default())
            .unwrap();
        assert_eq!(s.conditions.len(), 1);
        assert_eq!(s.conditions[0].text(), "the store is closed");
        assert_eq!(s.conditions[0].category(), Some(ConditionCategory::Location));
    }

    #[test]
    fn empty_completion_gives_nothing() {
        let (g, p) = lint();
        let s = sample_conditions(&g, &p, &fixed(""), &PromptTemplate::condition(), &SamplingParams::default()).unwrap();
        assert!(s.conditions.is_empty() && s.warnings.is_empty());
    }

    #[test]
    fn lint_trap_condition() {
        let (g, p) = lint();
        let teacher = FnCompletion(|prompt: &str, _: &SamplingParams| {
            assert!(prompt.contains("Goal: empty lint filter\nStep 1: find lint filter"));
            Ok("1. If the lint trap is too hot to touch.\n2. If you have no vacuum".to_string())
        });
        let s = sample_conditions(&g, &p, &teacher, &PromptTemplate::condition(), &SamplingParams::default()).unwrap();
        assert_eq!(s.conditions[0].text(), "the lint trap is too hot to touch");
        assert_eq!(s.conditions.len(), 2);
    }

    #[test]
    fn identity_revision_returns_the_plan() {
        let (g, p) = lint();
        let c = Condition::new("the lint trap is too hot to touch", None).unwrap();
        let echo = FnCompletion(|prompt: &str, _: &SamplingParams| {
            let plan_part = prompt.split("Initial plan:\n").nth(1).unwrap();
            Ok(plan_part.split("\nRevised plan:").next().unwrap().to_string())
        });
        let out = sample_counterfactual(&g, &p, &c, &echo, &PromptTemplate::counterfactual(), &SamplingParams::default())
            .unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn revision_with_glove_step() {
        let (g, p) = lint();
        let c = Condition::new("the lint trap is too hot to touch", None).unwrap();
        let teacher = fixed(
            "Step 1: Unplug dryer\nStep 2: Open dryer\nStep 3: Locate lint trap\nStep 4: Use heat-resistant glove or mitt to pick up lint trap\nStep 5: Pull lint trap out of dryer\nStep 6: Empty lint trap",
        );
        let out = sample_counterfactual(&g, &p, &c, &teacher, &PromptTemplate::counterfactual(), &SamplingParams::default())
            .unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.texts().iter().any(|s| s.starts_with("Use heat-resistant glove")));
        let three = fixed("Step 1: a\nStep 2: b\nStep 3: c");
        assert_eq!(
            sample_counterfactual(&g, &p, &c, &three, &PromptTemplate::counterfactual(), &SamplingParams::default())
                .unwrap()
                .len(),
            3
        );
    }

    #[test]
    fn unparseable_revision_carries_raw_text() {
        let (g, p) = lint();
        let c = Condition::new("x", None).unwrap();
        let err = sample_counterfactual(&g, &p, &c, &fixed("sorry"), &PromptTemplate::counterfactual(), &SamplingParams::default())
            .unwrap_err();
        assert!(matches!(err, DatagenError::Unparseable { ref raw, .. } if raw == "sorry"));
    }
}
