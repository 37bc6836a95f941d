//! Goals, steps, plans and the planning-task instances built from them.
//!
//! Everything here is an immutable value. Texts are trimmed on construction
//! and may not contain line breaks, which keeps the line-oriented
//! `Step k: ...` surface format unambiguous.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("{field} text is empty")]
    EmptyText { field: &'static str },
    #[error("{field} text contains a line break: {text:?}")]
    Multiline { field: &'static str, text: String },
    #[error("step index must be >= 1")]
    ZeroIndex,
    #[error("step indices are not contiguous: expected {expected}, found {found}")]
    NonContiguous { expected: usize, found: usize },
    #[error("a terminal plan needs at least one step")]
    EmptyTerminal,
    #[error("{kind} instance requires field `{field}`")]
    MissingField { kind: TaskKind, field: &'static str },
    #[error("{kind} instance must not carry field `{field}`")]
    UnexpectedField { kind: TaskKind, field: &'static str },
    #[error("duplicate step numbers: {0:?}")]
    DuplicateSteps(Vec<usize>),
    #[error("unknown task kind {0:?}")]
    UnknownKind(String),
}

fn clean_text(field: &'static str, text: &str) -> Result<String, PlanError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(PlanError::EmptyText { field });
    }
    if trimmed.contains(['\n', '\r']) {
        return Err(PlanError::Multiline {
            field,
            text: trimmed.to_string(),
        });
    }
    Ok(trimmed.to_string())
}

/// A high-level goal such as "hire a dog walker".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Goal {
    id: String,
    text: String,
}

impl Goal {
    pub fn new(id: impl Into<String>, text: &str) -> Result<Self, PlanError> {
        Ok(Self {
            id: id.into(),
            text: clean_text("goal", text)?,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// One step of a plan, numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    index: usize,
    text: String,
}

impl Step {
    pub fn new(index: usize, text: &str) -> Result<Self, PlanError> {
        if index == 0 {
            return Err(PlanError::ZeroIndex);
        }
        Ok(Self {
            index,
            text: clean_text("step", text)?,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Same text at a different position.
    pub fn at(&self, index: usize) -> Step {
        assert!(index >= 1, "step index must be >= 1");
        Step {
            index,
            text: self.text.clone(),
        }
    }
}

/// Builds 1-based contiguous steps from texts.
pub fn steps_from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Vec<Step>, PlanError> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Step::new(i + 1, t.as_ref()))
        .collect()
}

pub fn step_texts(steps: &[Step]) -> Vec<String> {
    steps.iter().map(|s| s.text.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Plan {
    steps: Vec<Step>,
    terminal: bool,
}

impl Plan {
    pub fn new(steps: Vec<Step>, terminal: bool) -> Result<Self, PlanError> {
        for (i, step) in steps.iter().enumerate() {
            if step.index != i + 1 {
                return Err(PlanError::NonContiguous {
                    expected: i + 1,
                    found: step.index,
                });
            }
        }
        if terminal && steps.is_empty() {
            return Err(PlanError::EmptyTerminal);
        }
        Ok(Self { steps, terminal })
    }

    /// A completed plan from step texts.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Self, PlanError> {
        let steps = steps_from_texts(texts)?;
        let terminal = !steps.is_empty();
        Self::new(steps, terminal)
    }

    pub fn empty() -> Self {
        Self {
            steps: Vec::new(),
            terminal: false,
        }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn texts(&self) -> Vec<String> {
        step_texts(&self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// The `Step k: text` lines, newline separated.
    pub fn to_step_lines(&self) -> String {
        render_step_lines(&self.steps)
    }
}

pub fn render_step_lines(steps: &[Step]) -> String {
    steps
        .iter()
        .map(|s| format!("Step {}: {}", s.index, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Condition families; metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionCategory {
    Location,
    Equipment,
    Safety,
    UserSpecification,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    text: String,
    category: Option<ConditionCategory>,
}

impl Condition {
    pub fn new(text: &str, category: Option<ConditionCategory>) -> Result<Self, PlanError> {
        Ok(Self {
            text: clean_text("condition", text)?,
            category,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn category(&self) -> Option<ConditionCategory> {
        self.category
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    #[serde(alias = "pl")]
    Planning,
    #[serde(alias = "cp")]
    CounterfactualPlanning,
    #[serde(alias = "cpr")]
    CounterfactualRevision,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::Planning,
        TaskKind::CounterfactualPlanning,
        TaskKind::CounterfactualRevision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Planning => "planning",
            TaskKind::CounterfactualPlanning => "counterfactual-planning",
            TaskKind::CounterfactualRevision => "counterfactual-revision",
        }
    }

    pub fn needs_condition(self) -> bool {
        !matches!(self, TaskKind::Planning)
    }

    pub fn needs_initial_plan(self) -> bool {
        matches!(self, TaskKind::CounterfactualRevision)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "planning" | "pl" => Ok(TaskKind::Planning),
            "counterfactual-planning" | "cp" => Ok(TaskKind::CounterfactualPlanning),
            "counterfactual-revision" | "cpr" => Ok(TaskKind::CounterfactualRevision),
            other => Err(PlanError::UnknownKind(other.to_string())),
        }
    }
}

/// One task input. Construct through [`PlanningInstance::new`] so the
/// presence rules of the task kind are always satisfied.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlanningInstance {
    id: String,
    kind: TaskKind,
    goal: Goal,
    condition: Option<Condition>,
    initial_plan: Option<Plan>,
    reference: Option<Plan>,
}

impl PlanningInstance {
    pub fn new(
        id: impl Into<String>,
        kind: TaskKind,
        goal: Goal,
        condition: Option<Condition>,
        initial_plan: Option<Plan>,
    ) -> Result<Self, PlanError> {
        check_presence(kind, condition.is_some(), initial_plan.is_some())?;
        if let Some(plan) = &initial_plan {
            if plan.is_empty() {
                return Err(PlanError::MissingField {
                    kind,
                    field: "initial_plan",
                });
            }
        }
        Ok(Self {
            id: id.into(),
            kind,
            goal,
            condition,
            initial_plan,
            reference: None,
        })
    }

    pub fn planning(id: impl Into<String>, goal: &str) -> Result<Self, PlanError> {
        let id = id.into();
        let goal = Goal::new(id.clone(), goal)?;
        Self::new(id, TaskKind::Planning, goal, None, None)
    }

    /// Attaches the expected output plan (y or y').
    pub fn with_reference(mut self, plan: Plan) -> Self {
        self.reference = Some(plan);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn goal(&self) -> &Goal {
        &self.goal
    }

    pub fn condition(&self) -> Option<&Condition> {
        self.condition.as_ref()
    }

    pub fn initial_plan(&self) -> Option<&Plan> {
        self.initial_plan.as_ref()
    }

    pub fn reference(&self) -> Option<&Plan> {
        self.reference.as_ref()
    }

    /// Canonical prompt for the step proposer given the plan-so-far.
    ///
    /// Each task kind has exactly one wording:
    ///
    /// ```text
    /// Goal: <goal>
    /// Condition: <condition>          (counterfactual kinds)
    /// Initial plan:                   (revision only)
    /// Initial step 1: <step>
    /// Revised plan:                   (revision only)
    /// Step 1: <prefix step>
    /// Step t:
    /// ```
    pub fn render_template(&self, prefix: &[Step]) -> String {
        let mut out = format!("Goal: {}\n", self.goal.text);
        if let Some(c) = &self.condition {
            out.push_str(&format!("Condition: {}\n", c.text));
        }
        if let Some(initial) = &self.initial_plan {
            out.push_str("Initial plan:\n");
            for s in &initial.steps {
                out.push_str(&format!("Initial step {}: {}\n", s.index, s.text));
            }
            out.push_str("Revised plan:\n");
        }
        for (i, s) in prefix.iter().enumerate() {
            out.push_str(&format!("Step {}: {}\n", i + 1, s.text));
        }
        out.push_str(&format!("Step {}:", prefix.len() + 1));
        out
    }
}

/// Field presence rules per task kind.
pub fn check_presence(
    kind: TaskKind,
    has_condition: bool,
    has_initial_plan: bool,
) -> Result<(), PlanError> {
    match (kind.needs_condition(), has_condition) {
        (true, false) => return Err(PlanError::MissingField { kind, field: "condition" }),
        (false, true) => return Err(PlanError::UnexpectedField { kind, field: "condition" }),
        _ => {}
    }
    match (kind.needs_initial_plan(), has_initial_plan) {
        (true, false) => Err(PlanError::MissingField { kind, field: "initial_plan" }),
        (false, true) => Err(PlanError::UnexpectedField { kind, field: "initial_plan" }),
        _ => Ok(()),
    }
}

fn step_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*Step\s+(\d+)\s*:\s*(.*?)\s*$").expect("valid regex"))
}

/// Parses `Step k: text` lines into a plan, sorted by `k` and renumbered
/// from 1. Other lines, and step lines with no text, are ignored.
pub fn parse_plan(text: &str) -> Result<Plan, PlanError> {
    let mut found: BTreeMap<usize, String> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for line in text.lines() {
        let Some(caps) = step_line_regex().captures(line) else {
            continue;
        };
        let content = caps[2].trim();
        if content.is_empty() {
            continue;
        }
        let Ok(k) = caps[1].parse::<usize>() else {
            continue;
        };
        if found.insert(k, content.to_string()).is_some() && !duplicates.contains(&k) {
            duplicates.push(k);
        }
    }
    if !duplicates.is_empty() {
        duplicates.sort_unstable();
        return Err(PlanError::DuplicateSteps(duplicates));
    }
    let texts: Vec<String> = found.into_values().collect();
    Plan::from_texts(&texts)
}

/// Line-delimited instance record: `{id, kind, goal, condition?, initial_plan?, plan?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub kind: TaskKind,
    pub goal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_plan: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Vec<String>>,
}

impl InstanceRecord {
    pub fn from_instance(instance: &PlanningInstance, plan: Option<&Plan>) -> Self {
        Self {
            id: instance.id.clone(),
            kind: instance.kind,
            goal: instance.goal.text.clone(),
            condition: instance.condition.as_ref().map(|c| c.text.clone()),
            initial_plan: instance.initial_plan.as_ref().map(Plan::texts),
            plan: plan.or(instance.reference.as_ref()).map(Plan::texts),
        }
    }

    pub fn to_instance(&self) -> Result<PlanningInstance, PlanError> {
        let goal = Goal::new(self.id.clone(), &self.goal)?;
        let condition = self
            .condition
            .as_deref()
            .map(|c| Condition::new(c, None))
            .transpose()?;
        let initial_plan = self
            .initial_plan
            .as_deref()
            .map(Plan::from_texts)
            .transpose()?;
        let mut instance = PlanningInstance::new(self.id.clone(), self.kind, goal, condition, initial_plan)?;
        if let Some(plan) = &self.plan {
            instance = instance.with_reference(Plan::from_texts(plan)?);
        }
        Ok(instance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond() -> Condition {
        Condition::new("the store is closed", Some(ConditionCategory::Location)).unwrap()
    }

    #[test]
    fn planning_template_matches_prompt_surface() {
        let inst = PlanningInstance::planning("g1", "hire a dog walker").unwrap();
        let text = inst.render_template(&[]);
        assert!(text.ends_with("Goal: hire a dog walker\nStep 1:"));
    }

    #[test]
    fn template_with_prefix() {
        let inst = PlanningInstance::planning("g", "x").unwrap();
        let prefix = steps_from_texts(&["a"]).unwrap();
        let text = inst.render_template(&prefix);
        assert!(text.contains("Step 1: a"));
        assert!(text.ends_with("Step 2:"));
    }

    #[test]
    fn revision_template_includes_everything_in_order() {
        let goal = Goal::new("g", "empty lint filter").unwrap();
        let initial = Plan::from_texts(&["find lint filter", "remove lint filter", "clean lint filter"]).unwrap();
        let inst = PlanningInstance::new("g", TaskKind::CounterfactualRevision, goal, Some(cond()), Some(initial))
            .unwrap();
        let text = inst.render_template(&[]);
        let positions: Vec<usize> = [
            "empty lint filter",
            "the store is closed",
            "find lint filter",
            "remove lint filter",
            "clean lint filter",
        ]
        .iter()
        .map(|needle| text.find(needle).unwrap())
        .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{text}");
        assert!(text.ends_with("Revised plan:\nStep 1:"));
    }

    #[test]
    fn category_does_not_affect_rendering() {
        let mk = |cat| {
            let goal = Goal::new("g", "x").unwrap();
            let c = Condition::new("c", cat).unwrap();
            PlanningInstance::new("g", TaskKind::CounterfactualPlanning, goal, Some(c), None)
                .unwrap()
                .render_template(&[])
        };
        assert_eq!(mk(None), mk(Some(ConditionCategory::Safety)));
    }

    #[test]
    fn presence_grid_is_exact() {
        let mut accepted = Vec::new();
        for kind in TaskKind::ALL {
            for has_c in [false, true] {
                for has_y in [false, true] {
                    let goal = Goal::new("g", "goal").unwrap();
                    let c = has_c.then(cond);
                    let y = has_y.then(|| Plan::from_texts(&["a"]).unwrap());
                    match PlanningInstance::new("g", kind, goal, c, y) {
                        Ok(_) => accepted.push((kind, has_c, has_y)),
                        Err(PlanError::MissingField { .. } | PlanError::UnexpectedField { .. }) => {}
                        Err(other) => panic!("unexpected error {other}"),
                    }
                }
            }
        }
        assert_eq!(
            accepted,
            vec![
                (TaskKind::Planning, false, false),
                (TaskKind::CounterfactualPlanning, true, false),
                (TaskKind::CounterfactualRevision, true, true),
            ]
        );
    }

    #[test]
    fn missing_condition_names_field() {
        let goal = Goal::new("g", "goal").unwrap();
        let err = PlanningInstance::new("g", TaskKind::CounterfactualPlanning, goal, None, None).unwrap_err();
        assert!(err.to_string().contains("condition"));
    }

    #[test]
    fn parse_basic_and_empty() {
        let plan = parse_plan("Step 1: a\nStep 2: b").unwrap();
        assert_eq!(plan.texts(), vec!["a", "b"]);
        let empty = parse_plan("").unwrap();
        assert!(empty.is_empty());
        assert!(!empty.is_terminal());
    }

    #[test]
    fn parse_sorts_and_reindexes() {
        let plan = parse_plan("Step 2: b\nnoise\nStep 1: a\nStep 7: c").unwrap();
        assert_eq!(plan.texts(), vec!["a", "b", "c"]);
        assert_eq!(plan.steps()[2].index(), 3);
    }

    #[test]
    fn parse_rejects_duplicates() {
        let err = parse_plan("Step 1: a\nStep 1: b\nStep 2: c\nStep 2: d").unwrap_err();
        assert_eq!(err, PlanError::DuplicateSteps(vec![1, 2]));
    }

    #[test]
    fn step_text_rules() {
        assert_eq!(Step::new(1, "  a  ").unwrap().text(), "a");
        assert!(matches!(Step::new(1, "a\nb"), Err(PlanError::Multiline { .. })));
        assert!(matches!(Step::new(1, "   "), Err(PlanError::EmptyText { .. })));
        assert_eq!(Step::new(0, "a"), Err(PlanError::ZeroIndex));
    }

    #[test]
    fn record_round_trip() {
        let goal = Goal::new("r1", "empty lint filter").unwrap();
        let inst = PlanningInstance::new(
            "r1",
            TaskKind::CounterfactualRevision,
            goal,
            Some(cond()),
            Some(Plan::from_texts(&["a", "b"]).unwrap()),
        )
        .unwrap();
        let rec = InstanceRecord::from_instance(&inst, None);
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"id":"r1","kind":"counterfactual-revision","goal":"empty lint filter","condition":"the store is closed","initial_plan":["a","b"]}"#
        );
        let back: InstanceRecord = serde_json::from_str(&line).unwrap();
        let inst2 = back.to_instance().unwrap();
        assert_eq!(inst2.render_template(&[]), inst.render_template(&[]));
    }
}
