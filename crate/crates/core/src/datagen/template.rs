use std::path::Path;

use regex::Regex;

use super::DatagenError;

pub const CONDITION_TEMPLATE: &str = include_str!("../../assets/templates/condition.txt");
pub const COUNTERFACTUAL_TEMPLATE: &str = include_str!("../../assets/templates/counterfactual.txt");

/// A prompt with `{name}` slots. Lines starting with `#` are header
/// comments and are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    body: String,
}

fn slot_re() -> Regex {
    Regex::new(r"\{([a-z_]+)\}").expect("static regex")
}

impl PromptTemplate {
    pub fn parse(name: &str, text: &str) -> Self {
        let body = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        Self {
            name: name.to_string(),
            body: body.trim_start_matches('\n').to_string(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, DatagenError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatagenError::Template {
            name: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::parse(&path.display().to_string(), &text))
    }

    pub fn condition() -> Self {
        Self::parse("condition", CONDITION_TEMPLATE)
    }

    pub fn counterfactual() -> Self {
        Self::parse("counterfactual", COUNTERFACTUAL_TEMPLATE)
    }

    pub fn slots(&self) -> Vec<String> {
        let mut s: Vec<String> = slot_re().captures_iter(&self.body).map(|c| c[1].to_string()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Fills every slot; a slot without a value is an error.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, DatagenError> {
        let mut missing = Vec::new();
        let out = slot_re().replace_all(&self.body, |c: &regex::Captures| {
            match values.iter().find(|(k, _)| *k == &c[1]) {
                Some((_, v)) => v.to_string(),
                None => {
                    missing.push(c[1].to_string());
                    String::new()
                }
            }
        });
        if missing.is_empty() {
            Ok(out.into_owned())
        } else {
            Err(DatagenError::Template {
                name: self.name.clone(),
                message: format!("no value for slots {missing:?}"),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_templates_have_expected_slots() {
        assert_eq!(PromptTemplate::condition().slots(), vec!["goal", "plan"]);
        assert_eq!(PromptTemplate::counterfactual().slots(), vec!["condition", "goal", "plan"]);
        assert!(!PromptTemplate::condition().render(&[("goal", "g"), ("plan", "p")]).unwrap().contains('#'));
    }

    #[test]
    fn missing_slot_is_an_error() {
        let t = PromptTemplate::parse("t", "Goal: {goal}\n{plan}");
        assert!(t.render(&[("goal", "x")]).is_err());
        assert_eq!(t.render(&[("goal", "x"), ("plan", "y")]).unwrap(), "Goal: x\ny");
    }
}
