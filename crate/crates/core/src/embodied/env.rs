use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EmbodiedError;

pub const HOUSEHOLD_ENV: &str = include_str!("../../assets/embodied/household.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateRule {
    /// Argument position, 0-based.
    pub arg: usize,
    pub pred: String,
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbSpec {
    pub name: String,
    /// Surface form with `{0}`, `{1}` standing for argument surfaces.
    pub template: String,
    /// Properties each argument must have.
    pub slots: Vec<Vec<String>>,
    #[serde(default)]
    pub preconditions: Vec<PredicateRule>,
    #[serde(default)]
    pub effects: Vec<PredicateRule>,
}

impl VerbSpec {
    pub fn arity(&self) -> usize {
        self.slots.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub surface: String,
    #[serde(default)]
    pub properties: Vec<String>,
    /// Initial predicate values; anything unlisted starts false.
    #[serde(default)]
    pub state: BTreeMap<String, bool>,
}

/// Objects with boolean state, and verbs with preconditions and effects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniEnv {
    pub objects: Vec<ObjectSpec>,
    pub verbs: Vec<VerbSpec>,
}

/// A verb applied to object names, written `Verb(a, b)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Action {
    pub verb: String,
    pub args: Vec<String>,
}

impl Action {
    pub fn new(verb: &str, args: &[&str]) -> Self {
        Self {
            verb: verb.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.verb, self.args.join(", "))
    }
}

impl FromStr for Action {
    type Err = EmbodiedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EmbodiedError::BadAction(s.to_string());
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let verb = s[..open].trim();
        if verb.is_empty() || !verb.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(bad());
        }
        let args: Vec<String> = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(|a| a.trim().to_string()).collect()
        };
        if args.iter().any(String::is_empty) {
            return Err(bad());
        }
        Ok(Self {
            verb: verb.to_string(),
            args,
        })
    }
}

impl TryFrom<String> for Action {
    type Error = EmbodiedError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Action> for String {
    fn from(a: Action) -> String {
        a.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub action: Action,
    pub surface: String,
}

/// Every grounded action of an environment with its surface form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionVocab {
    pub entries: Vec<VocabEntry>,
}

impl ActionVocab {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn surface(&self, action: &Action) -> Option<&str> {
        self.entries.iter().find(|e| &e.action == action).map(|e| e.surface.as_str())
    }
}

/// Per-object predicate values during a simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    values: BTreeMap<(String, String), bool>,
}

impl EnvState {
    pub fn get(&self, object: &str, pred: &str) -> bool {
        self.values
            .get(&(object.to_string(), pred.to_string()))
            .copied()
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub executable: bool,
    /// 1-based index of the first action whose preconditions failed.
    pub first_failure: Option<usize>,
}

impl MiniEnv {
    pub fn from_json(text: &str) -> Result<Self, EmbodiedError> {
        let env: MiniEnv = serde_json::from_str(text).map_err(|e| EmbodiedError::Env(e.to_string()))?;
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self, EmbodiedError> {
        let text = std::fs::read_to_string(path).map_err(|e| EmbodiedError::Env(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn household() -> Self {
        Self::from_json(HOUSEHOLD_ENV).expect("bundled environment is valid")
    }

    pub fn validate(&self) -> Result<(), EmbodiedError> {
        let mut names = HashSet::new();
        for o in &self.objects {
            if !names.insert(o.name.as_str()) {
                return Err(EmbodiedError::Env(format!("duplicate object {}", o.name)));
            }
        }
        let mut verbs = HashSet::new();
        for v in &self.verbs {
            if !verbs.insert(v.name.as_str()) {
                return Err(EmbodiedError::Env(format!("duplicate verb {}", v.name)));
            }
            for r in v.preconditions.iter().chain(&v.effects) {
                if r.arg >= v.arity() {
                    return Err(EmbodiedError::Env(format!("verb {}: rule on argument {} of {}", v.name, r.arg, v.arity())));
                }
            }
            for i in 0..v.arity() {
                if !v.template.contains(&format!("{{{i}}}")) {
                    return Err(EmbodiedError::Env(format!("verb {}: template lacks {{{i}}}", v.name)));
                }
            }
        }
        Ok(())
    }

    fn object(&self, name: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.name == name)
    }

    fn verb(&self, name: &str) -> Option<&VerbSpec> {
        self.verbs.iter().find(|v| v.name == name)
    }

    pub fn initial_state(&self) -> EnvState {
        let mut values = BTreeMap::new();
        for o in &self.objects {
            for (p, v) in &o.state {
                values.insert((o.name.clone(), p.clone()), *v);
            }
        }
        EnvState { values }
    }

    /// Grounds every verb over distinct objects that have the slot
    /// properties. Surface forms must come out unique.
    pub fn vocab(&self) -> Result<ActionVocab, EmbodiedError> {
        let mut entries = Vec::new();
        for v in &self.verbs {
            let candidates: Vec<Vec<&ObjectSpec>> = v
                .slots
                .iter()
                .map(|req| {
                    self.objects
                        .iter()
                        .filter(|o| req.iter().all(|p| o.properties.contains(p)))
                        .collect()
                })
                .collect();
            let mut combos: Vec<Vec<&ObjectSpec>> = vec![Vec::new()];
            for slot in &candidates {
                let mut next = Vec::new();
                for c in &combos {
                    for o in slot.iter().filter(|o| !c.iter().any(|x| x.name == o.name)) {
                        let mut grown = c.clone();
                        grown.push(*o);
                        next.push(grown);
                    }
                }
                combos = next;
            }
            for combo in combos {
                let mut surface = v.template.clone();
                for (i, o) in combo.iter().enumerate() {
                    surface = surface.replace(&format!("{{{i}}}"), &o.surface);
                }
                entries.push(VocabEntry {
                    action: Action {
                        verb: v.name.clone(),
                        args: combo.iter().map(|o| o.name.clone()).collect(),
                    },
                    surface,
                });
            }
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.surface.as_str()) {
                return Err(EmbodiedError::Env(format!("surface form {:?} is not unique", e.surface)));
            }
        }
        Ok(ActionVocab { entries })
    }

    fn check(&self, action: &Action) -> Result<&VerbSpec, EmbodiedError> {
        let verb = self
            .verb(&action.verb)
            .ok_or_else(|| EmbodiedError::UnknownVerb(action.verb.clone()))?;
        if verb.arity() != action.args.len() {
            return Err(EmbodiedError::Arity {
                action: action.to_string(),
                expected: verb.arity(),
            });
        }
        for a in &action.args {
            if self.object(a).is_none() {
                return Err(EmbodiedError::UnknownObject(a.clone()));
            }
        }
        Ok(verb)
    }

    /// Applies `action` if its preconditions hold. Returns whether it ran.
    pub fn step(&self, state: &mut EnvState, action: &Action) -> Result<bool, EmbodiedError> {
        let verb = self.check(action)?;
        let ok = verb
            .preconditions
            .iter()
            .all(|r| state.get(&action.args[r.arg], &r.pred) == r.value);
        if ok {
            for r in &verb.effects {
                state.values.insert((action.args[r.arg].clone(), r.pred.clone()), r.value);
            }
        }
        Ok(ok)
    }

    /// Runs `program` from the initial state, stopping at the first
    /// action whose preconditions fail.
    pub fn execute(&self, program: &[Action]) -> Result<Execution, EmbodiedError> {
        for a in program {
            self.check(a)?;
        }
        let mut state = self.initial_state();
        for (i, a) in program.iter().enumerate() {
            if !self.step(&mut state, a)? {
                return Ok(Execution {
                    executable: false,
                    first_failure: Some(i + 1),
                });
            }
        }
        Ok(Execution {
            executable: true,
            first_failure: None,
        })
    }
}

/// Fraction of `programs` that execute fully.
pub fn executability(programs: &[Vec<Action>], env: &MiniEnv) -> Result<f64, EmbodiedError> {
    if programs.is_empty() {
        return Ok(1.0);
    }
    let mut ok = 0usize;
    for p in programs {
        ok += usize::from(env.execute(p)?.executable);
    }
    Ok(ok as f64 / programs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv_env() -> MiniEnv {
        MiniEnv::from_json(
            r#"{
              "objects": [{"name": "tv", "surface": "tv", "properties": ["switchable"]}],
              "verbs": [
                {"name": "PlugIn", "template": "plug in {0}", "slots": [["switchable"]],
                 "preconditions": [{"arg": 0, "pred": "plugged", "value": false}],
                 "effects": [{"arg": 0, "pred": "plugged", "value": true}]},
                {"name": "SwitchOn", "template": "switch on {0}", "slots": [["switchable"]],
                 "preconditions": [{"arg": 0, "pred": "plugged", "value": true}],
                 "effects": [{"arg": 0, "pred": "on", "value": true}]}
              ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn switch_on_needs_plug_in() {
        let env = tv_env();
        let r = env.execute(&[Action::new("SwitchOn", &["tv"])]).unwrap();
        assert_eq!(r, Execution { executable: false, first_failure: Some(1) });
        let r = env
            .execute(&[Action::new("PlugIn", &["tv"]), Action::new("SwitchOn", &["tv"])])
            .unwrap();
        assert!(r.executable);
        assert!(env.execute(&[]).unwrap().executable);
    }

    #[test]
    fn unknown_object_is_an_error() {
        let env = tv_env();
        assert_eq!(
            env.execute(&[Action::new("SwitchOn", &["radio"])]),
            Err(EmbodiedError::UnknownObject("radio".into()))
        );
        assert!(matches!(env.execute(&[Action::new("SwitchOn", &[])]), Err(EmbodiedError::Arity { .. })));
    }

    #[test]
    fn action_text_round_trip() {
        let a = Action::new("PutIn", &["cup", "fridge"]);
        assert_eq!(a.to_string(), "PutIn(cup, fridge)");
        assert_eq!("PutIn(cup,fridge)".parse::<Action>().unwrap(), a);
        assert_eq!("Walk()".parse::<Action>().unwrap().args.len(), 0);
        assert!("Walk tv".parse::<Action>().is_err());
    }

    #[test]
    fn household_vocab_is_unique() {
        let env = MiniEnv::household();
        let vocab = env.vocab().unwrap();
        assert!(vocab.len() > 40);
        let mut bags = HashSet::new();
        for e in &vocab.entries {
            let mut t = super::super::embed::tokens(&e.surface);
            t.sort();
            assert!(bags.insert(t), "token multiset of {:?} repeats", e.surface);
        }
    }
}
