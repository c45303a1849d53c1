use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::acg::{Acg, Action, ActionId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum Predicate {
    Equals(String),
    Prefix(String),
    Regex(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    /// Action attribute, or one of `@doc`, `@issuer`, `@timestamp`, `@app`.
    pub attribute: String,
    pub predicate: Predicate,
}

/// A named filter. An action matches when every criterion holds; views
/// exclude matching actions and everything they enable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub name: String,
    pub criteria: Vec<Criterion>,
}

impl FilterSpec {
    pub fn new(name: impl Into<String>) -> Self {
        FilterSpec {
            name: name.into(),
            criteria: Vec::new(),
        }
    }

    pub fn with(mut self, attribute: impl Into<String>, predicate: Predicate) -> Self {
        self.criteria.push(Criterion {
            attribute: attribute.into(),
            predicate,
        });
        self
    }

    /// Filter selecting exactly one action.
    pub fn single(name: impl Into<String>, id: &ActionId) -> Self {
        FilterSpec::new(name)
            .with("@doc", Predicate::Equals(id.doc.to_string()))
            .with("@issuer", Predicate::Equals(id.issuer.to_string()))
            .with("@timestamp", Predicate::Equals(id.timestamp.to_string()))
    }

    pub fn compile(&self) -> Result<CompiledFilter, regex::Error> {
        let criteria = self
            .criteria
            .iter()
            .map(|c| {
                let m = match &c.predicate {
                    Predicate::Equals(v) => Matcher::Equals(v.clone()),
                    Predicate::Prefix(v) => Matcher::Prefix(v.clone()),
                    Predicate::Regex(v) => Matcher::Regex(Regex::new(v)?),
                };
                Ok((c.attribute.clone(), m))
            })
            .collect::<Result<_, regex::Error>>()?;
        Ok(CompiledFilter { criteria })
    }
}

#[derive(Debug)]
enum Matcher {
    Equals(String),
    Prefix(String),
    Regex(Regex),
}

#[derive(Debug)]
pub struct CompiledFilter {
    criteria: Vec<(String, Matcher)>,
}

impl CompiledFilter {
    /// A filter without criteria matches nothing.
    pub fn matches(&self, action: &Action) -> bool {
        !self.criteria.is_empty()
            && self.criteria.iter().all(|(attr, m)| {
                let Some(value) = action.attribute(attr) else {
                    return false;
                };
                match m {
                    Matcher::Equals(v) => value == v.as_str(),
                    Matcher::Prefix(v) => value.starts_with(v.as_str()),
                    Matcher::Regex(r) => r.is_match(&value),
                }
            })
    }

    /// Actions of `acg` matched directly (not their closure).
    pub fn matching(&self, acg: &Acg) -> BTreeSet<ActionId> {
        acg.actions()
            .filter(|a| self.matches(a))
            .map(|a| a.id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_are_conjunctive() {
        let a = Action::new(ActionId::new("d", "alice", 3), "srda").with_attr("op", "insert");
        let f = FilterSpec::new("f")
            .with("op", Predicate::Equals("insert".into()))
            .with("@issuer", Predicate::Prefix("al".into()))
            .compile()
            .unwrap();
        assert!(f.matches(&a));
        let g = FilterSpec::new("g")
            .with("op", Predicate::Equals("insert".into()))
            .with("@issuer", Predicate::Regex("^bob$".into()))
            .compile()
            .unwrap();
        assert!(!g.matches(&a));
        assert!(FilterSpec::single("s", &a.id).compile().unwrap().matches(&a));
        assert!(!FilterSpec::new("empty").compile().unwrap().matches(&a));
    }

    #[test]
    fn serializes_readably() {
        let f = FilterSpec::new("f").with("op", Predicate::Prefix("ins".into()));
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(
            json,
            r#"{"name":"f","criteria":[{"attribute":"op","predicate":{"op":"prefix","value":"ins"}}]}"#
        );
        assert_eq!(serde_json::from_str::<FilterSpec>(&json).unwrap(), f);
    }
}
