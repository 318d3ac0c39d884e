use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::bn::{DiscreteBN, Evidence};
use crate::error::{Error, Result};

/// A finding on one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Finding {
    pub node: String,
    #[serde(flatten)]
    pub condition: Condition,
}

/// What is known about a node: an observed value (mapped to its interval),
/// a bound, or state labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Condition {
    Value { value: f64 },
    Above { above: f64 },
    Below { below: f64 },
    State { state: String },
    States { states: Vec<String> },
}

impl Finding {
    pub fn value(node: &str, value: f64) -> Self {
        Self {
            node: node.into(),
            condition: Condition::Value { value },
        }
    }

    pub fn state(node: &str, state: &str) -> Self {
        Self {
            node: node.into(),
            condition: Condition::State { state: state.into() },
        }
    }

    /// Admissible state indices of the node.
    pub fn states(&self, bn: &DiscreteBN) -> Result<Vec<usize>> {
        let n = bn.node(&self.node)?;
        let interval = || {
            n.scheme
                .as_ref()
                .ok_or_else(|| Error::Network(format!("node `{}` has no interval states", self.node)))
        };
        let label = |l: &str| {
            n.state_index(l)
                .ok_or_else(|| Error::Network(format!("node `{}` has no state `{l}`", self.node)))
        };
        let states = match &self.condition {
            Condition::Value { value } => {
                let s = interval()?;
                vec![s
                    .state_of(*value)
                    .ok_or_else(|| Error::InconsistentEvidence(format!("{value} lies outside the states of `{}`", self.node)))?]
            }
            Condition::Above { above } => interval()?.states_above(*above),
            Condition::Below { below } => interval()?.states_below(*below),
            Condition::State { state } => vec![label(state)?],
            Condition::States { states } => states.iter().map(|s| label(s)).collect::<Result<_>>()?,
        };
        if states.is_empty() {
            return Err(Error::InconsistentEvidence(format!("finding on `{}` admits no state", self.node)));
        }
        Ok(states)
    }
}

/// Resolve findings against a network; repeated findings on a node intersect.
pub fn resolve_findings(bn: &DiscreteBN, findings: &[Finding]) -> Result<Evidence> {
    let mut e = Evidence::new();
    for f in findings {
        e.restrict(&f.node, &f.states(bn)?);
    }
    bn.check_evidence(&e)?;
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EvidenceStep {
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub findings: Vec<Finding>,
}

/// A sequence of evidence cases for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EvidenceScript {
    /// Model the script was written for, checked when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default)]
    pub description: String,
    /// Each step adds to the findings of the previous ones; otherwise steps
    /// are independent cases.
    #[serde(default = "yes")]
    pub cumulative: bool,
    pub steps: Vec<EvidenceStep>,
}

fn yes() -> bool {
    true
}

impl EvidenceScript {
    pub fn step(&self, label: &str) -> Result<&EvidenceStep> {
        self.steps
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| Error::Model(format!("no evidence step `{label}`")))
    }

    /// Findings in force at each step.
    pub fn findings_by_step(&self) -> Vec<(String, Vec<Finding>)> {
        let mut acc: Vec<Finding> = Vec::new();
        self.steps
            .iter()
            .map(|s| {
                if self.cumulative {
                    acc.extend(s.findings.iter().cloned());
                    (s.label.clone(), acc.clone())
                } else {
                    (s.label.clone(), s.findings.clone())
                }
            })
            .collect()
    }

    /// Evidence in force at each step.
    pub fn resolve(&self, bn: &DiscreteBN) -> Result<Vec<(String, Evidence)>> {
        self.findings_by_step()
            .into_iter()
            .map(|(l, f)| resolve_findings(bn, &f).map(|e| (l, e)))
            .collect()
    }

    /// Evidence in force at the step labelled `label`.
    pub fn evidence_at(&self, bn: &DiscreteBN, label: &str) -> Result<Evidence> {
        self.step(label)?;
        self.resolve(bn)?
            .into_iter()
            .find(|(l, _)| l == label)
            .map(|(_, e)| e)
            .ok_or_else(|| Error::Model(format!("no evidence step `{label}`")))
    }
}
