//! Declarative model files: variables, limit states, schemes and node wiring
//! compiled into a discrete network, plus evidence scripts and the bundled
//! scenarios.

mod build;
mod evidence;
mod expand;
mod query;
mod spec;
mod verify;

pub use build::{model_hash, CompiledModel, Model, BINARY_STATES, FORMAT_VERSION};
pub use evidence::{resolve_findings, Condition, EvidenceScript, EvidenceStep, Finding};
pub use expand::{expand, substitute};
pub use query::{marginal_gains, recommend, timeline, Recommendation, Timeline, TimelineRow};
pub use spec::{
    DistSpec, FamilyName, GroupSpec, MemberNode, ModelFile, MomentSpec, NodeItem, RepeatRange, SchemeSpec, SrmParent,
    TimelineKind, TimelineSpec,
};
pub use verify::{verify, SkippedStep, VerifyCheck, VerifyReport};

use crate::error::{Error, Result};

fn syntax(e: serde_json::Error) -> Error {
    Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parse and validate a model definition.
pub fn load_model(text: &str) -> Result<Model> {
    Model::new(parse_model_file(text)?)
}

/// Parse a model definition without validating it.
pub fn parse_model_file(text: &str) -> Result<ModelFile> {
    serde_json::from_str(text).map_err(syntax)
}

/// Parse an evidence script.
pub fn load_evidence(text: &str) -> Result<EvidenceScript> {
    serde_json::from_str(text).map_err(syntax)
}

/// JSON Schema of model files.
pub fn model_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ModelFile)).expect("schema serializes")
}

/// JSON Schema of evidence scripts.
pub fn evidence_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(EvidenceScript)).expect("schema serializes")
}

/// A bundled model with its evidence scripts.
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub model: &'static str,
    pub evidence: &'static [(&'static str, &'static str)],
}

impl Scenario {
    pub fn load(&self) -> Result<Model> {
        load_model(self.model)
    }

    pub fn evidence(&self, name: &str) -> Result<EvidenceScript> {
        let (_, text) = self
            .evidence
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Model(format!("scenario `{}` has no evidence script `{name}`", self.name)))?;
        load_evidence(text)
    }
}

pub const SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "frame",
        summary: "Two-storey portal frame with correlated member capacities and noisy capacity measurements",
        model: include_str!("../../scenarios/frame.json"),
        evidence: &[("measurements", include_str!("../../scenarios/frame.evidence.json"))],
    },
    Scenario {
        name: "lifecycle",
        summary: "Frame capacity under annual storm loads over twenty years, with a replacement decision",
        model: include_str!("../../scenarios/lifecycle.json"),
        evidence: &[
            ("decision", include_str!("../../scenarios/lifecycle.decision.json")),
            ("history", include_str!("../../scenarios/lifecycle.history.json")),
        ],
    },
    Scenario {
        name: "infranet",
        summary: "Three deteriorating structures and three controls linking a source to a terminal over ten years",
        model: include_str!("../../scenarios/infranet.json"),
        evidence: &[("inspections", include_str!("../../scenarios/infranet.evidence.json"))],
    },
];

pub fn scenario(name: &str) -> Result<&'static Scenario> {
    SCENARIOS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Model(format!("unknown scenario `{name}`")))
}
