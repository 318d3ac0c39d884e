use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::compile::{CellRule, CellSolver, CompileOptions, IntervalScheme};
use crate::decide::DecisionSpec;
use crate::dists::{Distribution, Family, Spread};
use crate::error::{Error, Result};
use crate::infra::{NetworkTopology, SurvivalPolicy};

/// A model definition: continuous variables and limit states, discretization
/// schemes, and the discrete node wiring, plus optional decision, topology
/// and timeline declarations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Free-form remarks kept with the model (units, interpretation).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default)]
    pub variables: BTreeMap<String, DistSpec>,
    #[serde(default)]
    pub groups: Vec<GroupSpec>,
    /// Deterministic values, including capacity placeholders.
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    #[serde(default)]
    pub limit_states: BTreeMap<String, String>,
    #[serde(default)]
    pub schemes: BTreeMap<String, SchemeSpec>,
    #[serde(default)]
    pub options: CompileOptions,
    /// Node lists instantiated by `instance` items with bound placeholders.
    #[serde(default)]
    pub templates: BTreeMap<String, Vec<NodeItem>>,
    pub nodes: Vec<NodeItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<NetworkTopology>,
    /// Reliability timelines; the first is the default.
    #[serde(default)]
    pub timelines: Vec<TimelineSpec>,
}

/// Family name used in moment-based declarations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Normal,
    Lognormal,
    Gumbel,
    Gamma,
    Beta,
}

/// A distribution given either by its parameters or by family and moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum DistSpec {
    Moments(MomentSpec),
    Params(Distribution),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MomentSpec {
    pub family: FamilyName,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    /// Support of a Beta law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl DistSpec {
    pub fn resolve(&self) -> Result<Distribution> {
        match self {
            DistSpec::Params(d) => {
                d.validate()?;
                Ok(*d)
            }
            DistSpec::Moments(m) => {
                let spread = match (m.cov, m.std) {
                    (Some(c), None) => Spread::Cov(c),
                    (None, Some(s)) => Spread::Std(s),
                    _ => return Err(Error::Model("give exactly one of `cov` and `std`".into())),
                };
                let family = match m.family {
                    FamilyName::Normal => Family::Normal,
                    FamilyName::Lognormal => Family::Lognormal,
                    FamilyName::Gumbel => Family::Gumbel,
                    FamilyName::Gamma => Family::Gamma,
                    FamilyName::Beta => Family::Beta {
                        lower: m.lower.unwrap_or(0.0),
                        upper: m.upper.unwrap_or(1.0),
                    },
                };
                Distribution::from_moments(family, m.mean, spread)
            }
        }
    }
}

/// Equicorrelated lognormal members sharing one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    pub members: Vec<String>,
    pub marginal: DistSpec,
    pub rho: f64,
}

/// Interval borders as an explicit list or an inclusive `[start, step, end]`
/// range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub borders: Option<Vec<f64>>,
    #[serde(default)]
    pub tail: bool,
    #[serde(default)]
    pub fold_lower: bool,
}

impl SchemeSpec {
    pub fn resolve(&self) -> Result<IntervalScheme> {
        match (&self.range, &self.borders) {
            (Some([a, s, b]), None) => IntervalScheme::range(*a, *s, *b, self.tail, self.fold_lower),
            (None, Some(v)) => IntervalScheme::new(v.clone(), self.tail, self.fold_lower),
            _ => Err(Error::Model("a scheme needs exactly one of `range` and `borders`".into())),
        }
    }
}

/// A discretized parent of an SRM-built table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SrmParent {
    pub node: String,
    /// Variable of the reliability problem pinned by the node's state.
    pub variable: String,
}

/// A correlated member emitted by a `correlated` item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MemberNode {
    pub name: String,
    pub variable: String,
}

/// Inclusive integer range bound to a placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RepeatRange {
    pub var: String,
    pub from: i64,
    pub to: i64,
}

/// One entry of a node list. Strings may contain `{name}` or `{name±k}`
/// placeholders bound by enclosing `repeat` and `instance` items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeItem {
    /// Root node holding a discretized marginal.
    Marginal {
        name: String,
        /// A declared variable or group member.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variable: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distribution: Option<DistSpec>,
        scheme: String,
    },
    /// Discretized members of a common-factor group, as a chain in which each
    /// member depends on the earlier ones.
    Correlated {
        group: String,
        members: Vec<MemberNode>,
        scheme: String,
    },
    /// Binary failure node `(fail, survive)` of a series system of limit
    /// states, solved per parent cell.
    Srm {
        name: String,
        modes: Vec<String>,
        #[serde(default)]
        parents: Vec<SrmParent>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cell_rule: Option<CellRule>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        solver: Option<CellSolver>,
    },
    /// Discretized system capacity whose CDF at each border is a series
    /// failure probability with `placeholder` pinned to the border.
    Capacity {
        name: String,
        modes: Vec<String>,
        placeholder: String,
        scheme: String,
        #[serde(default)]
        parents: Vec<SrmParent>,
    },
    /// Additive-noise measurement of a discretized parent.
    Measurement {
        name: String,
        parent: String,
        scheme: String,
        noise: DistSpec,
    },
    /// Gumbel variable whose location is the parent's value.
    GumbelLocation {
        name: String,
        parent: String,
        alpha: f64,
        scheme: String,
    },
    /// `(fail, survive)` from `Pr(Q ≤ H)` with both uniform in their cells.
    /// With `previous` the node is cumulative: failure persists.
    Exceedance {
        name: String,
        capacity: String,
        load: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        previous: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        site_factor: Option<DistSpec>,
    },
    /// Non-structural component failing by a lognormal fragility of the
    /// site-scaled load.
    Fragility {
        name: String,
        load: String,
        lambda: f64,
        zeta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        site_factor: Option<DistSpec>,
    },
    /// Markov capacity transition on the parent's scheme.
    Deterioration {
        name: String,
        parent: String,
        mean_ratio: f64,
        std_ratio: f64,
    },
    /// Two-terminal connectivity of the model topology; `components` maps
    /// component ids to binary nodes.
    Connectivity {
        name: String,
        components: BTreeMap<String, String>,
    },
    /// Explicit table.
    Table {
        name: String,
        states: Vec<String>,
        #[serde(default)]
        parents: Vec<String>,
        cpt: Vec<f64>,
    },
    Repeat {
        repeat: RepeatRange,
        nodes: Vec<NodeItem>,
    },
    Instance {
        template: String,
        #[serde(default)]
        bind: BTreeMap<String, serde_json::Value>,
    },
}

/// How reliability over time is read off the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TimelineKind {
    /// `node(t)` is the failure indicator up to year `t`.
    Cumulative,
    /// `node(t)` is the failure indicator of year `t`; each year is
    /// conditioned on survival in the earlier years.
    Annual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TimelineSpec {
    pub name: String,
    pub kind: TimelineKind,
    /// Node pattern with a `{t}` placeholder.
    pub node: String,
    pub from: usize,
    pub to: usize,
    /// Survival history used by annual timelines.
    #[serde(default)]
    pub policy: SurvivalPolicy,
    /// Element node patterns for the element-level policy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub elements: Vec<String>,
}

impl TimelineSpec {
    pub fn node_at(&self, t: usize) -> String {
        self.node.replace("{t}", &t.to_string())
    }

    pub fn elements_at(&self, t: usize) -> Vec<String> {
        self.elements.iter().map(|e| e.replace("{t}", &t.to_string())).collect()
    }
}
