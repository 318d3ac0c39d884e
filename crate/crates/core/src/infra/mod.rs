//! Infrastructure-network building blocks: site-scaled fragility curves,
//! Markov capacity deterioration and two-terminal connectivity.

mod deterioration;
mod fragility;
mod topology;

pub use deterioration::{deterioration_cpt, DeteriorationModel};
pub use fragility::{fragility_cpt, site_exceedance_cpt, FragilityCurve};
pub use topology::{connectivity_cpt, Link, NetworkTopology};

use serde::{Deserialize, Serialize};

use crate::bn::{DiscreteBN, Evidence};
use crate::dists::beta_from_pf;
use crate::error::{Error, Result};

/// Which survival history conditions the annual system reliability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalPolicy {
    /// Condition on the system having worked in every earlier year.
    #[default]
    System,
    /// Condition on every element having worked in every earlier year.
    Element,
}

/// Annual reliability of year `t`:
/// `β(t) = −Φ⁻¹(Pr[system(t) fails | evidence, survival in years 1..t−1])`.
///
/// `system(s)` and `elements(s)` name the year-`s` system node and element
/// nodes; binary nodes use state 0 for failure. Years already fixed by the
/// evidence are left as given.
pub fn annual_system_reliability<S, E>(
    bn: &DiscreteBN,
    evidence: &Evidence,
    t: usize,
    policy: SurvivalPolicy,
    system: S,
    elements: E,
) -> Result<AnnualReliability>
where
    S: Fn(usize) -> String,
    E: Fn(usize) -> Vec<String>,
{
    if t == 0 {
        return Err(Error::Network("years start at 1".into()));
    }
    let mut e = evidence.clone();
    for s in 1..t {
        let names = match policy {
            SurvivalPolicy::System => vec![system(s)],
            SurvivalPolicy::Element => elements(s),
        };
        for n in names {
            if !e.findings.contains_key(&n) {
                e.restrict(&n, &[1]);
            }
        }
    }
    let node = system(t);
    let post = bn.posterior(&node, &e)?;
    let pf = post.probabilities[0];
    Ok(AnnualReliability {
        t,
        pf,
        beta: beta_from_pf(pf),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnualReliability {
    pub t: usize,
    pub pf: f64,
    pub beta: f64,
}
