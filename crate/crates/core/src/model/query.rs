use serde::{Deserialize, Serialize};

use super::{CompiledModel, TimelineKind};
use crate::bn::Evidence;
use crate::decide::VoiResult;
use crate::dists::beta_from_pf;
use crate::error::{Error, Result};
use crate::infra::annual_system_reliability;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub t: usize,
    pub pf: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub name: String,
    pub kind: TimelineKind,
    pub rows: Vec<TimelineRow>,
}

/// Reliability per year of a declared timeline, up to `horizon` when given.
pub fn timeline(model: &CompiledModel, name: Option<&str>, evidence: &Evidence, horizon: Option<usize>) -> Result<Timeline> {
    let spec = model.timeline(name)?;
    let last = horizon.map_or(spec.to, |h| h.min(spec.to));
    let bn = &model.network;
    bn.check_evidence(evidence)?;
    let mut rows = Vec::with_capacity(last.saturating_sub(spec.from) + 1);
    for t in spec.from..=last {
        let row = match spec.kind {
            TimelineKind::Cumulative => {
                let pf = bn.posterior(&spec.node_at(t), evidence)?.probabilities[0];
                TimelineRow {
                    t,
                    pf,
                    beta: beta_from_pf(pf),
                }
            }
            TimelineKind::Annual => {
                let r = annual_system_reliability(bn, evidence, t, spec.policy, |s| spec.node_at(s), |s| spec.elements_at(s))?;
                TimelineRow {
                    t,
                    pf: r.pf,
                    beta: r.beta,
                }
            }
        };
        rows.push(row);
    }
    Ok(Timeline {
        name: spec.name.clone(),
        kind: spec.kind,
        rows,
    })
}

/// Measurement set chosen when each measurement costs `cost`: the set (or
/// none) maximizing `VOI − cost · size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub cost: f64,
    /// Empty when no measurement pays for itself.
    pub measurements: Vec<String>,
    pub net_value: f64,
}

pub fn recommend(results: &[VoiResult], cost: f64) -> Result<Recommendation> {
    if !(cost >= 0.0) {
        return Err(Error::Decision(format!("measurement cost must be non-negative, got {cost}")));
    }
    let mut best = Recommendation {
        cost,
        measurements: Vec::new(),
        net_value: 0.0,
    };
    for r in results {
        let net = r.voi - cost * r.measurements.len() as f64;
        if net > best.net_value {
            best.measurements = r.measurements.clone();
            best.net_value = net;
        }
    }
    Ok(best)
}

/// Gain of each set over the best listed proper subset of it, e.g. what a
/// second measurement adds to the first. `None` when no subset is listed.
pub fn marginal_gains(results: &[VoiResult]) -> Vec<Option<f64>> {
    results
        .iter()
        .map(|r| {
            results
                .iter()
                .filter(|o| o.measurements.len() < r.measurements.len() && o.measurements.iter().all(|m| r.measurements.contains(m)))
                .map(|o| o.voi)
                .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))))
                .map(|best| r.voi - best)
        })
        .collect()
}
