use serde::{Deserialize, Serialize};

use super::{CompiledModel, Condition, EvidenceScript, Finding, Model, NodeItem};
use crate::bn::Evidence;
use crate::error::{Error, Result};
use crate::model::resolve_findings;
use crate::srm::{conditional_mcs, mcs, Measurement, PfEstimate};

/// One compiled failure probability checked against simulation of the
/// continuous model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub step: String,
    pub node: String,
    pub compiled_pf: f64,
    pub compiled_beta: f64,
    pub mcs: PfEstimate,
    pub pass: bool,
}

/// Steps whose findings cannot be restated on the continuous model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStep {
    pub step: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<VerifyCheck>,
    pub skipped: Vec<SkippedStep>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Measurement nodes by name, with the continuous variable they measure.
fn measured_variables(model: &Model) -> Vec<(String, String, crate::dists::Distribution)> {
    let mut var_of = std::collections::BTreeMap::new();
    for n in &model.nodes {
        match n {
            NodeItem::Marginal { name, variable, .. } => {
                var_of.insert(name.clone(), variable.clone().unwrap_or_else(|| name.clone()));
            }
            NodeItem::Correlated { members, .. } => {
                for m in members {
                    var_of.insert(m.name.clone(), m.variable.clone());
                }
            }
            _ => {}
        }
    }
    model
        .nodes
        .iter()
        .filter_map(|n| match n {
            NodeItem::Measurement { name, parent, noise, .. } => {
                let v = var_of.get(parent)?;
                Some((name.clone(), v.clone(), noise.resolve().ok()?))
            }
            _ => None,
        })
        .collect()
}

fn as_measurements(
    findings: &[Finding],
    measured: &[(String, String, crate::dists::Distribution)],
) -> std::result::Result<Vec<Measurement>, String> {
    findings
        .iter()
        .map(|f| {
            let (_, variable, noise) = measured
                .iter()
                .find(|(n, _, _)| *n == f.node)
                .ok_or_else(|| format!("finding on `{}` is not a measurement", f.node))?;
            match f.condition {
                Condition::Value { value } => Ok(Measurement {
                    variable: variable.clone(),
                    value,
                    noise: noise.clone(),
                }),
                _ => Err(format!("finding on `{}` is not an observed value", f.node)),
            }
        })
        .collect()
}

/// Check every limit-state node of the model, unconditionally and under each
/// step of `script` whose findings are measured values, against (conditional)
/// Monte Carlo with `n` samples. A check passes when the compiled β lies in
/// the 95% simulation band.
pub fn verify(model: &Model, compiled: &CompiledModel, script: Option<&EvidenceScript>, n: usize, seed: u64) -> Result<VerifyReport> {
    let srm: Vec<(&String, Vec<&str>)> = model
        .nodes
        .iter()
        .filter_map(|n| match n {
            NodeItem::Srm { name, modes, .. } => Some((name, modes.iter().map(String::as_str).collect())),
            _ => None,
        })
        .collect();
    if srm.is_empty() {
        return Err(Error::Model(format!("model `{}` has no limit-state nodes to verify", model.file.name)));
    }
    let measured = measured_variables(model);
    let mut steps = vec![("none".to_string(), Vec::new())];
    if let Some(s) = script {
        steps.extend(s.findings_by_step().into_iter().filter(|(_, f)| !f.is_empty()));
    }
    let bn = &compiled.network;
    let mut report = VerifyReport {
        samples: n,
        seed,
        checks: Vec::new(),
        skipped: Vec::new(),
    };
    for (label, findings) in steps {
        let meas = match as_measurements(&findings, &measured) {
            Ok(m) => m,
            Err(reason) => {
                report.skipped.push(SkippedStep { step: label, reason });
                continue;
            }
        };
        let evidence = if findings.is_empty() { Evidence::new() } else { resolve_findings(bn, &findings)? };
        for (node, modes) in &srm {
            let pf = bn.posterior(node, &evidence)?.probabilities[0];
            let est = if meas.is_empty() {
                mcs(&model.problem, modes, n, seed)?
            } else {
                conditional_mcs(&model.problem, modes, &meas, n, seed)?
            };
            let beta = crate::dists::beta_from_pf(pf);
            report.checks.push(VerifyCheck {
                step: label.clone(),
                node: (*node).clone(),
                compiled_pf: pf,
                compiled_beta: beta,
                pass: est.band_contains_beta(beta),
                mcs: est,
            });
        }
    }
    Ok(report)
}
