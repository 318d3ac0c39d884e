//! Evidence sessions: a compiled model, cumulative findings under a revision
//! counter, and an append-only audit log from which the session can be
//! rebuilt.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::bn::{Density, DiscreteBN, Evidence};
use crate::decide::{InfluenceDiagram, UtilityResult, VoiResult};
use crate::error::{Error, Result};
use crate::model::{timeline, CompiledModel, Finding, Timeline};

/// Where a session's network came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum SessionSource {
    Scenario { name: String },
    /// A compiled network supplied by the client, identified by the
    /// creation entry's model hash.
    Upload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Created {
        #[serde(flatten)]
        source: SessionSource,
        model: String,
        model_hash: String,
    },
    Evidence {
        findings: Vec<Finding>,
        evidence_probability: f64,
        fingerprint: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Revision reached by this entry.
    pub revision: u64,
    /// Wall-clock time in milliseconds since the Unix epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_ms: Option<u64>,
    #[serde(flatten)]
    pub event: LogEvent,
}

impl LogEntry {
    fn now(revision: u64, event: LogEvent) -> Self {
        let at_ms = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_millis() as u64);
        Self { revision, at_ms, event }
    }

    /// Equal apart from the timestamp.
    pub fn same_content(&self, other: &LogEntry) -> bool {
        self.revision == other.revision && self.event == other.event
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log entry serializes")
    }

    pub fn parse_lines(text: &str) -> Result<Vec<LogEntry>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Syntax {
                    line: i + 1,
                    column: e.column(),
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

/// Add findings one at a time to `base`, returning the extended evidence and
/// its probability. The first finding that makes the evidence impossible is
/// named in the error.
pub fn extend_evidence(bn: &DiscreteBN, base: &Evidence, findings: &[Finding]) -> Result<(Evidence, f64)> {
    let mut e = base.clone();
    let mut p = if findings.is_empty() { bn.evidence_probability(&e)? } else { 0.0 };
    for f in findings {
        e.restrict(&f.node, &f.states(bn)?);
        if e.findings[&f.node].is_empty() {
            return Err(Error::InconsistentEvidence(format!(
                "finding on `{}` contradicts an earlier finding on the same node",
                f.node
            )));
        }
        p = bn.evidence_probability(&e)?;
        if !(p > 0.0) {
            return Err(Error::InconsistentEvidence(format!(
                "finding on `{}` has zero probability given the evidence so far",
                f.node
            )));
        }
    }
    Ok((e, p))
}

/// A query result with the revision it was computed at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub revision: u64,
    pub result: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorView {
    pub node: String,
    pub states: Vec<String>,
    pub probabilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Density>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub source: SessionSource,
    model: Arc<CompiledModel>,
    diagram: Option<Arc<InfluenceDiagram>>,
    revision: u64,
    findings: Vec<Finding>,
    evidence: Evidence,
    evidence_probability: f64,
    log: Vec<LogEntry>,
}

impl Session {
    pub fn new(id: impl Into<String>, source: SessionSource, model: Arc<CompiledModel>) -> Result<Self> {
        let diagram = match &model.decision {
            Some(_) => Some(Arc::new(model.influence_diagram()?)),
            None => None,
        };
        let created = LogEntry::now(
            0,
            LogEvent::Created {
                source: source.clone(),
                model: model.model.clone(),
                model_hash: model.model_hash.clone(),
            },
        );
        Ok(Self {
            id: id.into(),
            source,
            model,
            diagram,
            revision: 0,
            findings: Vec::new(),
            evidence: Evidence::new(),
            evidence_probability: 1.0,
            log: vec![created],
        })
    }

    /// Rebuild a session from its log, checking every recorded fingerprint.
    pub fn replay(id: impl Into<String>, model: Arc<CompiledModel>, log: &[LogEntry]) -> Result<Self> {
        let Some(LogEntry {
            event: LogEvent::Created { source, model_hash, .. },
            ..
        }) = log.first()
        else {
            return Err(Error::Model("a session log starts with its creation".into()));
        };
        if *model_hash != model.model_hash {
            return Err(Error::Model("session log was written for a different model".into()));
        }
        let mut s = Self::new(id, source.clone(), model)?;
        s.log[0] = log[0].clone();
        for entry in &log[1..] {
            let LogEvent::Evidence { findings, fingerprint, .. } = &entry.event else {
                return Err(Error::Model(format!("unexpected creation entry at revision {}", entry.revision)));
            };
            s.add_evidence(findings, Some(entry.revision - 1))?;
            if s.evidence.fingerprint() != *fingerprint {
                return Err(Error::Model(format!("replay diverges at revision {}", entry.revision)));
            }
            *s.log.last_mut().unwrap() = entry.clone();
        }
        Ok(s)
    }

    pub fn model(&self) -> &Arc<CompiledModel> {
        &self.model
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    pub fn evidence_probability(&self) -> f64 {
        self.evidence_probability
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Add findings atomically. A stale `expected_revision` is a conflict;
    /// findings that contradict the evidence so far are rejected with the
    /// first offending node named, leaving the session unchanged. An empty
    /// submission changes nothing.
    pub fn add_evidence(&mut self, findings: &[Finding], expected_revision: Option<u64>) -> Result<u64> {
        if let Some(r) = expected_revision {
            if r != self.revision {
                return Err(Error::Conflict(format!(
                    "expected revision {r}, session is at {}",
                    self.revision
                )));
            }
        }
        if findings.is_empty() {
            return Ok(self.revision);
        }
        let (e, p) = extend_evidence(&self.model.network, &self.evidence, findings)?;
        self.revision += 1;
        self.findings.extend(findings.iter().cloned());
        self.evidence = e;
        self.evidence_probability = p;
        self.log.push(LogEntry::now(
            self.revision,
            LogEvent::Evidence {
                findings: findings.to_vec(),
                evidence_probability: p,
                fingerprint: self.evidence.fingerprint(),
            },
        ));
        Ok(self.revision)
    }

    fn stamp<T>(&self, result: T) -> Stamped<T> {
        Stamped {
            revision: self.revision,
            result,
        }
    }

    pub fn timeline(&self, name: Option<&str>, horizon: Option<usize>) -> Result<Stamped<Timeline>> {
        Ok(self.stamp(timeline(&self.model, name, &self.evidence, horizon)?))
    }

    pub fn posterior(&self, node: &str) -> Result<Stamped<PosteriorView>> {
        let bn = &self.model.network;
        let post = bn.posterior(node, &self.evidence)?;
        let density = match bn.node(node)?.scheme {
            Some(_) => Some(bn.posterior_density(node, &self.evidence)?),
            None => None,
        };
        Ok(self.stamp(PosteriorView {
            node: post.node,
            states: post.states,
            probabilities: post.probabilities,
            density,
        }))
    }

    fn diagram(&self) -> Result<&InfluenceDiagram> {
        self.diagram
            .as_deref()
            .ok_or_else(|| Error::Decision(format!("model `{}` has no decision spec", self.model.model)))
    }

    pub fn decision(&self) -> Result<Stamped<UtilityResult>> {
        Ok(self.stamp(self.diagram()?.optimal_decision(&self.evidence)?))
    }

    /// VOI of each set; with no sets, the model's declared measurement sets.
    pub fn voi(&self, sets: &[Vec<String>]) -> Result<Stamped<Vec<VoiResult>>> {
        let d = self.diagram()?;
        let declared = &self.model.decision.as_ref().expect("diagram implies a spec").measurement_sets;
        let sets = if sets.is_empty() { declared } else { sets };
        let out = sets
            .iter()
            .map(|s| {
                let refs: Vec<&str> = s.iter().map(String::as_str).collect();
                d.voi(&refs, &self.evidence)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.stamp(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_model;

    fn small() -> Arc<CompiledModel> {
        let m = load_model(
            r#"{
              "name": "toy",
              "nodes": [
                { "kind": "table", "name": "A", "states": ["fail", "survive"], "cpt": [0.2, 0.8] },
                { "kind": "table", "name": "B", "states": ["fail", "survive"], "parents": ["A"], "cpt": [1.0, 0.0, 0.1, 0.9] }
              ]
            }"#,
        )
        .unwrap();
        Arc::new(m.compile(Some(1)).unwrap())
    }

    fn source() -> SessionSource {
        SessionSource::Scenario { name: "toy".into() }
    }

    #[test]
    fn revisions_and_conflicts() {
        let mut s = Session::new("s1", source(), small()).unwrap();
        assert_eq!(s.revision(), 0);
        assert_eq!(s.add_evidence(&[], Some(0)).unwrap(), 0);
        assert_eq!(s.add_evidence(&[Finding::state("B", "survive")], Some(0)).unwrap(), 1);
        assert!(matches!(s.add_evidence(&[Finding::state("A", "fail")], Some(0)), Err(Error::Conflict(_))));
        // A = fail forces B = fail, contradicting the survival already entered
        let err = s.add_evidence(&[Finding::state("A", "fail")], Some(1)).unwrap_err();
        assert_eq!(err.code(), 3);
        assert!(err.to_string().contains("`A`"));
        assert_eq!(s.revision(), 1);
        assert_eq!(s.findings().len(), 1);
        let err = s.add_evidence(&[Finding::state("B", "fail")], None).unwrap_err();
        assert!(err.to_string().contains("`B`"));
        let p = s.posterior("A").unwrap();
        assert_eq!(p.revision, 1);
        assert!((p.result.probabilities[0] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn replay_reproduces_the_log() {
        let model = small();
        let mut s = Session::new("s1", source(), model.clone()).unwrap();
        s.add_evidence(&[Finding::state("A", "survive")], Some(0)).unwrap();
        s.add_evidence(&[Finding::state("B", "survive")], Some(1)).unwrap();
        let text: String = s.log().iter().map(|e| e.to_line() + "\n").collect();
        let log = LogEntry::parse_lines(&text).unwrap();
        let r = Session::replay("s2", model, &log).unwrap();
        assert_eq!(r.revision(), 2);
        assert_eq!(r.evidence(), s.evidence());
        assert!(r.log().iter().zip(s.log()).all(|(a, b)| a.same_content(b)));
    }

    #[test]
    fn no_decision_spec() {
        let s = Session::new("s1", source(), small()).unwrap();
        assert!(s.decision().unwrap_err().to_string().contains("no decision spec"));
    }
}
