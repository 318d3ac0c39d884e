//! Discrete Bayesian networks and exact inference by variable elimination.

mod factor;
mod infer;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use factor::Factor;
pub use infer::{EliminationOrder, InferenceStats};

use crate::compile::IntervalScheme;
use crate::error::{Error, Result};

/// A finite-state node with its conditional probability table.
///
/// `cpt` is dense and row-major: parents in declared order with the first
/// parent varying slowest, the node's own state varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<IntervalScheme>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpt: Vec<f64>,
}

impl Node {
    pub fn new(name: impl Into<String>, states: Vec<String>, parents: Vec<String>, cpt: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            states,
            scheme: None,
            parents,
            cpt,
        }
    }

    /// Node whose states are the intervals of `scheme`.
    pub fn interval(name: impl Into<String>, scheme: IntervalScheme, parents: Vec<String>, cpt: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            states: scheme.labels(),
            scheme: Some(scheme),
            parents,
            cpt,
        }
    }

    pub fn card(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }
}

/// Problem found by [`DiscreteBN::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub node: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.node {
            Some(n) => write!(f, "{n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BnDoc {
    name: String,
    nodes: Vec<Node>,
}

/// A directed acyclic graph of discrete nodes with one CPT per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "BnDoc", into = "BnDoc")]
pub struct DiscreteBN {
    pub name: String,
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
}

impl From<BnDoc> for DiscreteBN {
    fn from(d: BnDoc) -> Self {
        let mut bn = DiscreteBN::new(&d.name);
        for n in d.nodes {
            bn.push(n);
        }
        bn
    }
}

impl From<DiscreteBN> for BnDoc {
    fn from(b: DiscreteBN) -> Self {
        BnDoc {
            name: b.name,
            nodes: b.nodes,
        }
    }
}

impl DiscreteBN {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            nodes: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push(&mut self, node: Node) {
        match self.index.get(&node.name) {
            Some(&i) => self.nodes[i] = node,
            None => {
                self.index.insert(node.name.clone(), self.nodes.len());
                self.nodes.push(node);
            }
        }
    }

    /// Add a node; parents must already exist and the CPT must fit.
    pub fn add_node(&mut self, node: Node) -> Result<()> {
        if self.index.contains_key(&node.name) {
            return Err(Error::Network(format!("duplicate node `{}`", node.name)));
        }
        for p in &node.parents {
            if !self.index.contains_key(p) {
                return Err(Error::Network(format!("node `{}` has unknown parent `{p}`", node.name)));
            }
        }
        let expected = self.cpt_len(&node.parents, node.card())?;
        if node.cpt.len() != expected {
            return Err(Error::Network(format!(
                "node `{}` CPT has {} entries, expected {expected}",
                node.name,
                node.cpt.len()
            )));
        }
        self.push(node);
        Ok(())
    }

    /// Replace a node's CPT (same parents and shape).
    pub fn set_cpt(&mut self, name: &str, cpt: Vec<f64>) -> Result<()> {
        let i = self.id(name)?;
        if self.nodes[i].cpt.len() != cpt.len() {
            return Err(Error::Network(format!("replacement CPT for `{name}` has the wrong size")));
        }
        self.nodes[i].cpt = cpt;
        Ok(())
    }

    fn cpt_len(&self, parents: &[String], card: usize) -> Result<usize> {
        let mut n = card;
        for p in parents {
            n *= self.node(p)?.card();
        }
        Ok(n)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn node(&self, name: &str) -> Result<&Node> {
        Ok(&self.nodes[self.id(name)?])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub(crate) fn parent_ids(&self, i: usize) -> Vec<usize> {
        self.nodes[i].parents.iter().map(|p| self.index[p]).collect()
    }

    /// Check acyclicity, CPT shapes and row normalization; every violation is
    /// reported.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for n in &self.nodes {
            let diag = |m: String| Diagnostic {
                node: Some(n.name.clone()),
                message: m,
            };
            let labels: BTreeSet<&String> = n.states.iter().collect();
            if labels.len() != n.states.len() {
                out.push(diag("state labels are not unique".into()));
            }
            if n.states.is_empty() {
                out.push(diag("node has no states".into()));
                continue;
            }
            let mut ok_parents = true;
            let mut seen = BTreeSet::new();
            for p in &n.parents {
                if !self.index.contains_key(p) {
                    out.push(diag(format!("unknown parent `{p}`")));
                    ok_parents = false;
                }
                if !seen.insert(p) {
                    out.push(diag(format!("parent `{p}` listed twice")));
                }
            }
            if !ok_parents {
                continue;
            }
            let expected = self.cpt_len(&n.parents, n.card()).unwrap_or(0);
            if n.cpt.len() != expected {
                out.push(diag(format!("CPT has {} entries, expected {expected}", n.cpt.len())));
                continue;
            }
            for (row, chunk) in n.cpt.chunks(n.card()).enumerate() {
                if chunk.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    out.push(diag(format!("row {row} has a negative or non-finite entry")));
                    continue;
                }
                let s: f64 = chunk.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    out.push(diag(format!("row {row} sums to {s}")));
                }
            }
        }
        if let Some(cycle) = self.find_cycle() {
            out.push(Diagnostic {
                node: None,
                message: format!("cycle: {}", cycle.join(" -> ")),
            });
        }
        out
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.nodes.len();
        let mut color = vec![0u8; n];
        let mut stack_path = Vec::new();
        fn visit(bn: &DiscreteBN, i: usize, color: &mut [u8], path: &mut Vec<usize>) -> Option<Vec<String>> {
            color[i] = 1;
            path.push(i);
            for p in &bn.nodes[i].parents {
                let Some(&j) = bn.index.get(p) else { continue };
                if color[j] == 1 {
                    let start = path.iter().position(|&k| k == j).unwrap();
                    let mut cyc: Vec<String> = path[start..].iter().rev().map(|&k| bn.nodes[k].name.clone()).collect();
                    cyc.push(bn.nodes[j].name.clone());
                    return Some(cyc);
                }
                if color[j] == 0 {
                    if let Some(c) = visit(bn, j, color, path) {
                        return Some(c);
                    }
                }
            }
            path.pop();
            color[i] = 2;
            None
        }
        for i in 0..n {
            if color[i] == 0 {
                if let Some(c) = visit(self, i, &mut color, &mut stack_path) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Validation as a `Result`, for callers that need a usable network.
    pub fn check(&self) -> Result<()> {
        let d = self.validate();
        if d.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = d.iter().map(|x| x.to_string()).collect();
            Err(Error::Network(msg.join("; ")))
        }
    }

    /// Nodes in an order where parents precede children.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for i in 0..n {
            for p in self.parent_ids(i) {
                indeg[i] += 1;
                children[p].push(i);
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            out.push(i);
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if out.len() != n {
            return Err(Error::Network("network contains a cycle".into()));
        }
        Ok(out)
    }

    /// Posterior marginal of one node.
    pub fn posterior(&self, node: &str, evidence: &Evidence) -> Result<Posterior> {
        let j = self.joint_posterior(&[node], evidence)?;
        Ok(Posterior {
            node: node.to_string(),
            states: self.node(node)?.states.clone(),
            probabilities: j.probabilities,
            evidence_probability: j.evidence_probability,
            log_evidence: j.log_evidence,
        })
    }

    /// Joint posterior over several nodes, row-major in the order given.
    pub fn joint_posterior(&self, nodes: &[&str], evidence: &Evidence) -> Result<JointPosterior> {
        let query: Vec<usize> = nodes.iter().map(|n| self.id(n)).collect::<Result<_>>()?;
        let (f, log_z) = infer::eliminate(self, &query, evidence, &EliminationOrder::MinFill, None)?;
        let sum: f64 = f.values.iter().sum();
        let log_e = log_z + sum.ln();
        Ok(JointPosterior {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            cards: query.iter().map(|&q| self.nodes[q].card()).collect(),
            probabilities: f.values.iter().map(|v| v / sum).collect(),
            evidence_probability: log_e.exp(),
            log_evidence: log_e,
        })
    }

    /// Joint posterior with an explicit elimination order (for testing and
    /// diagnostics).
    pub fn joint_posterior_with_order(
        &self,
        nodes: &[&str],
        evidence: &Evidence,
        order: &EliminationOrder,
        stats: Option<&mut InferenceStats>,
    ) -> Result<JointPosterior> {
        let query: Vec<usize> = nodes.iter().map(|n| self.id(n)).collect::<Result<_>>()?;
        let (f, log_z) = infer::eliminate(self, &query, evidence, order, stats)?;
        let sum: f64 = f.values.iter().sum();
        let log_e = log_z + sum.ln();
        Ok(JointPosterior {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            cards: query.iter().map(|&q| self.nodes[q].card()).collect(),
            probabilities: f.values.iter().map(|v| v / sum).collect(),
            evidence_probability: log_e.exp(),
            log_evidence: log_e,
        })
    }

    /// `Pr(evidence)`; zero for contradictory findings.
    pub fn evidence_probability(&self, evidence: &Evidence) -> Result<f64> {
        match infer::eliminate(self, &[], evidence, &EliminationOrder::MinFill, None) {
            Ok((f, log_z)) => Ok((log_z + f.values.iter().sum::<f64>().ln()).exp()),
            Err(Error::InconsistentEvidence(_)) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Piecewise-constant posterior density of an interval node. The tail
    /// state is reported as mass only.
    pub fn posterior_density(&self, node: &str, evidence: &Evidence) -> Result<Density> {
        let n = self.node(node)?;
        let scheme = n
            .scheme
            .clone()
            .ok_or_else(|| Error::Network(format!("node `{node}` has no interval states")))?;
        let post = self.posterior(node, evidence)?;
        let mut cells = Vec::with_capacity(scheme.len());
        let mut tail_mass = None;
        for k in 0..scheme.len() {
            let (lo, hi) = scheme.bounds(k);
            if scheme.is_tail(k) {
                tail_mass = Some(post.probabilities[k]);
            } else {
                cells.push(DensityCell {
                    lower: lo,
                    upper: hi,
                    mass: post.probabilities[k],
                    density: post.probabilities[k] / (hi - lo),
                });
            }
        }
        Ok(Density {
            node: node.to_string(),
            cells,
            tail_mass,
            evidence_probability: post.evidence_probability,
        })
    }

    /// Resolve labelled findings into an [`Evidence`] value.
    pub fn evidence_from_labels(&self, findings: &[(&str, &[&str])]) -> Result<Evidence> {
        let mut e = Evidence::new();
        for (node, labels) in findings {
            let n = self.node(node)?;
            let mut states = Vec::with_capacity(labels.len());
            for l in *labels {
                states.push(
                    n.state_index(l)
                        .ok_or_else(|| Error::Network(format!("node `{node}` has no state `{l}`")))?,
                );
            }
            e.restrict(node, &states);
        }
        Ok(e)
    }

    /// Check that every finding names an existing node and valid states.
    pub fn check_evidence(&self, e: &Evidence) -> Result<()> {
        for (node, states) in &e.findings {
            let n = self.node(node)?;
            if states.is_empty() {
                return Err(Error::InconsistentEvidence(format!("finding on `{node}` admits no state")));
            }
            if let Some(s) = states.iter().find(|&&s| s >= n.card()) {
                return Err(Error::Network(format!("node `{node}` has no state index {s}")));
            }
        }
        Ok(())
    }
}

/// Findings: each entry restricts a node to a non-empty set of states. A
/// single admissible state is a hard finding.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub findings: BTreeMap<String, BTreeSet<usize>>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn with_state(mut self, node: &str, state: usize) -> Self {
        self.restrict(node, &[state]);
        self
    }

    pub fn with_states(mut self, node: &str, states: &[usize]) -> Self {
        self.restrict(node, states);
        self
    }

    /// Intersect the admissible states of `node` with `states`.
    pub fn restrict(&mut self, node: &str, states: &[usize]) {
        let new: BTreeSet<usize> = states.iter().copied().collect();
        match self.findings.get_mut(node) {
            Some(cur) => *cur = cur.intersection(&new).copied().collect(),
            None => {
                self.findings.insert(node.to_string(), new);
            }
        }
    }

    /// Conjunction of two evidence sets.
    pub fn and(&self, other: &Evidence) -> Evidence {
        let mut e = self.clone();
        for (n, s) in &other.findings {
            let v: Vec<usize> = s.iter().copied().collect();
            e.restrict(n, &v);
        }
        e
    }

    pub fn hard_state(&self, node: &str) -> Option<usize> {
        let s = self.findings.get(node)?;
        (s.len() == 1).then(|| *s.iter().next().unwrap())
    }

    /// Stable hash of the findings.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("evidence serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub node: String,
    pub states: Vec<String>,
    pub probabilities: Vec<f64>,
    pub evidence_probability: f64,
    pub log_evidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPosterior {
    pub nodes: Vec<String>,
    pub cards: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub evidence_probability: f64,
    pub log_evidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCell {
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub node: String,
    pub cells: Vec<DensityCell>,
    pub tail_mass: Option<f64>,
    pub evidence_probability: f64,
}
