//! Influence diagrams on a compiled network: terminal decision analysis and
//! preposterior value of information.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bn::{DiscreteBN, Evidence, Node};
use crate::error::{Error, Result};

/// Default limit on the number of joint measurement outcomes in a VOI run.
pub const DEFAULT_VOI_CAP: usize = 1_000_000;

/// How an alternative changes one node's table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum OverrideRule {
    /// Every row becomes the node's prior marginal, so the node no longer
    /// depends on its parents.
    PriorMarginal,
    /// An explicit replacement table of the same shape.
    Table { cpt: Vec<f64> },
    /// The element is renewed at the decision time: a fresh copy of the node,
    /// drawn from its prior marginal, takes over for every year of the
    /// cumulative failure chain `chain` (a `{t}` pattern over `from..=to`)
    /// after the last year carrying a finding. Earlier years keep the
    /// original node, so their evidence still informs shared parents.
    /// Nodes listed in `fresh` (names or `{t}` patterns) are also copied for
    /// the renewed years, with their original tables, so the new element does
    /// not see what was learned about them.
    Renewal {
        chain: String,
        from: usize,
        to: usize,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        fresh: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct CptOverride {
    pub node: String,
    #[serde(flatten)]
    pub rule: OverrideRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct DecisionNode {
    pub name: String,
    pub alternatives: Vec<String>,
    /// Table changes per alternative; alternatives not listed use the base
    /// network.
    #[serde(default)]
    pub overrides: BTreeMap<String, Vec<CptOverride>>,
}

/// Utility table over its parents, which may include the decision node.
/// Row-major with the first parent varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct UtilityNode {
    pub name: String,
    pub parents: Vec<String>,
    pub table: Vec<f64>,
}

/// Decision and utility layer as stored in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct DecisionSpec {
    pub decision: DecisionNode,
    pub utilities: Vec<UtilityNode>,
    #[serde(default = "default_cap")]
    pub voi_cap: usize,
    /// Measurement sets offered for VOI queries by default.
    #[serde(default)]
    pub measurement_sets: Vec<Vec<String>>,
}

fn default_cap() -> usize {
    DEFAULT_VOI_CAP
}

/// Expected utilities of all alternatives under one evidence set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityResult {
    pub alternatives: Vec<String>,
    pub expected_utilities: Vec<f64>,
    pub optimal: String,
    pub evidence_fingerprint: String,
}

impl UtilityResult {
    pub fn optimal_index(&self) -> usize {
        self.alternatives.iter().position(|a| *a == self.optimal).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiResult {
    pub measurements: Vec<String>,
    pub voi: f64,
    /// `E[U | measure]`: expected utility with the optimal decision taken after
    /// observing the measurements.
    pub with_measurement: f64,
    /// `max_a E[U | a]` without the measurements.
    pub without_measurement: f64,
    pub outcomes: usize,
}

/// A base network extended with one decision node and utility nodes.
#[derive(Debug, Clone)]
pub struct InfluenceDiagram {
    base: DiscreteBN,
    decision: DecisionNode,
    utilities: Vec<UtilityNode>,
    /// Network under each alternative with table overrides applied and
    /// renewals placed before the first year.
    networks: Vec<DiscreteBN>,
    /// Renewal overrides per alternative, resolved against the evidence.
    renewals: Vec<Vec<Renewal>>,
    pub voi_cap: usize,
}

#[derive(Debug, Clone)]
struct Renewal {
    node: String,
    prior: Vec<f64>,
    chain: String,
    from: usize,
    to: usize,
    fresh: Vec<String>,
}

fn renewed(name: &str) -> String {
    format!("{name}.renewed")
}

impl Renewal {
    fn chain_at(&self, t: usize) -> String {
        self.chain.replace("{t}", &t.to_string())
    }

    /// Last year of the chain fixed by a finding or a planned observation.
    fn decision_year(&self, observed: &dyn Fn(&str) -> bool) -> usize {
        (self.from..=self.to).rev().find(|&t| observed(&self.chain_at(t))).unwrap_or(self.from - 1)
    }

    /// `net` with the node replaced by a fresh copy after year `tau`.
    fn apply(&self, net: &DiscreteBN, tau: usize) -> Result<DiscreteBN> {
        let mut copied: Vec<String> = Vec::new();
        for f in &self.fresh {
            if f.contains("{t}") {
                copied.extend((tau + 1..=self.to).map(|t| f.replace("{t}", &t.to_string())));
            } else {
                copied.push(f.clone());
            }
        }
        for c in &copied {
            net.node(c)?;
        }
        let rename = |parents: &mut Vec<String>| {
            for p in parents.iter_mut() {
                if *p == self.node || copied.contains(p) {
                    *p = renewed(p);
                }
            }
        };
        let mut out = DiscreteBN::new(&net.name);
        for n in net.nodes() {
            let mut n = n.clone();
            let year = (self.from..=self.to).find(|&t| self.chain_at(t) == n.name);
            if let Some(t) = year.filter(|&t| t > tau) {
                rename(&mut n.parents);
                if t == tau + 1 && t > self.from {
                    // the new element starts intact whatever became of the old one
                    let prev = self.chain_at(t - 1);
                    n.cpt = start_intact(&out, &n, &prev)?;
                }
            }
            let copy = if n.name == self.node {
                let mut r = Node::new(renewed(&n.name), n.states.clone(), vec![], self.prior.clone());
                r.scheme = n.scheme.clone();
                Some(r)
            } else if copied.contains(&n.name) {
                let mut r = n.clone();
                r.name = renewed(&n.name);
                rename(&mut r.parents);
                Some(r)
            } else {
                None
            };
            out.add_node(n)?;
            if let Some(r) = copy {
                out.add_node(r)?;
            }
        }
        Ok(out)
    }
}

/// Table of `node` with every row copied from the row in which parent `prev`
/// is in its survival state (state 1).
fn start_intact(net: &DiscreteBN, node: &Node, prev: &str) -> Result<Vec<f64>> {
    let k = node
        .parents
        .iter()
        .position(|p| p == prev)
        .ok_or_else(|| Error::Decision(format!("`{}` does not depend on `{prev}`", node.name)))?;
    let cards: Vec<usize> = node
        .parents
        .iter()
        .map(|p| net.node(p).map(|n| n.card()))
        .collect::<Result<_>>()?;
    if cards[k] != 2 {
        return Err(Error::Decision(format!("renewal chain node `{prev}` must be binary")));
    }
    let c = node.card();
    let rows = node.cpt.len() / c;
    let mut cpt = node.cpt.clone();
    for r in 0..rows {
        let mut idx = decode(r, &cards);
        idx[k] = 1;
        let src = idx.iter().zip(&cards).fold(0, |acc, (i, n)| acc * n + i);
        cpt[r * c..(r + 1) * c].copy_from_slice(&node.cpt[src * c..(src + 1) * c]);
    }
    Ok(cpt)
}

impl InfluenceDiagram {
    pub fn new(base: DiscreteBN, spec: &DecisionSpec) -> Result<Self> {
        base.check()?;
        let d = &spec.decision;
        if d.alternatives.is_empty() {
            return Err(Error::Decision(format!("decision `{}` has no alternatives", d.name)));
        }
        if base.contains(&d.name) {
            return Err(Error::Decision(format!("decision `{}` clashes with a network node", d.name)));
        }
        for alt in d.overrides.keys() {
            if !d.alternatives.contains(alt) {
                return Err(Error::Decision(format!("overrides given for unknown alternative `{alt}`")));
            }
        }
        for u in &spec.utilities {
            let mut size = 1usize;
            for p in &u.parents {
                size *= if *p == d.name { d.alternatives.len() } else { base.node(p)?.card() };
            }
            if u.table.len() != size {
                return Err(Error::Decision(format!(
                    "utility `{}` has {} entries, expected {size}",
                    u.name,
                    u.table.len()
                )));
            }
            if u.table.iter().any(|v| !v.is_finite()) {
                return Err(Error::Decision(format!("utility `{}` has a non-finite entry", u.name)));
            }
        }
        let mut networks = Vec::with_capacity(d.alternatives.len());
        let mut renewals = Vec::with_capacity(d.alternatives.len());
        for alt in &d.alternatives {
            let mut net = base.clone();
            let mut ren = Vec::new();
            for o in d.overrides.get(alt).into_iter().flatten() {
                let node = base.node(&o.node)?;
                let prior = || base.posterior(&o.node, &Evidence::new()).map(|p| p.probabilities);
                match &o.rule {
                    OverrideRule::Table { cpt } => net.set_cpt(&o.node, cpt.clone())?,
                    OverrideRule::PriorMarginal => {
                        let rows = node.cpt.len() / node.card();
                        net.set_cpt(&o.node, prior()?.repeat(rows))?;
                    }
                    OverrideRule::Renewal { chain, from, to, fresh } => {
                        if *from < 1 || to < from || !chain.contains("{t}") {
                            return Err(Error::Decision(format!("renewal of `{}` needs a `{{t}}` chain over years from 1", o.node)));
                        }
                        let r = Renewal {
                            node: o.node.clone(),
                            prior: prior()?,
                            chain: chain.clone(),
                            from: *from,
                            to: *to,
                            fresh: fresh.clone(),
                        };
                        for t in *from..=*to {
                            base.node(&r.chain_at(t))?;
                        }
                        ren.push(r);
                    }
                }
            }
            for r in &ren {
                net = r.apply(&net, r.from - 1)?;
            }
            net.check()?;
            networks.push(net);
            renewals.push(ren);
        }
        Ok(Self {
            base,
            decision: d.clone(),
            utilities: spec.utilities.clone(),
            networks,
            renewals,
            voi_cap: spec.voi_cap,
        })
    }

    /// Network of alternative `a` once renewals are placed at the decision
    /// year implied by `observed`.
    fn resolved(&self, a: usize, observed: &dyn Fn(&str) -> bool) -> Result<Cow<'_, DiscreteBN>> {
        let ren = &self.renewals[a];
        if ren.iter().all(|r| r.decision_year(observed) == r.from - 1) {
            return Ok(Cow::Borrowed(&self.networks[a]));
        }
        // rebuild from the table-overridden network without renewals
        let mut net = self.base.clone();
        for n in self.base.nodes() {
            let own = self.networks[a].node(&n.name)?;
            if own.parents == n.parents && own.cpt != n.cpt {
                net.set_cpt(&n.name, own.cpt.clone())?;
            }
        }
        for r in ren {
            net = r.apply(&net, r.decision_year(observed))?;
        }
        Ok(Cow::Owned(net))
    }

    pub fn base(&self) -> &DiscreteBN {
        &self.base
    }

    pub fn decision(&self) -> &DecisionNode {
        &self.decision
    }

    pub fn network(&self, alternative: &str) -> Result<&DiscreteBN> {
        Ok(&self.networks[self.alternative_index(alternative)?])
    }

    fn alternative_index(&self, alt: &str) -> Result<usize> {
        self.decision
            .alternatives
            .iter()
            .position(|a| a == alt)
            .ok_or_else(|| Error::Decision(format!("unknown alternative `{alt}`")))
    }

    /// Chance nodes feeding any utility, in first-use order.
    fn utility_chance_parents(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for u in &self.utilities {
            for p in &u.parents {
                if *p != self.decision.name && !out.contains(p) {
                    out.push(p.clone());
                }
            }
        }
        out
    }

    /// Utility of one configuration: `chance` holds states of
    /// [`Self::utility_chance_parents`] in order.
    fn utility_of(&self, alt: usize, chance_nodes: &[String], chance: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for u in &self.utilities {
            let mut idx = 0usize;
            for p in &u.parents {
                let (card, s) = if *p == self.decision.name {
                    (self.decision.alternatives.len(), alt)
                } else {
                    let k = chance_nodes.iter().position(|c| c == p).unwrap();
                    (self.base.node(p)?.card(), chance[k])
                };
                idx = idx * card + s;
            }
            total += u.table[idx];
        }
        Ok(total)
    }

    /// Expected utility of each chance-parent configuration weighted by
    /// `probs`, a row-major joint over `nodes`.
    fn expected_over(&self, alt: usize, nodes: &[String], cards: &[usize], probs: &[f64]) -> Result<f64> {
        let mut eu = 0.0;
        let mut states = vec![0usize; nodes.len()];
        for &p in probs {
            if p != 0.0 {
                eu += p * self.utility_of(alt, nodes, &states)?;
            }
            increment(&mut states, cards);
        }
        Ok(eu)
    }

    /// `EU(a | e) = Σ_u Σ_config U(config) · Pr(config | e, a)`.
    pub fn expected_utility(&self, alternative: &str, evidence: &Evidence) -> Result<f64> {
        let a = self.alternative_index(alternative)?;
        self.eu_index(a, evidence)
    }

    fn eu_index(&self, a: usize, evidence: &Evidence) -> Result<f64> {
        let net = self.resolved(a, &|n| evidence.findings.contains_key(n))?;
        net.check_evidence(evidence)?;
        let nodes = self.utility_chance_parents();
        if nodes.is_empty() {
            if net.evidence_probability(evidence)? <= 0.0 {
                return Err(Error::InconsistentEvidence("evidence has zero probability".into()));
            }
            return self.utility_of(a, &nodes, &[]);
        }
        let refs: Vec<&str> = nodes.iter().map(String::as_str).collect();
        let j = net.joint_posterior(&refs, evidence)?;
        self.expected_over(a, &nodes, &j.cards, &j.probabilities)
    }

    /// Expected utility of every alternative and the best one; ties go to the
    /// earlier declared alternative.
    pub fn optimal_decision(&self, evidence: &Evidence) -> Result<UtilityResult> {
        let eus = (0..self.networks.len())
            .map(|a| self.eu_index(a, evidence))
            .collect::<Result<Vec<_>>>()?;
        let best = argmax(&eus);
        Ok(UtilityResult {
            alternatives: self.decision.alternatives.clone(),
            expected_utilities: eus,
            optimal: self.decision.alternatives[best].clone(),
            evidence_fingerprint: evidence.fingerprint(),
        })
    }

    /// Preposterior value of observing `measurements` before deciding:
    /// `Σ_s Pr(s | e) max_a EU(a | e, s) − max_a EU(a | e)`. Outcome
    /// probabilities come from the base network, since the measurements are
    /// made before any alternative is carried out.
    pub fn voi(&self, measurements: &[&str], evidence: &Evidence) -> Result<VoiResult> {
        if measurements.is_empty() {
            return Err(Error::Decision("empty measurement set".into()));
        }
        let mut outcomes = 1usize;
        for m in measurements {
            let card = self.base.node(m)?.card();
            outcomes = outcomes.saturating_mul(card);
            if evidence.findings.contains_key(*m) {
                return Err(Error::Decision(format!("`{m}` is already observed")));
            }
        }
        if outcomes > self.voi_cap {
            return Err(Error::Decision(format!(
                "{outcomes} joint measurement outcomes exceed the cap of {}",
                self.voi_cap
            )));
        }
        let prior = self.optimal_decision(evidence)?;
        let without = prior.expected_utilities[prior.optimal_index()];

        let chance = self.utility_chance_parents();
        let mut nodes: Vec<String> = measurements.iter().map(|s| s.to_string()).collect();
        let tail: Vec<String> = chance.iter().filter(|c| !nodes.contains(c)).cloned().collect();
        nodes.extend(tail.iter().cloned());
        let refs: Vec<&str> = nodes.iter().map(String::as_str).collect();
        let m_refs: Vec<&str> = measurements.to_vec();

        let p_s = self.base.joint_posterior(&m_refs, evidence)?.probabilities;
        let inner: usize = self.base_cards(&tail)?.iter().product();
        let mut best = vec![f64::NEG_INFINITY; outcomes];
        let observed = |n: &str| evidence.findings.contains_key(n) || measurements.contains(&n);
        for a in 0..self.networks.len() {
            let j = self.resolved(a, &observed)?.joint_posterior(&refs, evidence)?;
            for s in 0..outcomes {
                let block = &j.probabilities[s * inner..(s + 1) * inner];
                let mass: f64 = block.iter().sum();
                if !(mass > 0.0) || p_s[s] == 0.0 {
                    continue;
                }
                let s_states = decode(s, &j.cards[..measurements.len()]);
                let mut eu = 0.0;
                let mut t_states = vec![0usize; tail.len()];
                for &p in block {
                    if p != 0.0 {
                        let chance_states: Vec<usize> = chance
                            .iter()
                            .map(|c| match measurements.iter().position(|m| m == c) {
                                Some(k) => s_states[k],
                                None => t_states[tail.iter().position(|t| t == c).unwrap()],
                            })
                            .collect();
                        eu += p / mass * self.utility_of(a, &chance, &chance_states)?;
                    }
                    increment(&mut t_states, &j.cards[measurements.len()..]);
                }
                if eu > best[s] {
                    best[s] = eu;
                }
            }
        }
        let with: f64 = (0..outcomes).filter(|&s| p_s[s] > 0.0).map(|s| p_s[s] * best[s]).sum();
        Ok(VoiResult {
            measurements: measurements.iter().map(|s| s.to_string()).collect(),
            voi: with - without,
            with_measurement: with,
            without_measurement: without,
            outcomes,
        })
    }

    fn base_cards(&self, nodes: &[String]) -> Result<Vec<usize>> {
        nodes.iter().map(|n| Ok(self.base.node(n)?.card())).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn increment(states: &mut [usize], cards: &[usize]) {
    for k in (0..states.len()).rev() {
        states[k] += 1;
        if states[k] < cards[k] {
            return;
        }
        states[k] = 0;
    }
}

fn decode(mut s: usize, cards: &[usize]) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for k in (0..cards.len()).rev() {
        out[k] = s % cards[k];
        s /= cards[k];
    }
    out
}
