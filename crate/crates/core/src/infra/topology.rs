use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected link; links without a component always work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Link {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<String>,
}

/// Two-terminal network: a source, a terminal, and links carried by
/// components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct NetworkTopology {
    pub source: String,
    pub terminal: String,
    pub links: Vec<Link>,
}

impl NetworkTopology {
    /// Two parallel routes from `A` to `B`: bridges 1 and 2 with control 11
    /// on the first, bridge 3 with controls 12 and 13 on the second, joined
    /// by always-working railway segments.
    pub fn two_routes() -> Self {
        let l = |a: &str, b: &str, c: Option<&str>| Link {
            from: a.into(),
            to: b.into(),
            component: c.map(Into::into),
        };
        Self {
            source: "A".into(),
            terminal: "B".into(),
            links: vec![
                l("A", "n1", None),
                l("n1", "n2", Some("1")),
                l("n2", "n3", Some("2")),
                l("n3", "n4", Some("11")),
                l("n4", "B", None),
                l("A", "s1", None),
                l("s1", "s2", Some("3")),
                l("s2", "s3", Some("12")),
                l("s3", "s4", Some("13")),
                l("s4", "B", None),
            ],
        }
    }

    /// Components in link order, each listed once.
    pub fn components(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.links
            .iter()
            .filter_map(|l| l.component.clone())
            .filter(|c| seen.insert(c.clone()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let nodes: BTreeSet<&str> = self.links.iter().flat_map(|l| [l.from.as_str(), l.to.as_str()]).collect();
        for end in [&self.source, &self.terminal] {
            if !nodes.contains(end.as_str()) {
                return Err(Error::Model(format!("topology has no node `{end}`")));
            }
        }
        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        for c in self.links.iter().filter_map(|l| l.component.as_deref()) {
            *count.entry(c).or_default() += 1;
        }
        if let Some((c, _)) = count.iter().find(|(_, &n)| n > 1) {
            return Err(Error::Model(format!("component `{c}` is mapped to more than one link")));
        }
        Ok(())
    }

    /// Whether working links connect source and terminal. Every component must
    /// have a state.
    pub fn connected(&self, working: &BTreeMap<String, bool>) -> Result<bool> {
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for l in &self.links {
            let up = match &l.component {
                None => true,
                Some(c) => *working
                    .get(c)
                    .ok_or_else(|| Error::Model(format!("no state for component `{c}`")))?,
            };
            if up {
                adj.entry(&l.from).or_default().push(&l.to);
                adj.entry(&l.to).or_default().push(&l.from);
            }
        }
        let mut seen = BTreeSet::from([self.source.as_str()]);
        let mut queue = VecDeque::from([self.source.as_str()]);
        while let Some(n) = queue.pop_front() {
            if n == self.terminal {
                return Ok(true);
            }
            for &m in adj.get(n).into_iter().flatten() {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        Ok(false)
    }
}

/// Deterministic system table over binary component parents (state 0 =
/// failed), in the order of `components`. Rows are `(fail, survive)`.
pub fn connectivity_cpt(topology: &NetworkTopology, components: &[String]) -> Result<Vec<f64>> {
    topology.validate()?;
    let declared: BTreeSet<String> = topology.components().into_iter().collect();
    let given: BTreeSet<String> = components.iter().cloned().collect();
    if declared != given || given.len() != components.len() {
        return Err(Error::Model(format!(
            "system node parents {components:?} do not match the topology components {declared:?}"
        )));
    }
    let k = components.len();
    let mut cpt = Vec::with_capacity(2 << k);
    for row in 0..(1usize << k) {
        // first parent varies slowest
        let working: BTreeMap<String, bool> = components
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), (row >> (k - 1 - i)) & 1 == 1))
            .collect();
        if topology.connected(&working)? {
            cpt.extend([0.0, 1.0]);
        } else {
            cpt.extend([1.0, 0.0]);
        }
    }
    Ok(cpt)
}
