use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DiscreteBN, Evidence, Factor};
use crate::error::{Error, Result};

/// Largest intermediate factor variable elimination may create.
pub const MAX_FACTOR_ENTRIES: usize = 1 << 27;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EliminationOrder {
    /// Greedy min-fill; ties by clique weight, then node name.
    MinFill,
    /// Eliminate in this order; variables not listed follow by min-fill.
    Explicit(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InferenceStats {
    pub pruned_nodes: usize,
    pub eliminated: usize,
    pub largest_factor: usize,
    pub order: Vec<String>,
}

/// Variable elimination. Returns a factor over `query` (in that order) and a
/// log-scale constant such that `Pr(query, evidence) = values · exp(log_z)`.
pub(crate) fn eliminate(
    bn: &DiscreteBN,
    query: &[usize],
    evidence: &Evidence,
    order: &EliminationOrder,
    mut stats: Option<&mut InferenceStats>,
) -> Result<(Factor, f64)> {
    bn.check_evidence(evidence)?;
    let n = bn.len();
    let qset: BTreeSet<usize> = query.iter().copied().collect();
    if qset.len() != query.len() {
        return Err(Error::Network("query lists a node twice".into()));
    }

    // findings as per-node admissible masks
    let mut allowed: Vec<Option<Vec<bool>>> = vec![None; n];
    let mut hard: Vec<Option<usize>> = vec![None; n];
    for (name, states) in &evidence.findings {
        let i = bn.id(name)?;
        let mut m = vec![false; bn.nodes()[i].card()];
        for &s in states {
            m[s] = true;
        }
        if states.len() == 1 && !qset.contains(&i) {
            hard[i] = Some(*states.iter().next().unwrap());
        }
        allowed[i] = Some(m);
    }

    // barren-node pruning: keep ancestors of query and evidence
    let mut relevant = vec![false; n];
    let mut stack: Vec<usize> = query.iter().copied().collect();
    stack.extend((0..n).filter(|&i| allowed[i].is_some()));
    while let Some(i) = stack.pop() {
        if relevant[i] {
            continue;
        }
        relevant[i] = true;
        stack.extend(bn.parent_ids(i));
    }
    if let Some(s) = stats.as_deref_mut() {
        s.pruned_nodes = relevant.iter().filter(|r| !**r).count();
    }

    let mut log_z = 0.0;
    let mut pool: Vec<Factor> = Vec::new();
    for i in (0..n).filter(|&i| relevant[i]) {
        let mut f = Factor::from_node(bn, i);
        if let Some(m) = &allowed[i] {
            if hard[i].is_none() {
                f.mask(i, m);
            }
        }
        let fixed: Vec<(usize, usize)> = f.vars.iter().filter_map(|&v| hard[v].map(|s| (v, s))).collect();
        for (v, s) in fixed {
            f = f.slice(v, s);
        }
        if f.vars.is_empty() {
            if !(f.values[0] > 0.0) {
                return Err(inconsistent());
            }
            log_z += f.values[0].ln();
        } else {
            pool.push(f);
        }
    }

    let to_eliminate: BTreeSet<usize> = (0..n)
        .filter(|&i| relevant[i] && !qset.contains(&i) && hard[i].is_none())
        .collect();
    let mut plan: Vec<usize> = Vec::new();
    if let EliminationOrder::Explicit(names) = order {
        for nm in names {
            let i = bn.id(nm)?;
            if to_eliminate.contains(&i) && !plan.contains(&i) {
                plan.push(i);
            }
        }
    }
    let rest: BTreeSet<usize> = to_eliminate.iter().copied().filter(|i| !plan.contains(i)).collect();
    let mut greedy = GreedyOrder::new(bn, &pool, &plan, rest);

    let mut step = 0;
    loop {
        let var = if step < plan.len() {
            plan[step]
        } else {
            match greedy.next() {
                Some(v) => v,
                None => break,
            }
        };
        step += 1;
        let (with, without): (Vec<Factor>, Vec<Factor>) = pool.into_iter().partition(|f| f.vars.contains(&var));
        pool = without;
        if with.is_empty() {
            continue;
        }
        let mut scope = BTreeSet::new();
        for f in &with {
            scope.extend(f.vars.iter().copied().filter(|&v| v != var));
        }
        let out_vars: Vec<usize> = scope.into_iter().collect();
        let out_cards: Vec<usize> = out_vars.iter().map(|&v| bn.nodes()[v].card()).collect();
        let size: usize = out_cards.iter().product();
        if size > MAX_FACTOR_ENTRIES {
            return Err(Error::Network(format!(
                "eliminating `{}` needs a factor with {size} entries (limit {MAX_FACTOR_ENTRIES})",
                bn.nodes()[var].name
            )));
        }
        let refs: Vec<&Factor> = with.iter().collect();
        let mut f = Factor::product_sum(&refs, &out_vars, &out_cards, Some((var, bn.nodes()[var].card())));
        if let Some(s) = stats.as_deref_mut() {
            s.eliminated += 1;
            s.largest_factor = s.largest_factor.max(size * bn.nodes()[var].card());
            s.order.push(bn.nodes()[var].name.clone());
        }
        match f.normalize_max() {
            Some(c) => log_z += c,
            None => return Err(inconsistent()),
        }
        if f.vars.is_empty() {
            continue;
        }
        pool.push(f);
    }

    let out_cards: Vec<usize> = query.iter().map(|&v| bn.nodes()[v].card()).collect();
    let refs: Vec<&Factor> = pool.iter().collect();
    let mut result = Factor::product_sum(&refs, query, &out_cards, None);
    match result.normalize_max() {
        Some(c) => log_z += c,
        None => return Err(inconsistent()),
    }
    Ok((result, log_z))
}

fn inconsistent() -> Error {
    Error::InconsistentEvidence("the findings have zero joint probability".into())
}

/// Greedy min-fill over the interaction graph of the current factors.
struct GreedyOrder<'a> {
    bn: &'a DiscreteBN,
    adj: Vec<BTreeSet<usize>>,
    remaining: BTreeSet<usize>,
}

impl<'a> GreedyOrder<'a> {
    fn new(bn: &'a DiscreteBN, pool: &[Factor], plan: &[usize], remaining: BTreeSet<usize>) -> Self {
        let mut adj = vec![BTreeSet::new(); bn.len()];
        for f in pool {
            for &a in &f.vars {
                for &b in &f.vars {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        let mut g = Self { bn, adj, remaining };
        for &v in plan {
            g.remove(v);
        }
        g
    }

    fn remove(&mut self, v: usize) {
        let nb: Vec<usize> = self.adj[v].iter().copied().collect();
        for &a in &nb {
            self.adj[a].remove(&v);
            for &b in &nb {
                if a != b {
                    self.adj[a].insert(b);
                }
            }
        }
        self.adj[v].clear();
        self.remaining.remove(&v);
    }

    fn next(&mut self) -> Option<usize> {
        let bn = self.bn;
        let best = self
            .remaining
            .iter()
            .copied()
            .map(|v| {
                let nb: Vec<usize> = self.adj[v].iter().copied().collect();
                let mut fill = 0usize;
                for (i, &a) in nb.iter().enumerate() {
                    for &b in &nb[i + 1..] {
                        if !self.adj[a].contains(&b) {
                            fill += 1;
                        }
                    }
                }
                let weight: f64 = nb.iter().map(|&a| (bn.nodes()[a].card() as f64).ln()).sum::<f64>()
                    + (bn.nodes()[v].card() as f64).ln();
                (fill, weight, v)
            })
            .min_by(|x, y| {
                x.0.cmp(&y.0)
                    .then(x.1.total_cmp(&y.1))
                    .then_with(|| bn.nodes()[x.2].name.cmp(&bn.nodes()[y.2].name))
            })?
            .2;
        self.remove(best);
        Some(best)
    }
}
