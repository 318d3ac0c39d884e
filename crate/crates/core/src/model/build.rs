use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::expand::expand;
use super::spec::{DistSpec, ModelFile, NodeItem, SrmParent, TimelineSpec};
use crate::bn::{DiscreteBN, Node};
use crate::compile::{
    cell_masses, cpt_by_quadrature, cpt_capacity_cdf, cpt_from_srm, cpt_measurement, discretize_marginal,
    representative_values, uniform_cell, uniform_exceedance, CellLaw, CompilationReport, CompileOptions, CptReport,
    GridParent, IntervalScheme, QuadParent,
};
use crate::decide::{DecisionSpec, InfluenceDiagram};
use crate::dists::{std_normal_pdf, CommonFactorGroup, Distribution};
use crate::error::{Error, Result};
use crate::infra::{connectivity_cpt, deterioration_cpt, fragility_cpt, site_exceedance_cpt, DeteriorationModel, FragilityCurve, NetworkTopology};
use crate::numeric::GaussLegendre;
use crate::srm::ReliabilityProblem;

/// State labels of every binary failure node; state 0 is failure.
pub const BINARY_STATES: [&str; 2] = ["fail", "survive"];

/// Largest joint table built for a correlated group.
const MAX_GROUP_STATES: usize = 1_000_000;

/// Version of the persisted network document.
pub const FORMAT_VERSION: u32 = 1;

/// A model with its names resolved and its node list expanded, ready to
/// compile.
#[derive(Debug, Clone)]
pub struct Model {
    pub file: ModelFile,
    pub problem: ReliabilityProblem,
    pub schemes: BTreeMap<String, IntervalScheme>,
    pub nodes: Vec<NodeItem>,
}

/// Compiled discrete network with the declarations needed to query it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledModel {
    pub format: u32,
    pub model: String,
    /// SHA-256 of the model definition the network was compiled from.
    pub model_hash: String,
    pub network: DiscreteBN,
    pub report: CompilationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<NetworkTopology>,
    #[serde(default)]
    pub timelines: Vec<TimelineSpec>,
}

impl CompiledModel {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    /// Check the format version and the network tables.
    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported network format {}", self.format)));
        }
        self.network.check()
    }

    pub fn influence_diagram(&self) -> Result<InfluenceDiagram> {
        let spec = self
            .decision
            .as_ref()
            .ok_or_else(|| Error::Decision("no decision spec".into()))?;
        InfluenceDiagram::new(self.network.clone(), spec)
    }

    pub fn timeline(&self, name: Option<&str>) -> Result<&TimelineSpec> {
        match name {
            None => self
                .timelines
                .first()
                .ok_or_else(|| Error::Model(format!("model `{}` declares no timeline", self.model))),
            Some(n) => self
                .timelines
                .iter()
                .find(|t| t.name == n)
                .ok_or_else(|| Error::Model(format!("no timeline named `{n}`"))),
        }
    }
}

/// Hash of a model definition; equal definitions hash equally.
pub fn model_hash(file: &ModelFile) -> String {
    let text = serde_json::to_string(file).expect("model serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl Model {
    /// Resolve every declaration and check that every reference names
    /// something declared earlier.
    pub fn new(file: ModelFile) -> Result<Self> {
        let mut problem = ReliabilityProblem::new();
        for (name, d) in &file.variables {
            let d = d.resolve().map_err(|e| ctx(format!("variable `{name}`"), e))?;
            problem = problem.with_variable(name, d);
        }
        for g in &file.groups {
            let marginal = g.marginal.resolve().map_err(|e| ctx(format!("group `{}`", g.name), e))?;
            let group = CommonFactorGroup::new(&g.name, g.members.clone(), marginal, g.rho)
                .map_err(|e| ctx(format!("group `{}`", g.name), e))?;
            problem = problem.with_group(group);
        }
        for (name, v) in &file.fixed {
            problem = problem.with_fixed(name, *v);
        }
        for (name, text) in &file.limit_states {
            problem = problem
                .with_limit_state(name, text)
                .map_err(|e| ctx(format!("limit state `{name}`"), e))?;
        }
        if !file.limit_states.is_empty() || !file.variables.is_empty() {
            problem.validate()?;
        }
        let mut schemes = BTreeMap::new();
        for (name, s) in &file.schemes {
            schemes.insert(name.clone(), s.resolve().map_err(|e| ctx(format!("scheme `{name}`"), e))?);
        }
        let nodes = expand(&file.nodes, &file.templates)?;
        let m = Self {
            file,
            problem,
            schemes,
            nodes,
        };
        m.check_references()?;
        Ok(m)
    }

    fn scheme(&self, name: &str) -> Result<&IntervalScheme> {
        self.schemes
            .get(name)
            .ok_or_else(|| Error::Model(format!("undeclared scheme `{name}`")))
    }

    /// Continuous law of a declared variable or group member.
    fn variable_law(&self, name: &str) -> Result<Distribution> {
        if let Some(d) = self.problem.variables.get(name) {
            return Ok(*d);
        }
        self.problem
            .groups
            .iter()
            .find(|g| g.members.iter().any(|m| m == name))
            .map(|g| g.member_marginal())
            .ok_or_else(|| Error::Model(format!("undeclared variable `{name}`")))
    }

    /// Names and cardinalities of the expanded nodes, in declaration order.
    pub fn node_inventory(&self) -> Result<Vec<(String, usize)>> {
        let mut out: Vec<(String, usize)> = Vec::new();
        let card = |n: &str, out: &[(String, usize)]| -> Result<usize> {
            out.iter()
                .find(|(m, _)| m == n)
                .map(|(_, c)| *c)
                .ok_or_else(|| Error::Model(format!("`{n}` is used before it is declared")))
        };
        for item in &self.nodes {
            let mut need: Vec<&str> = Vec::new();
            let new: Vec<(String, usize)> = match item {
                NodeItem::Marginal { name, variable, distribution, scheme } => {
                    match (variable, distribution) {
                        (Some(v), None) => {
                            self.variable_law(v)?;
                        }
                        (None, Some(d)) => {
                            d.resolve().map_err(|e| ctx(format!("node `{name}`"), e))?;
                        }
                        _ => return Err(Error::Model(format!("node `{name}` needs exactly one of `variable` and `distribution`"))),
                    }
                    vec![(name.clone(), self.scheme(scheme)?.len())]
                }
                NodeItem::Correlated { group, members, scheme } => {
                    let g = self
                        .problem
                        .groups
                        .iter()
                        .find(|g| g.name == *group)
                        .ok_or_else(|| Error::Model(format!("undeclared group `{group}`")))?;
                    for m in members {
                        if !g.members.contains(&m.variable) {
                            return Err(Error::Model(format!("`{}` is not a member of group `{group}`", m.variable)));
                        }
                    }
                    let k = self.scheme(scheme)?.len();
                    members.iter().map(|m| (m.name.clone(), k)).collect()
                }
                NodeItem::Srm { name, modes, parents, .. } => {
                    self.check_modes(name, modes, parents)?;
                    need.extend(parents.iter().map(|p| p.node.as_str()));
                    vec![(name.clone(), 2)]
                }
                NodeItem::Capacity {
                    name,
                    modes,
                    placeholder,
                    scheme,
                    parents,
                } => {
                    self.check_modes(name, modes, parents)?;
                    if !self.problem.fixed.contains_key(placeholder) {
                        return Err(Error::Model(format!("node `{name}`: placeholder `{placeholder}` must be a fixed value")));
                    }
                    need.extend(parents.iter().map(|p| p.node.as_str()));
                    vec![(name.clone(), self.scheme(scheme)?.len())]
                }
                NodeItem::Measurement { name, parent, scheme, noise } => {
                    noise.resolve().map_err(|e| ctx(format!("node `{name}`"), e))?;
                    need.push(parent);
                    vec![(name.clone(), self.scheme(scheme)?.len())]
                }
                NodeItem::GumbelLocation { name, parent, scheme, .. } => {
                    need.push(parent);
                    vec![(name.clone(), self.scheme(scheme)?.len())]
                }
                NodeItem::Exceedance {
                    name,
                    capacity,
                    load,
                    previous,
                    ..
                } => {
                    need.push(capacity);
                    need.push(load);
                    if let Some(p) = previous {
                        need.push(p);
                    }
                    vec![(name.clone(), 2)]
                }
                NodeItem::Fragility { name, load, .. } => {
                    need.push(load);
                    vec![(name.clone(), 2)]
                }
                NodeItem::Deterioration { name, parent, .. } => {
                    let k = card(parent, &out)?;
                    need.push(parent);
                    vec![(name.clone(), k)]
                }
                NodeItem::Connectivity { name, components } => {
                    if self.file.topology.is_none() {
                        return Err(Error::Model(format!("node `{name}` needs a topology")));
                    }
                    need.extend(components.values().map(String::as_str));
                    vec![(name.clone(), 2)]
                }
                NodeItem::Table { name, states, parents, .. } => {
                    need.extend(parents.iter().map(String::as_str));
                    vec![(name.clone(), states.len())]
                }
                NodeItem::Repeat { .. } | NodeItem::Instance { .. } => unreachable!("expanded"),
            };
            for n in need {
                card(n, &out)?;
            }
            for (n, k) in new {
                if out.iter().any(|(m, _)| *m == n) {
                    return Err(Error::Model(format!("node `{n}` is declared twice")));
                }
                out.push((n, k));
            }
        }
        Ok(out)
    }

    fn check_modes(&self, node: &str, modes: &[String], parents: &[SrmParent]) -> Result<()> {
        if modes.is_empty() {
            return Err(Error::Model(format!("node `{node}` lists no limit states")));
        }
        for m in modes {
            self.problem.limit_state(m).map_err(|e| ctx(format!("node `{node}`"), e))?;
        }
        for p in parents {
            self.variable_law(&p.variable).map_err(|e| ctx(format!("node `{node}`"), e))?;
        }
        Ok(())
    }

    fn check_references(&self) -> Result<()> {
        let inv = self.node_inventory()?;
        let has = |n: &str| inv.iter().any(|(m, _)| m == n);
        if let Some(d) = &self.file.decision {
            for o in d.decision.overrides.values().flatten() {
                if !has(&o.node) {
                    return Err(Error::Model(format!("decision override names unknown node `{}`", o.node)));
                }
            }
            for u in &d.utilities {
                for p in &u.parents {
                    if *p != d.decision.name && !has(p) {
                        return Err(Error::Model(format!("utility `{}` names unknown node `{p}`", u.name)));
                    }
                }
            }
            for set in &d.measurement_sets {
                for m in set {
                    if !has(m) {
                        return Err(Error::Model(format!("measurement set names unknown node `{m}`")));
                    }
                }
            }
        }
        if let Some(t) = &self.file.topology {
            t.validate()?;
        }
        for tl in &self.file.timelines {
            if tl.from < 1 || tl.to < tl.from {
                return Err(Error::Model(format!("timeline `{}` has an empty year range", tl.name)));
            }
            for t in tl.from..=tl.to {
                for n in std::iter::once(tl.node_at(t)).chain(tl.elements_at(t)) {
                    if !has(&n) {
                        return Err(Error::Model(format!("timeline `{}` names unknown node `{n}`", tl.name)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Compile every node table. `workers` overrides the model's option.
    pub fn compile(&self, workers: Option<usize>) -> Result<CompiledModel> {
        let mut opts = self.file.options.clone();
        if workers.is_some() {
            opts.workers = workers;
        }
        let mut b = Builder {
            model: self,
            opts,
            bn: DiscreteBN::new(&self.file.name),
            info: HashMap::new(),
            report: CompilationReport::default(),
            cache: HashMap::new(),
        };
        for item in &self.nodes {
            b.add(item)?;
        }
        b.bn.check()?;
        Ok(CompiledModel {
            format: FORMAT_VERSION,
            model: self.file.name.clone(),
            model_hash: model_hash(&self.file),
            network: b.bn,
            report: b.report,
            decision: self.file.decision.clone(),
            topology: self.file.topology.clone(),
            timelines: self.file.timelines.clone(),
        })
    }
}

fn ctx(what: String, e: Error) -> Error {
    Error::Model(format!("{what}: {e}"))
}

/// What later nodes need to know about a compiled node.
#[derive(Debug, Clone, Default)]
struct NodeInfo {
    scheme: Option<IntervalScheme>,
    /// Continuous law of a discretized root or group member.
    marginal: Option<Distribution>,
}

struct Builder<'a> {
    model: &'a Model,
    opts: CompileOptions,
    bn: DiscreteBN,
    info: HashMap<String, NodeInfo>,
    report: CompilationReport,
    /// Tables keyed by everything they depend on, so repeated objects compile
    /// once.
    cache: HashMap<String, (Vec<f64>, CptReport)>,
}

fn binary() -> Vec<String> {
    BINARY_STATES.iter().map(|s| s.to_string()).collect()
}

impl Builder<'_> {
    fn info(&self, node: &str) -> Result<&NodeInfo> {
        self.info
            .get(node)
            .ok_or_else(|| Error::Model(format!("`{node}` is used before it is declared")))
    }

    fn scheme_of(&self, node: &str) -> Result<IntervalScheme> {
        self.info(node)?
            .scheme
            .clone()
            .ok_or_else(|| Error::Model(format!("`{node}` has no interval states")))
    }

    fn cached<F>(&mut self, node: &str, key: String, f: F) -> Result<Vec<f64>>
    where
        F: FnOnce() -> Result<(Vec<f64>, CptReport)>,
    {
        if let Some((cpt, rep)) = self.cache.get(&key) {
            let mut rep = rep.clone();
            rep.node = node.to_string();
            rep.cached = true;
            let cpt = cpt.clone();
            self.report.push(rep);
            return Ok(cpt);
        }
        let (cpt, mut rep) = f()?;
        rep.node = node.to_string();
        self.cache.insert(key, (cpt.clone(), rep.clone()));
        self.report.push(rep);
        Ok(cpt)
    }

    fn closed_form(&mut self, node: &str, method: &str, rows: usize, card: usize) {
        self.report.push(CptReport::new(node, method, rows, card));
    }

    fn insert(&mut self, node: Node, info: NodeInfo) -> Result<()> {
        let name = node.name.clone();
        self.bn.add_node(node).map_err(|e| ctx(format!("node `{name}`"), e))?;
        self.info.insert(name, info);
        Ok(())
    }

    fn grid_parents(&self, parents: &[SrmParent]) -> Result<Vec<GridParent>> {
        parents
            .iter()
            .map(|p| {
                let info = self.info(&p.node)?;
                let scheme = self.scheme_of(&p.node)?;
                let marginal = info.marginal.ok_or_else(|| {
                    Error::Model(format!("`{}` must be a discretized continuous variable to pin `{}`", p.node, p.variable))
                })?;
                Ok(GridParent {
                    variable: p.variable.clone(),
                    representatives: representative_values(&marginal, &scheme)?,
                    scheme,
                    marginal: Some(marginal),
                })
            })
            .collect()
    }

    fn add(&mut self, item: &NodeItem) -> Result<()> {
        let m = self.model;
        match item {
            NodeItem::Marginal {
                name,
                variable,
                distribution,
                scheme,
            } => {
                let d = match (variable, distribution) {
                    (Some(v), _) => m.variable_law(v)?,
                    (None, Some(d)) => d.resolve()?,
                    (None, None) => unreachable!("checked"),
                };
                let s = m.scheme(scheme)?.clone();
                let p = discretize_marginal(&d, &s).map_err(|e| ctx(format!("node `{name}`"), e))?;
                self.closed_form(name, "marginal", 1, s.len());
                self.insert(
                    Node::interval(name.clone(), s.clone(), vec![], p),
                    NodeInfo {
                        scheme: Some(s),
                        marginal: Some(d),
                    },
                )
            }
            NodeItem::Correlated { group, members, scheme } => {
                let g = m.problem.groups.iter().find(|g| g.name == *group).unwrap().clone();
                let s = m.scheme(scheme)?.clone();
                let tables = correlated_chain(&g, members.len(), &s)?;
                let mut parents: Vec<String> = Vec::new();
                for (member, cpt) in members.iter().zip(tables) {
                    let rows = cpt.len() / s.len();
                    self.closed_form(&member.name, "common_factor", rows, s.len());
                    self.insert(
                        Node::interval(member.name.clone(), s.clone(), parents.clone(), cpt),
                        NodeInfo {
                            scheme: Some(s.clone()),
                            marginal: Some(g.member_marginal()),
                        },
                    )?;
                    parents.push(member.name.clone());
                }
                Ok(())
            }
            NodeItem::Srm {
                name,
                modes,
                parents,
                cell_rule,
                solver,
            } => {
                let grid = self.grid_parents(parents)?;
                let mut opts = self.opts.clone();
                if let Some(r) = cell_rule {
                    opts.cell_rule = *r;
                }
                if let Some(s) = solver {
                    opts.solver = *s;
                }
                let modes_ref: Vec<&str> = modes.iter().map(String::as_str).collect();
                let key = cache_key("srm", &(&m.problem, modes, &grid, &opts));
                let cpt = self.cached(name, key, || cpt_from_srm(name, &m.problem, &modes_ref, &grid, &opts))?;
                let parent_names = parents.iter().map(|p| p.node.clone()).collect();
                self.insert(Node::new(name.clone(), binary(), parent_names, cpt), NodeInfo::default())
            }
            NodeItem::Capacity {
                name,
                modes,
                placeholder,
                scheme,
                parents,
            } => {
                let grid = self.grid_parents(parents)?;
                let s = m.scheme(scheme)?.clone();
                let opts = self.opts.clone();
                let modes_ref: Vec<&str> = modes.iter().map(String::as_str).collect();
                let key = cache_key("capacity", &(&m.problem, modes, placeholder, &s, &grid, &opts));
                let cpt = self.cached(name, key, || {
                    cpt_capacity_cdf(name, &m.problem, &modes_ref, placeholder, &s, &grid, &opts)
                })?;
                let parent_names = parents.iter().map(|p| p.node.clone()).collect();
                self.insert(
                    Node::interval(name.clone(), s.clone(), parent_names, cpt),
                    NodeInfo {
                        scheme: Some(s),
                        marginal: None,
                    },
                )
            }
            NodeItem::Measurement {
                name,
                parent,
                scheme,
                noise,
            } => {
                let info = self.info(parent)?.clone();
                let (Some(ps), Some(d)) = (info.scheme, info.marginal) else {
                    return Err(Error::Model(format!("measured node `{parent}` must be a discretized continuous variable")));
                };
                let s = m.scheme(scheme)?.clone();
                let reps = representative_values(&d, &ps)?;
                let cpt = cpt_measurement(&reps, &s, &noise.resolve()?)?;
                self.closed_form(name, "measurement", ps.len(), s.len());
                self.insert(
                    Node::interval(name.clone(), s.clone(), vec![parent.clone()], cpt),
                    NodeInfo {
                        scheme: Some(s),
                        marginal: None,
                    },
                )
            }
            NodeItem::GumbelLocation {
                name,
                parent,
                alpha,
                scheme,
            } => {
                let info = self.info(parent)?.clone();
                let (Some(ps), Some(d)) = (info.scheme, info.marginal) else {
                    return Err(Error::Model(format!("`{parent}` must be a discretized continuous variable")));
                };
                let s = m.scheme(scheme)?.clone();
                let alpha = *alpha;
                let opts = self.opts.clone();
                let key = cache_key("gumbel", &(&ps, &d, alpha, &s, opts.quadrature_tolerance));
                let cpt = self.cached(name, key, || {
                    let parents = [QuadParent::Interval {
                        scheme: ps.clone(),
                        law: CellLaw::Continuous { distribution: d },
                        label: parent.clone(),
                    }];
                    cpt_by_quadrature(
                        name,
                        &parents,
                        s.len(),
                        |x| Ok(cell_masses(&Distribution::Gumbel { alpha, location: x[0] }, &s)),
                        &opts,
                    )
                })?;
                self.insert(
                    Node::interval(name.clone(), s.clone(), vec![parent.clone()], cpt),
                    NodeInfo {
                        scheme: Some(s),
                        marginal: None,
                    },
                )
            }
            NodeItem::Exceedance {
                name,
                capacity,
                load,
                previous,
                site_factor,
            } => {
                let qs = self.scheme_of(capacity)?;
                let hs = self.scheme_of(load)?;
                if let Some(p) = previous {
                    if self.bn.node(p)?.card() != 2 {
                        return Err(Error::Model(format!("`{p}` must be a binary failure node")));
                    }
                }
                let site = site_factor.as_ref().map(DistSpec::resolve).transpose()?;
                let opts = self.opts.clone();
                let key = cache_key("exceedance", &(&qs, &hs, &site, previous.is_some()));
                let cumulative = previous.is_some();
                let cpt = self.cached(name, key, || {
                    let (annual, mut rep) = match &site {
                        Some(x) => site_exceedance_cpt(name, &qs, &hs, x, &opts)?,
                        None => {
                            let mut cpt = Vec::with_capacity(qs.len() * hs.len() * 2);
                            for a in 0..qs.len() {
                                for b in 0..hs.len() {
                                    let pf = uniform_exceedance(uniform_cell(&qs, a), uniform_cell(&hs, b));
                                    cpt.extend([pf, 1.0 - pf]);
                                }
                            }
                            (cpt, CptReport::new(name, "exceedance", qs.len() * hs.len(), 2))
                        }
                    };
                    if !cumulative {
                        return Ok((annual, rep));
                    }
                    let mut cpt = Vec::with_capacity(annual.len() * 2);
                    for row in annual.chunks(2) {
                        cpt.extend([1.0, 0.0]);
                        cpt.extend_from_slice(row);
                    }
                    rep.rows *= 2;
                    rep.cells *= 2;
                    Ok((cpt, rep))
                })?;
                let mut parents = vec![capacity.clone(), load.clone()];
                parents.extend(previous.iter().cloned());
                self.insert(Node::new(name.clone(), binary(), parents, cpt), NodeInfo::default())
            }
            NodeItem::Fragility {
                name,
                load,
                lambda,
                zeta,
                site_factor,
            } => {
                let hs = self.scheme_of(load)?;
                let curve = FragilityCurve {
                    lambda: *lambda,
                    zeta: *zeta,
                    site_factor: site_factor.as_ref().map(DistSpec::resolve).transpose()?,
                };
                let opts = self.opts.clone();
                let key = cache_key("fragility", &(&hs, &curve, opts.quadrature_tolerance));
                let cpt = self.cached(name, key, || fragility_cpt(name, &curve, &hs, &opts))?;
                self.insert(Node::new(name.clone(), binary(), vec![load.clone()], cpt), NodeInfo::default())
            }
            NodeItem::Deterioration {
                name,
                parent,
                mean_ratio,
                std_ratio,
            } => {
                let s = self.scheme_of(parent)?;
                let model = DeteriorationModel {
                    mean_ratio: *mean_ratio,
                    std_ratio: *std_ratio,
                };
                let opts = self.opts.clone();
                let key = cache_key("deterioration", &(&s, &model, opts.quadrature_tolerance));
                let cpt = self.cached(name, key, || deterioration_cpt(name, &model, &s, &opts))?;
                self.insert(
                    Node::interval(name.clone(), s.clone(), vec![parent.clone()], cpt),
                    NodeInfo {
                        scheme: Some(s),
                        marginal: None,
                    },
                )
            }
            NodeItem::Connectivity { name, components } => {
                let topo = m.file.topology.as_ref().unwrap();
                let order = topo.components();
                let mut parents = Vec::with_capacity(order.len());
                for c in &order {
                    let node = components
                        .get(c)
                        .ok_or_else(|| Error::Model(format!("node `{name}` maps no node to component `{c}`")))?;
                    if self.bn.node(node)?.card() != 2 {
                        return Err(Error::Model(format!("component node `{node}` must be binary")));
                    }
                    parents.push(node.clone());
                }
                if components.len() != order.len() {
                    return Err(Error::Model(format!("node `{name}` maps components absent from the topology")));
                }
                let cpt = connectivity_cpt(topo, &order)?;
                self.closed_form(name, "connectivity", 1 << order.len(), 2);
                self.insert(Node::new(name.clone(), binary(), parents, cpt), NodeInfo::default())
            }
            NodeItem::Table {
                name,
                states,
                parents,
                cpt,
            } => {
                let rows = cpt.len() / states.len().max(1);
                self.closed_form(name, "table", rows, states.len());
                self.insert(Node::new(name.clone(), states.clone(), parents.clone(), cpt.clone()), NodeInfo::default())
            }
            NodeItem::Repeat { .. } | NodeItem::Instance { .. } => unreachable!("expanded"),
        }
    }
}

fn cache_key<T: Serialize>(kind: &str, inputs: &T) -> String {
    let text = serde_json::to_string(inputs).expect("inputs serialize");
    format!("{kind}:{}", hex::encode(Sha256::digest(text.as_bytes())))
}

/// Chain tables for `k` discretized members of one group: member `j` given
/// members `0..j`. The joint is integrated over the shared factor with
/// Gauss–Legendre on `[−8, 8]`.
fn correlated_chain(g: &CommonFactorGroup, k: usize, s: &IntervalScheme) -> Result<Vec<Vec<f64>>> {
    let n = s.len();
    let total = n.checked_pow(k as u32).filter(|t| *t <= MAX_GROUP_STATES).ok_or_else(|| {
        Error::Model(format!("group `{}`: {k} members on {n} states exceed the joint-table limit", g.name))
    })?;
    // the marginal must be covered by the scheme
    discretize_marginal(&g.member_marginal(), s)?;
    let rule = GaussLegendre::new(64);
    let mut joint = vec![0.0; total];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let u = 8.0 * x;
        let wu = 8.0 * w * std_normal_pdf(u);
        let m = cell_masses(&g.condition_on_factor(u)?, s);
        for (idx, j) in joint.iter_mut().enumerate() {
            let mut p = wu;
            let mut r = idx;
            for _ in 0..k {
                p *= m[r % n];
                r /= n;
            }
            *j += p;
        }
    }
    let z: f64 = joint.iter().sum();
    joint.iter_mut().for_each(|v| *v /= z);
    // tables[j]: marginal over the first j + 1 members, conditioned on the first j
    let mut tables = Vec::with_capacity(k);
    for j in 0..k {
        let keep = n.pow(j as u32 + 1);
        let mut marg = vec![0.0; keep];
        for (idx, v) in joint.iter().enumerate() {
            marg[idx % keep] += v;
        }
        // index idx % keep has member 0 fastest; reorder to first-slowest
        let mut table = vec![0.0; keep];
        for (idx, v) in marg.iter().enumerate() {
            let mut digits = Vec::with_capacity(j + 1);
            let mut r = idx;
            for _ in 0..=j {
                digits.push(r % n);
                r /= n;
            }
            let pos = digits.iter().fold(0, |acc, d| acc * n + d);
            table[pos] = *v;
        }
        for row in table.chunks_mut(n) {
            let t: f64 = row.iter().sum();
            if t > 0.0 {
                row.iter_mut().for_each(|v| *v /= t);
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / n as f64);
            }
        }
        tables.push(table);
    }
    Ok(tables)
}
