//! Structural reliability kernel: the map to standard normal space, FORM design
//! point search, first-order series systems, crude and likelihood-weighted Monte
//! Carlo.

mod form;
mod mcs;
pub mod mvn;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use form::{form_component, series_from_components, series_system_pf, FormOptions, FormResult};
pub(crate) use form::form_in_space;
pub use mcs::{conditional_mcs, mcs, Measurement};

use crate::dists::{beta_from_pf, std_normal_pdf, std_normal_quantile, CommonFactorGroup, Distribution};
use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};

/// Continuous variables, their dependence, pinned values and limit states.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityProblem {
    /// Mutually independent random variables.
    pub variables: BTreeMap<String, Distribution>,
    /// Equi-correlated lognormal groups.
    #[serde(default)]
    pub groups: Vec<CommonFactorGroup>,
    /// Deterministic values, e.g. parents pinned at grid representatives.
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    /// Limit states; failure of a mode is `g <= 0`.
    pub limit_states: BTreeMap<String, Expr>,
}

impl ReliabilityProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_variable(mut self, name: &str, d: Distribution) -> Self {
        self.variables.insert(name.to_string(), d);
        self
    }

    pub fn with_group(mut self, g: CommonFactorGroup) -> Self {
        self.groups.push(g);
        self
    }

    pub fn with_fixed(mut self, name: &str, v: f64) -> Self {
        self.fixed.insert(name.to_string(), v);
        self
    }

    pub fn with_limit_state(mut self, name: &str, text: &str) -> Result<Self> {
        self.limit_states.insert(name.to_string(), Expr::parse(text)?);
        Ok(self)
    }

    /// Names of every symbol a limit state may reference.
    fn known_symbols(&self) -> Vec<String> {
        let mut out: Vec<String> = self.variables.keys().cloned().collect();
        for g in &self.groups {
            out.push(g.name.clone());
            out.extend(g.members.iter().cloned());
        }
        out.extend(self.fixed.keys().cloned());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for name in self.known_symbols() {
            if !seen.insert(name.clone()) {
                return Err(Error::Problem(format!("symbol `{name}` declared more than once")));
            }
        }
        for d in self.variables.values() {
            d.validate()?;
        }
        for g in &self.groups {
            g.validate()?;
        }
        for (name, e) in &self.limit_states {
            for v in e.free_vars() {
                if !seen.contains(&v) {
                    return Err(Error::Problem(format!("limit state `{name}` references undeclared `{v}`")));
                }
            }
        }
        Ok(())
    }

    /// Replace random variables (independent or group members) by deterministic
    /// values. Pinned group members condition the group's shared factor.
    pub fn pin(&self, pins: &[(String, f64)]) -> Result<Self> {
        let mut out = self.clone();
        let mut per_group: HashMap<usize, Vec<(String, f64)>> = HashMap::new();
        for (name, value) in pins {
            if out.variables.remove(name).is_some() || out.fixed.contains_key(name) {
                out.fixed.insert(name.clone(), *value);
                continue;
            }
            match self.groups.iter().position(|g| g.members.contains(name)) {
                Some(gi) => per_group.entry(gi).or_default().push((name.clone(), *value)),
                None => return Err(Error::Problem(format!("cannot pin unknown variable `{name}`"))),
            }
        }
        for (gi, obs) in per_group {
            out.groups[gi] = self.groups[gi].observe(&obs)?;
            for (n, v) in obs {
                out.fixed.insert(n, v);
            }
        }
        Ok(out)
    }

    pub fn standard_space(&self) -> Result<StandardSpace> {
        StandardSpace::new(self)
    }

    pub fn limit_state(&self, name: &str) -> Result<&Expr> {
        self.limit_states
            .get(name)
            .ok_or_else(|| Error::Problem(format!("unknown limit state `{name}`")))
    }
}

#[derive(Debug, Clone)]
enum SlotMap {
    Fixed(f64),
    Independent { u: usize, dist: Distribution },
    Member { group: usize, u_factor: usize, u_own: usize },
    Factor { group: usize, u: usize },
}

/// The smooth map `x = T(u)` from i.i.d. standard normal variates to the
/// problem's joint law. Independent variables take one dimension each via
/// `F⁻¹(Φ(u))`; each common-factor group takes one dimension for the factor plus
/// one per member.
#[derive(Debug, Clone)]
pub struct StandardSpace {
    names: Vec<String>,
    slot_of: HashMap<String, usize>,
    maps: Vec<SlotMap>,
    groups: Vec<CommonFactorGroup>,
    dim: usize,
}

impl StandardSpace {
    pub fn new(p: &ReliabilityProblem) -> Result<Self> {
        p.validate()?;
        let mut names = Vec::new();
        let mut maps = Vec::new();
        let mut dim = 0;
        for (name, d) in &p.variables {
            names.push(name.clone());
            maps.push(SlotMap::Independent { u: dim, dist: *d });
            dim += 1;
        }
        for (gi, g) in p.groups.iter().enumerate() {
            let u_factor = dim;
            dim += 1;
            names.push(g.name.clone());
            maps.push(SlotMap::Factor { group: gi, u: u_factor });
            for m in &g.members {
                names.push(m.clone());
                maps.push(SlotMap::Member {
                    group: gi,
                    u_factor,
                    u_own: dim,
                });
                dim += 1;
            }
        }
        for (name, v) in &p.fixed {
            names.push(name.clone());
            maps.push(SlotMap::Fixed(*v));
        }
        let slot_of = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self {
            names,
            slot_of,
            maps,
            groups: p.groups.clone(),
            dim,
        })
    }

    /// Number of standard-normal dimensions.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of physical slots (random, factor and fixed symbols).
    pub fn n_slots(&self) -> usize {
        self.names.len()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.slot_of.get(name).copied()
    }

    pub fn slot_names(&self) -> &[String] {
        &self.names
    }

    pub fn compile(&self, e: &Expr) -> Result<Tape> {
        Tape::compile(e, &|n| self.slot(n))
    }

    pub fn to_x(&self, u: &[f64], x: &mut [f64]) {
        for (k, m) in self.maps.iter().enumerate() {
            x[k] = match m {
                SlotMap::Fixed(v) => *v,
                SlotMap::Independent { u: j, dist } => dist.from_standard_normal(u[*j]),
                SlotMap::Factor { group, u: j } => {
                    let g = &self.groups[*group];
                    g.factor_mean + g.factor_std * u[*j]
                }
                SlotMap::Member { group, u_factor, u_own } => self.groups[*group].member_value(u[*u_factor], u[*u_own]),
            };
        }
    }

    /// Chain rule: given x = T(u) and ∂g/∂x, accumulate ∂g/∂u.
    pub fn pullback(&self, u: &[f64], x: &[f64], dg_dx: &[f64], dg_du: &mut [f64]) {
        dg_du.iter_mut().for_each(|v| *v = 0.0);
        for (k, m) in self.maps.iter().enumerate() {
            let gk = dg_dx[k];
            if gk == 0.0 {
                continue;
            }
            match m {
                SlotMap::Fixed(_) => {}
                SlotMap::Independent { u: j, dist } => {
                    dg_du[*j] += gk * dx_du(dist, u[*j], x[k]);
                }
                SlotMap::Factor { group, u: j } => dg_du[*j] += gk * self.groups[*group].factor_std,
                SlotMap::Member { group, u_factor, u_own } => {
                    let g = &self.groups[*group];
                    dg_du[*u_factor] += gk * x[k] * g.shared_loading() * g.factor_std;
                    dg_du[*u_own] += gk * x[k] * g.own_loading();
                }
            }
        }
    }

    /// Which u-dimensions a set of slots depends on.
    pub fn depends_on_random(&self, slots: &[usize]) -> bool {
        slots.iter().any(|&k| !matches!(self.maps[k], SlotMap::Fixed(_)))
    }
}

fn dx_du(d: &Distribution, u: f64, x: f64) -> f64 {
    match *d {
        Distribution::Normal { std, .. } => std,
        Distribution::Lognormal { zeta, .. } => zeta * x,
        _ => {
            let f = d.pdf(x);
            if f > 0.0 {
                std_normal_pdf(u) / f
            } else {
                let h = 1e-6 * (1.0 + u.abs());
                (d.from_standard_normal(u + h) - d.from_standard_normal(u - h)) / (2.0 * h)
            }
        }
    }
}

/// How a probability estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Form,
    Mcs,
    ConditionalMcs,
    Exact,
}

/// Failure probability with its generalized reliability index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfEstimate {
    pub pf: f64,
    pub beta: f64,
    /// Half-width of the 95% interval on `pf` (simulation only).
    pub half_width: Option<f64>,
    pub method: Method,
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub effective_sample_size: Option<f64>,
    #[serde(default)]
    pub warning: Option<String>,
}

impl PfEstimate {
    pub fn new(pf: f64, method: Method) -> Self {
        let pf = pf.clamp(0.0, 1.0);
        Self {
            pf,
            beta: beta_from_pf(pf),
            half_width: None,
            method,
            samples: None,
            effective_sample_size: None,
            warning: None,
        }
    }

    /// 95% interval on β implied by the pf interval (widest first).
    pub fn beta_band(&self) -> Option<(f64, f64)> {
        let hw = self.half_width?;
        let hi_pf = (self.pf + hw).min(1.0);
        let lo_pf = (self.pf - hw).max(0.0);
        Some((beta_from_pf(hi_pf), beta_from_pf(lo_pf)))
    }

    /// Whether `beta` lies inside the 95% band.
    pub fn band_contains_beta(&self, beta: f64) -> bool {
        match self.beta_band() {
            Some((lo, hi)) => beta >= lo && beta <= hi,
            None => false,
        }
    }
}

/// Quasi-random points in u-space used to fix the convergence scale of a limit state.
pub(crate) fn halton_normal(dim: usize, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u32; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];
    (1..=count)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let base = PRIMES[d % PRIMES.len()] as f64;
                    let mut f = 1.0;
                    let mut r = 0.0;
                    let mut n = i as f64 + (d / PRIMES.len()) as f64 * 7.0;
                    while n > 0.0 {
                        f /= base;
                        r += f * (n % base);
                        n = (n / base).floor();
                    }
                    std_normal_quantile(r.clamp(1e-12, 1.0 - 1e-12))
                })
                .collect()
        })
        .collect()
}
