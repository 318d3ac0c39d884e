use serde::{Deserialize, Serialize};

use super::marginal::{cell_nodes, representative_values, CellLaw};
use super::report::CptReport;
use super::IntervalScheme;
use crate::dists::Distribution;
use crate::error::{Error, Result};
use crate::numeric::GaussLegendre;
use crate::srm::{form_in_space, mcs, series_from_components, series_system_pf, FormOptions, FormResult, ReliabilityProblem};

/// Largest drop of a compiled CDF tolerated before it counts as solver trouble.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-4;

/// How each grid cell of an SRM-built table is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum CellSolver {
    /// FORM on every mode with the multinormal series combination.
    Form,
    /// Crude Monte Carlo with a fixed per-cell sample size.
    Mcs { samples: usize },
}

/// Settings shared by every CPT builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct CompileOptions {
    /// Worker threads for the grid map; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub form: FormOptions,
    #[serde(default = "default_solver")]
    pub solver: CellSolver,
    #[serde(default = "default_rule")]
    pub cell_rule: CellRule,
    /// Sample size for cells whose FORM search does not converge.
    #[serde(default = "default_fallback")]
    pub fallback_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Agreement required between the order-16 and order-32 quadratures.
    #[serde(default = "default_quad_tol")]
    pub quadrature_tolerance: f64,
}

fn default_solver() -> CellSolver {
    CellSolver::Form
}
fn default_rule() -> CellRule {
    CellRule::Representative
}
fn default_fallback() -> usize {
    100_000
}
fn default_quad_tol() -> f64 {
    1e-6
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            workers: None,
            form: FormOptions::default(),
            solver: CellSolver::Form,
            cell_rule: CellRule::Representative,
            fallback_samples: default_fallback(),
            seed: 0,
            quadrature_tolerance: default_quad_tol(),
        }
    }
}

impl CompileOptions {
    pub fn with_workers(mut self, w: usize) -> Self {
        self.workers = Some(w.max(1));
        self
    }
}

/// Ordered map over `0..n`. The result does not depend on the worker count:
/// each index is computed independently and assembled in order.
pub fn grid_map<T, F>(workers: Option<usize>, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    match workers {
        Some(1) => (0..n).map(f).collect(),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Compile(format!("thread pool: {e}")))?;
            pool.install(|| (0..n).into_par_iter().map(&f).collect())
        }
        None => (0..n).into_par_iter().map(f).collect(),
    }
}

/// A discretized parent of an SRM-built table: the continuous variable it
/// stands for, its scheme, and the value each state pins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParent {
    pub variable: String,
    pub scheme: IntervalScheme,
    pub representatives: Vec<f64>,
    /// Marginal law of the variable; required to average over cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal: Option<Distribution>,
}

impl GridParent {
    /// Parent pinned at the conditional medians (tail: conditional mean) of
    /// `marginal` on `scheme`.
    pub fn from_marginal(variable: &str, scheme: &IntervalScheme, marginal: Distribution) -> Result<Self> {
        Ok(Self {
            variable: variable.to_string(),
            scheme: scheme.clone(),
            representatives: representative_values(&marginal, scheme)?,
            marginal: Some(marginal),
        })
    }
}

/// How a grid cell's conditional probability is formed from pinned solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CellRule {
    /// One solve with every parent at its representative value.
    Representative,
    /// Gauss–Legendre average over the parents' joint law within the cell,
    /// `points` nodes per parent.
    Average { points: usize },
}

fn decode(mut row: usize, cards: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; cards.len()];
    for k in (0..cards.len()).rev() {
        idx[k] = row % cards[k];
        row /= cards[k];
    }
    idx
}

fn cell_id(parents: &[GridParent], idx: &[usize]) -> String {
    if parents.is_empty() {
        return "(root)".into();
    }
    parents
        .iter()
        .zip(idx)
        .map(|(p, &i)| format!("{}={}", p.variable, p.scheme.labels()[i]))
        .collect::<Vec<_>>()
        .join(",")
}

/// Pinned parent values and their weights for one grid cell.
struct CellPoints {
    points: Vec<(Vec<(String, f64)>, f64)>,
}

/// Parents that are members of one unobserved common-factor group share a
/// Gaussian copula; this lists (parent positions, ρ) per such group.
fn copula_groups(problem: &ReliabilityProblem, parents: &[GridParent]) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    for g in &problem.groups {
        let members: Vec<usize> = parents
            .iter()
            .enumerate()
            .filter(|(_, p)| g.members.contains(&p.variable))
            .map(|(i, _)| i)
            .collect();
        if members.len() >= 2 && g.rho > 0.0 {
            out.push((members, g.rho));
        }
    }
    out
}

/// Density ratio of an equicorrelated standard normal vector to the product of
/// its marginals.
fn equicorrelated_copula(u: &[f64], rho: f64) -> f64 {
    let k = u.len() as f64;
    let s: f64 = u.iter().sum();
    let ss: f64 = u.iter().map(|v| v * v).sum();
    let c = rho / (1.0 + (k - 1.0) * rho);
    let quad = (ss - c * s * s) / (1.0 - rho);
    let log_det = (k - 1.0) * (1.0 - rho).ln() + (1.0 + (k - 1.0) * rho).ln();
    (-0.5 * (quad - ss) - 0.5 * log_det).exp()
}

fn cell_points(
    rule: CellRule,
    parents: &[GridParent],
    copulas: &[(Vec<usize>, f64)],
    idx: &[usize],
) -> Result<CellPoints> {
    let per_parent: Vec<Vec<(f64, f64)>> = match rule {
        CellRule::Representative => parents.iter().zip(idx).map(|(p, &i)| vec![(p.representatives[i], 1.0)]).collect(),
        CellRule::Average { points } => {
            let rule = GaussLegendre::new(points.max(1));
            parents
                .iter()
                .zip(idx)
                .map(|(p, &i)| {
                    let d = p.marginal.ok_or_else(|| {
                        Error::Compile(format!("averaging over cells of `{}` needs its marginal law", p.variable))
                    })?;
                    Ok(cell_nodes(&CellLaw::Continuous { distribution: d }, &p.scheme, i, &rule, 1))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut points = Vec::new();
    let mut counter = vec![0usize; parents.len()];
    let mut total = 0.0;
    loop {
        let mut pins = Vec::with_capacity(parents.len());
        let mut w = 1.0;
        for (k, &c) in counter.iter().enumerate() {
            let (x, wk) = per_parent[k][c];
            pins.push((parents[k].variable.clone(), x));
            w *= wk;
        }
        if matches!(rule, CellRule::Average { .. }) {
            for (members, rho) in copulas {
                let u: Vec<f64> = members
                    .iter()
                    .map(|&m| parents[m].marginal.unwrap().to_standard_normal(pins[m].1))
                    .collect();
                w *= equicorrelated_copula(&u, *rho);
            }
        }
        total += w;
        points.push((pins, w));
        let mut k = parents.len();
        loop {
            if k == 0 {
                points.iter_mut().for_each(|p| p.1 /= total);
                return Ok(CellPoints { points });
            }
            k -= 1;
            counter[k] += 1;
            if counter[k] < per_parent[k].len() {
                break;
            }
            counter[k] = 0;
        }
    }
}

fn row_seed(seed: u64, row: usize, sub: usize) -> u64 {
    seed ^ (row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (sub as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Failure probability of the union of `modes` for one pinned problem.
/// Returns the estimate and whether the FORM fallback was needed.
fn solve_cell(p: &ReliabilityProblem, modes: &[&str], opts: &CompileOptions, seed: u64) -> Result<(f64, bool)> {
    match opts.solver {
        CellSolver::Mcs { samples } => Ok((mcs(p, modes, samples, seed)?.pf, false)),
        CellSolver::Form => match series_system_pf(p, modes, &opts.form) {
            Ok(est) => Ok((est.pf, false)),
            Err(Error::NonConvergence { .. }) => Ok((mcs(p, modes, opts.fallback_samples, seed)?.pf, true)),
            Err(e) => Err(e),
        },
    }
}

/// Binary failure table: one series solve per parent state tuple, with parents
/// pinned at their representatives or averaged over the cell per
/// [`CompileOptions::cell_rule`]. State 0 is failure, so each row is
/// `(pf, 1 − pf)`.
pub fn cpt_from_srm(
    node: &str,
    problem: &ReliabilityProblem,
    modes: &[&str],
    parents: &[GridParent],
    opts: &CompileOptions,
) -> Result<(Vec<f64>, CptReport)> {
    problem.validate()?;
    for m in modes {
        problem.limit_state(m)?;
    }
    let cards: Vec<usize> = parents.iter().map(|p| p.representatives.len()).collect();
    let rows: usize = cards.iter().product();
    let copulas = copula_groups(problem, parents);
    let cells = grid_map(opts.workers, rows, |r| {
        let idx = decode(r, &cards);
        let cp = cell_points(opts.cell_rule, parents, &copulas, &idx)?;
        let mut pf = 0.0;
        let mut fell_back = false;
        for (j, (pins, w)) in cp.points.iter().enumerate() {
            let pinned = problem.pin(pins)?;
            let (p, fb) = solve_cell(&pinned, modes, opts, row_seed(opts.seed, r, j))?;
            pf += w * p;
            fell_back |= fb;
        }
        Ok((pf.clamp(0.0, 1.0), cp.points.len(), fell_back.then(|| cell_id(parents, &idx))))
    })?;
    let mut cpt = Vec::with_capacity(rows * 2);
    let mut report = CptReport::new(node, "srm_series", rows, 2);
    for (pf, n, nc) in cells {
        cpt.push(pf);
        cpt.push(1.0 - pf);
        report.solver_calls += 1;
        report.point_solves += n;
        report.nonconverged.extend(nc);
    }
    Ok((cpt, report))
}

/// PMF of a capacity variable `Q` over `q_scheme`, from its CDF
/// `Pr(Q ≤ q) = Pr(∪ g_i(q) ≤ 0)` evaluated at every border with `placeholder`
/// pinned to that border. Modes that do not reference the placeholder are
/// solved once per parent tuple; the tally still counts one system solve per
/// border.
pub fn cpt_capacity_cdf(
    node: &str,
    problem: &ReliabilityProblem,
    modes: &[&str],
    placeholder: &str,
    q_scheme: &IntervalScheme,
    parents: &[GridParent],
    opts: &CompileOptions,
) -> Result<(Vec<f64>, CptReport)> {
    problem.validate()?;
    q_scheme.validate()?;
    if !problem.fixed.contains_key(placeholder) {
        return Err(Error::Compile(format!(
            "capacity placeholder `{placeholder}` must be declared as a fixed value"
        )));
    }
    let mut uses_q = Vec::with_capacity(modes.len());
    for m in modes {
        uses_q.push(problem.limit_state(m)?.free_vars().contains(placeholder));
    }
    if !uses_q.iter().any(|u| *u) {
        return Err(Error::Compile(format!("no capacity mode references `{placeholder}`")));
    }
    let cards: Vec<usize> = parents.iter().map(|p| p.representatives.len()).collect();
    let rows: usize = cards.iter().product();
    let borders = &q_scheme.borders;
    let n_states = q_scheme.len();

    let cells = grid_map(opts.workers, rows, |r| {
        let idx = decode(r, &cards);
        let pins: Vec<(String, f64)> =
            parents.iter().zip(&idx).map(|(p, &i)| (p.variable.clone(), p.representatives[i])).collect();
        let pinned = problem.pin(&pins)?;
        let mut cdf = Vec::with_capacity(borders.len());
        let mut fell_back = false;
        let shared: Option<Vec<Option<FormResult>>> = match opts.solver {
            CellSolver::Form => {
                let space = pinned.standard_space()?;
                let mut v = Vec::with_capacity(modes.len());
                for (m, &q) in modes.iter().zip(&uses_q) {
                    v.push(if q {
                        None
                    } else {
                        Some(form_in_space(&space, &pinned, m, &opts.form)?)
                    });
                }
                Some(v)
            }
            CellSolver::Mcs { .. } => None,
        };
        for &q in borders {
            let at = pinned.clone().with_fixed(placeholder, q);
            // one seed per row: common random numbers keep simulated CDFs monotone
            let seed = row_seed(opts.seed, r, 0);
            let pf = match &shared {
                Some(shared) if shared.iter().flatten().all(|c| c.converged) => {
                    let space = at.standard_space()?;
                    let mut comps = Vec::with_capacity(modes.len());
                    let mut ok = true;
                    for (m, s) in modes.iter().zip(shared) {
                        let c = match s {
                            Some(c) => c.clone(),
                            None => form_in_space(&space, &at, m, &opts.form)?,
                        };
                        ok &= c.converged;
                        comps.push(c);
                    }
                    if ok {
                        series_from_components(&comps).pf
                    } else {
                        fell_back = true;
                        mcs(&at, modes, opts.fallback_samples, seed)?.pf
                    }
                }
                Some(_) => {
                    fell_back = true;
                    mcs(&at, modes, opts.fallback_samples, seed)?.pf
                }
                None => solve_cell(&at, modes, opts, seed)?.0,
            };
            cdf.push(pf);
        }
        Ok((cdf, fell_back.then(|| cell_id(parents, &idx))))
    })?;

    let mut report = CptReport::new(node, "srm_capacity_cdf", rows, n_states);
    let mut cpt = Vec::with_capacity(rows * n_states);
    for (r, (cdf, nc)) in cells.into_iter().enumerate() {
        report.solver_calls += borders.len();
        report.point_solves += borders.len();
        report.nonconverged.extend(nc);
        let (pmf, clamp) = cdf_to_pmf(&cdf, q_scheme).map_err(|drop| {
            Error::Compile(format!(
                "{node}: CDF decreases by {drop:.3e} in cell {}",
                cell_id(parents, &decode(r, &cards))
            ))
        })?;
        report.max_clamp = report.max_clamp.max(clamp);
        cpt.extend(pmf);
    }
    Ok((cpt, report))
}

/// Differences a CDF sampled at the scheme borders into a PMF. Returns the PMF
/// and the largest negative difference clamped, or the offending drop when it
/// exceeds [`MONOTONICITY_TOLERANCE`].
pub fn cdf_to_pmf(cdf: &[f64], s: &IntervalScheme) -> std::result::Result<(Vec<f64>, f64), f64> {
    let nb = cdf.len();
    let mut pmf = Vec::with_capacity(s.len());
    let mut clamp = 0.0f64;
    let mut push = |d: f64, pmf: &mut Vec<f64>| -> std::result::Result<(), f64> {
        if d < -MONOTONICITY_TOLERANCE {
            return Err(-d);
        }
        if d < 0.0 {
            clamp = clamp.max(-d);
        }
        pmf.push(d.max(0.0));
        Ok(())
    };
    for k in 0..nb - 1 {
        let lower = if k == 0 && s.fold_lower { 0.0 } else { cdf[k] };
        push(cdf[k + 1] - lower, &mut pmf)?;
    }
    if s.tail {
        push(1.0 - cdf[nb - 1], &mut pmf)?;
    }
    let total: f64 = pmf.iter().sum();
    if !(total > 0.0) {
        return Err(f64::NAN);
    }
    pmf.iter_mut().for_each(|p| *p /= total);
    Ok((pmf, clamp))
}

/// Additive-noise measurement table `M = R + ε`: row `i` holds
/// `Pr(M ∈ cell_j | R = reps[i])`, with both outer cells of the M scheme
/// absorbing the tails.
pub fn cpt_measurement(reps: &[f64], m_scheme: &IntervalScheme, noise: &Distribution) -> Result<Vec<f64>> {
    m_scheme.validate()?;
    noise.validate()?;
    let n = m_scheme.len();
    let mut cpt = Vec::with_capacity(reps.len() * n);
    for &r in reps {
        let mut row: Vec<f64> = (0..n)
            .map(|j| {
                let (mut lo, mut hi) = m_scheme.bounds(j);
                if j == 0 {
                    lo = f64::NEG_INFINITY;
                }
                if j == n - 1 {
                    hi = f64::INFINITY;
                }
                noise.interval_probability(lo - r, hi - r)
            })
            .collect();
        let t: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= t);
        cpt.extend(row);
    }
    Ok(cpt)
}

/// A parent of a quadrature-built table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadParent {
    /// Discretized continuous parent, integrated over each cell under `law`.
    Interval { scheme: IntervalScheme, law: CellLaw, label: String },
    /// Discrete parent; the conditional law receives the state index.
    Discrete { card: usize, label: String },
}

impl QuadParent {
    fn card(&self) -> usize {
        match self {
            QuadParent::Interval { scheme, .. } => scheme.len(),
            QuadParent::Discrete { card, .. } => *card,
        }
    }

    fn state_label(&self, i: usize) -> String {
        match self {
            QuadParent::Interval { scheme, label, .. } => format!("{label}={}", scheme.labels()[i]),
            QuadParent::Discrete { label, .. } => format!("{label}={i}"),
        }
    }
}

const MAX_PIECES: usize = 16;

/// Child table obtained by averaging `cond(parent values)` (a probability
/// vector over the child's states) over every parent cell. Each cell is
/// integrated with order-16 Gauss–Legendre and checked against order 32;
/// on disagreement the cell is split into more panels.
pub fn cpt_by_quadrature<F>(node: &str, parents: &[QuadParent], child_card: usize, cond: F, opts: &CompileOptions) -> Result<(Vec<f64>, CptReport)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let cards: Vec<usize> = parents.iter().map(QuadParent::card).collect();
    let rows: usize = cards.iter().product();
    let g16 = GaussLegendre::new(16);
    let g32 = GaussLegendre::new(32);
    let tol = opts.quadrature_tolerance;

    let integrate = |idx: &[usize], rule: &GaussLegendre, pieces: usize| -> Result<Vec<f64>> {
        let per_parent: Vec<Vec<(f64, f64)>> = parents
            .iter()
            .zip(idx)
            .map(|(p, &i)| match p {
                QuadParent::Interval { scheme, law, .. } => cell_nodes(law, scheme, i, rule, pieces),
                QuadParent::Discrete { .. } => vec![(i as f64, 1.0)],
            })
            .collect();
        let mut acc = vec![0.0; child_card];
        let mut counter = vec![0usize; parents.len()];
        let mut x = vec![0.0; parents.len()];
        loop {
            let mut w = 1.0;
            for (k, &c) in counter.iter().enumerate() {
                x[k] = per_parent[k][c].0;
                w *= per_parent[k][c].1;
            }
            let v = cond(&x)?;
            if v.len() != child_card {
                return Err(Error::Compile(format!("{node}: conditional law returned {} states, expected {child_card}", v.len())));
            }
            for (a, p) in acc.iter_mut().zip(&v) {
                *a += w * p;
            }
            let mut k = parents.len();
            loop {
                if k == 0 {
                    return Ok(acc);
                }
                k -= 1;
                counter[k] += 1;
                if counter[k] < per_parent[k].len() {
                    break;
                }
                counter[k] = 0;
            }
        }
    };

    let cells = grid_map(opts.workers, rows, |r| {
        let idx = decode(r, &cards);
        let mut pieces = 1;
        let mut refinements = 0;
        loop {
            let a = integrate(&idx, &g16, pieces)?;
            let b = integrate(&idx, &g32, pieces)?;
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if diff <= tol {
                return Ok((b, refinements));
            }
            if pieces >= MAX_PIECES {
                let id: Vec<String> = parents.iter().zip(&idx).map(|(p, &i)| p.state_label(i)).collect();
                return Err(Error::Compile(format!(
                    "{node}: quadrature orders 16 and 32 differ by {diff:.3e} in cell ({})",
                    id.join(",")
                )));
            }
            pieces *= 2;
            refinements += 1;
        }
    })?;

    let mut report = CptReport::new(node, "quadrature", rows, child_card);
    let mut cpt = Vec::with_capacity(rows * child_card);
    for (mut row, refinements) in cells {
        report.quadrature_refinements += refinements;
        for v in row.iter_mut() {
            if *v < 0.0 {
                report.max_clamp = report.max_clamp.max(-*v);
                *v = 0.0;
            }
        }
        let t: f64 = row.iter().sum();
        if !(t > 0.0) {
            return Err(Error::Compile(format!("{node}: a row integrates to zero")));
        }
        cpt.extend(row.iter().map(|v| v / t));
    }
    Ok((cpt, report))
}

/// Probability vector of a child interval variable given exact values, from
/// its conditional distribution: cell masses over `scheme`, with the outer
/// cells absorbing anything beyond the borders.
pub fn cell_masses(d: &Distribution, scheme: &IntervalScheme) -> Vec<f64> {
    let n = scheme.len();
    let mut v: Vec<f64> = (0..n)
        .map(|j| {
            let (mut lo, mut hi) = scheme.bounds(j);
            if j == 0 {
                lo = f64::NEG_INFINITY;
            }
            if j == n - 1 {
                hi = f64::INFINITY;
            }
            d.interval_probability(lo, hi)
        })
        .collect();
    let t: f64 = v.iter().sum();
    if t > 0.0 {
        v.iter_mut().for_each(|p| *p /= t);
    }
    v
}

/// Bounds used when a cell is treated as uniform; an unbounded tail becomes
/// one more interval of the preceding width.
pub fn uniform_cell(s: &IntervalScheme, k: usize) -> (f64, f64) {
    let (lo, hi) = s.bounds(k);
    if hi.is_finite() {
        (lo, hi)
    } else {
        let w = if k > 0 { s.width(k - 1) } else { 1.0 };
        (lo, lo + w)
    }
}

/// `Pr(Q ≤ H)` for independent `Q ~ U[q.0, q.1)` and `H ~ U[h.0, h.1)`.
/// Exact: the integrand `Pr(H ≥ q)` is piecewise linear in `q`.
pub fn uniform_exceedance(q: (f64, f64), h: (f64, f64)) -> f64 {
    let surv = |x: f64| ((h.1 - x) / (h.1 - h.0)).clamp(0.0, 1.0);
    let mut pts = vec![q.0, q.1];
    for b in [h.0, h.1] {
        if b > q.0 && b < q.1 {
            pts.push(b);
        }
    }
    pts.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for w in pts.windows(2) {
        area += 0.5 * (surv(w[0]) + surv(w[1])) * (w[1] - w[0]);
    }
    area / (q.1 - q.0)
}

/// Unconditional capacity PMF, i.e. [`cpt_capacity_cdf`] with no parents.
pub fn capacity_pmf(problem: &ReliabilityProblem, modes: &[&str], placeholder: &str, q_scheme: &IntervalScheme, opts: &CompileOptions) -> Result<Vec<f64>> {
    Ok(cpt_capacity_cdf("Q", problem, modes, placeholder, q_scheme, &[], opts)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::std_normal_cdf;

    #[test]
    fn measurement_table() {
        let m = IntervalScheme::range(50.0, 10.0, 250.0, true, true).unwrap();
        let noise = Distribution::Normal { mean: 0.0, std: 15.0 };
        let cpt = cpt_measurement(&[150.0], &m, &noise).unwrap();
        let k = m.state_of(145.0).unwrap();
        let want = 0.5 - std_normal_cdf(-10.0 / 15.0);
        assert!((cpt[k] - want).abs() < 1e-12);
        assert!((cpt[k] - 0.2475).abs() < 5e-5);

        let reps: Vec<f64> = (0..21).map(|i| 55.0 + 10.0 * i as f64).collect();
        let cpt = cpt_measurement(&reps, &m, &noise).unwrap();
        for row in cpt.chunks(21) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let sharp = Distribution::Normal { mean: 0.0, std: 1e-9 };
        let cpt = cpt_measurement(&reps, &m, &sharp).unwrap();
        for (i, row) in cpt.chunks(21).enumerate() {
            assert!((row[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn certain_failure_cell() {
        let p = ReliabilityProblem::new()
            .with_variable("x", Distribution::Normal { mean: 0.0, std: 1.0 })
            .with_limit_state("g", "-1 + 0*x")
            .unwrap();
        let (cpt, rep) = cpt_from_srm("E", &p, &["g"], &[], &CompileOptions::default()).unwrap();
        assert_eq!(cpt, vec![1.0, 0.0]);
        assert_eq!(rep.solver_calls, 1);
    }

    #[test]
    fn srm_grid_is_pinned_and_tallied() {
        let p = ReliabilityProblem::new()
            .with_variable("r", Distribution::Normal { mean: 5.0, std: 1.0 })
            .with_variable("s", Distribution::Normal { mean: 2.0, std: 1.0 })
            .with_limit_state("g", "r - s")
            .unwrap();
        let parent = GridParent {
            variable: "r".into(),
            scheme: IntervalScheme::new(vec![0.0, 1.5, 3.0, 5.0], false, false).unwrap(),
            representatives: vec![1.0, 2.0, 4.0],
            marginal: None,
        };
        let (cpt, rep) = cpt_from_srm("E", &p, &["g"], &[parent], &CompileOptions::default()).unwrap();
        assert_eq!(rep.solver_calls, 3);
        for (i, r) in [1.0, 2.0, 4.0].iter().enumerate() {
            let want = 1.0 - std_normal_cdf(r - 2.0);
            assert!((cpt[2 * i] - want).abs() < 1e-9, "{} vs {want}", cpt[2 * i]);
        }
    }

    #[test]
    fn cell_average_matches_direct_integration() {
        // g = r − s with s ~ N(2, 1): pf(r) = Φ(2 − r); averaging over the cell
        // of r ~ N(5, 1) must reproduce E[Φ(2 − r) | r ∈ cell].
        let r = Distribution::Normal { mean: 5.0, std: 1.0 };
        let p = ReliabilityProblem::new()
            .with_variable("r", r)
            .with_variable("s", Distribution::Normal { mean: 2.0, std: 1.0 })
            .with_limit_state("g", "r - s")
            .unwrap();
        let scheme = IntervalScheme::range(3.0, 1.0, 7.0, true, true).unwrap();
        let parent = GridParent::from_marginal("r", &scheme, r).unwrap();
        let opts = CompileOptions { cell_rule: CellRule::Average { points: 16 }, ..Default::default() };
        let (cpt, rep) = cpt_from_srm("E", &p, &["g"], &[parent], &opts).unwrap();
        assert_eq!(rep.solver_calls, scheme.len());
        assert_eq!(rep.point_solves, 16 * scheme.len());
        for k in 0..scheme.len() {
            let (lo, hi) = scheme.effective_bounds(k);
            let (a, b) = (lo.max(-5.0), hi.min(15.0));
            let num = crate::numeric::adaptive_gk(|x| std_normal_cdf(2.0 - x) * r.pdf(x), a, b, 1e-300, 1e-13);
            let want = num / r.interval_probability(lo, hi);
            assert!((cpt[2 * k] - want).abs() < 1e-6 * want.max(1e-3), "cell {k}: {} vs {want}", cpt[2 * k]);
        }
    }

    #[test]
    fn copula_weight_is_a_density_ratio() {
        // bivariate normal density over the product of marginals
        let (u1, u2, rho) = (0.7f64, -0.4f64, 0.3f64);
        let q = (u1 * u1 - 2.0 * rho * u1 * u2 + u2 * u2) / (1.0 - rho * rho);
        let want = (-0.5 * q + 0.5 * (u1 * u1 + u2 * u2)).exp() / (1.0 - rho * rho).sqrt();
        assert!((equicorrelated_copula(&[u1, u2], rho) - want).abs() < 1e-12);
        assert!((equicorrelated_copula(&[0.3, 0.1, -0.2], 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_is_independent_of_worker_count() {
        let r = Distribution::Lognormal { lambda: 5.0, zeta: 0.2 };
        let p = ReliabilityProblem::new()
            .with_variable("r", r)
            .with_variable("s", Distribution::Gumbel { location: 80.0, alpha: 0.06 })
            .with_limit_state("g", "r - s")
            .unwrap();
        let scheme = IntervalScheme::range(50.0, 25.0, 300.0, true, true).unwrap();
        let parent = GridParent::from_marginal("r", &scheme, r).unwrap();
        let opts = CompileOptions {
            solver: CellSolver::Mcs { samples: 2000 },
            cell_rule: CellRule::Average { points: 2 },
            seed: 11,
            ..Default::default()
        };
        let one = cpt_from_srm("E", &p, &["g"], std::slice::from_ref(&parent), &opts.clone().with_workers(1)).unwrap();
        let four = cpt_from_srm("E", &p, &["g"], &[parent], &opts.with_workers(4)).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn capacity_pmf_of_a_gaussian_resistance() {
        // Q = R exactly: Pr(Q ≤ q) = Pr(R − q ≤ 0)
        let p = ReliabilityProblem::new()
            .with_variable("r", Distribution::Normal { mean: 20.0, std: 4.0 })
            .with_fixed("q", 0.0)
            .with_limit_state("g", "r - q")
            .unwrap();
        let s = IntervalScheme::range(0.0, 5.0, 40.0, true, true).unwrap();
        let (pmf, rep) = cpt_capacity_cdf("Q", &p, &["g"], "q", &s, &[], &CompileOptions::default()).unwrap();
        assert_eq!(rep.solver_calls, 9);
        let r = Distribution::Normal { mean: 20.0, std: 4.0 };
        for k in 0..s.len() {
            let (lo, hi) = s.effective_bounds(k);
            assert!((pmf[k] - r.interval_probability(lo, hi)).abs() < 1e-9);
        }
    }

    #[test]
    fn cdf_drop_is_rejected() {
        let s = IntervalScheme::range(0.0, 1.0, 3.0, true, true).unwrap();
        assert!(cdf_to_pmf(&[0.0, 0.5, 0.3, 0.6], &s).is_err());
        let (pmf, clamp) = cdf_to_pmf(&[0.0, 0.5, 0.49999, 0.6], &s).unwrap();
        assert!(clamp > 0.0 && pmf[1] == 0.0);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exceedance_area_rule() {
        assert_eq!(uniform_exceedance((0.0, 5.0), (0.0, 5.0)), 0.5);
        assert_eq!(uniform_exceedance((0.0, 5.0), (5.0, 10.0)), 1.0);
        assert_eq!(uniform_exceedance((5.0, 10.0), (0.0, 5.0)), 0.0);
        // Q ~ U[0,10), H ~ U[5,10): Pr(Q ≤ H) = 1/2 + 1/2·1/2
        assert!((uniform_exceedance((0.0, 10.0), (5.0, 10.0)) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gumbel_given_uniform_parent() {
        let u = IntervalScheme::range(0.0, 3.0, 150.0, true, false).unwrap();
        let h = IntervalScheme::range(0.0, 5.0, 150.0, true, true).unwrap();
        let law = CellLaw::Continuous {
            distribution: Distribution::from_moments(crate::dists::Family::Lognormal, 35.0, crate::dists::Spread::Cov(0.286)).unwrap(),
        };
        let parents = [QuadParent::Interval { scheme: u.clone(), law, label: "U".into() }];
        let hs = h.clone();
        let cond = move |x: &[f64]| Ok(cell_masses(&Distribution::Gumbel { alpha: 0.0641, location: x[0] }, &hs));
        let opts = CompileOptions::default();
        let (cpt, rep) = cpt_by_quadrature("H", &parents, h.len(), cond, &opts).unwrap();
        assert_eq!(rep.rows, 51);
        let serial = cpt_by_quadrature("H", &parents, h.len(), move |x: &[f64]| {
            Ok(cell_masses(&Distribution::Gumbel { alpha: 0.0641, location: x[0] }, &h))
        }, &opts.clone().with_workers(1))
        .unwrap()
        .0;
        assert_eq!(cpt, serial);
        for row in cpt.chunks(31) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // the [33,36) row is close to the Gumbel located mid-cell
        let g = Distribution::Gumbel { alpha: 0.0641, location: 34.5 };
        let k = 14;
        assert!((cpt[11 * 31 + k] - g.interval_probability(70.0, 75.0)).abs() < 2e-3);
    }
}
