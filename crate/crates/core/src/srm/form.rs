use serde::{Deserialize, Serialize};

use super::{halton_normal, mvn, Method, PfEstimate, ReliabilityProblem, StandardSpace};
use crate::dists::{pf_from_beta, std_normal_cdf};
use crate::error::{Error, Result};
use crate::expr::Tape;

/// Distance in standard normal space beyond which a search still on the safe
/// side is taken to mean the failure domain is unreachable (Φ(−20) ≈ 3·10⁻⁸⁹).
const UNREACHABLE: f64 = 20.0;

/// Design-point search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct FormOptions {
    pub max_iterations: usize,
    /// Tolerance on |g|, relative to the limit state's characteristic scale.
    pub g_tolerance: f64,
    /// Tolerance on the component of u* orthogonal to α.
    pub direction_tolerance: f64,
}

impl Default for FormOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            g_tolerance: 1e-6,
            direction_tolerance: 1e-6,
        }
    }
}

/// Outcome of one design-point search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormResult {
    pub limit_state: String,
    /// Signed distance to the linearized limit state; ±∞ when g does not depend
    /// on any random variable.
    pub beta: f64,
    pub design_point: Vec<f64>,
    /// Unit vector along −∇g at the design point.
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FormResult {
    pub fn pf(&self) -> f64 {
        pf_from_beta(self.beta)
    }
}

struct Evaluator<'a> {
    space: &'a StandardSpace,
    tape: Tape,
    x: Vec<f64>,
    gx: Vec<f64>,
}

impl Evaluator<'_> {
    fn value(&mut self, u: &[f64]) -> Result<f64> {
        self.space.to_x(u, &mut self.x);
        self.tape.eval(&self.x)
    }

    fn value_grad(&mut self, u: &[f64], gu: &mut [f64]) -> Result<f64> {
        self.space.to_x(u, &mut self.x);
        let g = self.tape.eval_grad(&self.x, &mut self.gx)?;
        self.space.pullback(u, &self.x, &self.gx, gu);
        Ok(g)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Locate the design point of one limit state by the improved HL-RF iteration
/// (Armijo steps on the merit ½|u|² + c|g|), starting from the origin.
///
/// A limit state that does not depend on any random variable gives β = ±∞ and
/// is reported as converged, as does a search that runs far out while g
/// stays positive (β = +∞). Exhausting the iteration budget yields a result
/// with `converged == false` rather than an error.
pub fn form_component(p: &ReliabilityProblem, g_name: &str, opts: &FormOptions) -> Result<FormResult> {
    let space = p.standard_space()?;
    form_in_space(&space, p, g_name, opts)
}

pub(crate) fn form_in_space(space: &StandardSpace, p: &ReliabilityProblem, g_name: &str, opts: &FormOptions) -> Result<FormResult> {
    let expr = p.limit_state(g_name)?;
    if !expr.is_smooth() {
        return Err(Error::Problem(format!(
            "limit state `{g_name}` uses min(); declare a series system of smooth components instead"
        )));
    }
    let n = space.dim();
    let tape = space.compile(expr)?;
    let slots: Vec<usize> = expr.free_vars().iter().filter_map(|v| space.slot(v)).collect();
    let mut ev = Evaluator {
        space,
        tape,
        x: vec![0.0; space.n_slots()],
        gx: vec![0.0; space.n_slots()],
    };

    let mut u = vec![0.0; n];
    if !space.depends_on_random(&slots) || n == 0 {
        let g = ev.value(&u)?;
        let mut alpha = vec![0.0; n];
        if n > 0 {
            alpha[0] = 1.0;
        }
        return Ok(FormResult {
            limit_state: g_name.to_string(),
            beta: if g > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
            design_point: u,
            alpha,
            iterations: 0,
            converged: true,
        });
    }

    let scale = characteristic_scale(&mut ev, n);
    let g_tol = opts.g_tolerance * scale;
    let mut grad = vec![0.0; n];
    let mut g = ev.value_grad(&u, &mut grad)?;
    let mut trial = vec![0.0; n];
    let mut d = vec![0.0; n];

    for it in 1..=opts.max_iterations {
        let gn = norm(&grad);
        if gn == 0.0 {
            break;
        }
        // HL-RF direction: project onto the linearized limit state
        let coef = (dot(&grad, &u) - g) / (gn * gn);
        for i in 0..n {
            d[i] = coef * grad[i] - u[i];
        }
        let un = norm(&u);
        let target: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + b).collect();
        let c = 2.0 * un.max(norm(&target)) / gn + 1e-12;
        let merit = |uu: &[f64], gg: f64| 0.5 * dot(uu, uu) + c * gg.abs();
        let m0 = merit(&u, g);
        // directional derivative of the merit along d is negative for this c
        let slope = dot(&u, &d) + c * g.signum() * dot(&grad, &d);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            for i in 0..n {
                trial[i] = u[i] + step * d[i];
            }
            if let Ok(gt) = ev.value(&trial) {
                if merit(&trial, gt) <= m0 + 1e-4 * step * slope.min(0.0) {
                    accepted = Some(gt);
                    break;
                }
            }
            step *= 0.5;
        }
        if accepted.is_none() {
            // take the smallest tried step so progress continues
            ev.value(&trial)?;
        }
        u.copy_from_slice(&trial);
        g = ev.value_grad(&u, &mut grad)?;

        if g > g_tol && norm(&u) > UNREACHABLE {
            // the safe side extends past any probability worth resolving
            return Ok(FormResult {
                limit_state: g_name.to_string(),
                beta: f64::INFINITY,
                alpha: normalized(&u),
                design_point: u,
                iterations: it,
                converged: true,
            });
        }
        let gn = norm(&grad);
        if gn == 0.0 {
            break;
        }
        let alpha: Vec<f64> = grad.iter().map(|v| -v / gn).collect();
        let beta = dot(&alpha, &u);
        let resid = u.iter().zip(&alpha).map(|(a, b)| (a - beta * b).powi(2)).sum::<f64>().sqrt();
        if g.abs() < g_tol && resid < opts.direction_tolerance * un.max(1.0) {
            return Ok(FormResult {
                limit_state: g_name.to_string(),
                beta,
                design_point: u,
                alpha,
                iterations: it,
                converged: true,
            });
        }
    }

    let gn = norm(&grad).max(f64::MIN_POSITIVE);
    let alpha: Vec<f64> = grad.iter().map(|v| -v / gn).collect();
    Ok(FormResult {
        limit_state: g_name.to_string(),
        beta: dot(&alpha, &u),
        design_point: u,
        alpha,
        iterations: opts.max_iterations,
        converged: false,
    })
}

fn normalized(u: &[f64]) -> Vec<f64> {
    let n = norm(u).max(f64::MIN_POSITIVE);
    u.iter().map(|v| v / n).collect()
}

fn characteristic_scale(ev: &mut Evaluator<'_>, dim: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for pt in halton_normal(dim, 32) {
        if let Ok(g) = ev.value(&pt) {
            if g.is_finite() {
                total += g.abs();
                count += 1;
            }
        }
    }
    let s = if count > 0 { total / count as f64 } else { 0.0 };
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// First-order probability of the union of the named failure modes,
/// `1 − Φ_k(β; R)` with `R_ij = α_i·α_j`.
///
/// Up to three distinct modes are integrated numerically; fully dependent modes
/// are merged first. Larger systems are evaluated by sampling the linearized
/// modes with a fixed seed. A mode that failed to converge is an error.
pub fn series_system_pf(p: &ReliabilityProblem, g_names: &[&str], opts: &FormOptions) -> Result<PfEstimate> {
    let space = p.standard_space()?;
    let mut comps = Vec::with_capacity(g_names.len());
    for name in g_names {
        let r = form_in_space(&space, p, name, opts)?;
        if !r.converged {
            return Err(Error::NonConvergence {
                limit_state: r.limit_state,
                iterations: r.iterations,
            });
        }
        comps.push(r);
    }
    Ok(series_from_components(&comps))
}

/// Union probability from converged component results.
pub fn series_from_components(comps: &[FormResult]) -> PfEstimate {
    if comps.is_empty() {
        return PfEstimate::new(0.0, Method::Form);
    }
    if comps.iter().any(|c| c.beta == f64::NEG_INFINITY) {
        return PfEstimate::new(1.0, Method::Form);
    }
    // drop impossible modes, then merge fully dependent ones keeping the weakest
    let mut modes: Vec<&FormResult> = comps.iter().filter(|c| c.beta.is_finite()).collect();
    if modes.is_empty() {
        return PfEstimate::new(0.0, Method::Form);
    }
    modes.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let mut kept: Vec<&FormResult> = Vec::new();
    for m in modes {
        if !kept.iter().any(|k| dot(&k.alpha, &m.alpha) > 1.0 - 1e-10) {
            kept.push(m);
        }
    }
    let betas: Vec<f64> = kept.iter().map(|c| c.beta).collect();
    let k = kept.len();
    let mut corr = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                corr[i][j] = dot(&kept[i].alpha, &kept[j].alpha).clamp(-1.0, 1.0);
            }
        }
    }
    let pf = match k {
        1 => std_normal_cdf(-betas[0]),
        2 | 3 => mvn::union_probability(&betas, &corr),
        _ => mvn::union_probability_sampled(&betas, &corr, 1_000_000, 0),
    };
    PfEstimate::new(pf, Method::Form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::{CommonFactorGroup, Distribution, Family, Spread};

    fn std_normals(n: usize) -> ReliabilityProblem {
        let mut p = ReliabilityProblem::new();
        for i in 0..n {
            p = p.with_variable(&format!("x{i}"), Distribution::Normal { mean: 0.0, std: 1.0 });
        }
        p
    }

    #[test]
    fn linear_gaussian_is_exact() {
        let p = std_normals(3).with_limit_state("g", "3 - 1*x0 + 2*x1 - 2*x2").unwrap();
        let r = form_component(&p, "g", &FormOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.beta - 1.0).abs() < 1e-10, "{}", r.beta);
        assert!((norm(&r.alpha) - 1.0).abs() < 1e-10);
        assert!((dot(&r.alpha, &r.design_point) - r.beta).abs() < 1e-8);
    }

    #[test]
    fn negative_beta_when_origin_fails() {
        let p = std_normals(1).with_limit_state("g", "x0 + 1.5").unwrap();
        let r = form_component(&p, "g", &FormOptions::default()).unwrap();
        assert!((r.beta - 1.5).abs() < 1e-10);
        let p = std_normals(1).with_limit_state("g", "-1.5 - x0").unwrap();
        let r = form_component(&p, "g", &FormOptions::default()).unwrap();
        assert!((r.beta + 1.5).abs() < 1e-10);
    }

    #[test]
    fn gumbel_transform_reproduces_closed_form() {
        let p = ReliabilityProblem::new()
            .with_variable("h", Distribution::Gumbel { alpha: 0.0641, location: 35.0 })
            .with_fixed("q", 100.0)
            .with_limit_state("g", "q - h")
            .unwrap();
        let r = form_component(&p, "g", &FormOptions::default()).unwrap();
        let exact = 1.0 - (-(-0.0641f64 * 65.0).exp()).exp();
        assert!(((r.pf() - exact) / exact).abs() < 1e-6, "{} vs {exact}", r.pf());
    }

    #[test]
    fn nonlinear_lognormal_capacity() {
        // ln R - ln S normal: β = (λR - λS)/sqrt(ζR² + ζS²)
        let p = ReliabilityProblem::new()
            .with_variable("r", Distribution::Lognormal { lambda: 5.0, zeta: 0.2 })
            .with_variable("s", Distribution::Lognormal { lambda: 4.5, zeta: 0.3 })
            .with_limit_state("g", "r - s")
            .unwrap();
        let r = form_component(&p, "g", &FormOptions::default()).unwrap();
        let want = 0.5 / (0.04f64 + 0.09).sqrt();
        assert!(r.converged);
        assert!((r.beta - want).abs() < 1e-8, "{} vs {want}", r.beta);
    }

    #[test]
    fn constant_limit_states_give_certain_outcomes() {
        let p = std_normals(2)
            .with_limit_state("safe", "1")
            .unwrap()
            .with_limit_state("fail", "-1")
            .unwrap();
        let opts = FormOptions::default();
        assert_eq!(series_system_pf(&p, &["safe"], &opts).unwrap().pf, 0.0);
        assert_eq!(series_system_pf(&p, &["fail"], &opts).unwrap().pf, 1.0);
        assert_eq!(series_system_pf(&p, &["safe", "fail"], &opts).unwrap().pf, 1.0);
    }

    #[test]
    fn single_and_duplicate_modes() {
        let p = std_normals(2)
            .with_limit_state("a", "2 - x0 - x1")
            .unwrap()
            .with_limit_state("b", "2 - x0 - x1")
            .unwrap();
        let opts = FormOptions::default();
        let one = series_system_pf(&p, &["a"], &opts).unwrap();
        assert!((one.pf - std_normal_cdf(-2.0 / 2f64.sqrt())).abs() < 1e-14);
        let two = series_system_pf(&p, &["a", "b"], &opts).unwrap();
        assert_eq!(one.pf, two.pf);
    }

    #[test]
    fn independent_modes_combine_exactly() {
        let p = std_normals(3)
            .with_limit_state("a", "2 - x0")
            .unwrap()
            .with_limit_state("b", "2.5 - x1")
            .unwrap()
            .with_limit_state("c", "1.5 - x2")
            .unwrap();
        let est = series_system_pf(&p, &["a", "b", "c"], &FormOptions::default()).unwrap();
        let survive = std_normal_cdf(2.0) * std_normal_cdf(2.5) * std_normal_cdf(1.5);
        assert!((est.pf - (1.0 - survive)).abs() < 1e-12);
    }

    #[test]
    fn frame_series_system_respects_unimodal_bounds() {
        let r = Distribution::from_moments(Family::Lognormal, 150.0, Spread::Cov(0.2)).unwrap();
        let g = CommonFactorGroup::new("u_r", (1..=5).map(|i| format!("r{i}")).collect(), r, 0.3).unwrap();
        let p = ReliabilityProblem::new()
            .with_group(g)
            .with_variable("h", Distribution::from_moments(Family::Gumbel, 50.0, Spread::Cov(0.4)).unwrap())
            .with_variable("v", Distribution::from_moments(Family::Gamma, 60.0, Spread::Cov(0.2)).unwrap())
            .with_limit_state("g1", "r1 + r2 + r4 + r5 - 5*h")
            .unwrap()
            .with_limit_state("g2", "r2 + 2*r3 + r4 - 5*v")
            .unwrap()
            .with_limit_state("g3", "r1 + 2*r3 + 2*r4 + r5 - 5*h - 5*v")
            .unwrap();
        let opts = FormOptions::default();
        let comps: Vec<FormResult> = ["g1", "g2", "g3"].iter().map(|g| form_component(&p, g, &opts).unwrap()).collect();
        assert!(comps.iter().all(|c| c.converged));
        let sys = series_from_components(&comps);
        let max = comps.iter().map(|c| c.pf()).fold(0.0, f64::max);
        let sum: f64 = comps.iter().map(|c| c.pf()).sum();
        assert!(sys.pf >= max - 1e-15 && sys.pf <= sum + 1e-15);
        assert!((sys.beta - 1.94).abs() < 0.05, "β = {}", sys.beta);
    }

    #[test]
    fn min_expressions_are_rejected() {
        let p = std_normals(2).with_limit_state("g", "min(x0, x1) + 3").unwrap();
        assert!(form_component(&p, "g", &FormOptions::default()).is_err());
    }
}
