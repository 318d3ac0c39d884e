use serde::{Deserialize, Serialize};

use super::IntervalScheme;
use crate::dists::{std_normal_pdf, std_normal_sf, Distribution};
use crate::error::{Error, Result};
use crate::numeric::{adaptive_gk, brent, GaussLegendre};

/// Mass allowed outside a scheme that neither folds nor has a tail.
pub const UNCOVERED_TOLERANCE: f64 = 1e-6;

const U_LIMIT: f64 = 9.0;

/// Law of a parent variable within one of its cells, used when integrating a
/// child's conditional probabilities over the parent cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CellLaw {
    /// The parent's continuous distribution truncated to the cell.
    Continuous { distribution: Distribution },
    /// Uniform over the cell; a tail cell is treated as one more interval of
    /// the preceding width.
    Uniform,
}

/// Cell probabilities of `d`: `p_k = F(upper_k) − F(lower_k)`, with folded
/// lower mass in the first state.
pub fn discretize_marginal(d: &Distribution, s: &IntervalScheme) -> Result<Vec<f64>> {
    d.validate()?;
    s.validate()?;
    let first = s.borders[0];
    let last = *s.borders.last().unwrap();
    let below = if s.fold_lower { 0.0 } else { d.cdf(first) };
    let above = if s.tail { 0.0 } else { d.sf(last) };
    if below > UNCOVERED_TOLERANCE || above > UNCOVERED_TOLERANCE {
        return Err(Error::Compile(format!(
            "scheme leaves {:.3e} of the mass uncovered (below {below:.3e}, above {above:.3e})",
            below + above
        )));
    }
    let mut p: Vec<f64> = (0..s.len())
        .map(|k| {
            let (lo, hi) = s.effective_bounds(k);
            d.interval_probability(lo, hi)
        })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

/// One representative per state: the conditional median within bounded
/// cells, the conditional mean within an unbounded tail.
pub fn representative_values(d: &Distribution, s: &IntervalScheme) -> Result<Vec<f64>> {
    d.validate()?;
    s.validate()?;
    (0..s.len()).map(|k| representative(d, s, k)).collect()
}

fn representative(d: &Distribution, s: &IntervalScheme, k: usize) -> Result<f64> {
    let (lo, hi) = s.bounds(k);
    if hi.is_infinite() {
        let fallback = lo + previous_width(s, k);
        let ub = d.to_standard_normal(lo);
        let mass = std_normal_sf(ub);
        if !(mass > 0.0) || !ub.is_finite() {
            return Ok(fallback);
        }
        let top = ub.max(0.0) + 40.0;
        let num = adaptive_gk(|u| d.from_standard_normal(u) * std_normal_pdf(u), ub, top, 1e-300, 1e-12);
        let m = num / mass;
        return Ok(if m.is_finite() && m >= lo { m } else { fallback });
    }
    if !(d.interval_probability(lo, hi) > 0.0) {
        return Ok(0.5 * (lo + hi));
    }
    let root = if d.cdf(lo) <= 0.5 {
        let target = 0.5 * (d.cdf(lo) + d.cdf(hi));
        brent(|x| d.cdf(x) - target, lo, hi, 1e-12 * (1.0 + hi.abs()), 200)
    } else {
        let target = 0.5 * (d.sf(lo) + d.sf(hi));
        brent(|x| target - d.sf(x), lo, hi, 1e-12 * (1.0 + hi.abs()), 200)
    };
    Ok(root.unwrap_or(0.5 * (lo + hi)))
}

fn previous_width(s: &IntervalScheme, k: usize) -> f64 {
    if k > 0 {
        s.width(k - 1)
    } else {
        1.0
    }
}

/// Representative values under a [`CellLaw`].
pub fn cell_representatives(law: &CellLaw, s: &IntervalScheme) -> Result<Vec<f64>> {
    match law {
        CellLaw::Continuous { distribution } => representative_values(distribution, s),
        CellLaw::Uniform => Ok((0..s.len())
            .map(|k| {
                let (lo, hi) = uniform_bounds(s, k);
                0.5 * (lo + hi)
            })
            .collect()),
    }
}

fn uniform_bounds(s: &IntervalScheme, k: usize) -> (f64, f64) {
    let (lo, hi) = s.bounds(k);
    if hi.is_infinite() {
        (lo, lo + previous_width(s, k))
    } else {
        (lo, hi)
    }
}

/// Quadrature nodes and normalized weights for the law of a parent within
/// cell `k`, as a composite rule with `pieces` panels of `rule`.
pub fn cell_nodes(law: &CellLaw, s: &IntervalScheme, k: usize, rule: &GaussLegendre, pieces: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(rule.nodes.len() * pieces);
    match law {
        CellLaw::Uniform => {
            let (lo, hi) = uniform_bounds(s, k);
            let h = (hi - lo) / pieces as f64;
            for p in 0..pieces {
                let a = lo + h * p as f64;
                let (mid, half) = (a + 0.5 * h, 0.5 * h);
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    out.push((mid + half * x, w * 0.5 / pieces as f64));
                }
            }
        }
        CellLaw::Continuous { distribution: d } => {
            let (lo, hi) = s.effective_bounds(k);
            let ul = if lo == f64::NEG_INFINITY { -U_LIMIT } else { d.to_standard_normal(lo).max(-U_LIMIT - 30.0) };
            let uh = if hi == f64::INFINITY {
                ul.max(0.0) + U_LIMIT
            } else {
                d.to_standard_normal(hi).min(U_LIMIT + 30.0)
            };
            if !(uh > ul) || !ul.is_finite() || !uh.is_finite() {
                let r = representative(d, s, k).unwrap_or(0.5 * (lo + hi));
                return vec![(r, 1.0)];
            }
            let h = (uh - ul) / pieces as f64;
            let mut total = 0.0;
            for p in 0..pieces {
                let a = ul + h * p as f64;
                let (mid, half) = (a + 0.5 * h, 0.5 * h);
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    let u = mid + half * x;
                    let wt = w * std_normal_pdf(u);
                    total += wt;
                    out.push((d.from_standard_normal(u), wt));
                }
            }
            if !(total > 0.0) {
                let r = representative(d, s, k).unwrap_or(lo);
                return vec![(r, 1.0)];
            }
            out.iter_mut().for_each(|(_, w)| *w /= total);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::{Family, Spread};

    fn capacity() -> Distribution {
        Distribution::from_moments(Family::Lognormal, 150.0, Spread::Cov(0.2)).unwrap()
    }

    #[test]
    fn hazard_factor_on_its_scheme_sums_to_one() {
        let d = Distribution::from_moments(Family::Lognormal, 35.0, Spread::Cov(0.286)).unwrap();
        let s = IntervalScheme::range(0.0, 3.0, 150.0, true, false).unwrap();
        let p = discretize_marginal(&d, &s).unwrap();
        assert_eq!(p.len(), 51);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn concentrated_law_fills_one_state() {
        let s = IntervalScheme::range(0.0, 5.0, 150.0, true, true).unwrap();
        let d = Distribution::Normal { mean: 102.5, std: 1e-9 };
        let p = discretize_marginal(&d, &s).unwrap();
        assert!((p[20] - 1.0).abs() < 1e-12);
        // centred on a border the mass splits evenly between its neighbours
        let d = Distribution::Normal { mean: 100.0, std: 1e-9 };
        let p = discretize_marginal(&d, &s).unwrap();
        assert!((p[19] - 0.5).abs() < 1e-12 && (p[20] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn folded_lower_mass_joins_first_state() {
        let d = capacity();
        let s = IntervalScheme::range(50.0, 10.0, 250.0, true, true).unwrap();
        let p = discretize_marginal(&d, &s).unwrap();
        let below = d.cdf(50.0);
        assert!(below > 1e-8 && below < 1e-7, "{below:e}");
        assert!((p[0] - d.cdf(60.0)).abs() < 1e-15);
        let unfolded = IntervalScheme::range(50.0, 10.0, 250.0, true, false).unwrap();
        assert!(discretize_marginal(&d, &unfolded).is_ok());
        let narrow = IntervalScheme::range(100.0, 10.0, 250.0, true, false).unwrap();
        assert!(discretize_marginal(&d, &narrow).is_err());
    }

    #[test]
    fn representatives() {
        let u = Distribution::Beta { a: 1.0, b: 1.0, lower: 0.0, upper: 10.0 };
        let s = IntervalScheme::new(vec![0.0, 10.0], false, false).unwrap();
        assert!((representative_values(&u, &s).unwrap()[0] - 5.0).abs() < 1e-9);

        let d = capacity();
        let s = IntervalScheme::range(50.0, 10.0, 250.0, true, true).unwrap();
        let r = representative_values(&d, &s).unwrap();
        assert!(r[9] > 140.0 && r[9] < 150.0);
        let mid = d.cdf(r[9]) - d.cdf(140.0);
        assert!((mid - 0.5 * d.interval_probability(140.0, 150.0)).abs() < 1e-12);
        // truncated mean above 250 by direct quadrature of x f(x)
        let num = adaptive_gk(|x| x * d.pdf(x), 250.0, 2000.0, 1e-300, 1e-13);
        let want = num / d.sf(250.0);
        assert!((r[20] - want).abs() < 1e-8, "{} vs {want}", r[20]);
        // closed form E[X | X > a] = e^{λ+ζ²/2} Φ(ζ − u_a) / Φ(−u_a)
        if let Distribution::Lognormal { lambda, zeta } = d {
            let ua = (250f64.ln() - lambda) / zeta;
            let closed = (lambda + 0.5 * zeta * zeta).exp() * std_normal_sf(ua - zeta) / std_normal_sf(ua);
            assert!((r[20] - closed).abs() < 1e-8, "{} vs {closed}", r[20]);
        }
    }

    #[test]
    fn cell_nodes_integrate_truncated_law() {
        let d = capacity();
        let s = IntervalScheme::range(50.0, 10.0, 250.0, true, true).unwrap();
        let law = CellLaw::Continuous { distribution: d };
        let rule = GaussLegendre::new(16);
        for k in [0, 9, 20] {
            let nodes = cell_nodes(&law, &s, k, &rule, 1);
            let w: f64 = nodes.iter().map(|n| n.1).sum();
            assert!((w - 1.0).abs() < 1e-14);
            let mean: f64 = nodes.iter().map(|(x, w)| x * w).sum();
            let (lo, hi) = s.effective_bounds(k);
            let lo_q = if lo.is_finite() { lo } else { 1.0 };
            let hi_q = if hi.is_finite() { hi } else { 2000.0 };
            let want = adaptive_gk(|x| x * d.pdf(x), lo_q, hi_q, 1e-300, 1e-13) / d.interval_probability(lo, hi);
            assert!((mean - want).abs() < 1e-6 * want, "cell {k}: {mean} vs {want}");
        }
    }
}
