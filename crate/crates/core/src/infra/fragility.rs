use serde::{Deserialize, Serialize};

use crate::compile::{cpt_by_quadrature, grid_map, uniform_cell, uniform_exceedance, CellLaw, CompileOptions, CptReport, IntervalScheme, QuadParent};
use crate::dists::{std_normal_cdf, std_normal_pdf, Distribution};
use crate::error::{Error, Result};
use crate::numeric::adaptive_gk;

/// Lognormal fragility of a component whose local demand is `h·X`, with `X`
/// a lognormal site factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragilityCurve {
    /// Log-median capacity.
    pub lambda: f64,
    /// Log-standard deviation of capacity.
    pub zeta: f64,
    /// Site factor; `None` means `X ≡ 1`.
    #[serde(default)]
    pub site_factor: Option<Distribution>,
}

impl FragilityCurve {
    fn site_log_moments(&self) -> Result<(f64, f64)> {
        match self.site_factor {
            None => Ok((0.0, 0.0)),
            Some(Distribution::Lognormal { lambda, zeta }) => Ok((lambda, zeta)),
            Some(_) => Err(Error::Distribution("the site factor must be lognormal".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !(self.zeta >= 0.0) {
            return Err(Error::Distribution("fragility needs finite λ and ζ ≥ 0".into()));
        }
        self.site_log_moments()?;
        Ok(())
    }

    /// `Pr[F | H = h] = Φ((ln h + μ_lnX − λ) / √(ζ² + σ_lnX²))`.
    pub fn failure_probability(&self, h: f64) -> Result<f64> {
        self.validate()?;
        if !(h > 0.0) {
            return Err(Error::Distribution(format!("hazard intensity must be positive, got {h}")));
        }
        let (m, s) = self.site_log_moments()?;
        let spread = (self.zeta * self.zeta + s * s).sqrt();
        let z = h.ln() + m - self.lambda;
        if spread == 0.0 {
            return Ok(if z >= 0.0 { 1.0 } else { 0.0 });
        }
        Ok(std_normal_cdf(z / spread))
    }

    /// The same probability by integrating the conditional fragility over the
    /// site factor.
    pub fn failure_probability_by_quadrature(&self, h: f64) -> Result<f64> {
        self.validate()?;
        if !(h > 0.0) {
            return Err(Error::Distribution(format!("hazard intensity must be positive, got {h}")));
        }
        let (m, s) = self.site_log_moments()?;
        let given = |y: f64| std_normal_cdf((h.ln() + y - self.lambda) / self.zeta);
        if s == 0.0 {
            return Ok(given(m));
        }
        let dens = |y: f64| (-(y - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        Ok(adaptive_gk(|y| given(y) * dens(y), m - 12.0 * s, m + 12.0 * s, 1e-300, 1e-13))
    }
}

fn binary_row(pf: f64) -> Vec<f64> {
    let pf = pf.clamp(0.0, 1.0);
    vec![pf, 1.0 - pf]
}

/// Failure table `(fail, survive)` of a non-structural component given the
/// regional hazard cell, with the hazard uniform within each cell.
pub fn fragility_cpt(node: &str, curve: &FragilityCurve, h_scheme: &IntervalScheme, opts: &CompileOptions) -> Result<(Vec<f64>, CptReport)> {
    curve.validate()?;
    let parents = [QuadParent::Interval {
        scheme: h_scheme.clone(),
        law: CellLaw::Uniform,
        label: "h".into(),
    }];
    let (cpt, mut rep) = cpt_by_quadrature(
        node,
        &parents,
        2,
        |x| Ok(binary_row(if x[0] > 0.0 { curve.failure_probability(x[0])? } else { 0.0 })),
        opts,
    )?;
    rep.method = "fragility".into();
    Ok((cpt, rep))
}

/// Annual failure table of a structure with capacity `Q` under local demand
/// `H·X`, with `Q` and `H` uniform within their cells (tails one preceding
/// width long). For each site factor value the cell-pair probability is the
/// exact uniform overlap area; the site factor is integrated adaptively in
/// standard normal space. Parents are ordered `(Q, H)`.
pub fn site_exceedance_cpt(
    node: &str,
    q_scheme: &IntervalScheme,
    h_scheme: &IntervalScheme,
    site_factor: &Distribution,
    opts: &CompileOptions,
) -> Result<(Vec<f64>, CptReport)> {
    site_factor.validate()?;
    let (nq, nh) = (q_scheme.len(), h_scheme.len());
    let rows = grid_map(opts.workers, nq * nh, |r| {
        let q = uniform_cell(q_scheme, r / nh);
        let h = uniform_cell(h_scheme, r % nh);
        let pf = adaptive_gk(
            |u| {
                let x = site_factor.from_standard_normal(u);
                let hx = (h.0 * x, h.1 * x);
                let p = if hx.1 > hx.0 { uniform_exceedance(q, hx) } else { 0.0 };
                p * std_normal_pdf(u)
            },
            -U_RANGE,
            U_RANGE,
            1e-15,
            1e-12,
        );
        Ok(binary_row(pf / (1.0 - 2.0 * std_normal_cdf(-U_RANGE))))
    })?;
    let rep = CptReport::new(node, "site_exceedance", nq * nh, 2);
    Ok((rows.concat(), rep))
}

const U_RANGE: f64 = 9.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::{Family, Spread};

    fn curve() -> FragilityCurve {
        FragilityCurve {
            lambda: 4.76,
            zeta: 0.246,
            site_factor: Some(Distribution::from_moments(Family::Lognormal, 0.8, Spread::Cov(0.1)).unwrap()),
        }
    }

    #[test]
    fn control_system_at_85() {
        let p = curve().failure_probability(85.0).unwrap();
        assert!((p - 0.0200).abs() < 1e-4, "{p}");
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let c = curve();
        for h in [10.0, 50.0, 85.0, 150.0] {
            let a = c.failure_probability(h).unwrap();
            let b = c.failure_probability_by_quadrature(h).unwrap();
            assert!((a - b).abs() < 1e-8, "h = {h}: {a} vs {b}");
        }
    }

    #[test]
    fn limits() {
        let c = curve();
        assert!(c.failure_probability(1e-6).unwrap() < 1e-12);
        assert!(c.failure_probability(0.0).is_err());
        let plain = FragilityCurve { lambda: 4.76, zeta: 0.246, site_factor: None };
        assert!((plain.failure_probability(4.76f64.exp()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tables_are_normalized_and_monotone() {
        let s = IntervalScheme::range(0.0, 5.0, 150.0, true, false).unwrap();
        let opts = CompileOptions::default();
        let (cpt, _) = fragility_cpt("E11", &curve(), &s, &opts).unwrap();
        let pf: Vec<f64> = cpt.chunks(2).map(|r| r[0]).collect();
        assert!(pf.windows(2).all(|w| w[1] >= w[0]));
        let x = curve().site_factor.unwrap();
        let (cpt, _) = site_exceedance_cpt("E1", &s, &s, &x, &opts).unwrap();
        for row in cpt.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
        // X ≡ 1 reduces to the plain overlap rule
        let one = Distribution::Lognormal { lambda: 0.0, zeta: 1e-9 };
        let (plain, _) = site_exceedance_cpt("E", &s, &s, &one, &opts).unwrap();
        for (r, row) in plain.chunks(2).enumerate() {
            let want = uniform_exceedance(uniform_cell(&s, r / s.len()), uniform_cell(&s, r % s.len()));
            assert!((row[0] - want).abs() < 1e-7, "row {r}: {} vs {want}", row[0]);
        }
        // stronger structure, same load: lower failure probability
        let n = s.len();
        let at = |q: usize, h: usize| cpt[2 * (q * n + h)];
        assert!(at(10, 15) > at(20, 15) && at(20, 15) > at(30, 15));
    }
}
