use serde::{Deserialize, Serialize};

use super::Distribution;
use crate::error::{Error, Result};

/// Equi-correlated lognormal members sharing one standard-normal factor:
/// `ln X_i = λ + ζ (√ρ U + √(1-ρ) U_i)`.
///
/// After some members have been observed the factor is no longer standard;
/// its law is carried as `U ~ N(factor_mean, factor_std²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonFactorGroup {
    pub name: String,
    pub members: Vec<String>,
    pub lambda: f64,
    pub zeta: f64,
    pub rho: f64,
    #[serde(default)]
    pub factor_mean: f64,
    #[serde(default = "one")]
    pub factor_std: f64,
}

fn one() -> f64 {
    1.0
}

impl CommonFactorGroup {
    pub fn new(name: impl Into<String>, members: Vec<String>, marginal: Distribution, rho: f64) -> Result<Self> {
        let Distribution::Lognormal { lambda, zeta } = marginal else {
            return Err(Error::Distribution("common-factor members must be lognormal".into()));
        };
        let g = Self {
            name: name.into(),
            members,
            lambda,
            zeta,
            rho,
            factor_mean: 0.0,
            factor_std: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Distribution(format!("correlation {} outside [0, 1)", self.rho)));
        }
        if !(self.zeta > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Distribution("invalid lognormal member parameters".into()));
        }
        if !(self.factor_std >= 0.0) || !self.factor_mean.is_finite() {
            return Err(Error::Distribution("invalid factor law".into()));
        }
        Ok(())
    }

    /// Loading of the shared factor in log space.
    pub fn shared_loading(&self) -> f64 {
        self.zeta * self.rho.sqrt()
    }

    /// Loading of each member's idiosyncratic variate in log space.
    pub fn own_loading(&self) -> f64 {
        self.zeta * (1.0 - self.rho).sqrt()
    }

    /// Member law given a realisation `u` of the shared factor.
    pub fn condition_on_factor(&self, u: f64) -> Result<Distribution> {
        self.validate()?;
        if !u.is_finite() {
            return Err(Error::Distribution("factor realisation must be finite".into()));
        }
        Ok(Distribution::Lognormal {
            lambda: self.lambda + self.shared_loading() * u,
            zeta: self.own_loading(),
        })
    }

    /// Member law with the factor integrated out.
    pub fn member_marginal(&self) -> Distribution {
        let a = self.shared_loading() * self.factor_std;
        let b = self.own_loading();
        Distribution::Lognormal {
            lambda: self.lambda + self.shared_loading() * self.factor_mean,
            zeta: (a * a + b * b).sqrt(),
        }
    }

    /// Condition the group on exact values of some of its members. The returned
    /// group keeps only the unobserved members and carries the Gaussian posterior
    /// of the factor.
    pub fn observe(&self, observed: &[(String, f64)]) -> Result<Self> {
        self.validate()?;
        let mut precision = 1.0 / (self.factor_std * self.factor_std);
        let mut weighted = self.factor_mean * precision;
        let a = self.shared_loading();
        let b2 = self.own_loading().powi(2);
        for (name, value) in observed {
            if !self.members.contains(name) {
                return Err(Error::Problem(format!("`{name}` is not a member of group `{}`", self.name)));
            }
            if !(*value > 0.0) {
                return Err(Error::Problem(format!("observed member `{name}` = {value} must be positive")));
            }
            let y = value.ln() - self.lambda;
            precision += a * a / b2;
            weighted += a * y / b2;
        }
        let members = self
            .members
            .iter()
            .filter(|m| !observed.iter().any(|(n, _)| n == *m))
            .cloned()
            .collect();
        Ok(Self {
            name: self.name.clone(),
            members,
            lambda: self.lambda,
            zeta: self.zeta,
            rho: self.rho,
            factor_mean: weighted / precision,
            factor_std: precision.sqrt().recip(),
        })
    }

    /// Map one factor variate and one idiosyncratic variate to a member value.
    #[inline]
    pub fn member_value(&self, u_factor: f64, u_own: f64) -> f64 {
        (self.lambda
            + self.shared_loading() * (self.factor_mean + self.factor_std * u_factor)
            + self.own_loading() * u_own)
            .exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::{std_normal_pdf, Family, Spread};
    use crate::numeric::adaptive_gk;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand::Rng;

    fn group(rho: f64) -> CommonFactorGroup {
        let d = Distribution::from_moments(Family::Lognormal, 150.0, Spread::Cov(0.2)).unwrap();
        let members = (1..=5).map(|i| format!("R{i}")).collect();
        CommonFactorGroup::new("U_R", members, d, rho).unwrap()
    }

    #[test]
    fn zero_correlation_leaves_marginal_unchanged() {
        let g = group(0.0);
        assert_eq!(g.condition_on_factor(2.3).unwrap(), g.member_marginal());
    }

    #[test]
    fn conditional_law_at_zero_factor() {
        let g = group(0.3);
        let Distribution::Lognormal { lambda, zeta } = g.condition_on_factor(0.0).unwrap() else { panic!() };
        assert!((lambda - 4.99101).abs() < 5e-5);
        assert!((zeta - 0.16570).abs() < 5e-5);
    }

    #[test]
    fn rho_outside_unit_interval_is_rejected() {
        let d = Distribution::Lognormal { lambda: 0.0, zeta: 1.0 };
        assert!(CommonFactorGroup::new("g", vec![], d, 1.0).is_err());
        assert!(CommonFactorGroup::new("g", vec![], d, -0.1).is_err());
    }

    #[test]
    fn factor_marginalisation_recovers_marginal_cdf() {
        let g = group(0.3);
        let marginal = g.member_marginal();
        for r in [100.0, 150.0, 200.0] {
            let mixed = adaptive_gk(
                |u| g.condition_on_factor(u).unwrap().cdf(r) * std_normal_pdf(u),
                -12.0,
                12.0,
                1e-14,
                1e-13,
            );
            assert!((mixed - marginal.cdf(r)).abs() < 1e-6, "r={r}");
        }
    }

    #[test]
    fn sampled_log_correlation_matches_rho() {
        let g = group(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let normal = rand_distr_normal;
        for _ in 0..n {
            let u = normal(&mut rng);
            let x = g.member_value(u, normal(&mut rng)).ln();
            let y = g.member_value(u, normal(&mut rng)).ln();
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx * sy / (nf * nf);
        let vx = sxx / nf - (sx / nf).powi(2);
        let vy = syy / nf - (sy / nf).powi(2);
        let corr = cov / (vx * vy).sqrt();
        assert!((corr - 0.3).abs() < 0.01, "corr={corr}");
    }

    fn rand_distr_normal(rng: &mut ChaCha8Rng) -> f64 {
        crate::dists::std_normal_quantile(rng.random::<f64>().max(f64::MIN_POSITIVE))
    }

    #[test]
    fn observing_members_gives_gaussian_conditional() {
        // ln R5 | ln R4 = y is normal with mean λ + ρ (y - λ) and variance ζ²(1-ρ²)
        let g = group(0.3);
        let r4 = 120.0;
        let post = g.observe(&[("R4".into(), r4)]).unwrap();
        assert_eq!(post.members.len(), 4);
        let Distribution::Lognormal { lambda, zeta } = post.member_marginal() else { panic!() };
        let want_mean = g.lambda + 0.3 * (r4.ln() - g.lambda);
        let want_std = g.zeta * (1.0f64 - 0.09).sqrt();
        assert!((lambda - want_mean).abs() < 1e-12);
        assert!((zeta - want_std).abs() < 1e-12);
    }
}
