use libm::erfc;
use statrs::function::erf::erfc_inv;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cdf, accurate in both tails.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse standard normal cdf, refined by one Newton step.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    let d = std_normal_pdf(x);
    if d > 0.0 {
        // work on the smaller tail to keep the residual accurate
        let r = if x < 0.0 {
            std_normal_cdf(x) - p
        } else {
            (1.0 - p) - std_normal_sf(x)
        };
        x -= r / d;
    }
    x
}

/// Reliability index from a failure probability: `β = -Φ⁻¹(pf)`.
pub fn beta_from_pf(pf: f64) -> f64 {
    -std_normal_quantile(pf)
}

/// Failure probability from a reliability index: `pf = Φ(-β)`.
pub fn pf_from_beta(beta: f64) -> f64 {
    std_normal_cdf(-beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        // β = 1.94 corresponds to pf ≈ 2.6e-2
        assert!((std_normal_cdf(-1.94) - 0.026190).abs() < 5e-6);
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-16);
        // deep tail keeps full relative accuracy
        let p = std_normal_cdf(-8.0);
        assert!(((p - 6.220_960_574_271_74e-16) / p).abs() < 1e-13, "{p:e}");
    }

    #[test]
    fn cdf_matches_density_quadrature() {
        for &x in &[-6.0, -3.0, -1.0, -0.2, 0.5, 2.0, 4.0] {
            let q = crate::numeric::adaptive_gk(std_normal_pdf, -40.0, x, 1e-300, 1e-15);
            assert!((std_normal_cdf(x) - q).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &x in &[-7.5, -4.0, -1.94, -0.3, 0.0, 0.7, 2.45, 5.0] {
            let p = std_normal_cdf(x);
            assert!((std_normal_quantile(p) - x).abs() < 1e-9 * (1.0 + x.abs()), "x={x}");
        }
    }
}
