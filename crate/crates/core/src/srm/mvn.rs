//! Low-dimensional multinormal orthant probabilities.
//!
//! The bivariate cdf integrates the density along the correlation after the
//! substitution ρ = sin θ, which removes the endpoint singularity at |ρ| = 1:
//!
//! `Φ₂(h, k; ρ) = Φ(h)Φ(k) + (1/2π) ∫₀^{asin ρ} exp(−(h² + k² − 2hk sin θ) / (2cos²θ)) dθ`.
//!
//! The trivariate cdf conditions on the least correlated coordinate and
//! integrates a bivariate cdf against the standard normal density.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::dists::{std_normal_cdf, std_normal_pdf};
use crate::numeric::adaptive_gk;

const LOWER_CUT: f64 = -38.5;

/// `Pr(Z₁ ≤ h, Z₂ ≤ k)` for standard normals with correlation `rho`.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    let rho = rho.clamp(-1.0, 1.0);
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return std_normal_cdf(k);
    }
    if k == f64::INFINITY {
        return std_normal_cdf(h);
    }
    if rho == 1.0 {
        return std_normal_cdf(h.min(k));
    }
    if rho == -1.0 {
        return (std_normal_cdf(h) - std_normal_cdf(-k)).max(0.0);
    }
    let base = std_normal_cdf(h) * std_normal_cdf(k);
    if rho == 0.0 {
        return base;
    }
    let top = rho.asin();
    let hk = h * k;
    let ss = h * h + k * k;
    let f = |t: f64| {
        let (s, c) = t.sin_cos();
        let c2 = c * c;
        if c2 <= 0.0 {
            return 0.0;
        }
        (-(ss - 2.0 * hk * s) / (2.0 * c2)).exp()
    };
    let integral = adaptive_gk(f, 0.0, top, 1e-300, 1e-12) / (2.0 * std::f64::consts::PI);
    (base + integral).clamp(0.0, 1.0)
}

/// `Pr(Z₁ ≤ b₁, Z₂ ≤ b₂, Z₃ ≤ b₃)` for a standard trivariate normal with
/// correlation matrix `corr`.
pub fn tvn_cdf(b: [f64; 3], corr: [[f64; 3]; 3]) -> f64 {
    // condition on the coordinate whose largest correlation is smallest
    let pivot = (0..3)
        .min_by(|&i, &j| {
            let mi = (0..3).filter(|&k| k != i).map(|k| corr[i][k].abs()).fold(0.0, f64::max);
            let mj = (0..3).filter(|&k| k != j).map(|k| corr[j][k].abs()).fold(0.0, f64::max);
            mi.total_cmp(&mj)
        })
        .unwrap();
    let others: Vec<usize> = (0..3).filter(|&k| k != pivot).collect();
    let (a, c) = (others[0], others[1]);
    let r1 = corr[pivot][a];
    let r2 = corr[pivot][c];
    let r12 = corr[a][c];
    if b.iter().any(|v| *v == f64::NEG_INFINITY) {
        return 0.0;
    }
    if r1.abs() >= 1.0 || r2.abs() >= 1.0 {
        // degenerate pivot: the two coordinates it determines collapse
        return bvn_cdf(b[a].min(if r1 > 0.0 { b[pivot] } else { f64::INFINITY }), b[c], r12);
    }
    let s1 = (1.0 - r1 * r1).sqrt();
    let s2 = (1.0 - r2 * r2).sqrt();
    let rc = ((r12 - r1 * r2) / (s1 * s2)).clamp(-1.0, 1.0);
    let upper = b[pivot].min(-LOWER_CUT);
    if upper <= LOWER_CUT {
        return 0.0;
    }
    let f = |z: f64| std_normal_pdf(z) * bvn_cdf((b[a] - r1 * z) / s1, (b[c] - r2 * z) / s2, rc);
    adaptive_gk(f, LOWER_CUT, upper, 1e-300, 1e-11).clamp(0.0, 1.0)
}

/// First-order union probability `Pr(∪ {α_i·U ≥ β_i})` for up to three modes
/// by inclusion-exclusion over lower orthants, which keeps relative accuracy
/// for small failure probabilities.
pub fn union_probability(betas: &[f64], corr: &[Vec<f64>]) -> f64 {
    let k = betas.len();
    assert!(k <= 3, "union_probability handles at most three modes");
    let mut pf = 0.0;
    for i in 0..k {
        pf += std_normal_cdf(-betas[i]);
    }
    for i in 0..k {
        for j in i + 1..k {
            pf -= bvn_cdf(-betas[i], -betas[j], corr[i][j]);
        }
    }
    if k == 3 {
        let c = [
            [1.0, corr[0][1], corr[0][2]],
            [corr[1][0], 1.0, corr[1][2]],
            [corr[2][0], corr[2][1], 1.0],
        ];
        pf += tvn_cdf([-betas[0], -betas[1], -betas[2]], c);
    }
    let max_single = betas.iter().map(|b| std_normal_cdf(-b)).fold(0.0, f64::max);
    pf.clamp(max_single, 1.0)
}

/// Union probability of linearized modes by sampling a correlated normal
/// vector; used when more than three distinct modes remain.
pub fn union_probability_sampled(betas: &[f64], corr: &[Vec<f64>], n: usize, seed: u64) -> f64 {
    let l = cholesky(corr);
    let k = betas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; k];
    let mut y = vec![0.0; k];
    let mut hits = 0u64;
    for _ in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for i in 0..k {
            y[i] = (0..=i).map(|j| l[i][j] * z[j]).sum();
        }
        if (0..k).any(|i| y[i] >= betas[i]) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

/// Lower Cholesky factor with a small jitter for semidefinite inputs.
fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).max(1e-14).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}
