use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Method, PfEstimate, ReliabilityProblem, SlotMap, StandardSpace};
use crate::dists::Distribution;
use crate::error::{Error, Result};
use crate::expr::Tape;

const CHUNK: usize = 1 << 14;
const Z95: f64 = 1.959_963_984_540_054;

/// Additive-noise equality information `m = x + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub variable: String,
    pub value: f64,
    pub noise: Distribution,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    w: f64,
    wf: f64,
    w2: f64,
    w2f: f64,
}

impl Sums {
    fn add(self, o: Sums) -> Sums {
        Sums {
            w: self.w + o.w,
            wf: self.wf + o.wf,
            w2: self.w2 + o.w2,
            w2f: self.w2f + o.w2f,
        }
    }
}

/// Variables without a closed-form quantile are drawn by their own samplers
/// instead of through `F⁻¹(Φ(u))`.
enum Direct {
    Gamma(rand_distr::Gamma<f64>),
    Beta(rand_distr::Beta<f64>, f64, f64),
}

impl Direct {
    fn of(d: &Distribution) -> Option<Direct> {
        match *d {
            Distribution::Gamma { shape, scale } => rand_distr::Gamma::new(shape, scale).ok().map(Direct::Gamma),
            Distribution::Beta { a, b, lower, upper } if upper > lower => {
                rand_distr::Beta::new(a, b).ok().map(|s| Direct::Beta(s, lower, upper))
            }
            _ => None,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Direct::Gamma(g) => g.sample(rng),
            Direct::Beta(b, lo, hi) => lo + (hi - lo) * b.sample(rng),
        }
    }
}

struct Sampler {
    space: StandardSpace,
    direct: Vec<(usize, Direct)>,
    tapes: Vec<Tape>,
    meas: Vec<(usize, f64, Distribution)>,
}

impl Sampler {
    fn new(p: &ReliabilityProblem, domain: &[&str], measurements: &[Measurement]) -> Result<Self> {
        let mut space = p.standard_space()?;
        let mut direct = Vec::new();
        for (k, m) in space.maps.iter_mut().enumerate() {
            if let SlotMap::Independent { dist, .. } = m {
                if let Some(d) = Direct::of(dist) {
                    direct.push((k, d));
                    *m = SlotMap::Fixed(f64::NAN);
                }
            }
        }
        let tapes = domain
            .iter()
            .map(|g| space.compile(p.limit_state(g)?))
            .collect::<Result<Vec<_>>>()?;
        let mut meas = Vec::with_capacity(measurements.len());
        for m in measurements {
            m.noise.validate()?;
            let slot = space
                .slot(&m.variable)
                .ok_or_else(|| Error::Problem(format!("measured variable `{}` is not declared", m.variable)))?;
            meas.push((slot, m.value, m.noise));
        }
        Ok(Self { space, direct, tapes, meas })
    }

    fn chunk(&self, seed: u64, index: usize, count: usize) -> Result<Sums> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut u = vec![0.0; self.space.dim()];
        let mut x = vec![0.0; self.space.n_slots()];
        let mut s = Sums::default();
        for _ in 0..count {
            for v in u.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            self.space.to_x(&u, &mut x);
            for (k, d) in &self.direct {
                x[*k] = d.sample(&mut rng);
            }
            let mut w = 1.0;
            for (slot, value, noise) in &self.meas {
                w *= noise.pdf(value - x[*slot]);
            }
            let mut failed = false;
            for t in &self.tapes {
                if t.eval(&x)? <= 0.0 {
                    failed = true;
                    break;
                }
            }
            s.w += w;
            s.w2 += w * w;
            if failed {
                s.wf += w;
                s.w2f += w * w;
            }
        }
        Ok(s)
    }

    fn run(&self, n: usize, seed: u64) -> Result<Sums> {
        let chunks: Vec<(usize, usize)> = (0..n.div_ceil(CHUNK)).map(|i| (i, CHUNK.min(n - i * CHUNK))).collect();
        let parts = chunks
            .par_iter()
            .map(|&(i, c)| self.chunk(seed, i, c))
            .collect::<Result<Vec<_>>>()?;
        // fixed reduction order keeps results independent of scheduling
        Ok(parts.into_iter().fold(Sums::default(), Sums::add))
    }
}

/// Crude Monte Carlo estimate of the probability that any limit state in
/// `domain` is non-positive, with a binomial 95% half-width. Deterministic
/// given `seed`; sample blocks use separate generator streams.
pub fn mcs(p: &ReliabilityProblem, domain: &[&str], n: usize, seed: u64) -> Result<PfEstimate> {
    if n == 0 {
        return Err(Error::Problem("sample count must be positive".into()));
    }
    let s = Sampler::new(p, domain, &[])?.run(n, seed)?;
    let pf = s.wf / s.w;
    let mut est = PfEstimate::new(pf, Method::Mcs);
    est.half_width = Some(Z95 * (pf * (1.0 - pf) / n as f64).sqrt());
    est.samples = Some(n as u64);
    est.effective_sample_size = Some(n as f64);
    Ok(est)
}

/// Likelihood-weighted Monte Carlo estimate of the failure probability given
/// noisy measurements. Samples are drawn from the prior and weighted by
/// `Π pdf_ε(m − x)`; the 95% band uses the delta method on the weighted ratio.
/// An effective sample size below 100 sets a warning on the estimate.
pub fn conditional_mcs(
    p: &ReliabilityProblem,
    domain: &[&str],
    measurements: &[Measurement],
    n: usize,
    seed: u64,
) -> Result<PfEstimate> {
    if n == 0 {
        return Err(Error::Problem("sample count must be positive".into()));
    }
    let s = Sampler::new(p, domain, measurements)?.run(n, seed)?;
    if !(s.w > 0.0) {
        return Err(Error::InconsistentEvidence(
            "all sample weights vanish; measurements are incompatible with the prior".into(),
        ));
    }
    let pf = s.wf / s.w;
    let var = (s.w2f * (1.0 - pf).powi(2) + (s.w2 - s.w2f) * pf * pf) / (s.w * s.w);
    let ess = s.w * s.w / s.w2;
    let mut est = PfEstimate::new(pf, Method::ConditionalMcs);
    est.half_width = Some(Z95 * var.max(0.0).sqrt());
    est.samples = Some(n as u64);
    est.effective_sample_size = Some(ess);
    if ess < 100.0 {
        est.warning = Some(format!("effective sample size {ess:.1} is below 100"));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::std_normal_cdf;

    fn problem() -> ReliabilityProblem {
        ReliabilityProblem::new()
            .with_variable("r", Distribution::Normal { mean: 5.0, std: 1.0 })
            .with_variable("s", Distribution::Normal { mean: 2.0, std: 1.0 })
            .with_limit_state("g", "r - s")
            .unwrap()
            .with_limit_state("safe", "1")
            .unwrap()
            .with_limit_state("fail", "-1")
            .unwrap()
    }

    #[test]
    fn crude_estimate_covers_exact_value() {
        let est = mcs(&problem(), &["g"], 200_000, 11).unwrap();
        let exact = std_normal_cdf(-3.0 / 2f64.sqrt());
        assert!((est.pf - exact).abs() < 2.0 * est.half_width.unwrap());
    }

    #[test]
    fn impossible_and_certain_domains() {
        assert_eq!(mcs(&problem(), &["safe"], 1000, 1).unwrap().pf, 0.0);
        assert_eq!(mcs(&problem(), &["fail"], 1000, 1).unwrap().pf, 1.0);
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let a = mcs(&problem(), &["g"], 50_000, 5).unwrap();
        let b = mcs(&problem(), &["g"], 50_000, 5).unwrap();
        assert_eq!(a, b);
        let c = mcs(&problem(), &["g"], 50_000, 6).unwrap();
        assert_ne!(a.pf, c.pf);
    }

    #[test]
    fn weighted_estimate_matches_gaussian_update() {
        // r | m is normal with mean (5 + m)/2 and variance 1/2 when noise std is 1
        let m = Measurement {
            variable: "r".into(),
            value: 3.0,
            noise: Distribution::Normal { mean: 0.0, std: 1.0 },
        };
        let est = conditional_mcs(&problem(), &["g"], &[m], 400_000, 2).unwrap();
        let exact = std_normal_cdf(-2.0 / 1.5f64.sqrt());
        assert!((est.pf - exact).abs() < 2.0 * est.half_width.unwrap(), "{} vs {exact}", est.pf);
        assert!(est.warning.is_none());
    }

    #[test]
    fn uninformative_measurement_reproduces_prior() {
        let m = Measurement {
            variable: "r".into(),
            value: 5.0,
            noise: Distribution::Normal { mean: 0.0, std: 1e6 },
        };
        let prior = mcs(&problem(), &["g"], 100_000, 4).unwrap();
        let post = conditional_mcs(&problem(), &["g"], &[m], 100_000, 4).unwrap();
        assert!((prior.pf - post.pf).abs() < 2.0 * prior.half_width.unwrap());
    }

    #[test]
    fn low_effective_sample_size_is_flagged() {
        let m = Measurement {
            variable: "r".into(),
            value: 12.0,
            noise: Distribution::Normal { mean: 0.0, std: 0.01 },
        };
        let est = conditional_mcs(&problem(), &["g"], &[m], 2000, 1);
        match est {
            Ok(e) => assert!(e.warning.is_some()),
            Err(e) => assert!(matches!(e, Error::InconsistentEvidence(_))),
        }
    }
}
