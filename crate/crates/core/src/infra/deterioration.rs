use serde::{Deserialize, Serialize};

use crate::compile::{cpt_by_quadrature, CellLaw, CompileOptions, CptReport, IntervalScheme, QuadParent};
use crate::dists::Distribution;
use crate::error::{Error, Result};

/// Markov deterioration: `Q_t | Q_{t−1} = q` is Beta on `[0, q]` with mean
/// `mean_ratio·q` and standard deviation `std_ratio·q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeteriorationModel {
    pub mean_ratio: f64,
    pub std_ratio: f64,
}

impl DeteriorationModel {
    pub fn validate(&self) -> Result<()> {
        let (m, s) = (self.mean_ratio, self.std_ratio);
        if !(m > 0.0 && m < 1.0) || !(s > 0.0) || s * s >= m * (1.0 - m) {
            return Err(Error::Distribution(format!(
                "deterioration ratios mean {m}, std {s} admit no Beta law on [0, q]"
            )));
        }
        Ok(())
    }

    /// Shape parameters of the standardized Beta law.
    pub fn shapes(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let (m, s) = (self.mean_ratio, self.std_ratio);
        let k = m * (1.0 - m) / (s * s) - 1.0;
        Ok((m * k, (1.0 - m) * k))
    }

    /// Law of the next capacity given the current one.
    pub fn next(&self, q: f64) -> Result<Distribution> {
        let (a, b) = self.shapes()?;
        Ok(Distribution::Beta {
            a,
            b,
            lower: 0.0,
            upper: q.max(0.0),
        })
    }
}

/// Transition table `Pr(Q_t ∈ cell_b | Q_{t−1} ∈ cell_a)` on one scheme, with
/// the previous capacity uniform within its cell (a tail cell is treated as
/// one more interval of the preceding width).
pub fn deterioration_cpt(node: &str, model: &DeteriorationModel, scheme: &IntervalScheme, opts: &CompileOptions) -> Result<(Vec<f64>, CptReport)> {
    model.validate()?;
    let n = scheme.len();
    let parents = [QuadParent::Interval {
        scheme: scheme.clone(),
        law: CellLaw::Uniform,
        label: "q_prev".into(),
    }];
    let (cpt, mut rep) = cpt_by_quadrature(
        node,
        &parents,
        n,
        |x| {
            let d = model.next(x[0])?;
            let mut row: Vec<f64> = (0..n)
                .map(|j| {
                    let (mut lo, mut hi) = scheme.effective_bounds(j);
                    if j == 0 {
                        lo = f64::NEG_INFINITY;
                    }
                    if j == n - 1 {
                        hi = f64::INFINITY;
                    }
                    if x[0] <= 0.0 {
                        return if lo <= 0.0 && 0.0 < hi { 1.0 } else { 0.0 };
                    }
                    d.interval_probability(lo, hi)
                })
                .collect();
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= t);
            Ok(row)
        },
        opts,
    )?;
    rep.method = "deterioration".into();
    Ok((cpt, rep))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> DeteriorationModel {
        DeteriorationModel { mean_ratio: 0.98, std_ratio: 0.01 }
    }

    fn scheme() -> IntervalScheme {
        IntervalScheme::range(0.0, 5.0, 150.0, true, false).unwrap()
    }

    #[test]
    fn beta_shapes() {
        let (a, b) = model().shapes().unwrap();
        assert!((a - 191.1).abs() < 1e-9 && (b - 3.9).abs() < 1e-9);
        let d = model().next(100.0).unwrap();
        assert!((d.mean() - 98.0).abs() < 1e-9 && (d.std() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn capacity_never_grows() {
        let s = scheme();
        let (cpt, _) = deterioration_cpt("Q2", &model(), &s, &CompileOptions::default()).unwrap();
        let n = s.len();
        for a in 0..n {
            let row = &cpt[a * n..(a + 1) * n];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row[a + 1..].iter().all(|&p| p == 0.0), "row {a}");
        }
        // mass of [100,105) moves mostly into [95,100) and [100,105)
        let row = &cpt[20 * n..21 * n];
        assert!(row[19] + row[20] > 0.99);
    }

    #[test]
    fn ten_year_mean() {
        let s = scheme();
        let n = s.len();
        let (cpt, _) = deterioration_cpt("Q", &model(), &s, &CompileOptions::default()).unwrap();
        let mut p = vec![0.0; n];
        p[s.state_of(100.0).unwrap()] = 1.0;
        for _ in 0..10 {
            let mut next = vec![0.0; n];
            for a in 0..n {
                for b in 0..n {
                    next[b] += p[a] * cpt[a * n + b];
                }
            }
            p = next;
        }
        let mean: f64 = (0..n).map(|k| p[k] * (s.bounds(k).0 + 2.5)).sum();
        let want = 102.5 * 0.98f64.powi(10);
        assert!((mean - want).abs() < 2.5, "{mean} vs {want}");
    }
}
