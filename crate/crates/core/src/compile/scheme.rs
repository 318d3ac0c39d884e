use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered interval borders defining the states of a discretized variable.
///
/// States are the left-closed, right-open intervals between consecutive
/// borders, plus `[last, ∞)` when `tail` is set. With `fold_lower` the mass
/// below the first border belongs to the first state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct IntervalScheme {
    pub borders: Vec<f64>,
    #[serde(default)]
    pub tail: bool,
    #[serde(default)]
    pub fold_lower: bool,
}

impl IntervalScheme {
    pub fn new(borders: Vec<f64>, tail: bool, fold_lower: bool) -> Result<Self> {
        let s = Self {
            borders,
            tail,
            fold_lower,
        };
        s.validate()?;
        Ok(s)
    }

    /// Borders `start, start + step, …, end` (inclusive).
    pub fn range(start: f64, step: f64, end: f64, tail: bool, fold_lower: bool) -> Result<Self> {
        if !(step > 0.0) || !(end >= start) {
            return Err(Error::Compile(format!("invalid border range {start}:{step}:{end}")));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        let borders = (0..=n).map(|i| start + step * i as f64).collect();
        Self::new(borders, tail, fold_lower)
    }

    pub fn validate(&self) -> Result<()> {
        if self.borders.is_empty() || (self.borders.len() < 2 && !self.tail) {
            return Err(Error::Compile("a scheme needs at least one interval".into()));
        }
        if self.borders.iter().any(|b| !b.is_finite()) {
            return Err(Error::Compile("scheme borders must be finite".into()));
        }
        if self.borders.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Compile("scheme borders must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.borders.len() - 1 + usize::from(self.tail)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nominal bounds of state `k`; the tail's upper bound is +∞.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lo = self.borders[k];
        let hi = self.borders.get(k + 1).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    /// Bounds including folded mass: the first state extends to −∞ when
    /// `fold_lower` is set.
    pub fn effective_bounds(&self, k: usize) -> (f64, f64) {
        let (lo, hi) = self.bounds(k);
        if k == 0 && self.fold_lower {
            (f64::NEG_INFINITY, hi)
        } else {
            (lo, hi)
        }
    }

    pub fn is_tail(&self, k: usize) -> bool {
        self.tail && k + 1 == self.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        let (lo, hi) = self.bounds(k);
        hi - lo
    }

    /// State containing `x`. Values on a border belong to the upper state.
    pub fn state_of(&self, x: f64) -> Option<usize> {
        if x.is_nan() {
            return None;
        }
        let first = self.borders[0];
        let last = *self.borders.last().unwrap();
        if x < first {
            return self.fold_lower.then_some(0);
        }
        if x >= last {
            return self.tail.then(|| self.len() - 1);
        }
        // index of the last border ≤ x
        let k = self.borders.partition_point(|b| *b <= x) - 1;
        Some(k)
    }

    /// States lying entirely above `x` (for findings such as `H > 70`). A
    /// state straddling `x` is included.
    pub fn states_above(&self, x: f64) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.effective_bounds(k).1 > x).collect()
    }

    /// States lying below `x`; a straddling state is included.
    pub fn states_below(&self, x: f64) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.effective_bounds(k).0 < x).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len())
            .map(|k| {
                let (lo, hi) = self.bounds(k);
                if hi.is_infinite() {
                    format!("[{},inf)", fmt_num(lo))
                } else {
                    format!("[{},{})", fmt_num(lo), fmt_num(hi))
                }
            })
            .collect()
    }

    /// Halve every bounded interval.
    pub fn refined(&self) -> Self {
        let mut borders = Vec::with_capacity(2 * self.borders.len());
        for w in self.borders.windows(2) {
            borders.push(w[0]);
            borders.push(0.5 * (w[0] + w[1]));
        }
        borders.push(*self.borders.last().unwrap());
        Self {
            borders,
            tail: self.tail,
            fold_lower: self.fold_lower,
        }
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

impl fmt::Display for IntervalScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} states", self.len())?;
        if let (Some(a), Some(b)) = (self.borders.first(), self.borders.last()) {
            write!(f, " over [{a}, {b}]")?;
        }
        if self.tail {
            write!(f, " + tail")?;
        }
        Ok(())
    }
}
