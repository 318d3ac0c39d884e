use super::DiscreteBN;

/// A non-negative table over a set of variables (network node ids), row-major
/// with the last variable varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn scalar(v: f64) -> Self {
        Self {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![v],
        }
    }

    /// The CPT of node `i` as a factor over (parents…, node).
    pub fn from_node(bn: &DiscreteBN, i: usize) -> Self {
        let mut vars = bn.parent_ids(i);
        vars.push(i);
        let cards = vars.iter().map(|&v| bn.nodes()[v].card()).collect();
        Self {
            vars,
            cards,
            values: bn.nodes()[i].cpt.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for k in (0..self.vars.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.cards[k + 1];
        }
        s
    }

    pub fn position(&self, var: usize) -> Option<usize> {
        self.vars.iter().position(|&v| v == var)
    }

    /// Fix `var` to `state`, removing it from the scope.
    pub fn slice(&self, var: usize, state: usize) -> Factor {
        let Some(p) = self.position(var) else {
            return self.clone();
        };
        let strides = self.strides();
        let card = self.cards[p];
        let inner = strides[p];
        let outer = self.values.len() / (card * inner);
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * card * inner + state * inner;
            values.extend_from_slice(&self.values[base..base + inner]);
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(p);
        cards.remove(p);
        Factor { vars, cards, values }
    }

    /// Zero every entry where `var` is outside `allowed`.
    pub fn mask(&mut self, var: usize, allowed: &[bool]) {
        let Some(p) = self.position(var) else { return };
        let strides = self.strides();
        let card = self.cards[p];
        let inner = strides[p];
        for (idx, v) in self.values.iter_mut().enumerate() {
            let s = (idx / inner) % card;
            if !allowed[s] {
                *v = 0.0;
            }
        }
    }

    /// Scale so the largest entry is one; returns the log of the divisor, or
    /// `None` when the factor is identically zero.
    pub fn normalize_max(&mut self) -> Option<f64> {
        let m = self.values.iter().copied().fold(0.0, f64::max);
        if !(m > 0.0) {
            return None;
        }
        if m != 1.0 {
            let inv = 1.0 / m;
            self.values.iter_mut().for_each(|v| *v *= inv);
        }
        Some(m.ln())
    }

    /// Multiply `factors` and sum out `sum_var` (if any) in one pass, without
    /// forming the full product. The result's scope is `out_vars` in the given
    /// order; every variable of every input must be in `out_vars` or be
    /// `sum_var`.
    pub fn product_sum(factors: &[&Factor], out_vars: &[usize], out_cards: &[usize], sum_var: Option<(usize, usize)>) -> Factor {
        let m = factors.len();
        let size: usize = out_cards.iter().product();
        let nv = out_vars.len();
        // stride of each output variable (and the summed variable) in each input
        let mut fs = vec![vec![0usize; nv]; m];
        let mut sx = vec![0usize; m];
        for (fi, f) in factors.iter().enumerate() {
            let st = f.strides();
            for (k, &v) in f.vars.iter().enumerate() {
                if let Some(j) = out_vars.iter().position(|&o| o == v) {
                    fs[fi][j] = st[k];
                } else if Some(v) == sum_var.map(|s| s.0) {
                    sx[fi] = st[k];
                } else {
                    panic!("factor variable {v} not covered by product_sum scope");
                }
            }
        }
        let cx = sum_var.map_or(1, |s| s.1);
        let mut out = vec![0.0; size];
        let mut counter = vec![0usize; nv];
        let mut off = vec![0usize; m];
        let vals: Vec<&[f64]> = factors.iter().map(|f| f.values.as_slice()).collect();

        for slot in out.iter_mut() {
            let mut acc = 0.0;
            match m {
                1 => {
                    let (a, o, s) = (vals[0], off[0], sx[0]);
                    for x in 0..cx {
                        acc += a[o + x * s];
                    }
                }
                2 => {
                    let (a, oa, sa) = (vals[0], off[0], sx[0]);
                    let (b, ob, sb) = (vals[1], off[1], sx[1]);
                    for x in 0..cx {
                        acc += a[oa + x * sa] * b[ob + x * sb];
                    }
                }
                _ => {
                    for x in 0..cx {
                        let mut p = 1.0;
                        for fi in 0..m {
                            p *= vals[fi][off[fi] + x * sx[fi]];
                            if p == 0.0 {
                                break;
                            }
                        }
                        acc += p;
                    }
                }
            }
            *slot = acc;
            // advance the odometer, last output variable fastest
            let mut k = nv;
            while k > 0 {
                k -= 1;
                counter[k] += 1;
                if counter[k] < out_cards[k] {
                    for fi in 0..m {
                        off[fi] += fs[fi][k];
                    }
                    break;
                }
                counter[k] = 0;
                for fi in 0..m {
                    off[fi] -= fs[fi][k] * (out_cards[k] - 1);
                }
            }
        }
        Factor {
            vars: out_vars.to_vec(),
            cards: out_cards.to_vec(),
            values: out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(vars: &[usize], cards: &[usize], values: &[f64]) -> Factor {
        Factor {
            vars: vars.to_vec(),
            cards: cards.to_vec(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn slicing_picks_the_right_entries() {
        // vars (0: card 2, 1: card 3)
        let a = f(&[0, 1], &[2, 3], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(a.slice(0, 1).values, vec![4., 5., 6.]);
        assert_eq!(a.slice(1, 2).values, vec![3., 6.]);
        assert_eq!(a.slice(1, 2).vars, vec![0]);
    }

    #[test]
    fn product_sum_matches_naive() {
        let a = f(&[0, 1], &[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = f(&[1, 2], &[3, 2], &[0.5, 1.5, 2.0, 1.0, 0.25, 4.0]);
        let c = f(&[2], &[2], &[3.0, 7.0]);
        // sum over var 1 of a(0,1) b(1,2) c(2), output order (2, 0)
        let r = Factor::product_sum(&[&a, &b, &c], &[2, 0], &[2, 2], Some((1, 3)));
        for v2 in 0..2 {
            for v0 in 0..2 {
                let mut want = 0.0;
                for v1 in 0..3 {
                    want += a.values[v0 * 3 + v1] * b.values[v1 * 2 + v2] * c.values[v2];
                }
                assert_eq!(r.values[v2 * 2 + v0], want);
            }
        }
        let p = Factor::product_sum(&[&a, &c], &[0, 1, 2], &[2, 3, 2], None);
        assert_eq!(p.values[(1 * 3 + 2) * 2 + 1], 6.0 * 7.0);
    }

    #[test]
    fn masking_zeroes_disallowed_states() {
        let mut a = f(&[0, 1], &[2, 3], &[1., 2., 3., 4., 5., 6.]);
        a.mask(1, &[true, false, true]);
        assert_eq!(a.values, vec![1., 0., 3., 4., 0., 6.]);
    }
}
