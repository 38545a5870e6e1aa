//! Truncated multivariate Taylor series in the parameter `a`.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::numerics::{binomial, Scalar};

/// Multi-indices `ι ∈ ℕ^k` with `|ι| ≤ d`, graded then lexicographically
/// descending, so position 0 is the zero index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexSet {
    pub k: usize,
    pub d: usize,
    indices: Vec<Vec<usize>>,
    product: Vec<Vec<Option<usize>>>,
}

impl MultiIndexSet {
    pub fn new(k: usize, d: usize) -> Self {
        let mut indices: Vec<Vec<usize>> = Vec::new();
        let mut cur = vec![0usize; k];
        fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if pos == cur.len() {
                out.push(cur.clone());
                return;
            }
            for v in 0..=left {
                cur[pos] = v;
                rec(pos + 1, left - v, cur, out);
            }
            cur[pos] = 0;
        }
        rec(0, d, &mut cur, &mut indices);
        indices.sort_by(|a, b| {
            let sa: usize = a.iter().sum();
            let sb: usize = b.iter().sum();
            sa.cmp(&sb).then_with(|| b.cmp(a))
        });
        let n = indices.len();
        let mut product = vec![vec![None; n]; n];
        for i in 0..n {
            for j in 0..n {
                let sum: Vec<usize> = indices[i]
                    .iter()
                    .zip(&indices[j])
                    .map(|(a, b)| a + b)
                    .collect();
                product[i][j] = indices.iter().position(|x| *x == sum);
            }
        }
        MultiIndexSet {
            k,
            d,
            indices,
            product,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, pos: usize) -> &[usize] {
        &self.indices[pos]
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn position(&self, iota: &[usize]) -> Option<usize> {
        self.indices.iter().position(|x| x == iota)
    }

    pub fn order(&self, pos: usize) -> usize {
        self.indices[pos].iter().sum()
    }

    /// Position of `ι_i + ι_j`, if still of order at most `d`.
    pub fn product_position(&self, i: usize, j: usize) -> Option<usize> {
        self.product[i][j]
    }

    /// Position of the unit index `e_i`.
    pub fn unit(&self, i: usize) -> Option<usize> {
        let mut e = vec![0; self.k];
        e[i] = 1;
        self.position(&e)
    }

    /// Monomial `s^ι` at a parameter offset `s`.
    pub fn monomial(&self, pos: usize, s: &[f64]) -> f64 {
        self.indices[pos]
            .iter()
            .zip(s)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }

    pub fn expected_len(k: usize, d: usize) -> usize {
        binomial(d + k, d)
    }
}

/// A truncated Taylor series `Σ c_ι s^ι` with coefficient convention
/// `c_ι = ∂^ι z / ι!`.
#[derive(Clone, Debug)]
pub struct Taylor {
    pub set: Arc<MultiIndexSet>,
    pub c: Vec<f64>,
}

impl Taylor {
    pub fn constant(set: &Arc<MultiIndexSet>, v: f64) -> Self {
        let mut c = vec![0.0; set.len()];
        c[0] = v;
        Taylor {
            set: set.clone(),
            c,
        }
    }

    /// The series `v + s_i`.
    pub fn variable(set: &Arc<MultiIndexSet>, v: f64, i: usize) -> Self {
        let mut t = Self::constant(set, v);
        if let Some(p) = set.unit(i) {
            t.c[p] = 1.0;
        }
        t
    }

    pub fn from_coeffs(set: &Arc<MultiIndexSet>, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), set.len());
        Taylor {
            set: set.clone(),
            c,
        }
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        (0..self.c.len())
            .map(|p| self.c[p] * self.set.monomial(p, s))
            .sum()
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut out = self.constant_like(1.0);
        for _ in 0..n {
            out = out * self.clone();
        }
        out
    }
}

impl Add for Taylor {
    type Output = Taylor;
    fn add(mut self, rhs: Taylor) -> Taylor {
        for (a, b) in self.c.iter_mut().zip(&rhs.c) {
            *a += b;
        }
        self
    }
}

impl Sub for Taylor {
    type Output = Taylor;
    fn sub(mut self, rhs: Taylor) -> Taylor {
        for (a, b) in self.c.iter_mut().zip(&rhs.c) {
            *a -= b;
        }
        self
    }
}

impl Neg for Taylor {
    type Output = Taylor;
    fn neg(mut self) -> Taylor {
        for a in self.c.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul for Taylor {
    type Output = Taylor;
    fn mul(self, rhs: Taylor) -> Taylor {
        let n = self.c.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            if self.c[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if let Some(p) = self.set.product_position(i, j) {
                    out[p] += self.c[i] * rhs.c[j];
                }
            }
        }
        Taylor {
            set: self.set,
            c: out,
        }
    }
}

impl Scalar for Taylor {
    fn constant_like(&self, v: f64) -> Self {
        Taylor::constant(&self.set, v)
    }

    fn re(&self) -> f64 {
        self.c[0]
    }

    fn recip(&self) -> Self {
        // 1/(a0 + r) = (1/a0) Σ_n (-r/a0)^n, nilpotent beyond order d
        let a0 = self.c[0];
        let mut r = self.clone();
        r.c[0] = 0.0;
        let q = r.scale(-1.0 / a0);
        let mut term = self.constant_like(1.0);
        let mut sum = term.clone();
        for _ in 0..self.set.d {
            term = term * q.clone();
            sum = sum + term.clone();
        }
        sum.scale(1.0 / a0)
    }

    fn scale(&self, k: f64) -> Self {
        Taylor {
            set: self.set.clone(),
            c: self.c.iter().map(|v| v * k).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_sets() {
        let s = MultiIndexSet::new(1, 2);
        assert_eq!(s.indices(), &[vec![0], vec![1], vec![2]]);
        let s = MultiIndexSet::new(2, 2);
        assert_eq!(s.len(), 6);
        assert_eq!(s.index(0), &[0, 0]);
        assert_eq!(s.order(5), 2);
        let s = MultiIndexSet::new(3, 0);
        assert_eq!(s.len(), 1);
        assert_eq!(MultiIndexSet::new(0, 3).len(), 1);
        for k in 0..4 {
            for d in 0..4 {
                assert_eq!(
                    MultiIndexSet::new(k, d).len(),
                    MultiIndexSet::expected_len(k, d)
                );
            }
        }
    }

    #[test]
    fn series_arithmetic_matches_polynomials() {
        let set = Arc::new(MultiIndexSet::new(2, 3));
        let x = Taylor::variable(&set, 0.5, 0);
        let y = Taylor::variable(&set, -0.2, 1);
        let f = x.clone() * y.clone() + x.powi(2) - y.scale(3.0);
        let g = f.recip();
        let s = [1e-4, -2e-4];
        let exact = |a: f64, b: f64| {
            let v = (0.5 + a) * (-0.2 + b) + (0.5 + a).powi(2) - 3.0 * (-0.2 + b);
            1.0 / v
        };
        // truncation error is O(|s|^4)
        assert!((g.eval(&s) - exact(s[0], s[1])).abs() < 1e-10);
        assert!((g.re() - exact(0.0, 0.0)).abs() < 1e-15);
    }
}
