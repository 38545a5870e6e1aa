//! Dense linear algebra helpers, boxes with outward rounding, affine maps and
//! finite differences.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension bookkeeping for a scenario. `k` and `d` are the parameter count
/// and jet order; they are only meaningful for the jet pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub ss: usize,
    pub u: usize,
    pub c: usize,
    pub k: usize,
    pub d: usize,
}

impl Dimensions {
    pub fn new(ss: usize, u: usize, c: usize, k: usize, d: usize) -> Result<Self> {
        if ss == 0 || u == 0 || c == 0 {
            return Err(Error::Dimension(format!(
                "ss, u, c must be positive (got {ss}, {u}, {c})"
            )));
        }
        Ok(Dimensions { ss, u, c, k, d })
    }

    /// Dimensions without parameters.
    pub fn plain(ss: usize, u: usize, c: usize) -> Result<Self> {
        Self::new(ss, u, c, 0, 0)
    }

    pub fn m(&self) -> usize {
        self.ss + self.u + self.c
    }

    /// `c = u^2`, required by the explicit folding manifold.
    pub fn is_folding_compatible(&self) -> bool {
        self.c == self.u * self.u
    }
}

/// Binomial coefficient, exact in `u64`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i as u64 + 1);
    }
    acc as usize
}

// Directed rounding through error-free transforms: the rounded result is only
// moved by one ulp when the operation was inexact.

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

pub fn add_down(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if !s.is_finite() {
        return s;
    }
    if e < 0.0 {
        s.next_down()
    } else {
        s
    }
}

pub fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if !s.is_finite() {
        return s;
    }
    if e > 0.0 {
        s.next_up()
    } else {
        s
    }
}

pub fn mul_down(a: f64, b: f64) -> f64 {
    let p = a * b;
    if !p.is_finite() {
        return p;
    }
    let e = a.mul_add(b, -p);
    if e < 0.0 {
        p.next_down()
    } else {
        p
    }
}

pub fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    if !p.is_finite() {
        return p;
    }
    let e = a.mul_add(b, -p);
    if e > 0.0 {
        p.next_up()
    } else {
        p
    }
}

/// Axis-aligned closed box `[lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension(format!(
                "box bounds of length {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l <= h) {
                return Err(Error::Precondition(format!(
                    "box axis {i}: lo {l} > hi {h}"
                )));
            }
        }
        Ok(IntervalBox { lo, hi })
    }

    /// `[-r, r]^dim`.
    pub fn cube(dim: usize, r: f64) -> Self {
        IntervalBox {
            lo: vec![-r; dim],
            hi: vec![r; dim],
        }
    }

    /// Box of half-width `r` around `center`.
    pub fn around(center: &[f64], r: f64) -> Self {
        IntervalBox {
            lo: center.iter().map(|c| c - r).collect(),
            hi: center.iter().map(|c| c + r).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    /// Sup-metric diameter.
    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    pub fn widest_axis(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.width(i) > self.width(best) {
                best = i;
            }
        }
        best
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn contains_box(&self, other: &IntervalBox) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Signed sup-distance from `p` to the boundary: positive inside,
    /// negative outside.
    pub fn signed_margin(&self, p: &[f64]) -> f64 {
        let mut inside = f64::INFINITY;
        let mut outside: f64 = 0.0;
        for (i, x) in p.iter().enumerate() {
            let a = x - self.lo[i];
            let b = self.hi[i] - x;
            inside = inside.min(a.min(b));
            if a < 0.0 {
                outside = outside.max(-a);
            }
            if b < 0.0 {
                outside = outside.max(-b);
            }
        }
        if outside > 0.0 {
            -outside
        } else {
            inside
        }
    }

    pub fn bisect(&self, axis: usize) -> (IntervalBox, IntervalBox) {
        let mid = 0.5 * (self.lo[axis] + self.hi[axis]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[axis] = mid;
        right.lo[axis] = mid;
        (left, right)
    }

    /// All `2^dim` corners, axis 0 varying fastest.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.hi[i]
                        } else {
                            self.lo[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Tensor grid with `n` points per axis (endpoints included for n ≥ 2).
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let n = n.max(1);
        let total = n.pow(dim as u32);
        let coord = |i: usize, j: usize| {
            if n == 1 {
                0.5 * (self.lo[i] + self.hi[i])
            } else {
                self.lo[i] + self.width(i) * j as f64 / (n - 1) as f64
            }
        };
        (0..total)
            .map(|mut idx| {
                (0..dim)
                    .map(|i| {
                        let j = idx % n;
                        idx /= n;
                        coord(i, j)
                    })
                    .collect()
            })
            .collect()
    }

    /// Deterministic sample set: the tensor grid when it has at most `budget`
    /// points, otherwise corners, the center and a Halton sequence.
    pub fn samples(&self, grid_n: usize, budget: usize) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let grid_size = (grid_n.max(1) as f64).powi(dim as i32);
        if grid_size <= budget as f64 {
            return self.grid(grid_n);
        }
        let mut pts = if dim <= 10 {
            self.corners()
        } else {
            Vec::new()
        };
        pts.push(self.center());
        let primes = first_primes(dim);
        let mut i = 1;
        while pts.len() < budget {
            pts.push(
                (0..dim)
                    .map(|a| self.lo[a] + self.width(a) * radical_inverse(i, primes[a]))
                    .collect(),
            );
            i += 1;
        }
        pts
    }
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut p = 2u64;
    while out.len() < n {
        if (2..p).take_while(|q| q * q <= p).all(|q| !p.is_multiple_of(q)) {
            out.push(p);
        }
        p += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `x ↦ linear·x + offset` with an invertible square linear part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if !linear.is_square() || linear.nrows() != offset.len() {
            return Err(Error::Dimension(format!(
                "affine map with {}x{} linear part and offset of length {}",
                linear.nrows(),
                linear.ncols(),
                offset.len()
            )));
        }
        conorm(&linear)?;
        Ok(AffineMap { linear, offset })
    }

    pub fn identity(n: usize) -> Self {
        AffineMap {
            linear: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
        }
    }

    /// `t ↦ scale·t + offset` on every axis.
    pub fn scalar(n: usize, scale: f64, offset: DVector<f64>) -> Self {
        AffineMap {
            linear: DMatrix::identity(n, n) * scale,
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.offset
    }

    pub fn apply_inverse(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let lu = self.linear.clone().lu();
        lu.solve(&(y - &self.offset))
            .ok_or(Error::Singular(0.0))
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let inv = self
            .linear
            .clone()
            .try_inverse()
            .ok_or(Error::Singular(0.0))?;
        let offset = -(&inv * &self.offset);
        Ok(AffineMap {
            linear: inv,
            offset,
        })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap {
            linear: &self.linear * &inner.linear,
            offset: &self.linear * &inner.offset + &self.offset,
        }
    }

    /// Spectral condition number.
    pub fn condition_number(&self) -> f64 {
        let sv = self.linear.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Smallest singular value.
pub fn conorm(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "conorm of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let sv = m.clone().singular_values();
    let min = sv.min();
    let max = sv.max();
    if min == 0.0 || !min.is_finite() || min <= max * 1e-15 {
        return Err(Error::Singular(min));
    }
    Ok(min)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Operator norm induced by the sup norm: maximal absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Max over rows and column groups of the absolute row sum restricted to the
/// group.
pub fn grouped_inf_norm(m: &DMatrix<f64>, groups: &[Vec<usize>]) -> f64 {
    let mut best: f64 = 0.0;
    for r in 0..m.nrows() {
        for g in groups {
            let s: f64 = g.iter().map(|&j| m[(r, j)].abs()).sum();
            best = best.max(s);
        }
    }
    best
}

/// Sup norm of a vector.
pub fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Outward-rounded enclosure of `f(b)`.
pub fn affine_image_box(f: &AffineMap, b: &IntervalBox) -> Result<IntervalBox> {
    if f.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "map of dimension {} applied to box of dimension {}",
            f.dim(),
            b.dim()
        )));
    }
    let n = f.dim();
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let mut l = f.offset[i];
        let mut h = f.offset[i];
        for j in 0..n {
            let a = f.linear[(i, j)];
            if a == 0.0 {
                continue;
            }
            let (from_lo, from_hi) = if a > 0.0 {
                (b.lo[j], b.hi[j])
            } else {
                (b.hi[j], b.lo[j])
            };
            l = add_down(l, mul_down(a, from_lo));
            h = add_up(h, mul_up(a, from_hi));
        }
        lo.push(l);
        hi.push(h);
    }
    Ok(IntervalBox { lo, hi })
}

/// Inner enclosure: a box contained in `f(b)` when the linear part is
/// diagonal; `None` otherwise.
pub fn affine_inner_box(f: &AffineMap, b: &IntervalBox) -> Option<IntervalBox> {
    let n = f.dim();
    for i in 0..n {
        for j in 0..n {
            if i != j && f.linear[(i, j)] != 0.0 {
                return None;
            }
        }
    }
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let a = f.linear[(i, i)];
        let (from_lo, from_hi) = if a >= 0.0 {
            (b.lo[i], b.hi[i])
        } else {
            (b.hi[i], b.lo[i])
        };
        lo.push(add_up(f.offset[i], mul_up(a, from_lo)));
        hi.push(add_down(f.offset[i], mul_down(a, from_hi)));
    }
    Some(IntervalBox { lo, hi })
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference Jacobian. The step on axis `j` is
/// `h · max(1, |x_j|)`.
pub fn finite_diff_jacobian<F>(mut f: F, x: &DVector<f64>, h: Option<f64>) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let h = h.unwrap_or(DEFAULT_FD_STEP);
    let n = x.len();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let step = h * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let actual = xp[j] - xm[j];
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        cols.push((fp - fm) / actual);
    }
    if n == 0 {
        let rows = f(x)?.len();
        return Ok(DMatrix::zeros(rows, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Sampled operator norms of a map over a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub sup_norm: f64,
    pub co_norm: f64,
    pub grid_resolution: usize,
}

/// Largest spectral norm and smallest co-norm of the finite-difference
/// Jacobian over a grid of `grid_n` points per axis.
pub fn sampled_norm_report<F>(mut f: F, domain: &IntervalBox, grid_n: usize) -> Result<NormReport>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut sup: f64 = 0.0;
    let mut co = f64::INFINITY;
    for p in domain.samples(grid_n, 4096) {
        let jac = finite_diff_jacobian(&mut f, &DVector::from_vec(p), None)?;
        let sv = jac.singular_values();
        sup = sup.max(sv.max());
        co = co.min(sv.min());
    }
    Ok(NormReport {
        sup_norm: sup,
        co_norm: co,
        grid_resolution: grid_n,
    })
}

/// Scalars that the generic residuals are written over: plain `f64` and
/// truncated Taylor series.
pub trait Scalar:
    Clone
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    /// A constant in the same algebra as `self`.
    fn constant_like(&self, v: f64) -> Self;
    /// Order-zero part.
    fn re(&self) -> f64;
    fn recip(&self) -> Self;
    fn scale(&self, k: f64) -> Self;
}

impl Scalar for f64 {
    fn constant_like(&self, v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
}

/// Dense Gaussian elimination with partial pivoting over a generic scalar;
/// pivots are chosen by the order-zero part.
pub fn solve_generic<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Result<Vec<T>> {
    let n = b.len();
    let mut m: Vec<Vec<T>> = a.to_vec();
    let mut rhs: Vec<T> = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].re().abs().total_cmp(&m[j][col].re().abs()))
            .unwrap();
        if m[piv][col].re().abs() < 1e-300 {
            return Err(Error::Singular(0.0));
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let inv = m[col][col].recip();
        for row in col + 1..n {
            let factor = m[row][col].clone() * inv.clone();
            for k in col..n {
                let v = m[row][k].clone() - factor.clone() * m[col][k].clone();
                m[row][k] = v;
            }
            let v = rhs[row].clone() - factor * rhs[col].clone();
            rhs[row] = v;
        }
    }
    let mut x: Vec<T> = rhs.clone();
    for row in (0..n).rev() {
        let mut acc = rhs[row].clone();
        for k in row + 1..n {
            acc = acc - m[row][k].clone() * x[k].clone();
        }
        x[row] = acc * m[row][row].recip();
    }
    Ok(x)
}

/// Exact determinant of an integer matrix (Bareiss elimination).
pub fn det_i128(a: &[Vec<i128>]) -> i128 {
    let n = a.len();
    if n == 0 {
        return 1;
    }
    let mut m = a.to_vec();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
        }
        prev = m[k][k];
    }
    sign * m[n - 1][n - 1]
}

/// Cofactor matrix of an integer matrix, exact.
pub fn cofactors_i128(a: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let n = a.len();
    let mut out = vec![vec![0i128; n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<Vec<i128>> = (0..n)
                .filter(|&r| r != i)
                .map(|r| (0..n).filter(|&c| c != j).map(|c| a[r][c]).collect())
                .collect();
            let s = if (i + j) % 2 == 0 { 1 } else { -1 };
            out[i][j] = s * det_i128(&minor);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn conorm_examples() {
        assert_eq!(conorm(&DMatrix::identity(4, 4)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert_abs_diff_eq!(conorm(&d).unwrap(), 2.0, epsilon = 1e-14);
        let s = DMatrix::from_element(1, 1, 0.75);
        assert_abs_diff_eq!(conorm(&s).unwrap(), 0.75, epsilon = 1e-15);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(conorm(&sing), Err(Error::Singular(_))));
    }

    #[test]
    fn image_box_examples() {
        let b = IntervalBox::cube(1, 0.9);
        let plus = AffineMap::scalar(1, 0.75, DVector::from_element(1, 0.25));
        let img = affine_image_box(&plus, &b).unwrap();
        assert_abs_diff_eq!(img.lo[0], -0.425, epsilon = 1e-15);
        assert_abs_diff_eq!(img.hi[0], 0.925, epsilon = 1e-15);
        let minus = AffineMap::scalar(1, 0.75, DVector::from_element(1, -0.25));
        let img = affine_image_box(&minus, &b).unwrap();
        assert_abs_diff_eq!(img.lo[0], -0.925, epsilon = 1e-15);
        assert_abs_diff_eq!(img.hi[0], 0.425, epsilon = 1e-15);
        let id = AffineMap::identity(3);
        let bx = IntervalBox::new(vec![-1.0, 0.0, 0.5], vec![1.0, 0.25, 2.0]).unwrap();
        assert_eq!(affine_image_box(&id, &bx).unwrap(), bx);
    }

    #[test]
    fn image_box_is_outward() {
        // every sampled image point lies in the enclosure
        let f = AffineMap::new(
            DMatrix::from_row_slice(2, 2, &[0.3, -0.7, 0.1, 0.9]),
            DVector::from_vec(vec![0.1, -0.3]),
        )
        .unwrap();
        let b = IntervalBox::new(vec![-0.9, -0.3], vec![0.7, 1.1]).unwrap();
        let img = affine_image_box(&f, &b).unwrap();
        for p in b.grid(9) {
            let q = f.apply(&DVector::from_vec(p));
            assert!(img.contains(q.as_slice()));
        }
    }

    #[test]
    fn directed_rounding_is_exact_when_exact() {
        assert_eq!(add_down(0.5, 0.25), 0.75);
        assert_eq!(mul_up(0.75, -1.0), -0.75);
        let third_down = mul_down(1.0 / 3.0, 3.0);
        let third_up = mul_up(1.0 / 3.0, 3.0);
        assert!(third_down <= third_up);
        assert!(add_down(0.1, 0.2) < add_up(0.1, 0.2));
    }

    #[test]
    fn finite_difference_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let f = AffineMap::new(a.clone(), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let jac = finite_diff_jacobian(
            |x| Ok(f.apply(x)),
            &DVector::from_vec(vec![0.3, -2.0]),
            None,
        )
        .unwrap();
        assert!((jac - a).abs().max() < 1e-9);
        let sq = finite_diff_jacobian(
            |x| Ok(DVector::from_element(1, x[0] * x[0])),
            &DVector::from_element(1, 1.0),
            Some(1e-5),
        )
        .unwrap();
        assert_abs_diff_eq!(sq[(0, 0)], 2.0, epsilon = 1e-9);
        // central coordinate of the u = 1 fold
        let h1 = finite_diff_jacobian(
            |t| Ok(DVector::from_element(1, t[0] * t[0])),
            &DVector::from_element(1, 0.3),
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(h1[(0, 0)], 0.6, epsilon = 1e-8);
    }

    #[test]
    fn integer_determinants() {
        assert_eq!(det_i128(&[vec![2]]), 2);
        let a = vec![
            vec![2, 0, 0, 0],
            vec![0, 1, 0, 0],
            vec![0, 0, 1, 0],
            vec![1, 0, 0, 1],
        ];
        assert_eq!(det_i128(&a), 2);
        let swap = vec![vec![0, 1], vec![1, 0]];
        assert_eq!(det_i128(&swap), -1);
        let c = cofactors_i128(&a);
        // adj(A) / det(A) reproduces the inverse; row 4 of A^-1 is (-1/2, 0, 0, 1)
        assert_eq!(c[0][3], -1);
        assert_eq!(c[3][3], 2);
    }

    #[test]
    fn generic_solve_matches_lu() {
        let a = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 4.0],
        ];
        let b = vec![1.0, 2.0, 3.0];
        let x = solve_generic(&a, &b).unwrap();
        let m = DMatrix::from_fn(3, 3, |i, j| a[i][j]);
        let r = m * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.amax() < 1e-14);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 1), 3);
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(7, 0), 1);
        assert_eq!(binomial(2, 3), 0);
    }

    #[test]
    fn norm_report_bounds() {
        let f = AffineMap::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.8]),
            DVector::zeros(2),
        )
        .unwrap();
        let r = sampled_norm_report(|x| Ok(f.apply(x)), &IntervalBox::cube(2, 1.0), 3).unwrap();
        assert!(r.co_norm <= r.sup_norm);
        assert_abs_diff_eq!(r.sup_norm, spectral_norm(&f.linear), epsilon = 1e-8);
    }
}
