//! Fiber iterated function systems, the covering check and Lebesgue numbers.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    affine_image_box, affine_inner_box, conorm, spectral_norm, AffineMap, IntervalBox,
};

/// Affine contractions `φ_ℓ` on a cube `D`, with a candidate open box `B`.
///
/// `domain` and `candidate` are stored as closed boxes; both are read as open
/// sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberIFS {
    pub maps: Vec<AffineMap>,
    pub lambda: f64,
    pub beta: f64,
    pub domain: IntervalBox,
    pub candidate: IntervalBox,
}

impl FiberIFS {
    /// Checks dimensions, `φ_ℓ(closure D) ⊂ D` and the contraction band
    /// `λ ≤ m(T_ℓ) ≤ ‖T_ℓ‖ < β < 1`.
    pub fn new(
        maps: Vec<AffineMap>,
        lambda: f64,
        beta: f64,
        domain: IntervalBox,
        candidate: IntervalBox,
    ) -> Result<Self> {
        let ifs = FiberIFS {
            maps,
            lambda,
            beta,
            domain,
            candidate,
        };
        ifs.validate()?;
        Ok(ifs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.is_empty() {
            return Err(Error::Construction("fiber IFS without maps".into()));
        }
        if !(0.0 < self.lambda && self.lambda < self.beta && self.beta < 1.0) {
            return Err(Error::Precondition(format!(
                "need 0 < lambda < beta < 1, got lambda = {}, beta = {}",
                self.lambda, self.beta
            )));
        }
        let c = self.dim();
        if self.domain.dim() != c || self.candidate.dim() != c {
            return Err(Error::Dimension(
                "fiber boxes do not match map dimension".into(),
            ));
        }
        if !self.domain.contains_box(&self.candidate) {
            return Err(Error::Precondition("candidate B is not inside D".into()));
        }
        for (l, map) in self.maps.iter().enumerate() {
            if map.dim() != c {
                return Err(Error::Dimension(format!(
                    "map {l} has dimension {}",
                    map.dim()
                )));
            }
            let img = affine_image_box(map, &self.domain)?;
            let inside =
                (0..c).all(|i| img.lo[i] > self.domain.lo[i] && img.hi[i] < self.domain.hi[i]);
            if !inside {
                return Err(Error::Precondition(format!(
                    "map {l} does not send closure(D) into D"
                )));
            }
            let lo = conorm(&map.linear)?;
            let hi = spectral_norm(&map.linear);
            // conorm = λ is attained by the model maps
            if lo < self.lambda * (1.0 - 1e-12) || hi >= self.beta {
                return Err(Error::Precondition(format!(
                    "map {l} has co-norm {lo} and norm {hi}, outside [{}, {})",
                    self.lambda, self.beta
                )));
            }
        }
        Ok(())
    }

    pub fn kappa(&self) -> usize {
        self.maps.len()
    }

    pub fn dim(&self) -> usize {
        self.candidate.dim()
    }

    pub fn apply(&self, l: usize, y: &DVector<f64>) -> DVector<f64> {
        self.maps[l].apply(y)
    }

    pub fn apply_inverse(&self, l: usize, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.maps[l].apply_inverse(y)
    }

    /// Replaces `B`, keeping the maps.
    pub fn with_candidate(mut self, candidate: IntervalBox) -> Result<Self> {
        self.candidate = candidate;
        self.validate()?;
        Ok(self)
    }
}

/// Default `β = (1 + λ)/2`.
pub fn default_beta(lambda: f64) -> f64 {
    0.5 * (1.0 + lambda)
}

/// Sign of coordinate `p` in branch `l`: bit `p` clear means `+`.
pub fn branch_sign(l: usize, p: usize) -> f64 {
    if l >> p & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Product IFS `φ_ℓ(t) = λt + (1-λ)σ_ℓ` on `D = (-2,2)^c`, `B = (-b,b)^c`,
/// without the admissibility check on `b`.
pub fn product_fiber_ifs(lambda: f64, c: usize, b: f64) -> Result<FiberIFS> {
    if c == 0 || c > 12 {
        return Err(Error::Dimension(format!(
            "fiber dimension {c} outside 1..=12"
        )));
    }
    let maps = (0..1usize << c)
        .map(|l| {
            let offset = DVector::from_fn(c, |p, _| branch_sign(l, p) * (1.0 - lambda));
            AffineMap::scalar(c, lambda, offset)
        })
        .collect();
    FiberIFS::new(
        maps,
        lambda,
        default_beta(lambda),
        IntervalBox::cube(c, 2.0),
        IntervalBox::cube(c, b),
    )
}

/// The standard fiber IFS with `κ = 2^c` maps. Branch 0 is `φ_+ × ⋯ × φ_+`.
pub fn standard_fiber_ifs(lambda: f64, c: usize, b: f64) -> Result<FiberIFS> {
    if !(0.5 < lambda && lambda < 1.0) {
        return Err(Error::Precondition(format!(
            "need 1/2 < lambda < 1, got {lambda}"
        )));
    }
    let lower = (1.0 - lambda) / lambda;
    if !(lower < b && b < 1.0) {
        return Err(Error::Precondition(format!(
            "need (1-lambda)/lambda = {lower} < b < 1, got b = {b}"
        )));
    }
    product_fiber_ifs(lambda, c, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverStatus {
    Covered,
    NotCovered,
    Indeterminate,
}

/// A point of `closure(B)` outside every open image, with the leaf box where
/// it was found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncoveredWitness {
    pub point: Vec<f64>,
    pub leaf: IntervalBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringCertificate {
    pub status: CoverStatus,
    pub covered: bool,
    /// Smallest sup-distance from a certified leaf to the boundary of the
    /// image containing it.
    pub margin: f64,
    pub lebesgue_number: f64,
    pub failures: Vec<UncoveredWitness>,
    pub subdivision_depth: usize,
    pub leaves: usize,
}

struct ImageTest {
    inner: Option<IntervalBox>,
    outer: IntervalBox,
    inverse: AffineMap,
    scale: f64,
}

impl ImageTest {
    fn new(map: &AffineMap, b: &IntervalBox) -> Result<Self> {
        let c = map.dim() as f64;
        Ok(ImageTest {
            inner: affine_inner_box(map, b),
            outer: affine_image_box(map, b)?,
            inverse: map.inverse()?,
            scale: conorm(&map.linear)? / c.sqrt(),
        })
    }

    /// Positive sup-margin of `leaf` inside the open image, if certified.
    fn leaf_margin(&self, leaf: &IntervalBox, b: &IntervalBox) -> Option<f64> {
        match &self.inner {
            Some(inner) => {
                let mut m = f64::INFINITY;
                for i in 0..leaf.dim() {
                    m = m
                        .min(leaf.lo[i] - inner.lo[i])
                        .min(inner.hi[i] - leaf.hi[i]);
                }
                (m > 0.0).then_some(m)
            }
            None => {
                // preimage of the leaf must sit strictly inside B
                let pre = affine_image_box(&self.inverse, leaf).ok()?;
                let mut m = f64::INFINITY;
                for i in 0..leaf.dim() {
                    m = m.min(pre.lo[i] - b.lo[i]).min(b.hi[i] - pre.hi[i]);
                }
                (m > 0.0).then_some(m * self.scale)
            }
        }
    }

    /// Like `leaf_margin`, but sides of the image lying beyond `closure(B)`
    /// do not count, since subsets of `closure(B)` never reach them.
    fn relative_margin(&self, leaf: &IntervalBox, b: &IntervalBox) -> Option<f64> {
        let inner = match &self.inner {
            Some(inner) => inner,
            None => return self.leaf_margin(leaf, b),
        };
        let mut m = f64::INFINITY;
        for i in 0..leaf.dim() {
            if inner.lo[i] >= b.lo[i] {
                m = m.min(leaf.lo[i] - inner.lo[i]);
            }
            if inner.hi[i] <= b.hi[i] {
                m = m.min(inner.hi[i] - leaf.hi[i]);
            }
        }
        (m > 0.0).then_some(m)
    }

    /// True only if `p` is provably outside the open image.
    fn excludes(&self, p: &[f64], b: &IntervalBox) -> bool {
        if self.inner.is_some() {
            return (0..p.len()).any(|i| p[i] >= self.outer.hi[i] || p[i] <= self.outer.lo[i]);
        }
        let pt = IntervalBox::new(p.to_vec(), p.to_vec()).unwrap();
        match affine_image_box(&self.inverse, &pt) {
            Ok(pre) => (0..p.len()).any(|i| pre.lo[i] >= b.hi[i] || pre.hi[i] <= b.lo[i]),
            Err(_) => false,
        }
    }
}

const MAX_WITNESSES: usize = 64;

/// Adaptive certification of `closure(B) ⊂ ∪ φ_ℓ(B)` with open images.
pub fn check_covering(ifs: &FiberIFS, max_depth: usize) -> Result<CoveringCertificate> {
    let b = &ifs.candidate;
    let tests: Vec<ImageTest> = ifs
        .maps
        .iter()
        .map(|m| ImageTest::new(m, b))
        .collect::<Result<_>>()?;

    let mut margin = f64::INFINITY;
    let mut failures: Vec<UncoveredWitness> = Vec::new();
    let mut depth_reached = 0;
    let mut leaves = 0;
    let mut exhausted = false;
    let mut stack = vec![(b.clone(), 0usize)];

    while let Some((leaf, depth)) = stack.pop() {
        depth_reached = depth_reached.max(depth);
        let best = tests
            .iter()
            .filter_map(|t| t.leaf_margin(&leaf, b))
            .fold(None, |acc: Option<f64>, m| {
                Some(acc.map_or(m, |a| a.max(m)))
            });
        if let Some(m) = best {
            margin = margin.min(m);
            leaves += 1;
            continue;
        }
        let mut found = false;
        let mut probes = leaf.corners();
        probes.push(leaf.center());
        for p in probes {
            if tests.iter().all(|t| t.excludes(&p, b)) {
                found = true;
                if failures.len() < MAX_WITNESSES && !failures.iter().any(|w| w.point == p) {
                    failures.push(UncoveredWitness {
                        point: p,
                        leaf: leaf.clone(),
                    });
                }
            }
        }
        if found {
            leaves += 1;
            if failures.len() >= MAX_WITNESSES {
                break;
            }
            continue;
        }
        if depth >= max_depth {
            exhausted = true;
            leaves += 1;
            continue;
        }
        let (l, r) = leaf.bisect(leaf.widest_axis());
        stack.push((r, depth + 1));
        stack.push((l, depth + 1));
    }

    let status = if !failures.is_empty() {
        CoverStatus::NotCovered
    } else if exhausted {
        CoverStatus::Indeterminate
    } else {
        CoverStatus::Covered
    };
    let covered = status == CoverStatus::Covered;
    let mut cert = CoveringCertificate {
        status,
        covered,
        margin: if covered { margin } else { 0.0 },
        lebesgue_number: 0.0,
        failures,
        subdivision_depth: depth_reached,
        leaves,
    };
    if covered {
        cert.lebesgue_number = lebesgue_number(ifs, &cert)?;
    }
    Ok(cert)
}

/// Largest `s` such that every interval `[a, a+s']`, `s' < s`, starting at
/// `a` lies in one open interval of the cover of `[p, q]`, minimized over `a`.
fn lebesgue_1d(intervals: &[(f64, f64)], p: f64, q: f64) -> f64 {
    let mut candidates: Vec<f64> = intervals
        .iter()
        .map(|iv| iv.0)
        .filter(|&a| a > p && a <= q)
        .collect();
    candidates.push(q);
    let mut best = f64::INFINITY;
    for a in candidates {
        let mut reach = f64::NEG_INFINITY;
        for &(lo, hi) in intervals {
            if lo < a {
                reach = reach.max(if hi > q { f64::INFINITY } else { hi - a });
            }
        }
        best = best.min(reach);
    }
    best
}

/// Lower bound on the Lebesgue number of `{φ_ℓ(B)}` as a cover of
/// `closure(B)` in the sup metric. Exact for product covers.
pub fn lebesgue_number(ifs: &FiberIFS, cert: &CoveringCertificate) -> Result<f64> {
    if !cert.covered {
        return Err(Error::NotCovered(
            "Lebesgue number needs a certified cover".into(),
        ));
    }
    let b = &ifs.candidate;
    let c = ifs.dim();
    let tests: Vec<ImageTest> = ifs
        .maps
        .iter()
        .map(|m| ImageTest::new(m, b))
        .collect::<Result<_>>()?;
    let cap = b.diameter();

    if let Some(axes) = product_axes(&tests, c) {
        let l = (0..c)
            .map(|i| lebesgue_1d(&axes[i], b.lo[i], b.hi[i]))
            .fold(f64::INFINITY, f64::min);
        return Ok(l.min(cap));
    }

    // grid lower bound: inf over points of the best margin, minus half a cell
    let n = ((200_000f64).powf(1.0 / c as f64).floor() as usize).clamp(2, 2000);
    let cells = b;
    let half: Vec<f64> = (0..c).map(|i| 0.5 * cells.width(i) / n as f64).collect();
    let max_half = half.iter().cloned().fold(0.0, f64::max);
    let mut low = f64::INFINITY;
    for idx in 0..n.pow(c as u32) {
        let mut rem = idx;
        let center: Vec<f64> = (0..c)
            .map(|i| {
                let j = rem % n;
                rem /= n;
                cells.lo[i] + (2 * j + 1) as f64 * half[i]
            })
            .collect();
        let cell = IntervalBox::around(&center, max_half);
        let m = tests
            .iter()
            .filter_map(|t| t.relative_margin(&cell, b))
            .fold(0.0, f64::max);
        low = low.min(m);
    }
    Ok(low.min(cap))
}

/// Per-axis interval lists when the image boxes form a full product.
fn product_axes(tests: &[ImageTest], c: usize) -> Option<Vec<Vec<(f64, f64)>>> {
    let mut axes: Vec<Vec<(f64, f64)>> = vec![Vec::new(); c];
    for t in tests {
        let inner = t.inner.as_ref()?;
        for i in 0..c {
            let iv = (inner.lo[i], inner.hi[i]);
            if !axes[i].contains(&iv) {
                axes[i].push(iv);
            }
        }
    }
    let product: usize = axes.iter().map(|a| a.len()).product();
    if product != tests.len() {
        return None;
    }
    for t in tests {
        let inner = t.inner.as_ref()?;
        let dup = tests
            .iter()
            .filter(|s| s.inner.as_ref() == Some(inner))
            .count();
        if dup != 1 {
            return None;
        }
    }
    Some(axes)
}

/// `δ_max = λL/2`.
pub fn delta_bound(lambda: f64, l: f64) -> Result<f64> {
    if !(0.0 < lambda && lambda < 1.0) {
        return Err(Error::Precondition(format!(
            "need 0 < lambda < 1, got {lambda}"
        )));
    }
    if l < 0.0 {
        return Err(Error::Precondition(format!("negative Lebesgue number {l}")));
    }
    Ok(0.5 * lambda * l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standard_ifs_shapes() {
        let ifs = standard_fiber_ifs(0.75, 1, 0.9).unwrap();
        assert_eq!(ifs.kappa(), 2);
        assert_eq!(ifs.maps[0].offset[0], 0.25);
        assert_eq!(ifs.maps[1].offset[0], -0.25);
        assert_eq!(ifs.candidate, IntervalBox::cube(1, 0.9));
        assert_eq!(standard_fiber_ifs(0.75, 2, 0.9).unwrap().kappa(), 4);
        let err = standard_fiber_ifs(0.6, 1, 0.5).unwrap_err();
        assert!(err.to_string().contains("(1-lambda)/lambda"));
        assert!(standard_fiber_ifs(0.4, 1, 0.9).is_err());
    }

    #[test]
    fn standard_cover_is_certified() {
        let ifs = standard_fiber_ifs(0.75, 1, 0.9).unwrap();
        let cert = check_covering(&ifs, 40).unwrap();
        assert!(cert.covered);
        assert!(cert.failures.is_empty());
        assert_eq!(cert.subdivision_depth, 1);
        assert_abs_diff_eq!(cert.margin, 0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.lebesgue_number, 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(
            delta_bound(0.75, cert.lebesgue_number).unwrap(),
            0.31875,
            epsilon = 1e-12
        );
    }

    #[test]
    fn closed_endpoint_is_a_witness() {
        let ifs = product_fiber_ifs(0.75, 1, 1.0).unwrap();
        let cert = check_covering(&ifs, 40).unwrap();
        assert_eq!(cert.status, CoverStatus::NotCovered);
        let pts: Vec<f64> = cert.failures.iter().map(|w| w.point[0]).collect();
        assert!(pts.contains(&1.0));
        assert!(pts.contains(&-1.0));
        assert!(lebesgue_number(&ifs, &cert).is_err());
    }

    #[test]
    fn single_contraction_cannot_cover() {
        let ifs = FiberIFS::new(
            vec![AffineMap::scalar(1, 0.75, DVector::zeros(1))],
            0.75,
            0.875,
            IntervalBox::cube(1, 2.0),
            IntervalBox::cube(1, 0.9),
        )
        .unwrap();
        let cert = check_covering(&ifs, 40).unwrap();
        assert!(!cert.covered);
        for w in &cert.failures {
            assert!((w.point[0].abs() - 0.9).abs() < 0.3);
        }
        assert!(cert.failures.iter().any(|w| w.point[0] == 0.9));
    }

    #[test]
    fn lebesgue_oracle_by_brute_force() {
        // intervals [a, a+s] on a fine grid, s just under the bound
        let images = [(-0.925, 0.425), (-0.425, 0.925)];
        let inside = |a: f64, s: f64| images.iter().any(|&(l, h)| l < a && a + s < h);
        let n = 4000;
        let mut worst = f64::INFINITY;
        for i in 0..=n {
            let a = -0.9 + 1.8 * i as f64 / n as f64;
            let mut s = 0.0;
            while a + s <= 0.9 && inside(a, s + 1e-4) {
                s += 1e-4;
            }
            if a + s <= 0.9 {
                worst = f64::min(worst, s);
            }
        }
        assert!((worst - 0.85).abs() < 2e-3, "brute force {worst}");
        assert_abs_diff_eq!(lebesgue_1d(&images, -0.9, 0.9), 0.85, epsilon = 1e-12);
    }

    #[test]
    fn product_cover_matches_factor() {
        let ifs = standard_fiber_ifs(0.75, 2, 0.9).unwrap();
        let cert = check_covering(&ifs, 40).unwrap();
        assert!(cert.covered);
        assert_abs_diff_eq!(cert.lebesgue_number, 0.85, epsilon = 1e-12);
    }

    #[test]
    fn one_big_set_has_unbounded_reach() {
        // a single element around the whole closure: every subset fits
        let one = vec![(-0.6, 0.6)];
        assert!(lebesgue_1d(&one, -0.5, 0.5).is_infinite());
    }

    #[test]
    fn non_product_grid_bound_is_below_exact() {
        let mut ifs = standard_fiber_ifs(0.75, 2, 0.9).unwrap();
        // break the product structure by nudging one map
        ifs.maps[3].offset[0] -= 0.01;
        let cert = check_covering(&ifs, 40).unwrap();
        assert!(cert.covered);
        assert!(
            cert.lebesgue_number > 0.3 && cert.lebesgue_number <= 0.85,
            "{}",
            cert.lebesgue_number
        );
    }

    #[test]
    fn delta_bound_examples() {
        assert_abs_diff_eq!(delta_bound(0.75, 0.85).unwrap(), 0.31875, epsilon = 1e-15);
        assert_eq!(delta_bound(0.5, 0.0).unwrap(), 0.0);
        assert!(delta_bound(1.0, 0.3).is_err());
    }
}
