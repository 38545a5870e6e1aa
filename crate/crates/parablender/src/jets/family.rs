//! Jets of points and parameter families that are polynomial in `a`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::taylor::{MultiIndexSet, Taylor};
use crate::error::{Error, Result};
use crate::ifs::{branch_sign, default_beta, product_fiber_ifs, FiberIFS};
use crate::numerics::{binomial, conorm, AffineMap, Dimensions, IntervalBox, Scalar};
use crate::skew::{affine_base, HorseshoeBase, SkewProductSystem};

/// Largest number of branches built by the jet constructions.
pub const MAX_BRANCHES: usize = 4096;

/// `base_dim · binom(d+k, d)`.
pub fn jet_dim(base_dim: usize, k: usize, d: usize) -> usize {
    base_dim * binomial(d + k, d)
}

/// A `d`-jet at a parameter value: one coefficient vector `∂^ι z / ι!` per
/// multi-index, in the order of the index set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "JetRecord", try_from = "JetRecord")]
pub struct Jet {
    pub set: Arc<MultiIndexSet>,
    pub base_dim: usize,
    pub coeffs: Vec<DVector<f64>>,
}

/// Serialized form: `(k, d)` header and `(ι, coefficients)` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JetRecord {
    pub k: usize,
    pub d: usize,
    pub base_dim: usize,
    pub terms: Vec<(Vec<usize>, Vec<f64>)>,
}

impl From<Jet> for JetRecord {
    fn from(j: Jet) -> Self {
        JetRecord {
            k: j.set.k,
            d: j.set.d,
            base_dim: j.base_dim,
            terms: j
                .coeffs
                .iter()
                .enumerate()
                .map(|(p, c)| (j.set.index(p).to_vec(), c.iter().cloned().collect()))
                .collect(),
        }
    }
}

impl TryFrom<JetRecord> for Jet {
    type Error = Error;
    fn try_from(r: JetRecord) -> Result<Self> {
        let set = Arc::new(MultiIndexSet::new(r.k, r.d));
        let mut j = Jet::zero(&set, r.base_dim);
        for (iota, c) in r.terms {
            let p = set.position(&iota).ok_or_else(|| {
                Error::Dimension(format!("multi-index {iota:?} outside the (k, d) set"))
            })?;
            if c.len() != r.base_dim {
                return Err(Error::Dimension(format!(
                    "coefficient of length {} for base_dim {}",
                    c.len(),
                    r.base_dim
                )));
            }
            j.coeffs[p] = DVector::from_vec(c);
        }
        Ok(j)
    }
}

impl Jet {
    pub fn zero(set: &Arc<MultiIndexSet>, base_dim: usize) -> Self {
        Jet {
            set: set.clone(),
            base_dim,
            coeffs: vec![DVector::zeros(base_dim); set.len()],
        }
    }

    /// Jet of the constant curve `a ↦ z`.
    pub fn constant(set: &Arc<MultiIndexSet>, z: &DVector<f64>) -> Self {
        let mut j = Jet::zero(set, z.len());
        j.coeffs[0] = z.clone();
        j
    }

    pub fn dim(&self) -> usize {
        self.base_dim * self.set.len()
    }

    /// Flat coordinates, block per multi-index: entry `pos · base_dim + i`.
    pub fn flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.coeffs.iter().flat_map(|c| c.iter().cloned()),
        )
    }

    pub fn from_flat(set: &Arc<MultiIndexSet>, base_dim: usize, v: &DVector<f64>) -> Result<Self> {
        if v.len() != base_dim * set.len() {
            return Err(Error::Dimension(format!(
                "flat jet of length {} for base_dim {base_dim} and {} indices",
                v.len(),
                set.len()
            )));
        }
        Ok(Jet {
            set: set.clone(),
            base_dim,
            coeffs: (0..set.len())
                .map(|p| v.rows(p * base_dim, base_dim).into_owned())
                .collect(),
        })
    }

    pub fn order0(&self) -> &DVector<f64> {
        &self.coeffs[0]
    }

    /// The polynomial representative `Σ_ι c_ι s^ι`.
    pub fn eval(&self, s: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.base_dim);
        for (p, c) in self.coeffs.iter().enumerate() {
            out += c * self.set.monomial(p, s);
        }
        out
    }

    /// One series per component.
    pub fn to_taylor(&self) -> Vec<Taylor> {
        (0..self.base_dim)
            .map(|i| Taylor::from_coeffs(&self.set, self.coeffs.iter().map(|c| c[i]).collect()))
            .collect()
    }

    pub fn from_taylor(set: &Arc<MultiIndexSet>, z: &[Taylor]) -> Self {
        Jet {
            set: set.clone(),
            base_dim: z.len(),
            coeffs: (0..set.len())
                .map(|p| DVector::from_iterator(z.len(), z.iter().map(|t| t.c[p])))
                .collect(),
        }
    }

    /// Concatenation, the jet of `(z, w)`.
    pub fn stack(&self, other: &Jet) -> Jet {
        Jet {
            set: self.set.clone(),
            base_dim: self.base_dim + other.base_dim,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| {
                    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).cloned())
                })
                .collect(),
        }
    }

    /// Components `start..start+len`.
    pub fn slice(&self, start: usize, len: usize) -> Jet {
        Jet {
            set: self.set.clone(),
            base_dim: len,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.rows(start, len).into_owned())
                .collect(),
        }
    }

    pub fn sup_distance(&self, other: &Jet) -> f64 {
        (self.flat() - other.flat()).amax()
    }
}

/// `Π_i (a0_i + s_i)^{ι_i}` truncated at the set's order.
fn shifted_monomial(set: &Arc<MultiIndexSet>, a0: &[f64], iota: &[usize]) -> Taylor {
    let mut out = Taylor::constant(set, 1.0);
    for (i, &e) in iota.iter().enumerate() {
        if e > 0 {
            out = out * Taylor::variable(set, a0[i], i).powi(e as u32);
        }
    }
    out
}

fn plain_monomial(a: &[f64], iota: &[usize]) -> f64 {
    iota.iter()
        .zip(a)
        .map(|(&e, &x)| x.powi(e as i32))
        .product()
}

/// Vector polynomial `Σ_ι v_ι a^ι` of any degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub k: usize,
    pub dim: usize,
    pub terms: Vec<(Vec<usize>, DVector<f64>)>,
}

impl Poly {
    pub fn zero(k: usize, dim: usize) -> Self {
        Poly {
            k,
            dim,
            terms: Vec::new(),
        }
    }

    pub fn eval(&self, a: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (iota, v) in &self.terms {
            out += v * plain_monomial(a, iota);
        }
        out
    }

    /// Taylor expansion at `a0` to the set's order, one series per component.
    pub fn expand(&self, set: &Arc<MultiIndexSet>, a0: &[f64]) -> Vec<Taylor> {
        let mut out = vec![Taylor::constant(set, 0.0); self.dim];
        for (iota, v) in &self.terms {
            let mono = shifted_monomial(set, a0, iota);
            for (o, &vi) in out.iter_mut().zip(v.iter()) {
                *o = o.clone() + mono.scale(vi);
            }
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|(i, _)| i.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

/// Matrix polynomial `Σ_ι M_ι a^ι`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatPoly {
    pub k: usize,
    pub rows: usize,
    pub cols: usize,
    pub terms: Vec<(Vec<usize>, DMatrix<f64>)>,
}

impl MatPoly {
    pub fn constant(k: usize, m: DMatrix<f64>) -> Self {
        MatPoly {
            k,
            rows: m.nrows(),
            cols: m.ncols(),
            terms: vec![(vec![0; k], m)],
        }
    }

    pub fn eval(&self, a: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (iota, m) in &self.terms {
            out += m * plain_monomial(a, iota);
        }
        out
    }

    pub fn expand(&self, set: &Arc<MultiIndexSet>, a0: &[f64]) -> Vec<Vec<Taylor>> {
        let mut out = vec![vec![Taylor::constant(set, 0.0); self.cols]; self.rows];
        for (iota, m) in &self.terms {
            let mono = shifted_monomial(set, a0, iota);
            for r in 0..self.rows {
                for c in 0..self.cols {
                    if m[(r, c)] != 0.0 {
                        out[r][c] = out[r][c].clone() + mono.scale(m[(r, c)]);
                    }
                }
            }
        }
        out
    }
}

fn add_index(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `f_a(y) = M(a) y + P(a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFamily {
    pub linear: MatPoly,
    pub offset: Poly,
}

impl AffineFamily {
    pub fn identity(k: usize, n: usize) -> Self {
        AffineFamily {
            linear: MatPoly::constant(k, DMatrix::identity(n, n)),
            offset: Poly::zero(k, n),
        }
    }

    pub fn apply(&self, a: &[f64], y: &DVector<f64>) -> DVector<f64> {
        self.linear.eval(a) * y + self.offset.eval(a)
    }

    /// `self ∘ inner` as exact polynomials.
    pub fn compose(&self, inner: &AffineFamily) -> AffineFamily {
        let k = self.linear.k;
        let mut lin = Vec::new();
        let mut off: Vec<(Vec<usize>, DVector<f64>)> = self.offset.terms.clone();
        for (i1, m1) in &self.linear.terms {
            for (i2, m2) in &inner.linear.terms {
                lin.push((add_index(i1, i2), m1 * m2));
            }
            for (i2, p2) in &inner.offset.terms {
                off.push((add_index(i1, i2), m1 * p2));
            }
        }
        AffineFamily {
            linear: MatPoly {
                k,
                rows: self.linear.rows,
                cols: inner.linear.cols,
                terms: lin,
            },
            offset: Poly {
                k,
                dim: self.offset.dim,
                terms: off,
            },
        }
    }

    /// `J(f_a ∘ z)` at `a0` from `J(z)`.
    pub fn induced_jet_map(&self, j: &Jet, a0: &[f64]) -> Result<Jet> {
        if j.base_dim != self.linear.cols {
            return Err(Error::Dimension(format!(
                "jet of dimension {} for a map on R^{}",
                j.base_dim, self.linear.cols
            )));
        }
        if a0.len() != j.set.k {
            return Err(Error::Dimension(format!(
                "parameter of length {} for k = {}",
                a0.len(),
                j.set.k
            )));
        }
        let set = &j.set;
        let m = self.linear.expand(set, a0);
        let p = self.offset.expand(set, a0);
        let y = j.to_taylor();
        let out: Vec<Taylor> = (0..self.linear.rows)
            .map(|r| {
                let mut acc = p[r].clone();
                for (c, yc) in y.iter().enumerate() {
                    acc = acc + m[r][c].clone() * yc.clone();
                }
                acc
            })
            .collect();
        Ok(Jet::from_taylor(set, &out))
    }

    /// The induced map as an affine map of flat jet coordinates.
    pub fn jet_affine_map(&self, set: &Arc<MultiIndexSet>, a0: &[f64]) -> Result<AffineMap> {
        let n = self.linear.cols;
        let zero = Jet::zero(set, n);
        let offset = self.induced_jet_map(&zero, a0)?.flat();
        let dim = zero.dim();
        let cols: Vec<DVector<f64>> = (0..dim)
            .map(|q| {
                let mut v = DVector::zeros(dim);
                v[q] = 1.0;
                let img = self
                    .induced_jet_map(&Jet::from_flat(set, n, &v)?, a0)?
                    .flat();
                Ok(img - &offset)
            })
            .collect::<Result<_>>()?;
        AffineMap::new(DMatrix::from_columns(&cols), offset)
    }
}

/// The candidate jet IFS: `κ = 2^{ĉ}` maps `λ·id + (±(1-λ))` on
/// `J(R^c) ≅ R^{ĉ}`, `ĉ = c·|Υ|`.
pub fn jet_fiber_ifs(lambda: f64, k: usize, d: usize, c: usize, b: f64) -> Result<FiberIFS> {
    if !(0.5 < lambda && lambda < 1.0) {
        return Err(Error::Precondition(format!(
            "need 1/2 < lambda < 1, got {lambda}"
        )));
    }
    let c_hat = jet_dim(c, k, d);
    branch_count(c_hat)?;
    product_fiber_ifs(lambda, c_hat, b)
}

fn branch_count(c_hat: usize) -> Result<usize> {
    if c_hat >= usize::BITS as usize || (1usize << c_hat) > MAX_BRANCHES {
        return Err(Error::Resource(format!(
            "2^{c_hat} branches exceed the cap of {MAX_BRANCHES}"
        )));
    }
    Ok(1 << c_hat)
}

/// `Φ_a = F ⋉ (φ_{1,a}, …, φ_{κ,a})` with an `a`-independent affine base and
/// fiber maps `φ_{ℓ,a}(y) = M_ℓ(a) y + P_ℓ(a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamFamily {
    pub k: usize,
    pub d: usize,
    pub base: HorseshoeBase,
    pub fiber: Vec<AffineFamily>,
    pub lambda: f64,
    pub b: f64,
}

impl ParamFamily {
    /// Translations `P_ℓ(a) = Σ_ι ℓ(ι) a^ι` with `ℓ(ι) ∈ (1-λ){-1,+1}^c`,
    /// one branch per sign table; the bit of coordinate `(ι, j)` is
    /// `pos(ι) · c + j`.
    pub fn translations(dims: Dimensions, lambda: f64, nu: f64, b: f64) -> Result<Self> {
        let set = MultiIndexSet::new(dims.k, dims.d);
        let c = dims.c;
        let kappa = branch_count(c * set.len())?;
        if !(0.5 < lambda && lambda < 1.0) {
            return Err(Error::Precondition(format!(
                "need 1/2 < lambda < 1, got {lambda}"
            )));
        }
        let base = affine_base(dims.ss, dims.u, kappa, nu, 1.0)?;
        let fiber = (0..kappa)
            .map(|l| {
                let terms = (0..set.len())
                    .map(|p| {
                        let v =
                            DVector::from_fn(c, |j, _| branch_sign(l, p * c + j) * (1.0 - lambda));
                        (set.index(p).to_vec(), v)
                    })
                    .collect();
                AffineFamily {
                    linear: MatPoly::constant(dims.k, DMatrix::identity(c, c) * lambda),
                    offset: Poly {
                        k: dims.k,
                        dim: c,
                        terms,
                    },
                }
            })
            .collect();
        Ok(ParamFamily {
            k: dims.k,
            d: dims.d,
            base,
            fiber,
            lambda,
            b,
        })
    }

    /// Same fiber maps over another `a`-independent base with as many
    /// branches, such as the Grassmannian base of `Φ_{a0}`.
    pub fn with_base(&self, base: HorseshoeBase) -> Result<Self> {
        if base.kappa() != self.kappa() {
            return Err(Error::Construction(format!(
                "base has {} branches, family has {}",
                base.kappa(),
                self.kappa()
            )));
        }
        Ok(ParamFamily {
            base,
            ..self.clone()
        })
    }

    pub fn dims(&self) -> Result<Dimensions> {
        Dimensions::new(
            self.base.d_ss(),
            self.base.d_u(),
            self.d_c(),
            self.k,
            self.d,
        )
    }

    pub fn d_c(&self) -> usize {
        self.fiber[0].offset.dim
    }

    pub fn kappa(&self) -> usize {
        self.fiber.len()
    }

    pub fn index_set(&self) -> Arc<MultiIndexSet> {
        Arc::new(MultiIndexSet::new(self.k, self.d))
    }

    /// Adds seeded offset terms of degree `d+1` with coefficients in
    /// `[-η, η]`, invisible to `d`-jets at `a = 0`.
    pub fn perturb_above_order(&self, eta: f64, seed: u64) -> Self {
        let mut out = self.clone();
        let high = MultiIndexSet::new(self.k, self.d + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for f in out.fiber.iter_mut() {
            for iota in high
                .indices()
                .iter()
                .filter(|i| i.iter().sum::<usize>() == self.d + 1)
            {
                let v = DVector::from_fn(f.offset.dim, |_, _| eta * rng.gen_range(-1.0..=1.0));
                f.offset.terms.push((iota.clone(), v));
            }
        }
        out
    }

    /// The system `Φ_a` with candidate `(-b, b)^c`.
    pub fn at(&self, a: &[f64]) -> Result<SkewProductSystem> {
        let c = self.d_c();
        let maps: Vec<AffineMap> = self
            .fiber
            .iter()
            .map(|f| AffineMap::new(f.linear.eval(a), f.offset.eval(a)))
            .collect::<Result<_>>()?;
        let fiber = fiber_ifs(maps, c, self.b)?;
        SkewProductSystem::new(self.base.clone(), fiber, None)
    }

    /// The induced fiber IFS on `J(R^c)` at `a0`, candidate `(-b̂, b̂)^{ĉ}`.
    pub fn jet_fiber_at(&self, a0: &[f64], b_hat: f64) -> Result<FiberIFS> {
        let set = self.index_set();
        let maps: Vec<AffineMap> = self
            .fiber
            .iter()
            .map(|f| f.jet_affine_map(&set, a0))
            .collect::<Result<_>>()?;
        fiber_ifs(maps, jet_dim(self.d_c(), self.k, self.d), b_hat)
    }

    /// `J(Φ_{a} ∘ z)` at `a0` for branch `l`; the order-zero point must lie
    /// in the branch rectangle.
    pub fn induced_jet_map(&self, l: usize, j: &Jet, a0: &[f64]) -> Result<Jet> {
        let (ss, u, c) = (self.base.d_ss(), self.base.d_u(), self.d_c());
        if j.base_dim != ss + u + c {
            return Err(Error::Dimension(format!(
                "jet of dimension {} for a state in R^{}",
                j.base_dim,
                ss + u + c
            )));
        }
        if l >= self.kappa() {
            return Err(Error::Infeasible {
                symbol: l,
                reason: format!("only {} branches", self.kappa()),
            });
        }
        let z0 = j.order0();
        let br = &self.base.branches[l];
        let xs0 = z0.rows(0, ss).into_owned();
        let xu0 = z0.rows(ss, u).into_owned();
        if !self.base.stable_domain.contains(xs0.as_slice())
            || !self.base.rect(l).contains(xu0.as_slice())
        {
            return Err(Error::BranchMismatch {
                step: 0,
                reason: format!(
                    "order-zero point {:?} is outside rectangle {l}",
                    z0.as_slice()
                ),
            });
        }
        let y = self.fiber[l].induced_jet_map(&j.slice(ss + u, c), a0)?;
        let coeffs = (0..j.set.len())
            .map(|p| {
                let zp = &j.coeffs[p];
                let mut xs = &br.s_lin * zp.rows(0, ss);
                let mut xu = zp.rows(ss, u).into_owned();
                if p == 0 {
                    xs += &br.s_off;
                    xu -= &br.u_center;
                }
                let xu = &br.u_lin * xu;
                DVector::from_iterator(
                    ss + u + c,
                    xs.iter()
                        .chain(xu.iter())
                        .chain(y.coeffs[p].iter())
                        .cloned(),
                )
            })
            .collect();
        Ok(Jet {
            set: j.set.clone(),
            base_dim: j.base_dim,
            coeffs,
        })
    }
}

fn fiber_ifs(maps: Vec<AffineMap>, c: usize, b: f64) -> Result<FiberIFS> {
    let lambda = maps
        .iter()
        .map(|m| conorm(&m.linear))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    FiberIFS::new(
        maps,
        lambda,
        default_beta(lambda),
        IntervalBox::cube(c, 2.0),
        IntervalBox::cube(c, b),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::check_covering;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dimensions() {
        assert_eq!(jet_dim(3, 2, 2), 18);
        assert_eq!(jet_dim(5, 3, 0), 5);
        assert_eq!(jet_dim(1, 1, 1), 2);
    }

    #[test]
    fn jet_fiber_examples() {
        let ifs = jet_fiber_ifs(0.75, 1, 1, 1, 0.9).unwrap();
        assert_eq!(ifs.kappa(), 4);
        let mut offsets: Vec<Vec<f64>> = ifs
            .maps
            .iter()
            .map(|m| m.offset.iter().cloned().collect())
            .collect();
        offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            offsets,
            vec![
                vec![-0.25, -0.25],
                vec![-0.25, 0.25],
                vec![0.25, -0.25],
                vec![0.25, 0.25]
            ]
        );
        assert!(check_covering(&ifs, 12).unwrap().covered);
        assert_eq!(jet_fiber_ifs(0.75, 0, 3, 2, 0.9).unwrap().kappa(), 4);
        assert!(matches!(
            jet_fiber_ifs(0.75, 2, 2, 3, 0.9),
            Err(Error::Resource(_))
        ));

        // the family's jet IFS at a = 0 is the same cover, and translation
        // jets are the coefficient tables
        let fam =
            ParamFamily::translations(Dimensions::new(1, 1, 1, 1, 1).unwrap(), 0.75, 0.1, 0.9)
                .unwrap();
        let at0 = fam.jet_fiber_at(&[0.0], 0.9).unwrap();
        assert_eq!(at0.maps, ifs.maps);
        for (l, f) in fam.fiber.iter().enumerate() {
            for (iota, v) in &f.offset.terms {
                let p = fam.index_set().position(iota).unwrap();
                assert_eq!(at0.maps[l].offset[p], v[0]);
            }
        }
    }

    #[test]
    fn induced_map_examples() {
        let set = Arc::new(MultiIndexSet::new(1, 2));
        // constant affine family on a constant jet
        let f = AffineFamily {
            linear: MatPoly::constant(1, DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.7])),
            offset: Poly {
                k: 1,
                dim: 2,
                terms: vec![(vec![0], DVector::from_vec(vec![0.3, -0.1]))],
            },
        };
        let z = DVector::from_vec(vec![0.2, 0.4]);
        let out = f.induced_jet_map(&Jet::constant(&set, &z), &[0.3]).unwrap();
        assert!((&out.coeffs[0] - f.apply(&[0.3], &z)).amax() < 1e-15);
        assert!(out.coeffs[1..].iter().all(|c| c.amax() == 0.0));

        // a-dependent family against finite differences of a ↦ f_a(z_a)
        let g = AffineFamily {
            linear: MatPoly {
                k: 1,
                rows: 1,
                cols: 1,
                terms: vec![
                    (vec![0], DMatrix::from_element(1, 1, 0.75)),
                    (vec![1], DMatrix::from_element(1, 1, 0.2)),
                ],
            },
            offset: Poly {
                k: 1,
                dim: 1,
                terms: vec![
                    (vec![1], DVector::from_element(1, 0.25)),
                    (vec![3], DVector::from_element(1, -0.4)),
                ],
            },
        };
        let mut j = Jet::zero(&set, 1);
        j.coeffs[0][0] = 0.3;
        j.coeffs[1][0] = -0.5;
        j.coeffs[2][0] = 0.8;
        let a0 = 0.1;
        let out = g.induced_jet_map(&j, &[a0]).unwrap();
        let curve = |s: f64| g.apply(&[a0 + s], &j.eval(&[s]))[0];
        let h = 1e-3;
        assert_abs_diff_eq!(out.coeffs[0][0], curve(0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(
            out.coeffs[1][0],
            (curve(h) - curve(-h)) / (2.0 * h),
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            out.coeffs[2][0],
            (curve(h) - 2.0 * curve(0.0) + curve(-h)) / (2.0 * h * h),
            epsilon = 1e-6
        );
    }

    #[test]
    fn branch_map_errors_outside_rectangle() {
        let fam =
            ParamFamily::translations(Dimensions::new(1, 1, 1, 1, 1).unwrap(), 0.75, 0.1, 0.9)
                .unwrap();
        let set = fam.index_set();
        let z = DVector::from_vec(vec![0.0, 5.0, 0.0]);
        assert!(matches!(
            fam.induced_jet_map(0, &Jet::constant(&set, &z), &[0.0]),
            Err(Error::BranchMismatch { .. })
        ));
    }

    #[test]
    fn serialization_keeps_indices() {
        let set = Arc::new(MultiIndexSet::new(2, 1));
        let mut j = Jet::zero(&set, 2);
        j.coeffs[2] = DVector::from_vec(vec![1.0, -2.0]);
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.contains("\"k\":2"));
        let back: Jet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, j);
    }
}
