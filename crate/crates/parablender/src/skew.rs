//! Skew products `Φ = F ⋉ (φ_1, …, φ_κ)` over an affine horseshoe, horizontal
//! discs, the graph transform and the blender intersection oracle.
//!
//! States are stored as `(x_ss, x_u, y)`.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{standard_fiber_ifs, FiberIFS};
use crate::jets::Taylor;
use crate::numerics::{
    affine_image_box, inf_norm, spectral_norm, sup_norm, AffineMap, Dimensions, IntervalBox, Scalar,
};

/// One branch of the base: `(ξ, x_u) ↦ (S ξ + s, U (x_u − c))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseBranch {
    pub s_lin: DMatrix<f64>,
    pub s_off: DVector<f64>,
    pub u_lin: DMatrix<f64>,
    pub u_center: DVector<f64>,
}

impl BaseBranch {
    pub fn stable_map(&self) -> AffineMap {
        AffineMap {
            linear: self.s_lin.clone(),
            offset: self.s_off.clone(),
        }
    }

    pub fn u_inverse(&self) -> DMatrix<f64> {
        self.u_lin
            .clone()
            .try_inverse()
            .expect("validated expansion")
    }
}

/// Affine horseshoe with rectangles `R_ℓ = closure(R_ss) × I_ℓ`, where
/// `I_ℓ = c_ℓ + U_ℓ⁻¹ Q_u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeBase {
    pub stable_domain: IntervalBox,
    pub unstable_domain: IntervalBox,
    pub branches: Vec<BaseBranch>,
    pub nu: f64,
    pub alpha: f64,
}

impl HorseshoeBase {
    pub fn d_ss(&self) -> usize {
        self.stable_domain.dim()
    }

    pub fn d_u(&self) -> usize {
        self.unstable_domain.dim()
    }

    pub fn kappa(&self) -> usize {
        self.branches.len()
    }

    /// `J_ℓ`: image of the stable domain under the stable part of branch ℓ.
    pub fn strip(&self, l: usize) -> IntervalBox {
        affine_image_box(&self.branches[l].stable_map(), &self.stable_domain).expect("dims")
    }

    /// `I_ℓ`.
    pub fn rect(&self, l: usize) -> IntervalBox {
        let b = &self.branches[l];
        let inv = AffineMap {
            linear: b.u_inverse(),
            offset: b.u_center.clone(),
        };
        affine_image_box(&inv, &self.unstable_domain).expect("dims")
    }

    pub fn validate(&self) -> Result<()> {
        let (ds, du) = (self.d_ss(), self.d_u());
        if self.branches.is_empty() {
            return Err(Error::Construction("base without branches".into()));
        }
        for (l, b) in self.branches.iter().enumerate() {
            if b.s_lin.shape() != (ds, ds) || b.s_off.len() != ds {
                return Err(Error::Dimension(format!("stable block of branch {l}")));
            }
            if b.u_lin.shape() != (du, du) || b.u_center.len() != du {
                return Err(Error::Dimension(format!("unstable block of branch {l}")));
            }
            let sn = spectral_norm(&b.s_lin);
            let ui = b
                .u_lin
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Construction(format!("U of branch {l} is singular")))?;
            let un = spectral_norm(&ui);
            if sn >= self.nu || un >= self.nu {
                return Err(Error::Construction(format!(
                    "branch {l}: |S| = {sn}, |U^-1| = {un}, need both < nu = {}",
                    self.nu
                )));
            }
            if !self.stable_domain.contains_box(&self.strip(l)) {
                return Err(Error::Construction(format!(
                    "strip {l} leaves the stable domain"
                )));
            }
            if !self.unstable_domain.contains_box(&self.rect(l)) {
                return Err(Error::Construction(format!("rectangle {l} leaves Q_u")));
            }
        }
        for i in 0..self.kappa() {
            for j in i + 1..self.kappa() {
                if boxes_meet(&self.rect(i), &self.rect(j)) {
                    return Err(Error::Construction(format!(
                        "rectangles {i} and {j} overlap"
                    )));
                }
                if boxes_meet(&self.strip(i), &self.strip(j)) {
                    return Err(Error::Construction(format!("strips {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    /// Worst ratio `‖U⁻¹v‖ / (α ‖S⁻¹w‖)` over sampled vectors `(w, v)` of the
    /// strong-stable cone; invariance holds when it is at most `ν²`.
    pub fn cone_contraction_sample<R: Rng>(&self, rng: &mut R, samples: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let l = rng.gen_range(0..self.kappa());
            let b = &self.branches[l];
            let w = DVector::from_fn(self.d_ss(), |_, _| rng.gen_range(-1.0..1.0));
            let mut v = DVector::from_fn(self.d_u(), |_, _| rng.gen_range(-1.0..1.0));
            let nv = v.norm();
            if nv > 0.0 {
                v *= rng.gen_range(0.0..1.0) * self.alpha * w.norm() / nv;
            }
            let sw = b.s_lin.clone().lu().solve(&w).expect("invertible");
            let uv = b.u_inverse() * v;
            if sw.norm() > 0.0 {
                worst = worst.max(uv.norm() / (self.alpha * sw.norm()));
            }
        }
        worst
    }

    /// Index of the rectangle containing `x_u`.
    pub fn rect_of(&self, x_u: &[f64]) -> Option<usize> {
        (0..self.kappa()).find(|&l| self.rect(l).contains(x_u))
    }

    /// Index of the strip containing `ξ`.
    pub fn strip_of(&self, xi: &[f64]) -> Option<usize> {
        (0..self.kappa()).find(|&l| self.strip(l).contains(xi))
    }
}

fn boxes_meet(a: &IntervalBox, b: &IntervalBox) -> bool {
    (0..a.dim()).all(|i| a.lo[i] <= b.hi[i] && b.lo[i] <= a.hi[i])
}

/// Centers of `count` grid cells of `[-2,2]^dim`, axis 0 fastest, and the
/// cell width. Fails unless a cube of side `side` fits in each cell with a gap.
fn grid_centers(dim: usize, count: usize, side: f64) -> Result<(Vec<DVector<f64>>, usize)> {
    let mut n = 1usize;
    while n.pow(dim as u32) < count {
        n += 1;
    }
    let width = 4.0 / n as f64;
    if side >= width {
        return Err(Error::Construction(format!(
            "{count} cubes of side {side} do not fit in [-2,2]^{dim} with gaps; use a larger dimension, smaller nu or fewer branches"
        )));
    }
    let centers = (0..count)
        .map(|mut idx| {
            DVector::from_fn(dim, |_, _| {
                let j = idx % n;
                idx /= n;
                -2.0 + (j as f64 + 0.5) * width
            })
        })
        .collect();
    Ok((centers, n))
}

/// Affine horseshoe with `S = (ν/2) I`, `U = (2/ν) I`, disjoint strips and
/// rectangles at grid-cell centers.
pub fn affine_base(
    d_ss: usize,
    d_u: usize,
    kappa: usize,
    nu: f64,
    alpha: f64,
) -> Result<HorseshoeBase> {
    if !(0.0 < nu && nu < 1.0) {
        return Err(Error::Precondition(format!("need 0 < nu < 1, got {nu}")));
    }
    let side = 2.0 * nu;
    let (s_centers, _) = grid_centers(d_ss, kappa, side)?;
    let (u_centers, _) = grid_centers(d_u, kappa, side)?;
    let branches = (0..kappa)
        .map(|l| BaseBranch {
            s_lin: DMatrix::identity(d_ss, d_ss) * (0.5 * nu),
            s_off: s_centers[l].clone(),
            u_lin: DMatrix::identity(d_u, d_u) * (2.0 / nu),
            u_center: u_centers[l].clone(),
        })
        .collect();
    let base = HorseshoeBase {
        stable_domain: IntervalBox::cube(d_ss, 2.0),
        unstable_domain: IntervalBox::cube(d_u, 2.0),
        branches,
        nu,
        alpha,
    };
    base.validate()?;
    Ok(base)
}

/// `Φ(x, y) = (F_ℓ x, T_ℓ y + o_ℓ + K_ℓ x)` on `R_ℓ × D`. Without coupling
/// this is the plain skew product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewProductSystem {
    pub base: HorseshoeBase,
    pub fiber: FiberIFS,
    pub coupling: Option<Vec<DMatrix<f64>>>,
}

impl SkewProductSystem {
    pub fn new(
        base: HorseshoeBase,
        fiber: FiberIFS,
        coupling: Option<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        let sys = SkewProductSystem {
            base,
            fiber,
            coupling,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.fiber.validate()?;
        if self.base.kappa() != self.fiber.kappa() {
            return Err(Error::Construction(format!(
                "base has {} branches, fiber has {} maps",
                self.base.kappa(),
                self.fiber.kappa()
            )));
        }
        if self.base.nu >= self.fiber.lambda {
            return Err(Error::Precondition(format!(
                "domination needs nu < lambda, got nu = {}, lambda = {}",
                self.base.nu, self.fiber.lambda
            )));
        }
        if let Some(k) = &self.coupling {
            if k.len() != self.base.kappa() {
                return Err(Error::Dimension("one coupling matrix per branch".into()));
            }
            for m in k {
                if m.shape() != (self.d_c(), self.d_ss() + self.d_u()) {
                    return Err(Error::Dimension("coupling must be c x (ss + u)".into()));
                }
            }
        }
        Ok(())
    }

    pub fn d_ss(&self) -> usize {
        self.base.d_ss()
    }

    pub fn d_u(&self) -> usize {
        self.base.d_u()
    }

    pub fn d_c(&self) -> usize {
        self.fiber.dim()
    }

    pub fn m(&self) -> usize {
        self.d_ss() + self.d_u() + self.d_c()
    }

    pub fn kappa(&self) -> usize {
        self.base.kappa()
    }

    pub fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (s, u) = (self.d_ss(), self.d_u());
        (
            z.rows(0, s).into_owned(),
            z.rows(s, u).into_owned(),
            z.rows(s + u, self.d_c()).into_owned(),
        )
    }

    pub fn join(xi: &DVector<f64>, xu: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            xi.len() + xu.len() + y.len(),
            xi.iter().chain(xu.iter()).chain(y.iter()).cloned(),
        )
    }

    fn coupling_term(&self, l: usize, xi: &DVector<f64>, xu: &DVector<f64>) -> DVector<f64> {
        match &self.coupling {
            Some(k) => {
                let x = Self::join(xi, xu, &DVector::zeros(0));
                &k[l] * x
            }
            None => DVector::zeros(self.d_c()),
        }
    }

    /// `(K_s, K_u)` blocks of the coupling of branch ℓ (zero without coupling).
    pub fn coupling_blocks(&self, l: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let (s, u, c) = (self.d_ss(), self.d_u(), self.d_c());
        match &self.coupling {
            Some(k) => (
                k[l].columns(0, s).into_owned(),
                k[l].columns(s, u).into_owned(),
            ),
            None => (DMatrix::zeros(c, s), DMatrix::zeros(c, u)),
        }
    }

    pub fn forward(&self, l: usize, z: &DVector<f64>) -> DVector<f64> {
        let (xi, xu, y) = self.split(z);
        let b = &self.base.branches[l];
        let y2 = self.fiber.apply(l, &y) + self.coupling_term(l, &xi, &xu);
        Self::join(
            &(&b.s_lin * &xi + &b.s_off),
            &(&b.u_lin * (&xu - &b.u_center)),
            &y2,
        )
    }

    pub fn inverse(&self, l: usize, z: &DVector<f64>) -> Result<DVector<f64>> {
        let (xi, xu, y) = self.split(z);
        let b = &self.base.branches[l];
        let xi0 = b
            .s_lin
            .clone()
            .lu()
            .solve(&(&xi - &b.s_off))
            .ok_or(Error::Singular(0.0))?;
        let xu0 = &b.u_center + b.u_inverse() * xu;
        let y0 = self
            .fiber
            .apply_inverse(l, &(y - self.coupling_term(l, &xi0, &xu0)))?;
        Ok(Self::join(&xi0, &xu0, &y0))
    }

    /// `DΦ_ℓ` in `(ss, u, c)` block order.
    pub fn differential(&self, l: usize) -> DMatrix<f64> {
        let (s, u, c) = (self.d_ss(), self.d_u(), self.d_c());
        let b = &self.base.branches[l];
        let mut m = DMatrix::zeros(s + u + c, s + u + c);
        m.view_mut((0, 0), (s, s)).copy_from(&b.s_lin);
        m.view_mut((s, s), (u, u)).copy_from(&b.u_lin);
        m.view_mut((s + u, s + u), (c, c))
            .copy_from(&self.fiber.maps[l].linear);
        if let Some(k) = &self.coupling {
            m.view_mut((s + u, 0), (c, s + u)).copy_from(&k[l]);
        }
        m
    }

    /// Signed sup-distance of `z` to the boundary of `closure(U)`,
    /// `U = ∪ R_ℓ × D`.
    pub fn containment_margin(&self, z: &DVector<f64>) -> f64 {
        let (xi, xu, y) = self.split(z);
        let ms = self.base.stable_domain.signed_margin(xi.as_slice());
        let mu = (0..self.kappa())
            .map(|l| self.base.rect(l).signed_margin(xu.as_slice()))
            .fold(f64::NEG_INFINITY, f64::max);
        let my = self.fiber.domain.signed_margin(y.as_slice());
        ms.min(mu).min(my)
    }
}

/// The affine model: `κ = 2^c` branches over the standard fiber IFS.
pub fn affine_model(dims: Dimensions, lambda: f64, nu: f64, b: f64) -> Result<SkewProductSystem> {
    affine_model_with(dims, lambda, nu, b, 1.0)
}

pub fn affine_model_with(
    dims: Dimensions,
    lambda: f64,
    nu: f64,
    b: f64,
    alpha: f64,
) -> Result<SkewProductSystem> {
    if nu >= lambda {
        return Err(Error::Precondition(format!(
            "domination needs nu < lambda, got nu = {nu}, lambda = {lambda}"
        )));
    }
    let fiber = standard_fiber_ifs(lambda, dims.c, b)?;
    let base = affine_base(dims.ss, dims.u, fiber.kappa(), nu, alpha)?;
    SkewProductSystem::new(base, fiber, None)
}

/// Random perturbation of size `η`: stable blocks, stable offsets, fiber
/// linear parts and offsets, plus a fiber coupling to the base. `U` is left
/// unchanged so the Markov rectangles stay exact.
pub fn perturb_system<R: Rng>(
    sys: &SkewProductSystem,
    eta: f64,
    rng: &mut R,
) -> Result<SkewProductSystem> {
    if eta == 0.0 {
        return Ok(sys.clone());
    }
    let mut out = sys.clone();
    let unit = |rng: &mut R, r: usize, c: usize| {
        let scale = eta / ((r * c) as f64).sqrt().max(1.0);
        DMatrix::from_fn(r, c, |_, _| scale * rng.gen_range(-1.0..1.0))
    };
    let (s, u, c) = (sys.d_ss(), sys.d_u(), sys.d_c());
    let mut coupling = sys
        .coupling
        .clone()
        .unwrap_or_else(|| vec![DMatrix::zeros(c, s + u); sys.kappa()]);
    let mut lo_band = f64::INFINITY;
    let mut hi_band: f64 = 0.0;
    for l in 0..sys.kappa() {
        let b = &mut out.base.branches[l];
        b.s_lin += unit(rng, s, s);
        b.s_off += unit(rng, s, 1).column(0);
        let m = &mut out.fiber.maps[l];
        m.linear += unit(rng, c, c);
        m.offset += unit(rng, c, 1).column(0);
        coupling[l] += unit(rng, c, s + u);
        lo_band = lo_band.min(crate::numerics::conorm(&m.linear)?);
        hi_band = hi_band.max(spectral_norm(&m.linear));
    }
    out.coupling = Some(coupling);
    out.fiber.lambda = out.fiber.lambda.min(lo_band);
    if hi_band >= out.fiber.beta {
        out.fiber.beta = 0.5 * (hi_band + 1.0);
    }
    out.validate()?;
    Ok(out)
}

/// Graph maps of a disc over the stable domain.
pub trait DiscMaps: Send + Sync + Debug {
    fn g(&self, xi: &DVector<f64>) -> DVector<f64>;
    fn h(&self, xi: &DVector<f64>) -> DVector<f64>;
    /// Exact sup-metric Lipschitz constants of `(g, h)`, when known.
    fn lipschitz(&self) -> Option<(f64, f64)> {
        None
    }
    /// Evaluation on Taylor series, for lifting to jet space.
    fn eval_jet(&self, _xi: &[Taylor]) -> Option<(Vec<Taylor>, Vec<Taylor>)> {
        None
    }
    /// Flattened pull-back data, so repeated pull-backs stay one level deep.
    fn as_pullback(&self) -> Option<&PulledBack> {
        None
    }
}

/// `g(ξ) = g₀ + G ξ`, `h(ξ) = h₀ + H ξ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineDisc {
    pub g0: DVector<f64>,
    pub g_lin: DMatrix<f64>,
    pub h0: DVector<f64>,
    pub h_lin: DMatrix<f64>,
}

impl DiscMaps for AffineDisc {
    fn g(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.g0 + &self.g_lin * xi
    }
    fn h(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.h0 + &self.h_lin * xi
    }
    fn lipschitz(&self) -> Option<(f64, f64)> {
        Some((inf_norm(&self.g_lin), inf_norm(&self.h_lin)))
    }
    fn eval_jet(&self, xi: &[Taylor]) -> Option<(Vec<Taylor>, Vec<Taylor>)> {
        let t = xi.first()?;
        Some((
            affine_generic(&self.g_lin, &self.g0, xi, t),
            affine_generic(&self.h_lin, &self.h0, xi, t),
        ))
    }
}

/// `g(ξ) = g₀ + G sin(ω ⊙ ξ)`, `h(ξ) = h₀ + H sin(ω ⊙ ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineDisc {
    pub g0: DVector<f64>,
    pub g_amp: DMatrix<f64>,
    pub h0: DVector<f64>,
    pub h_amp: DMatrix<f64>,
    pub omega: DVector<f64>,
}

impl SineDisc {
    fn wave(&self, xi: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(xi.len(), |i, _| (self.omega[i] * xi[i]).sin())
    }
}

impl DiscMaps for SineDisc {
    fn g(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.g0 + &self.g_amp * self.wave(xi)
    }
    fn h(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.h0 + &self.h_amp * self.wave(xi)
    }
    fn lipschitz(&self) -> Option<(f64, f64)> {
        let w = DMatrix::from_diagonal(&self.omega);
        Some((inf_norm(&(&self.g_amp * &w)), inf_norm(&(&self.h_amp * &w))))
    }
}

/// Generic `M x + b`.
pub fn affine_generic<T: Scalar>(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &[T],
    template: &T,
) -> Vec<T> {
    (0..m.nrows())
        .map(|i| {
            let mut acc = template.constant_like(b[i]);
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    acc = acc + x[j].scale(m[(i, j)]);
                }
            }
            acc
        })
        .collect()
}

/// Disc obtained from a root disc by repeated pull-backs. All of it is
/// affine in `(ξ, g_root, h_root)`:
///
/// `g(ξ) = Mg g_r(Aξ + a) + Gx ξ + g0`,
/// `h(ξ) = Mh h_r(Aξ + a) + Hg g_r(Aξ + a) + Hx ξ + h0`.
#[derive(Clone, Debug)]
pub struct PulledBack {
    pub root: Arc<dyn DiscMaps>,
    pub arg: AffineMap,
    pub mg: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub g0: DVector<f64>,
    pub mh: DMatrix<f64>,
    pub hg: DMatrix<f64>,
    pub hx: DMatrix<f64>,
    pub h0: DVector<f64>,
}

impl PulledBack {
    fn identity(root: Arc<dyn DiscMaps>, ds: usize, du: usize, dc: usize) -> Self {
        PulledBack {
            root,
            arg: AffineMap::identity(ds),
            mg: DMatrix::identity(du, du),
            gx: DMatrix::zeros(du, ds),
            g0: DVector::zeros(du),
            mh: DMatrix::identity(dc, dc),
            hg: DMatrix::zeros(dc, du),
            hx: DMatrix::zeros(dc, ds),
            h0: DVector::zeros(dc),
        }
    }
}

impl DiscMaps for PulledBack {
    fn g(&self, xi: &DVector<f64>) -> DVector<f64> {
        let inner = self.arg.apply(xi);
        &self.mg * self.root.g(&inner) + &self.gx * xi + &self.g0
    }
    fn h(&self, xi: &DVector<f64>) -> DVector<f64> {
        let inner = self.arg.apply(xi);
        &self.mh * self.root.h(&inner) + &self.hg * self.root.g(&inner) + &self.hx * xi + &self.h0
    }
    fn lipschitz(&self) -> Option<(f64, f64)> {
        let (lg, lh) = self.root.lipschitz()?;
        let a = inf_norm(&self.arg.linear);
        let g = inf_norm(&self.mg) * lg * a + inf_norm(&self.gx);
        let h = inf_norm(&self.mh) * lh * a + inf_norm(&self.hg) * lg * a + inf_norm(&self.hx);
        Some((g, h))
    }
    fn eval_jet(&self, xi: &[Taylor]) -> Option<(Vec<Taylor>, Vec<Taylor>)> {
        let t = xi.first()?;
        let inner = affine_generic(&self.arg.linear, &self.arg.offset, xi, t);
        let (gr, hr) = self.root.eval_jet(&inner)?;
        let zero_g = DVector::zeros(self.mg.nrows());
        let zero_h = DVector::zeros(self.mh.nrows());
        let g1 = affine_generic(&self.mg, &zero_g, &gr, t);
        let g2 = affine_generic(&self.gx, &self.g0, xi, t);
        let h1 = affine_generic(&self.mh, &zero_h, &hr, t);
        let h2 = affine_generic(&self.hg, &zero_h, &gr, t);
        let h3 = affine_generic(&self.hx, &self.h0, xi, t);
        let g = g1.into_iter().zip(g2).map(|(a, b)| a + b).collect();
        let h = h1
            .into_iter()
            .zip(h2)
            .zip(h3)
            .map(|((a, b), c)| a + b + c)
            .collect();
        Some((g, h))
    }
    fn as_pullback(&self) -> Option<&PulledBack> {
        Some(self)
    }
}

/// A graph disc `ξ ↦ (ξ, g(ξ), h(ξ))` over the stable domain, with the
/// constants of an `(α, ν, δ)`-horizontal disc.
#[derive(Clone, Debug)]
pub struct HorizontalDisc {
    pub domain: IntervalBox,
    pub maps: Arc<dyn DiscMaps>,
    pub alpha: f64,
    pub delta: f64,
    pub anchor_y: DVector<f64>,
    pub lipschitz_c: f64,
}

impl HorizontalDisc {
    pub fn point(&self, xi: &DVector<f64>) -> DVector<f64> {
        SkewProductSystem::join(xi, &self.maps.g(xi), &self.maps.h(xi))
    }

    /// `g ≡ g0`, `h ≡ h0`, anchored at `h0`.
    pub fn flat(
        domain: IntervalBox,
        g0: DVector<f64>,
        h0: DVector<f64>,
        alpha: f64,
        delta: f64,
    ) -> Self {
        let ds = domain.dim();
        let maps = AffineDisc {
            g_lin: DMatrix::zeros(g0.len(), ds),
            h_lin: DMatrix::zeros(h0.len(), ds),
            g0,
            h0: h0.clone(),
        };
        HorizontalDisc {
            domain,
            maps: Arc::new(maps),
            alpha,
            delta,
            anchor_y: h0,
            lipschitz_c: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalCertificate {
    pub certified: bool,
    /// Margins of the three conditions: `α - ‖Dg‖`, `δ - sup d(y, h)`,
    /// `δ - Cν`.
    pub margins: [f64; 3],
    /// Violated conditions, numbered 1 to 3.
    pub failed: Vec<usize>,
    pub dg_norm: f64,
    pub max_anchor_distance: f64,
    pub lipschitz_estimate: f64,
    pub lipschitz_used: f64,
    /// Rectangle containing all sampled values of `g`.
    pub rect: Option<usize>,
    pub inside_candidate: bool,
    pub samples: usize,
}

/// Checks the three horizontality conditions on a sample grid.
pub fn certify_horizontal(
    disc: &HorizontalDisc,
    sys: &SkewProductSystem,
    grid_n: usize,
) -> Result<HorizontalCertificate> {
    let pts = disc.domain.samples(grid_n.max(2), 4096);
    let b = &sys.fiber.candidate;
    let mut dg: f64 = 0.0;
    let mut dh: f64 = 0.0;
    let mut anchor: f64 = 0.0;
    let mut inside = b.signed_margin(disc.anchor_y.as_slice()) > 0.0;
    let mut rects: Vec<bool> = vec![true; sys.kappa()];
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut modulus: f64 = 0.0;
    let exact = disc.maps.lipschitz();
    for p in &pts {
        let xi = DVector::from_vec(p.clone());
        let g = disc.maps.g(&xi);
        let h = disc.maps.h(&xi);
        anchor = anchor.max(sup_norm(&(&h - &disc.anchor_y)));
        if b.signed_margin(h.as_slice()) < 0.0 {
            inside = false;
        }
        for (l, ok) in rects.iter_mut().enumerate() {
            *ok = *ok && sys.base.rect(l).contains(g.as_slice());
        }
        if exact.is_none() {
            let jg = crate::numerics::finite_diff_jacobian(|x| Ok(disc.maps.g(x)), &xi, None)?;
            let jh = crate::numerics::finite_diff_jacobian(|x| Ok(disc.maps.h(x)), &xi, None)?;
            dg = dg.max(inf_norm(&jg));
            dh = dh.max(inf_norm(&jh));
            if let Some((pg, ph)) = &prev {
                modulus = modulus
                    .max(inf_norm(&(&jg - pg)))
                    .max(inf_norm(&(&jh - ph)));
            }
            prev = Some((jg, jh));
        }
    }
    let (dg, c_est) = match exact {
        Some((lg, lh)) => (lg, lh),
        None => (dg + modulus, dh + modulus),
    };
    let c_used = c_est.max(disc.lipschitz_c);
    let margins = [
        disc.alpha - dg,
        disc.delta - anchor,
        disc.delta - c_used * sys.base.nu,
    ];
    let failed: Vec<usize> = (0..3)
        .filter(|&i| {
            if i == 0 {
                margins[i] < 0.0
            } else {
                margins[i] <= 0.0
            }
        })
        .map(|i| i + 1)
        .collect();
    let rect = rects.iter().position(|&ok| ok);
    Ok(HorizontalCertificate {
        certified: failed.is_empty() && rect.is_some() && inside,
        margins,
        failed,
        dg_norm: dg,
        max_anchor_distance: anchor,
        lipschitz_estimate: c_est,
        lipschitz_used: c_used,
        rect,
        inside_candidate: inside,
        samples: pts.len(),
    })
}

fn pullback_maps(
    sys: &SkewProductSystem,
    maps: &Arc<dyn DiscMaps>,
    l: usize,
) -> Result<PulledBack> {
    let (ds, du, dc) = (sys.d_ss(), sys.d_u(), sys.d_c());
    let cur = match maps.as_pullback() {
        Some(p) => p.clone(),
        None => PulledBack::identity(maps.clone(), ds, du, dc),
    };
    let br = &sys.base.branches[l];
    let s = &br.s_lin;
    let so = &br.s_off;
    let ui = br.u_inverse();
    let ti = sys.fiber.maps[l]
        .linear
        .clone()
        .try_inverse()
        .ok_or(Error::Singular(0.0))?;
    let o = &sys.fiber.maps[l].offset;
    let (ks, ku) = sys.coupling_blocks(l);

    let arg = cur.arg.compose(&br.stable_map());
    let mg = &ui * &cur.mg;
    let gx = &ui * &cur.gx * s;
    let g0 = &br.u_center + &ui * (&cur.gx * so + &cur.g0);
    let mh = &ti * &cur.mh;
    let hg = &ti * (&cur.hg - &ku * &mg);
    let hx = &ti * (&cur.hx * s - &ks - &ku * &gx);
    let h0 = &ti * (&cur.hx * so + &cur.h0 - o - &ku * &g0);
    Ok(PulledBack {
        root: cur.root.clone(),
        arg,
        mg,
        gx,
        g0,
        mh,
        hg,
        hx,
        h0,
    })
}

/// Preimage of the fiber point `y` over the center of the pulled-back disc.
fn pull_anchor(
    sys: &SkewProductSystem,
    disc: &HorizontalDisc,
    l: usize,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let center = DVector::from_vec(disc.domain.center());
    let br = &sys.base.branches[l];
    let xi_img = &br.s_lin * &center + &br.s_off;
    let xu_pre = &br.u_center + br.u_inverse() * disc.maps.g(&xi_img);
    let (ks, ku) = sys.coupling_blocks(l);
    let shift = ks * &center + ku * xu_pre;
    sys.fiber.apply_inverse(l, &(y - shift))
}

/// Component of `Φ⁻¹(disc) ∩ (R_ℓ × D)` as a graph over the stable domain.
/// The anchor is pulled back by `φ_ℓ⁻¹` and must stay in `B`.
pub fn graph_transform_pullback(
    sys: &SkewProductSystem,
    disc: &HorizontalDisc,
    l: usize,
) -> Result<HorizontalDisc> {
    if l >= sys.kappa() {
        return Err(Error::Infeasible {
            symbol: l,
            reason: format!("only {} symbols", sys.kappa()),
        });
    }
    let anchor = pull_anchor(sys, disc, l, &disc.anchor_y)?;
    let m = sys.fiber.candidate.signed_margin(anchor.as_slice());
    if m <= 0.0 {
        return Err(Error::Infeasible {
            symbol: l,
            reason: format!(
                "pulled-back anchor {:?} leaves B (margin {m:e})",
                anchor.as_slice()
            ),
        });
    }
    let maps = pullback_maps(sys, &disc.maps, l)?;
    let br = &sys.base.branches[l];
    let (ks, ku) = sys.coupling_blocks(l);
    let ti = inf_norm(
        &sys.fiber.maps[l]
            .linear
            .clone()
            .try_inverse()
            .ok_or(Error::Singular(0.0))?,
    );
    let sn = inf_norm(&br.s_lin);
    let lg = inf_norm(&br.u_inverse()) * disc.alpha * sn;
    let c = ti * (disc.lipschitz_c * sn + inf_norm(&ks) + inf_norm(&ku) * lg);
    Ok(HorizontalDisc {
        domain: disc.domain.clone(),
        maps: Arc::new(maps),
        alpha: disc.alpha,
        delta: disc.delta,
        anchor_y: anchor,
        lipschitz_c: c,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionWitness {
    pub point_q: DVector<f64>,
    pub itinerary: Vec<usize>,
    pub domain_diameter: f64,
    pub disc_residual: f64,
    pub containment_margin: f64,
    /// Greedy anchor values, one per step (after the pull-back).
    pub anchors: Vec<DVector<f64>>,
    /// Greedy margins in `B`, one per step.
    pub step_margins: Vec<f64>,
    /// Stable coordinate `ξ*` of `q`.
    pub xi_star: DVector<f64>,
}

/// Greedy graph-transform loop: at each step pick the symbol whose pulled
/// back central value (over the domain center) sits deepest in `B`.
pub fn blender_intersection(
    sys: &SkewProductSystem,
    disc: &HorizontalDisc,
    n: usize,
    tol: f64,
) -> Result<IntersectionWitness> {
    let center = DVector::from_vec(disc.domain.center());
    let b = &sys.fiber.candidate;
    let mut maps: Arc<dyn DiscMaps> = disc.maps.clone();
    let mut itinerary = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    let mut step_margins = Vec::with_capacity(n);
    for step in 0..n {
        let mut best: Option<(usize, f64, PulledBack, DVector<f64>)> = None;
        for l in 0..sys.kappa() {
            let pb = pullback_maps(sys, &maps, l)?;
            let v = pb.h(&center);
            let m = b.signed_margin(v.as_slice());
            if best.as_ref().is_none_or(|(_, bm, _, _)| m > *bm) {
                best = Some((l, m, pb, v));
            }
        }
        let (l, m, pb, v) = best.expect("at least one symbol");
        if !(m > 0.0) {
            return Err(Error::OracleFailure {
                step,
                reason: format!(
                    "best pulled-back value {:?} has margin {m:e} in B",
                    v.as_slice()
                ),
            });
        }
        itinerary.push(l);
        anchors.push(v);
        step_margins.push(m);
        maps = Arc::new(pb);
    }
    let xi_star = itinerary_point(sys, &itinerary, &center);
    let q = disc.point(&xi_star);
    // independent evaluation of the root maps at the stable coordinate of q
    let (xs, xu, y) = sys.split(&q);
    let residual = sup_norm(&(xu - disc.maps.g(&xs))).max(sup_norm(&(y - disc.maps.h(&xs))));
    let orbit = backward_orbit(sys, &q, &itinerary)?;
    if let Some(j) = orbit.first_escape {
        return Err(Error::OracleFailure {
            step: j,
            reason: "backward orbit of the witness leaves closure(U)".into(),
        });
    }
    if residual >= tol {
        return Err(Error::OracleFailure {
            step: n,
            reason: format!("disc residual {residual:e} above tolerance"),
        });
    }
    // the offsets cancel in the diameter, so it is computed from the linear
    // parts alone and does not floor at the rounding error of the position
    let mut lin = DMatrix::<f64>::identity(sys.d_ss(), sys.d_ss());
    for &l in &itinerary {
        lin *= &sys.base.branches[l].s_lin;
    }
    let half = DVector::from_fn(sys.d_ss(), |i, _| 0.5 * disc.domain.width(i));
    let diameter = 2.0 * (lin.abs() * half).max();
    Ok(IntersectionWitness {
        point_q: q,
        itinerary,
        domain_diameter: diameter,
        disc_residual: residual,
        containment_margin: orbit.min_margin,
        anchors,
        step_margins,
        xi_star,
    })
}

/// `F^s_{ℓ1} ∘ ⋯ ∘ F^s_{ℓN}(ξ_N)`.
pub fn itinerary_point(
    sys: &SkewProductSystem,
    itinerary: &[usize],
    xi_n: &DVector<f64>,
) -> DVector<f64> {
    let mut xi = xi_n.clone();
    for &l in itinerary.iter().rev() {
        let br = &sys.base.branches[l];
        xi = &br.s_lin * xi + &br.s_off;
    }
    xi
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardOrbit {
    pub states: Vec<DVector<f64>>,
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub first_escape: Option<usize>,
}

/// `Φ^{-j}(q)` along the itinerary. The stable coordinate is evaluated as
/// the itinerary point plus the expanded deviation, which avoids the
/// cancellation of naive backward iteration.
pub fn backward_orbit(
    sys: &SkewProductSystem,
    q: &DVector<f64>,
    itinerary: &[usize],
) -> Result<BackwardOrbit> {
    let n = itinerary.len();
    // tails[j] = F^s_{ℓ_{j+1}} ∘ ⋯ ∘ F^s_{ℓ_N}(center)
    let center = DVector::from_vec(sys.base.stable_domain.center());
    let mut tails = vec![center; n + 1];
    for j in (0..n).rev() {
        let br = &sys.base.branches[itinerary[j]];
        tails[j] = &br.s_lin * &tails[j + 1] + &br.s_off;
    }
    let (xi0, mut xu, mut y) = sys.split(q);
    let mut dev = xi0 - &tails[0];
    let mut states = vec![q.clone()];
    let mut margins = vec![sys.containment_margin(q)];
    let mut first_escape = if margins[0] < 0.0 { Some(0) } else { None };
    for j in 1..=n {
        if first_escape.is_some() {
            break;
        }
        let l = itinerary[j - 1];
        let xi_prev = &tails[j - 1] + &dev;
        match sys.base.strip_of(xi_prev.as_slice()) {
            None => {
                first_escape = Some(j);
                margins.push(-sys.base.strip(l).signed_margin(xi_prev.as_slice()).abs());
                break;
            }
            Some(found) if !sys.base.strip(l).contains(xi_prev.as_slice()) => {
                return Err(Error::BranchMismatch {
                    step: j,
                    reason: format!("stable coordinate lies in strip {found}, itinerary says {l}"),
                });
            }
            _ => {}
        }
        let br = &sys.base.branches[l];
        dev = br
            .s_lin
            .clone()
            .lu()
            .solve(&dev)
            .ok_or(Error::Singular(0.0))?;
        let xi = &tails[j] + &dev;
        xu = &br.u_center + br.u_inverse() * &xu;
        let (ks, ku) = sys.coupling_blocks(l);
        y = sys.fiber.apply_inverse(l, &(&y - ks * &xi - ku * &xu))?;
        let z = SkewProductSystem::join(&xi, &xu, &y);
        let m = sys.containment_margin(&z);
        margins.push(m);
        states.push(z);
        if m < 0.0 {
            first_escape = Some(j);
        }
    }
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(BackwardOrbit {
        states,
        margins,
        min_margin,
        first_escape,
    })
}

/// Affine `u`-plane: `point + direction · v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnstablePlane {
    pub point: DVector<f64>,
    pub direction: DMatrix<f64>,
    pub itinerary: Vec<usize>,
}

/// Point of `W^u_loc` with unstable coordinate `v`: the stable coordinate is
/// fixed by the itinerary and the fiber coordinate is the forward image of
/// `terminal_y` along it.
pub fn unstable_point(
    sys: &SkewProductSystem,
    itinerary: &[usize],
    v: &DVector<f64>,
    terminal_y: &DVector<f64>,
) -> DVector<f64> {
    let n = itinerary.len();
    let center = DVector::from_vec(sys.base.stable_domain.center());
    let mut tails = vec![center; n + 1];
    for j in (0..n).rev() {
        let br = &sys.base.branches[itinerary[j]];
        tails[j] = &br.s_lin * &tails[j + 1] + &br.s_off;
    }
    let mut xus = vec![v.clone()];
    for j in 1..=n {
        let br = &sys.base.branches[itinerary[j - 1]];
        let next = &br.u_center + br.u_inverse() * &xus[j - 1];
        xus.push(next);
    }
    let mut y = terminal_y.clone();
    for j in (1..=n).rev() {
        let l = itinerary[j - 1];
        let (ks, ku) = sys.coupling_blocks(l);
        y = sys.fiber.apply(l, &y) + ks * &tails[j] + ku * &xus[j];
    }
    SkewProductSystem::join(&tails[0], v, &y)
}

/// The local unstable plane through the witness.
pub fn local_unstable_plane(
    sys: &SkewProductSystem,
    w: &IntersectionWitness,
) -> Result<UnstablePlane> {
    let orbit = backward_orbit(sys, &w.point_q, &w.itinerary)?;
    let (_, _, y_n) = sys.split(orbit.states.last().expect("nonempty"));
    let (_, v, _) = sys.split(&w.point_q);
    Ok(unstable_plane_through(sys, &w.itinerary, &v, &y_n))
}

pub fn unstable_plane_through(
    sys: &SkewProductSystem,
    itinerary: &[usize],
    v: &DVector<f64>,
    terminal_y: &DVector<f64>,
) -> UnstablePlane {
    let p0 = unstable_point(sys, itinerary, v, terminal_y);
    let du = sys.d_u();
    let cols: Vec<DVector<f64>> = (0..du)
        .map(|i| {
            let mut vi = v.clone();
            vi[i] += 1.0;
            unstable_point(sys, itinerary, &vi, terminal_y) - &p0
        })
        .collect();
    UnstablePlane {
        point: p0,
        direction: DMatrix::from_columns(&cols),
        itinerary: itinerary.to_vec(),
    }
}

/// Random certified disc for the system. `radius_factor` bounds
/// `sup |h - y|` by `radius_factor · δ`.
pub fn random_horizontal_disc<R: Rng>(
    sys: &SkewProductSystem,
    delta: f64,
    radius_factor: f64,
    rng: &mut R,
) -> HorizontalDisc {
    let (ds, du, dc) = (sys.d_ss(), sys.d_u(), sys.d_c());
    let nu = sys.base.nu;
    let alpha = sys.base.alpha;
    let l0 = rng.gen_range(0..sys.kappa());
    let rect = sys.base.rect(l0);
    let half = 0.5 * rect.width(0).min(rect.diameter());
    let g0 = DVector::from_fn(du, |i, _| {
        rect.center()[i] + rng.gen_range(-0.4..0.4) * half
    });
    let g_amp = DMatrix::from_fn(du, ds, |_, _| rng.gen_range(-0.4..0.4) * half / ds as f64);
    let b = &sys.fiber.candidate;
    let r = radius_factor * delta * rng.gen_range(0.05..0.999);
    let y = DVector::from_fn(dc, |i, _| {
        let lim = (b.hi[i] - r).max(0.0);
        rng.gen_range(-lim..=lim)
    });
    let h_amp = DMatrix::from_fn(dc, ds, |_, _| rng.gen_range(-0.5..0.5) * r / ds as f64);
    let h_off = DVector::from_fn(dc, |_, _| rng.gen_range(-0.5..0.5) * r);
    let h0 = &y + h_off;
    let amp = inf_norm(&h_amp).max(inf_norm(&g_amp)).max(1e-12);
    let w_max = (0.99 * delta / (nu * amp))
        .min(0.99 * alpha / amp)
        .min(10.0)
        .max(0.0);
    let sine = rng.gen_bool(0.5);
    let maps: Arc<dyn DiscMaps> = if sine {
        let omega = DVector::from_fn(ds, |_, _| rng.gen_range(0.0..=w_max));
        Arc::new(SineDisc {
            g0,
            g_amp,
            h0,
            h_amp,
            omega,
        })
    } else {
        // affine disc: slopes scaled so that the range stays the same
        Arc::new(AffineDisc {
            g0,
            g_lin: g_amp * 0.5,
            h0,
            h_lin: h_amp * 0.5,
        })
    };
    let (_, lh) = maps.lipschitz().expect("closed form");
    HorizontalDisc {
        domain: sys.base.stable_domain.clone(),
        maps,
        alpha,
        delta,
        anchor_y: y,
        lipschitz_c: lh,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> SkewProductSystem {
        affine_model(Dimensions::plain(1, 1, 1).unwrap(), 0.75, 0.1, 0.9).unwrap()
    }

    #[test]
    fn affine_model_examples() {
        let sys = model();
        assert_eq!(sys.kappa(), 2);
        let (i0, i1) = (sys.base.rect(0), sys.base.rect(1));
        assert!(i0.hi[0] < i1.lo[0] || i1.hi[0] < i0.lo[0]);
        let err = affine_model(Dimensions::plain(1, 1, 1).unwrap(), 0.75, 0.8, 0.9).unwrap_err();
        assert!(err.to_string().contains("nu < lambda"));
        let big = affine_model(Dimensions::plain(1, 2, 4).unwrap(), 0.75, 0.05, 0.9).unwrap();
        assert_eq!(big.kappa(), 16);
        let err = affine_model(Dimensions::plain(1, 1, 4).unwrap(), 0.75, 0.2, 0.9).unwrap_err();
        assert!(matches!(err, Error::Construction(_)));
    }

    #[test]
    fn markov_property_and_cones() {
        let sys = model();
        for l in 0..sys.kappa() {
            let r = sys.base.rect(l);
            let br = &sys.base.branches[l];
            let lo = &br.u_lin * (DVector::from_vec(r.lo.clone()) - &br.u_center);
            let hi = &br.u_lin * (DVector::from_vec(r.hi.clone()) - &br.u_center);
            assert_abs_diff_eq!(lo[0], -2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(hi[0], 2.0, epsilon = 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let worst = sys.base.cone_contraction_sample(&mut rng, 500);
        assert!(worst <= sys.base.nu.powi(2) + 1e-15);
    }

    #[test]
    fn inverse_undoes_forward() {
        let sys = model();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = perturb_system(&sys, 1e-3, &mut rng).unwrap();
        let z = DVector::from_vec(vec![0.3, -1.05, 0.2]);
        for l in 0..2 {
            let back = sys.inverse(l, &sys.forward(l, &z)).unwrap();
            assert!((back - &z).amax() < 1e-12);
        }
    }

    #[test]
    fn certify_examples() {
        let sys = model();
        let dom = sys.base.stable_domain.clone();
        let g0 = DVector::from_vec(sys.base.rect(0).center());
        let flat = HorizontalDisc::flat(dom.clone(), g0.clone(), DVector::zeros(1), 1.0, 0.3);
        let cert = certify_horizontal(&flat, &sys, 5).unwrap();
        assert!(cert.certified);
        assert_eq!(cert.lipschitz_used, 0.0);

        let sloped = HorizontalDisc {
            domain: dom,
            maps: Arc::new(AffineDisc {
                g0,
                g_lin: DMatrix::zeros(1, 1),
                h0: DVector::zeros(1),
                h_lin: DMatrix::from_element(1, 1, 0.4),
            }),
            alpha: 1.0,
            delta: 0.3,
            anchor_y: DVector::zeros(1),
            lipschitz_c: 0.4,
        };
        // the range of h is [-0.8, 0.8], so item (2) fails while item (3) holds
        let cert = certify_horizontal(&sloped, &sys, 5).unwrap();
        assert!(cert.margins[2] > 0.0);
        assert_abs_diff_eq!(cert.margins[2], 0.3 - 0.04, epsilon = 1e-12);
        let mut fast = sys.clone();
        fast.base.nu = 0.9;
        let cert = certify_horizontal(&sloped, &fast, 5).unwrap();
        assert!(cert.failed.contains(&3));
    }

    #[test]
    fn pullback_examples() {
        let sys = model();
        let g0 = DVector::from_vec(sys.base.rect(0).center());
        let flat = HorizontalDisc::flat(
            sys.base.stable_domain.clone(),
            g0,
            DVector::zeros(1),
            1.0,
            0.3,
        );
        let d1 = graph_transform_pullback(&sys, &flat, 0).unwrap();
        let z = DVector::from_vec(vec![0.7]);
        assert_abs_diff_eq!(d1.maps.h(&z)[0], -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d1.anchor_y[0], -1.0 / 3.0, epsilon = 1e-15);
        let d2 = graph_transform_pullback(&sys, &d1, 1).unwrap();
        assert_abs_diff_eq!(d2.maps.h(&z)[0], -1.0 / 9.0, epsilon = 1e-15);
        let mut high = flat.clone();
        high.anchor_y = DVector::from_element(1, 0.95);
        let err = graph_transform_pullback(&sys, &high, 0).unwrap_err();
        assert!(matches!(err, Error::Infeasible { symbol: 0, .. }));
    }

    #[test]
    fn oracle_on_flat_disc() {
        let sys = model();
        let g0 = DVector::from_vec(sys.base.rect(0).center());
        let flat = HorizontalDisc::flat(
            sys.base.stable_domain.clone(),
            g0,
            DVector::zeros(1),
            1.0,
            0.3,
        );
        let w = blender_intersection(&sys, &flat, 30, 1e-10).unwrap();
        assert_abs_diff_eq!(w.anchors[0][0], -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.anchors[1][0], -1.0 / 9.0, epsilon = 1e-15);
        assert!(w.anchors.iter().all(|a| a[0].abs() < 0.9));
        assert!(w.domain_diameter <= 4.0 * 0.1f64.powi(30));
        assert!(w.containment_margin >= 0.0);
        assert!(w.disc_residual < 1e-10);
    }

    #[test]
    fn period_two_fiber_point() {
        let sys = model();
        let g0 = DVector::from_vec(sys.base.rect(0).center());
        let p = 1.0 / 7.0;
        let disc = HorizontalDisc::flat(
            sys.base.stable_domain.clone(),
            g0,
            DVector::from_element(1, p),
            1.0,
            0.3,
        );
        let w = blender_intersection(&sys, &disc, 20, 1e-10).unwrap();
        for (j, &l) in w.itinerary.iter().enumerate() {
            assert_eq!(l, j % 2);
        }
        let orbit = backward_orbit(&sys, &w.point_q, &w.itinerary).unwrap();
        for (j, z) in orbit.states.iter().enumerate() {
            let expect = if j % 2 == 0 { p } else { -p };
            assert_abs_diff_eq!(z[2], expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn backward_orbit_examples() {
        let sys = model();
        let br = &sys.base.branches[0];
        let xi = br.s_off[0] / (1.0 - br.s_lin[(0, 0)]);
        let xu = -br.u_lin[(0, 0)] * br.u_center[0] / (1.0 - br.u_lin[(0, 0)]);
        // the fiber fixed point of phi_+ is 1; the stable deviation is expanded
        // by 20 per step, so the itinerary is kept short
        let q = DVector::from_vec(vec![xi, xu, 1.0]);
        let orbit = backward_orbit(&sys, &q, &[0; 5]).unwrap();
        for z in &orbit.states {
            assert!((z - &q).amax() < 1e-9);
        }
        let random = DVector::from_vec(vec![0.2, 0.5, 0.1]);
        let orbit = backward_orbit(&sys, &random, &[0, 1, 0]).unwrap();
        assert!(orbit.first_escape.is_some());
    }

    #[test]
    fn unstable_plane_is_eu() {
        let sys = model();
        let g0 = DVector::from_vec(sys.base.rect(1).center());
        let disc = HorizontalDisc::flat(
            sys.base.stable_domain.clone(),
            g0,
            DVector::from_element(1, 0.2),
            1.0,
            0.3,
        );
        let w = blender_intersection(&sys, &disc, 40, 1e-10).unwrap();
        let plane = local_unstable_plane(&sys, &w).unwrap();
        assert_eq!(
            plane.direction,
            DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0])
        );
        assert!((&plane.point - &w.point_q).amax() < 1e-12);
        let again = local_unstable_plane(&sys, &w).unwrap();
        assert_eq!(plane, again);
    }
}
