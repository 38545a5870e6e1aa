//! Jet lifts of the base, of whole systems and of constant-family discs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::family::{jet_dim, Jet, ParamFamily};
use super::taylor::MultiIndexSet;
use crate::error::{Error, Result};
use crate::grassmann::grassmann_skew_model;
use crate::ifs::{check_covering, CoveringCertificate, FiberIFS};
use crate::numerics::{Dimensions, IntervalBox};
use crate::skew::{BaseBranch, DiscMaps, HorizontalDisc, HorseshoeBase, SkewProductSystem};

/// Radius of the derivative ball in the lifted stable domain.
pub const DEFAULT_RHO: f64 = 0.05;
/// Half-width of the derivative blocks of the lifted unstable domain.
const UNSTABLE_JET_RADIUS: f64 = 2.0;
/// Smallest candidate half-width tried by the covering search.
const MIN_B_HAT: f64 = 0.3;
const B_STEP: f64 = 0.01;
pub const COVER_DEPTH: usize = 40;

fn kron_identity(n: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::<f64>::identity(n, n).kronecker(m)
}

/// `v` in block 0, zeros in the other `n - 1` blocks.
fn first_block(n: usize, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(n * v.len());
    out.rows_mut(0, v.len()).copy_from(v);
    out
}

fn lifted_box(b: &IntervalBox, n: usize, r: f64) -> Result<IntervalBox> {
    let mut lo = b.lo.clone();
    let mut hi = b.hi.clone();
    lo.extend(std::iter::repeat_n(-r, (n - 1) * b.dim()));
    hi.extend(std::iter::repeat_n(r, (n - 1) * b.dim()));
    IntervalBox::new(lo, hi)
}

/// `F̂(J(x)) = (F(x_a), DF ∂¹x_a, …)`: block-diagonal linear parts with the
/// offsets in the order-zero block. The stable derivative blocks range over
/// `[-ρ, ρ]`.
pub fn lift_base(base: &HorseshoeBase, set: &MultiIndexSet, rho: f64) -> Result<HorseshoeBase> {
    if !(rho > 0.0) {
        return Err(Error::Precondition(format!("need rho > 0, got {rho}")));
    }
    let n = set.len();
    let branches = base
        .branches
        .iter()
        .map(|b| BaseBranch {
            s_lin: kron_identity(n, &b.s_lin),
            s_off: first_block(n, &b.s_off),
            u_lin: kron_identity(n, &b.u_lin),
            u_center: first_block(n, &b.u_center),
        })
        .collect();
    let out = HorseshoeBase {
        stable_domain: lifted_box(&base.stable_domain, n, rho)?,
        unstable_domain: lifted_box(&base.unstable_domain, n, UNSTABLE_JET_RADIUS)?,
        branches,
        nu: base.nu,
        alpha: base.alpha,
    };
    out.validate()?;
    Ok(out)
}

/// Coupling `K = [K_s K_u]` acting blockwise on jets.
fn lift_coupling(k: &DMatrix<f64>, ss: usize, u: usize, n: usize) -> DMatrix<f64> {
    let ks = kron_identity(n, &k.columns(0, ss).into_owned());
    let ku = kron_identity(n, &k.columns(ss, u).into_owned());
    let mut out = DMatrix::zeros(ks.nrows(), ks.ncols() + ku.ncols());
    out.view_mut((0, 0), ks.shape()).copy_from(&ks);
    out.view_mut((0, ks.ncols()), ku.shape()).copy_from(&ku);
    out
}

/// The jet model `Φ̂ = F̂ ⋉ (φ̂₁, …, φ̂_κ)` at a parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetSystem {
    pub system: SkewProductSystem,
    #[serde(skip, default = "empty_set")]
    pub set: Arc<MultiIndexSet>,
    pub k: usize,
    pub d: usize,
    pub a0: Vec<f64>,
    /// Unlifted `(ss, u, c)`, where `ss` counts chart coordinates for the
    /// Grassmannian model.
    pub plain: (usize, usize, usize),
    pub d_ss_hat: usize,
    pub d_c_hat: usize,
    pub b_hat: f64,
    pub covering: CoveringCertificate,
}

fn empty_set() -> Arc<MultiIndexSet> {
    Arc::new(MultiIndexSet::new(0, 0))
}

impl JetSystem {
    /// Flat lifted state to the jet of the plain state `(x_ss, x_u, y)`.
    pub fn state_jet(&self, q: &DVector<f64>) -> Jet {
        let (ss, u, c) = self.plain;
        let n = self.set.len();
        let coeffs = (0..n)
            .map(|p| {
                let xs = q.rows(p * ss, ss);
                let xu = q.rows(n * ss + p * u, u);
                let y = q.rows(n * (ss + u) + p * c, c);
                DVector::from_iterator(
                    ss + u + c,
                    xs.iter().chain(xu.iter()).chain(y.iter()).cloned(),
                )
            })
            .collect();
        Jet {
            set: self.set.clone(),
            base_dim: ss + u + c,
            coeffs,
        }
    }

    /// Inverse of [`JetSystem::state_jet`].
    pub fn flat_state(&self, j: &Jet) -> DVector<f64> {
        let (ss, u, c) = self.plain;
        let xs = j.slice(0, ss).flat();
        let xu = j.slice(ss, u).flat();
        let y = j.slice(ss + u, c).flat();
        SkewProductSystem::join(&xs, &xu, &y)
    }
}

/// Shrinks the candidate from `b_hat` in steps of 0.01 until the jet cover
/// is certified.
fn covered_fiber(
    fam: &ParamFamily,
    a0: &[f64],
    b_hat: f64,
) -> Result<(FiberIFS, f64, CoveringCertificate)> {
    let mut b = b_hat;
    let mut last = String::new();
    while b >= MIN_B_HAT - 1e-12 {
        match fam.jet_fiber_at(a0, b) {
            Ok(ifs) => {
                let cert = check_covering(&ifs, COVER_DEPTH)?;
                if cert.covered {
                    return Ok((ifs, b, cert));
                }
                last = format!("cover of (-{b}, {b}) not certified");
            }
            Err(e) => last = e.to_string(),
        }
        b = ((b - B_STEP) * 100.0).round() / 100.0;
    }
    Err(Error::NotCovered(format!(
        "jet fiber at a0 = {a0:?}: no candidate in [{MIN_B_HAT}, {b_hat}] is covered ({last})"
    )))
}

fn check_a0(fam: &ParamFamily, a0: &[f64]) -> Result<()> {
    if a0.len() != fam.k {
        return Err(Error::Dimension(format!(
            "a0 of length {} for k = {}",
            a0.len(),
            fam.k
        )));
    }
    Ok(())
}

/// The jet model of the family at `a0`.
pub fn jet_skew_model(fam: &ParamFamily, a0: &[f64], b_hat: f64, rho: f64) -> Result<JetSystem> {
    check_a0(fam, a0)?;
    let set = fam.index_set();
    let base = lift_base(&fam.base, &set, rho)?;
    let (fiber, b, covering) = covered_fiber(fam, a0, b_hat)?;
    let system = SkewProductSystem::new(base, fiber, None)?;
    let (ss, u, c) = (fam.base.d_ss(), fam.base.d_u(), fam.d_c());
    Ok(JetSystem {
        system,
        set: set.clone(),
        k: fam.k,
        d: fam.d,
        a0: a0.to_vec(),
        plain: (ss, u, c),
        d_ss_hat: jet_dim(ss, fam.k, fam.d),
        d_c_hat: jet_dim(c, fam.k, fam.d),
        b_hat: b,
        covering,
    })
}

/// Jet model of a plain system whose fiber already acts on jets; used to
/// lift an arbitrary coupled system with the constant family.
pub fn lift_system(
    sys: &SkewProductSystem,
    fam: &ParamFamily,
    a0: &[f64],
    b_hat: f64,
    rho: f64,
) -> Result<JetSystem> {
    check_a0(fam, a0)?;
    let set = fam.index_set();
    let n = set.len();
    let base = lift_base(&sys.base, &set, rho)?;
    let (fiber, b, covering) = covered_fiber(fam, a0, b_hat)?;
    let (ss, u) = (sys.d_ss(), sys.d_u());
    let coupling = sys
        .coupling
        .as_ref()
        .map(|ks| ks.iter().map(|k| lift_coupling(k, ss, u, n)).collect());
    let system = SkewProductSystem::new(base, fiber, coupling)?;
    Ok(JetSystem {
        system,
        set: set.clone(),
        k: fam.k,
        d: fam.d,
        a0: a0.to_vec(),
        plain: (ss, u, fam.d_c()),
        d_ss_hat: jet_dim(ss, fam.k, fam.d),
        d_c_hat: jet_dim(fam.d_c(), fam.k, fam.d),
        b_hat: b,
        covering,
    })
}

/// The jet lift of the Grassmannian model of `Φ_{a0}`, with chart radius
/// `theta` on the order-zero plane block.
pub fn jet_grassmann_model(
    fam: &ParamFamily,
    a0: &[f64],
    b_hat: f64,
    theta: f64,
    rho: f64,
) -> Result<JetSystem> {
    let g = grassmann_skew_model(&fam.at(a0)?, theta)?;
    lift_system(&g.system, fam, a0, b_hat, rho)
}

/// `Ĥ(J(ξ)) = J(H ∘ ξ)` for a constant family of discs.
#[derive(Clone, Debug)]
pub struct LiftedDisc {
    pub inner: Arc<dyn DiscMaps>,
    pub set: Arc<MultiIndexSet>,
    pub ss: usize,
    pub u: usize,
    pub c: usize,
}

impl LiftedDisc {
    fn lift(&self, xi: &DVector<f64>) -> (Jet, Jet) {
        let jx = Jet::from_flat(&self.set, self.ss, xi).expect("lifted stable coordinate");
        match self.inner.eval_jet(&jx.to_taylor()) {
            Some((g, h)) => (
                Jet::from_taylor(&self.set, &g),
                Jet::from_taylor(&self.set, &h),
            ),
            None => {
                let nan = |dim| {
                    let mut j = Jet::zero(&self.set, dim);
                    j.coeffs.iter_mut().for_each(|c| c.fill(f64::NAN));
                    j
                };
                (nan(self.u), nan(self.c))
            }
        }
    }
}

impl DiscMaps for LiftedDisc {
    fn g(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.lift(xi).0.flat()
    }
    fn h(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.lift(xi).1.flat()
    }
}

/// Lifts a disc of the plain system to the jet model: the domain is the
/// stable domain times the `ρ`-ball of derivatives and the anchor is `(y, 0)`.
pub fn constant_family_disc(
    disc: &HorizontalDisc,
    set: &Arc<MultiIndexSet>,
    rho: f64,
) -> Result<HorizontalDisc> {
    let n = set.len();
    let ss = disc.domain.dim();
    let center = DVector::from_vec(disc.domain.center());
    let (g0, h0) = (disc.maps.g(&center), disc.maps.h(&center));
    let probe = Jet::constant(set, &center).to_taylor();
    if disc.maps.eval_jet(&probe).is_none() {
        return Err(Error::Precondition(
            "disc maps cannot be evaluated on jets".into(),
        ));
    }
    let maps = LiftedDisc {
        inner: disc.maps.clone(),
        set: set.clone(),
        ss,
        u: g0.len(),
        c: h0.len(),
    };
    Ok(HorizontalDisc {
        domain: lifted_box(&disc.domain, n, rho)?,
        maps: Arc::new(maps),
        alpha: disc.alpha,
        delta: disc.delta,
        anchor_y: first_block(n, &disc.anchor_y),
        lipschitz_c: disc.lipschitz_c,
    })
}

/// Dimension bookkeeping of the jet models for given plain dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetDimensions {
    pub d_ss_hat: usize,
    pub d_u_hat: usize,
    pub d_c_hat: usize,
    pub d_ss_hat_grassmann: usize,
}

pub fn jet_dimensions(dims: &Dimensions) -> JetDimensions {
    let (k, d) = (dims.k, dims.d);
    let ne = dims.u * (dims.m() - dims.u);
    JetDimensions {
        d_ss_hat: jet_dim(dims.ss, k, d),
        d_u_hat: jet_dim(dims.u, k, d),
        d_c_hat: jet_dim(dims.c, k, d),
        d_ss_hat_grassmann: jet_dim(dims.ss, k, d) + jet_dim(ne, k, d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skew::{blender_intersection, certify_horizontal};

    fn family(k: usize, d: usize) -> ParamFamily {
        ParamFamily::translations(Dimensions::new(1, 1, 1, k, d).unwrap(), 0.75, 0.1, 0.9).unwrap()
    }

    #[test]
    fn dimension_examples() {
        let j = jet_dimensions(&Dimensions::new(1, 1, 1, 1, 1).unwrap());
        assert_eq!((j.d_ss_hat, j.d_c_hat), (2, 2));
        assert_eq!(j.d_ss_hat_grassmann, 6);
        let js = jet_skew_model(&family(1, 1), &[0.0], 0.9, DEFAULT_RHO).unwrap();
        assert_eq!(
            (js.system.d_ss(), js.system.d_u(), js.system.d_c()),
            (2, 2, 2)
        );
        assert_eq!(js.b_hat, 0.9);
        let jg = jet_grassmann_model(&family(1, 1), &[0.0], 0.9, 0.05, DEFAULT_RHO).unwrap();
        assert_eq!(jg.system.d_ss(), 6);
    }

    #[test]
    fn lifted_eigenvalues_repeat_the_base() {
        let fam = family(2, 1);
        let lifted = lift_base(&fam.base, &fam.index_set(), DEFAULT_RHO).unwrap();
        for (b, lb) in fam.base.branches.iter().zip(&lifted.branches) {
            let mut ev: Vec<f64> = lb
                .s_lin
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .collect();
            ev.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
            let mut base_ev: Vec<f64> = b
                .s_lin
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .collect();
            base_ev.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
            assert_eq!(ev, base_ev);
            assert_eq!(lb.s_lin.nrows(), 3 * b.s_lin.nrows());
        }
    }

    #[test]
    fn state_jets_round_trip() {
        let js = jet_skew_model(&family(1, 2), &[0.0], 0.9, DEFAULT_RHO).unwrap();
        let q = DVector::from_fn(js.system.m(), |i, _| i as f64);
        let j = js.state_jet(&q);
        assert_eq!(j.coeffs[1].as_slice(), &[1.0, 4.0, 7.0]);
        assert_eq!(js.flat_state(&j), q);
    }

    #[test]
    fn shifted_parameter_shrinks_the_candidate() {
        let js = jet_skew_model(&family(1, 1), &[0.1], 0.9, DEFAULT_RHO).unwrap();
        assert!(js.covering.covered);
        assert!(js.b_hat <= 0.9 && js.b_hat >= MIN_B_HAT);
    }

    #[test]
    fn flat_disc_lifts_to_a_horizontal_disc() {
        let fam = family(1, 1);
        let sys = fam.at(&[0.0]).unwrap();
        let js = jet_skew_model(&fam, &[0.0], 0.9, DEFAULT_RHO).unwrap();
        let u0 = sys.base.branches[0].u_center.clone();
        let disc = HorizontalDisc::flat(
            sys.base.stable_domain.clone(),
            u0,
            DVector::from_element(1, 0.1),
            2.0,
            0.3,
        );
        let lifted = constant_family_disc(&disc, &js.set, DEFAULT_RHO).unwrap();
        let xi = DVector::from_vec(vec![0.5, 0.04]);
        assert_eq!(lifted.maps.h(&xi).as_slice(), &[0.1, 0.0]);
        assert_eq!(lifted.anchor_y.as_slice(), &[0.1, 0.0]);
        let cert = certify_horizontal(&lifted, &js.system, 5).unwrap();
        assert!(cert.certified, "{cert:?}");
        let w = blender_intersection(&js.system, &lifted, 20, 1e-10).unwrap();
        assert!(w.disc_residual < 1e-10);
    }
}
