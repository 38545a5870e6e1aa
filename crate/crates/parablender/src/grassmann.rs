//! `u`-planes near `E^u` in graph coordinates, the induced action of linear
//! maps, and the skew product on `U × C^G`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{inf_norm, spectral_norm, Dimensions, IntervalBox};
use crate::skew::{BaseBranch, HorseshoeBase, SkewProductSystem};

/// Default chart radius.
pub const DEFAULT_THETA: f64 = 0.5;
/// Angles below this count as containment.
pub const CONTAINMENT_TOL: f64 = 1e-8;

/// The plane `{(e_ss v, v, e_c v)}`; `e` stacks `e_ss` over `e_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrassmannPoint {
    pub e: DMatrix<f64>,
    pub ss: usize,
}

impl GrassmannPoint {
    pub fn new(e: DMatrix<f64>, ss: usize) -> Result<Self> {
        if ss > e.nrows() {
            return Err(Error::Dimension(format!(
                "ss = {ss} exceeds {} rows",
                e.nrows()
            )));
        }
        Ok(GrassmannPoint { e, ss })
    }

    /// The unstable plane `E^u`.
    pub fn origin(dims: &Dimensions) -> Self {
        GrassmannPoint {
            e: DMatrix::zeros(dims.m() - dims.u, dims.u),
            ss: dims.ss,
        }
    }

    pub fn u(&self) -> usize {
        self.e.ncols()
    }

    pub fn e_ss(&self) -> DMatrix<f64> {
        self.e.rows(0, self.ss).into_owned()
    }

    pub fn e_c(&self) -> DMatrix<f64> {
        self.e.rows(self.ss, self.e.nrows() - self.ss).into_owned()
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.e)
    }

    /// Frame `[e_ss; I_u; e_c]` in `(ss, u, c)` order.
    pub fn frame(&self) -> DMatrix<f64> {
        let (u, ss) = (self.u(), self.ss);
        let m = self.e.nrows() + u;
        let mut f = DMatrix::zeros(m, u);
        f.view_mut((0, 0), (ss, u)).copy_from(&self.e_ss());
        f.view_mut((ss, 0), (u, u))
            .copy_from(&DMatrix::identity(u, u));
        f.view_mut((ss + u, 0), (m - ss - u, u))
            .copy_from(&self.e_c());
        f
    }

    /// Graph coordinates of the plane spanned by `frame`.
    pub fn from_frame(frame: &DMatrix<f64>, ss: usize, u: usize) -> Result<Self> {
        let m = frame.nrows();
        let mid = frame.rows(ss, u).into_owned();
        let lu = mid.clone().lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::ChartEscape("middle block of the frame is singular".into()))?;
        let smin = mid.singular_values().min();
        if smin <= 1e-13 * spectral_norm(&mid).max(1.0) {
            return Err(Error::ChartEscape(format!(
                "middle block nearly singular (smallest singular value {smin:e})"
            )));
        }
        let mut rest = DMatrix::zeros(m - u, u);
        rest.view_mut((0, 0), (ss, u)).copy_from(&frame.rows(0, ss));
        rest.view_mut((ss, 0), (m - ss - u, u))
            .copy_from(&frame.rows(ss + u, m - ss - u));
        Ok(GrassmannPoint { e: rest * inv, ss })
    }

    /// Row-major `vec(e)`.
    pub fn to_vec(&self) -> DVector<f64> {
        DVector::from_iterator(self.e.len(), self.e.transpose().iter().cloned())
    }

    pub fn from_vec(v: &DVector<f64>, rows: usize, cols: usize, ss: usize) -> Self {
        GrassmannPoint {
            e: DMatrix::from_row_slice(rows, cols, v.as_slice()),
            ss,
        }
    }
}

/// `Df(x) E` in graph coordinates.
pub fn plane_action(m: &DMatrix<f64>, e: &GrassmannPoint) -> Result<GrassmannPoint> {
    let f = e.frame();
    if m.shape() != (f.nrows(), f.nrows()) {
        return Err(Error::Dimension(format!(
            "matrix {:?} does not act on R^{}",
            m.shape(),
            f.nrows()
        )));
    }
    GrassmannPoint::from_frame(&(m * f), e.ss, e.u())
}

/// `plane_action` that also rejects images outside the chart ball of radius
/// `theta`.
pub fn plane_action_in_chart(
    m: &DMatrix<f64>,
    e: &GrassmannPoint,
    theta: f64,
) -> Result<GrassmannPoint> {
    let out = plane_action(m, e)?;
    let n = out.norm();
    if n >= theta {
        return Err(Error::ChartEscape(format!(
            "image has norm {n} >= theta = {theta}"
        )));
    }
    Ok(out)
}

/// The chart map `e ↦ e'` of `M` as an affine map on row-major `vec(e)`,
/// available when the middle row block of `M` is `[0 U 0]`.
pub fn chart_linear_map(
    m: &DMatrix<f64>,
    ss: usize,
    u: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = m.nrows();
    let c = n - ss - u;
    let mid = m.rows(ss, u);
    let off_diag = mid.columns(0, ss).amax().max(mid.columns(ss + u, c).amax());
    if off_diag != 0.0 {
        return Err(Error::Precondition(
            "middle row block is not [0 U 0]; the chart map is not affine".into(),
        ));
    }
    let uu = mid.columns(ss, u).into_owned();
    let ui = uu.try_inverse().ok_or(Error::Singular(0.0))?;
    let rest_rows: Vec<usize> = (0..ss).chain(ss + u..n).collect();
    let rest_cols = rest_rows.clone();
    let a_rest = DMatrix::from_fn(n - u, n - u, |i, j| m[(rest_rows[i], rest_cols[j])]);
    let m_rest_u = DMatrix::from_fn(n - u, u, |i, j| m[(rest_rows[i], ss + j)]);
    let lin = a_rest.kronecker(&ui.transpose());
    let off_m = m_rest_u * &ui;
    let off = DVector::from_iterator(off_m.len(), off_m.transpose().iter().cloned());
    Ok((lin, off))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartEscapeSample {
    pub branch: usize,
    pub sample: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeInvarianceReport {
    /// Per-branch sup-norm of the chart map's linear part.
    pub rates_inf: Vec<f64>,
    /// Per-branch spectral norm of the same.
    pub rates_spectral: Vec<f64>,
    /// Per-branch flag: the chart map is exactly affine.
    pub exact: Vec<bool>,
    pub bound: f64,
    pub theta: f64,
    /// Branches whose rate exceeds the bound.
    pub violations: Vec<usize>,
    pub escapes: Vec<ChartEscapeSample>,
    pub samples: usize,
    pub invariant: bool,
}

impl ConeInvarianceReport {
    pub fn max_rate(&self) -> f64 {
        self.rates_inf
            .iter()
            .chain(&self.rates_spectral)
            .cloned()
            .fold(0.0, f64::max)
    }
}

/// Cone invariance of the branch differentials of `sys` against `βν`.
pub fn verify_cone_invariance(
    sys: &SkewProductSystem,
    theta: f64,
    samples: usize,
) -> Result<ConeInvarianceReport> {
    let mats: Vec<DMatrix<f64>> = (0..sys.kappa()).map(|l| sys.differential(l)).collect();
    let dims = Dimensions::plain(sys.d_ss(), sys.d_u(), sys.d_c())?;
    let bound = sys.fiber.beta * sys.base.nu;
    verify_cone_invariance_matrices(&mats, &dims, theta, bound, samples, 0)
}

/// Same check for arbitrary matrices. Non-affine chart maps get a sampled
/// rate from finite differences.
pub fn verify_cone_invariance_matrices(
    mats: &[DMatrix<f64>],
    dims: &Dimensions,
    theta: f64,
    bound: f64,
    samples: usize,
    seed: u64,
) -> Result<ConeInvarianceReport> {
    let (ss, u, m) = (dims.ss, dims.u, dims.m());
    let rows = m - u;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rates_inf = Vec::new();
    let mut rates_spectral = Vec::new();
    let mut exact = Vec::new();
    let mut escapes = Vec::new();
    let tol = 1e-12;
    let pts: Vec<GrassmannPoint> = (0..samples)
        .map(|_| {
            let e = DMatrix::from_fn(rows, u, |_, _| rng.gen_range(-1.0..1.0));
            let n = spectral_norm(&e).max(1e-300);
            let r = theta * rng.gen_range(0.0..1.0f64).powf(1.0 / e.len() as f64);
            GrassmannPoint { e: e * (r / n), ss }
        })
        .collect();
    for (l, mat) in mats.iter().enumerate() {
        match chart_linear_map(mat, ss, u) {
            Ok((lin, _)) => {
                rates_inf.push(inf_norm(&lin));
                rates_spectral.push(spectral_norm(&lin));
                exact.push(true);
            }
            Err(Error::Precondition(_)) => {
                let mut r_inf: f64 = 0.0;
                let mut r_sp: f64 = 0.0;
                for p in &pts {
                    let f = |v: &DVector<f64>| {
                        plane_action(mat, &GrassmannPoint::from_vec(v, rows, u, ss))
                            .map(|g| g.to_vec())
                    };
                    if let Ok(j) = crate::numerics::finite_diff_jacobian(f, &p.to_vec(), None) {
                        r_inf = r_inf.max(inf_norm(&j));
                        r_sp = r_sp.max(spectral_norm(&j));
                    }
                }
                rates_inf.push(r_inf);
                rates_spectral.push(r_sp);
                exact.push(false);
            }
            Err(e) => return Err(e),
        }
        for (i, p) in pts.iter().enumerate() {
            if let Err(err) = plane_action_in_chart(mat, p, theta) {
                escapes.push(ChartEscapeSample {
                    branch: l,
                    sample: i,
                    reason: err.to_string(),
                });
            }
        }
    }
    let violations: Vec<usize> = (0..mats.len())
        .filter(|&l| rates_inf[l].max(rates_spectral[l]) > bound + tol)
        .collect();
    let invariant = violations.is_empty() && escapes.is_empty();
    Ok(ConeInvarianceReport {
        rates_inf,
        rates_spectral,
        exact,
        bound,
        theta,
        violations,
        escapes,
        samples,
        invariant,
    })
}

/// The skew product on `U × C^G`: stable base state `(x_ss, vec(e))`,
/// unstable `x_u`, fiber unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrassmannSystem {
    pub system: SkewProductSystem,
    pub dims: Dimensions,
    pub theta: f64,
    pub contraction_rho: f64,
    pub beta_nu: f64,
    pub d_ss_g: usize,
}

impl GrassmannSystem {
    /// Domination chain `ρ ≤ βν < ν < λ`.
    pub fn dominated(&self) -> bool {
        self.contraction_rho <= self.beta_nu + 1e-12
            && self.beta_nu < self.system.base.nu
            && self.system.base.nu < self.system.fiber.lambda
    }
}

pub fn grassmann_skew_model(sys: &SkewProductSystem, theta: f64) -> Result<GrassmannSystem> {
    let dims = Dimensions::plain(sys.d_ss(), sys.d_u(), sys.d_c())?;
    let (ss, u, m) = (dims.ss, dims.u, dims.m());
    let ne = u * (m - u);
    let d_ss_g = ss + ne;
    let bound = sys.fiber.beta * sys.base.nu;
    let mut branches = Vec::with_capacity(sys.kappa());
    let mut rho: f64 = 0.0;
    for l in 0..sys.kappa() {
        let (lin, off) = chart_linear_map(&sys.differential(l), ss, u)?;
        let r = inf_norm(&lin);
        if r * theta + off.amax() >= theta {
            return Err(Error::Precondition(format!(
                "branch {l} does not map the chart box of radius {theta} into itself"
            )));
        }
        rho = rho.max(r).max(spectral_norm(&lin));
        let b = &sys.base.branches[l];
        let mut s_lin = DMatrix::zeros(d_ss_g, d_ss_g);
        s_lin.view_mut((0, 0), (ss, ss)).copy_from(&b.s_lin);
        s_lin.view_mut((ss, ss), (ne, ne)).copy_from(&lin);
        let s_off = DVector::from_iterator(d_ss_g, b.s_off.iter().chain(off.iter()).cloned());
        branches.push(BaseBranch {
            s_lin,
            s_off,
            u_lin: b.u_lin.clone(),
            u_center: b.u_center.clone(),
        });
    }
    if rho > bound + 1e-12 {
        return Err(Error::Precondition(format!(
            "chart contraction {rho} exceeds beta * nu = {bound}"
        )));
    }
    let mut lo = sys.base.stable_domain.lo.clone();
    let mut hi = sys.base.stable_domain.hi.clone();
    lo.extend(std::iter::repeat_n(-theta, ne));
    hi.extend(std::iter::repeat_n(theta, ne));
    let base = HorseshoeBase {
        stable_domain: IntervalBox::new(lo, hi)?,
        unstable_domain: sys.base.unstable_domain.clone(),
        branches,
        nu: sys.base.nu,
        alpha: sys.base.alpha,
    };
    let coupling = sys.coupling.as_ref().map(|ks| {
        ks.iter()
            .map(|k| {
                let c = k.nrows();
                let mut kg = DMatrix::zeros(c, d_ss_g + u);
                kg.view_mut((0, 0), (c, ss)).copy_from(&k.columns(0, ss));
                kg.view_mut((0, d_ss_g), (c, u))
                    .copy_from(&k.columns(ss, u));
                kg
            })
            .collect()
    });
    let system = SkewProductSystem::new(base, sys.fiber.clone(), coupling)?;
    assert_eq!(system.d_ss(), d_ss_g);
    assert_eq!(system.d_ss() + system.d_u(), ss + u + ne);
    Ok(GrassmannSystem {
        system,
        dims,
        theta,
        contraction_rho: rho,
        beta_nu: bound,
        d_ss_g,
    })
}

fn orthonormal_frame(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if f.ncols() == 0 || f.ncols() > f.nrows() {
        return Err(Error::Dimension(format!("frame of shape {:?}", f.shape())));
    }
    // modified Gram-Schmidt with one reorthogonalization pass; unlike
    // Householder QR it keeps tiny components relatively accurate
    let scale = f.amax().max(f64::MIN_POSITIVE);
    let mut q = f.clone();
    for j in 0..q.ncols() {
        let norm0 = q.column(j).norm();
        for _ in 0..2 {
            for i in 0..j {
                let d = q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-d, &qi, 1.0);
            }
        }
        let n = q.column(j).norm();
        if n <= 1e-12 * scale || n <= 1e-12 * norm0 {
            return Err(Error::Precondition(format!(
                "frame is rank deficient at column {j}"
            )));
        }
        q.column_mut(j).scale_mut(1.0 / n);
    }
    Ok(q)
}

/// Principal angles of `E` against `F`, ascending, one per column of `E`.
pub fn principal_angles(e: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<Vec<f64>> {
    if e.nrows() != f.nrows() {
        return Err(Error::Dimension("frames live in different spaces".into()));
    }
    let qe = orthonormal_frame(e)?;
    let qf = orthonormal_frame(f)?;
    let k = qe.ncols();
    let mut cos: Vec<f64> = (qe.transpose() * &qf)
        .singular_values()
        .iter()
        .cloned()
        .collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    cos.resize(k, 0.0);
    let resid = &qe - &qf * (qf.transpose() * &qe);
    let mut sin: Vec<f64> = resid.singular_values().iter().cloned().collect();
    sin.sort_by(|a, b| a.total_cmp(b));
    let mut angles: Vec<f64> = (0..k)
        .map(|i| sin[i].min(1.0).atan2(cos[i].clamp(0.0, 1.0)))
        .collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    Ok(angles)
}

/// `E ⊂ F` up to `tol` radians.
pub fn contains(e: &DMatrix<f64>, f: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(principal_angles(e, f)?.iter().all(|&a| a <= tol))
}
