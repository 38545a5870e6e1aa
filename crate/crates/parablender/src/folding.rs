//! Folding manifolds: the quadratic fold model, its tangency parameters
//! `t(x, E)`, perturbations by bumps and the disc it induces on the
//! Grassmannian skew product.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{principal_angles, GrassmannPoint};
use crate::jets::{MultiIndexSet, Taylor};
use crate::numerics::{
    cofactors_i128, finite_diff_jacobian, grouped_inf_norm, inf_norm, sup_norm, Dimensions,
    IntervalBox, Scalar,
};
use crate::skew::{DiscMaps, HorizontalDisc};

/// Solves with `|det A| `below this are refused.
pub const MIN_DET: f64 = 0.1;
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

/// `sup |K'|` and `sup |K''|` of the quintic kernel.
const KERNEL_D1: f64 = 1.875;
const KERNEL_D2: f64 = 5.773502691896258;

/// `0.1 · min(√δ, θ)`.
pub fn default_epsilon(delta: f64, theta: f64) -> f64 {
    0.1 * delta.sqrt().min(theta)
}

/// `κ_i(z) = amp_i ∏_q K((z_q - z0_q)/r)` over `z = (x, t)`, with
/// `K(s) = 1 - S(|s|)` and `S(r) = 10r³ - 15r⁴ + 6r⁵`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: DVector<f64>,
    pub radius: f64,
    pub amplitude: DVector<f64>,
}

impl Bump {
    /// Bound on every derivative of order at most two.
    pub fn c2_size(&self) -> f64 {
        let r = self.radius;
        self.amplitude.amax() * 1f64.max(KERNEL_D1 / r).max(KERNEL_D2 / (r * r))
    }

    fn scaled<T: Scalar>(&self, z: &[T]) -> Vec<T> {
        z.iter()
            .zip(self.center.iter())
            .map(|(v, c)| (v.clone() - v.constant_like(*c)).scale(1.0 / self.radius))
            .collect()
    }

    /// Product kernel `P(z)`.
    fn profile<T: Scalar>(&self, z: &[T]) -> T {
        let s = self.scaled(z);
        let mut p = z[0].constant_like(1.0);
        for v in &s {
            p = p * kernel(v);
        }
        p
    }

    /// `∇P(z)`.
    fn profile_grad<T: Scalar>(&self, z: &[T]) -> Vec<T> {
        let s = self.scaled(z);
        let k: Vec<T> = s.iter().map(kernel).collect();
        (0..s.len())
            .map(|q| {
                let mut g = kernel_d(&s[q]).scale(1.0 / self.radius);
                for (p, kp) in k.iter().enumerate() {
                    if p != q {
                        g = g * kp.clone();
                    }
                }
                g
            })
            .collect()
    }
}

fn abs_like<T: Scalar>(s: &T) -> (T, f64) {
    if s.re() >= 0.0 {
        (s.clone(), 1.0)
    } else {
        (-s.clone(), -1.0)
    }
}

fn kernel<T: Scalar>(s: &T) -> T {
    if s.re().abs() >= 1.0 {
        return s.constant_like(0.0);
    }
    let (a, _) = abs_like(s);
    let poly = a.constant_like(10.0) - a.scale(15.0) + a.clone() * a.scale(6.0);
    a.constant_like(1.0) - a.clone() * a.clone() * a * poly
}

fn kernel_d<T: Scalar>(s: &T) -> T {
    if s.re().abs() >= 1.0 {
        return s.constant_like(0.0);
    }
    let (a, sign) = abs_like(s);
    let one_minus = a.constant_like(1.0) - a.clone();
    (a.clone() * a * one_minus.clone() * one_minus).scale(-30.0 * sign)
}

/// `S(x, t) = (x, x_u0 + (t₁..t_u), (H(t) + κ(x, t), t_{u+1}..t_c))` with
/// `H_i(t) = Σ_j t_{j+1} t_{ju+i}`, over `[-2,2]^ss × [-ε,ε]^c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldingManifold {
    pub dims: Dimensions,
    pub epsilon: f64,
    /// Unstable coordinate of `S(x, 0)`.
    pub u_offset: DVector<f64>,
    /// Chart radius of the planes handled by `induced_disc` and the
    /// certificate.
    pub theta_s: f64,
    pub perturbation: Option<Bump>,
}

pub fn standard_folding(dims: Dimensions, epsilon: f64) -> Result<FoldingManifold> {
    if dims.c != dims.u * dims.u {
        return Err(Error::Dimension(format!(
            "folding needs c = u^2, got u = {} and c = {}",
            dims.u, dims.c
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Precondition(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let reach = epsilon.max(dims.u as f64 * epsilon * epsilon);
    if reach >= 1.0 {
        return Err(Error::Precondition(format!(
            "epsilon = {epsilon} pushes central values to {reach}, outside the unit slab"
        )));
    }
    Ok(FoldingManifold {
        dims,
        epsilon,
        u_offset: DVector::zeros(dims.u),
        theta_s: 0.5 * epsilon,
        perturbation: None,
    })
}

impl FoldingManifold {
    pub fn with_u_offset(mut self, u_offset: DVector<f64>) -> Result<Self> {
        if u_offset.len() != self.dims.u {
            return Err(Error::Dimension(format!(
                "offset of length {} for u = {}",
                u_offset.len(),
                self.dims.u
            )));
        }
        self.u_offset = u_offset;
        Ok(self)
    }

    pub fn param_dim(&self) -> usize {
        self.dims.ss + self.dims.c
    }

    pub fn t_domain(&self) -> IntervalBox {
        IntervalBox::cube(self.dims.c, self.epsilon)
    }

    /// Chart box of planes, `u(m-u)` entries of half-width `θ_S`.
    pub fn plane_domain(&self) -> IntervalBox {
        let ne = self.dims.u * (self.dims.m() - self.dims.u);
        IntervalBox::cube(ne, self.theta_s)
    }

    /// Central coordinate `h(x, t)`.
    pub fn central_generic<T: Scalar>(&self, x: &[T], t: &[T]) -> Vec<T> {
        let (u, c) = (self.dims.u, self.dims.c);
        let mut out: Vec<T> = (0..c).map(|i| t[i].clone()).collect();
        let bump = self.perturbation.as_ref().map(|b| {
            let z: Vec<T> = x.iter().chain(t.iter()).cloned().collect();
            b.profile(&z)
        });
        for i in 0..u {
            let mut acc = t[0].constant_like(0.0);
            for j in 0..u {
                acc = acc + t[j].clone() * t[j * u + i].clone();
            }
            if let (Some(p), Some(b)) = (&bump, &self.perturbation) {
                acc = acc + p.scale(b.amplitude[i]);
            }
            out[i] = acc;
        }
        out
    }

    pub fn central(&self, x: &DVector<f64>, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.central_generic(x.as_slice(), t.as_slice()))
    }

    pub fn embed_generic<T: Scalar>(&self, x: &[T], t: &[T]) -> Vec<T> {
        let u = self.dims.u;
        let mut z: Vec<T> = x.to_vec();
        z.extend((0..u).map(|i| t[i].clone() + t[i].constant_like(self.u_offset[i])));
        z.extend(self.central_generic(x, t));
        z
    }

    pub fn embed(&self, x: &DVector<f64>, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.embed_generic(x.as_slice(), t.as_slice()))
    }

    /// Left inverse of `S` on its image: reads `(x, t)` off a point.
    pub fn parameters_of(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (ss, u, c) = (self.dims.ss, self.dims.u, self.dims.c);
        let x = z.rows(0, ss).into_owned();
        let t = DVector::from_fn(c, |i, _| {
            if i < u {
                z[ss + i] - self.u_offset[i]
            } else {
                z[ss + u + i]
            }
        });
        (x, t)
    }

    /// Columns span `T_{S(x,t)} S`, derivatives along `x` then `t`.
    pub fn tangent_frame(&self, x: &DVector<f64>, t: &DVector<f64>) -> DMatrix<f64> {
        let n = self.param_dim();
        let set = Arc::new(MultiIndexSet::new(n, 1));
        let vars: Vec<Taylor> = x
            .iter()
            .chain(t.iter())
            .enumerate()
            .map(|(i, &v)| Taylor::variable(&set, v, i))
            .collect();
        let (xs, ts) = vars.split_at(self.dims.ss);
        let z = self.embed_generic(xs, ts);
        jacobian_of(&z, &set)
    }

    /// Rows `k·u + i` of `R(t) = g_i(t'_k, t) + Dκ_i (a_k, t'_k) - c_{ki}`
    /// for frame vectors `v_k = (a_k, b_k, c_k)`, `t'_k = (b_k, c_{k,u+1..})`.
    pub fn tangency_residual_generic<T: Scalar>(
        &self,
        x: &[T],
        frame: &[Vec<T>],
        t: &[T],
    ) -> Vec<T> {
        let (ss, u, c) = (self.dims.ss, self.dims.u, self.dims.c);
        let grad = self.perturbation.as_ref().map(|b| {
            let z: Vec<T> = x.iter().chain(t.iter()).cloned().collect();
            b.profile_grad(&z)
        });
        let mut out = Vec::with_capacity(c);
        for v in frame.iter().take(u) {
            let a = &v[0..ss];
            let b = &v[ss..ss + u];
            let cc = &v[ss + u..ss + u + c];
            let tp: Vec<T> = b.iter().chain(cc[u..].iter()).cloned().collect();
            let dir_dot = grad.as_ref().map(|g| {
                let mut acc = t[0].constant_like(0.0);
                for (gq, wq) in g.iter().zip(a.iter().chain(tp.iter())) {
                    acc = acc + gq.clone() * wq.clone();
                }
                acc
            });
            for i in 0..u {
                let mut r = -cc[i].clone();
                for j in 0..u {
                    r = r
                        + tp[j].clone() * t[j * u + i].clone()
                        + t[j].clone() * tp[j * u + i].clone();
                }
                if let (Some(d), Some(bump)) = (&dir_dot, &self.perturbation) {
                    r = r + d.scale(bump.amplitude[i]);
                }
                out.push(r);
            }
        }
        out
    }

    fn residual(&self, x: &DVector<f64>, frame: &DMatrix<f64>, t: &DVector<f64>) -> DVector<f64> {
        let cols = frame_columns(frame);
        DVector::from_vec(self.tangency_residual_generic(x.as_slice(), &cols, t.as_slice()))
    }

    /// Exact Jacobian of the residual in `t`.
    fn residual_jacobian(
        &self,
        x: &DVector<f64>,
        frame: &DMatrix<f64>,
        t: &DVector<f64>,
    ) -> DMatrix<f64> {
        let c = self.dims.c;
        let set = Arc::new(MultiIndexSet::new(c, 1));
        let lift = |v: f64| Taylor::constant(&set, v);
        let xs: Vec<Taylor> = x.iter().map(|&v| lift(v)).collect();
        let cols: Vec<Vec<Taylor>> = frame_columns(frame)
            .into_iter()
            .map(|col| col.into_iter().map(lift).collect())
            .collect();
        let ts: Vec<Taylor> = t
            .iter()
            .enumerate()
            .map(|(i, &v)| Taylor::variable(&set, v, i))
            .collect();
        jacobian_of(&self.tangency_residual_generic(&xs, &cols, &ts), &set)
    }

    fn check_point(&self, x: &DVector<f64>, e: &GrassmannPoint) -> Result<()> {
        let (ss, u, m) = (self.dims.ss, self.dims.u, self.dims.m());
        if x.len() != ss {
            return Err(Error::Dimension(format!(
                "base point of length {} for ss = {ss}",
                x.len()
            )));
        }
        if e.e.shape() != (m - u, u) || e.ss != ss {
            return Err(Error::Dimension(format!(
                "plane chart of shape {:?} (ss = {}), expected ({}, {u}) with ss = {ss}",
                e.e.shape(),
                e.ss,
                m - u
            )));
        }
        Ok(())
    }
}

fn frame_columns(frame: &DMatrix<f64>) -> Vec<Vec<f64>> {
    frame
        .column_iter()
        .map(|c| c.iter().cloned().collect())
        .collect()
}

fn jacobian_of(z: &[Taylor], set: &Arc<MultiIndexSet>) -> DMatrix<f64> {
    let n = set.k;
    DMatrix::from_fn(z.len(), n, |r, j| z[r].c[set.unit(j).unwrap()])
}

/// Linear part of the tangency equations, `A t = c⃗`, for an arbitrary frame
/// `m × u` in `(ss, u, c)` order. Perturbations are ignored.
pub fn assemble_a_c_frame(
    dims: &Dimensions,
    frame: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (ss, u, c) = (dims.ss, dims.u, dims.c);
    if c != u * u {
        return Err(Error::Dimension(format!("c = {c} is not u^2 for u = {u}")));
    }
    if frame.shape() != (dims.m(), u) {
        return Err(Error::Dimension(format!(
            "frame of shape {:?}, expected ({}, {u})",
            frame.shape(),
            dims.m()
        )));
    }
    let mut a = DMatrix::zeros(c, c);
    let mut cv = DVector::zeros(c);
    for k in 0..u {
        let v = frame.column(k);
        let tp: Vec<f64> = (0..c)
            .map(|j| if j < u { v[ss + j] } else { v[ss + u + j] })
            .collect();
        for i in 0..u {
            let row = k * u + i;
            for j in 0..u {
                a[(row, j * u + i)] += tp[j];
                a[(row, j)] += tp[j * u + i];
            }
            cv[row] = v[ss + u + i];
        }
    }
    Ok((a, cv))
}

pub fn assemble_a_c(
    s: &FoldingManifold,
    e: &GrassmannPoint,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let x = DVector::zeros(s.dims.ss);
    s.check_point(&x, e)?;
    assemble_a_c_frame(&s.dims, &e.frame())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencySolve {
    pub t: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub a_det: f64,
}

fn newton(
    s: &FoldingManifold,
    x: &DVector<f64>,
    frame: &DMatrix<f64>,
    t0: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, f64, usize)> {
    let mut t = t0;
    let mut r = s.residual(x, frame, &t);
    let mut res = sup_norm(&r);
    for it in 0..max_iter {
        if res < tol {
            return Ok((t, res, it));
        }
        let j = s.residual_jacobian(x, frame, &t);
        let dt = j.lu().solve(&r).ok_or(Error::Singular(0.0))?;
        let mut step = 1.0;
        loop {
            let cand = &t - &dt * step;
            let rc = s.residual(x, frame, &cand);
            let rn = sup_norm(&rc);
            if rn < res || step < 1e-3 {
                t = cand;
                r = rc;
                res = rn;
                break;
            }
            step *= 0.5;
        }
    }
    if res < tol {
        Ok((t, res, max_iter))
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: res,
        })
    }
}

fn check_det(a: &DMatrix<f64>) -> Result<f64> {
    let det = a.determinant();
    if det.abs() < MIN_DET {
        return Err(Error::Precondition(format!(
            "tangency system ill-conditioned: |det A| = {:e} < {MIN_DET}",
            det.abs()
        )));
    }
    Ok(det)
}

fn in_domain(s: &FoldingManifold, t: &DVector<f64>) -> Result<()> {
    let lim = s.epsilon * (1.0 + 1e-12);
    if t.amax() > lim {
        return Err(Error::Domain(format!(
            "tangency parameter |t| = {} exceeds epsilon = {}",
            t.amax(),
            s.epsilon
        )));
    }
    Ok(())
}

/// `t` without the domain check: the linear solve when unperturbed, Newton
/// from the linear solution otherwise.
fn solve_raw(
    s: &FoldingManifold,
    x: &DVector<f64>,
    frame: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<TangencySolve> {
    let (a, cv) = assemble_a_c_frame(&s.dims, frame)?;
    let det = check_det(&a)?;
    let t_lin = a.clone().lu().solve(&cv).ok_or(Error::Singular(0.0))?;
    if s.perturbation.is_none() {
        let residual = sup_norm(&s.residual(x, frame, &t_lin));
        return Ok(TangencySolve {
            t: t_lin,
            residual,
            iterations: 1,
            a_det: det,
        });
    }
    let (t, residual, iterations) = newton(s, x, frame, t_lin, tol, max_iter)?;
    Ok(TangencySolve {
        t,
        residual,
        iterations,
        a_det: det,
    })
}

/// The unique `t ∈ [-ε,ε]^c` with `E ⊂ T_{S(x,t)} S`.
pub fn solve_tangency_params(
    s: &FoldingManifold,
    x: &DVector<f64>,
    e: &GrassmannPoint,
    tol: f64,
    max_iter: usize,
) -> Result<TangencySolve> {
    s.check_point(x, e)?;
    let frame = e.frame();
    let sol = if s.perturbation.is_none() {
        solve_raw(s, x, &frame, tol, max_iter)?
    } else {
        solve_tangency_from(s, x, e, &DVector::zeros(s.dims.c), tol, max_iter)?
    };
    if sol.residual >= tol {
        return Err(Error::NoConvergence {
            iterations: sol.iterations,
            residual: sol.residual,
        });
    }
    in_domain(s, &sol.t)?;
    Ok(sol)
}

/// Damped Newton from `t0`.
pub fn solve_tangency_from(
    s: &FoldingManifold,
    x: &DVector<f64>,
    e: &GrassmannPoint,
    t0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<TangencySolve> {
    s.check_point(x, e)?;
    let frame = e.frame();
    let (a, _) = assemble_a_c_frame(&s.dims, &frame)?;
    let det = check_det(&a)?;
    let (t, residual, iterations) = newton(s, x, &frame, t0.clone(), tol, max_iter)?;
    in_domain(s, &t)?;
    Ok(TangencySolve {
        t,
        residual,
        iterations,
        a_det: det,
    })
}

/// `t(x, E)` as a Taylor series when `x` and the chart entries of `E` are
/// series: Newton with the Jacobian frozen at the order-zero solution.
pub fn solve_tangency_jet(s: &FoldingManifold, x: &[Taylor], e: &[Taylor]) -> Result<Vec<Taylor>> {
    let (ss, u, m, c) = (s.dims.ss, s.dims.u, s.dims.m(), s.dims.c);
    let x0 = DVector::from_iterator(ss, x.iter().map(|v| v.re()));
    let e0 = GrassmannPoint::from_vec(
        &DVector::from_iterator(e.len(), e.iter().map(|v| v.re())),
        m - u,
        u,
        ss,
    );
    s.check_point(&x0, &e0)?;
    let frame0 = e0.frame();
    let sol = solve_raw(s, &x0, &frame0, NEWTON_TOL, NEWTON_MAX_ITER)?;
    let jinv = s
        .residual_jacobian(&x0, &frame0, &sol.t)
        .try_inverse()
        .ok_or(Error::Singular(0.0))?;
    let template = &x
        .first()
        .or(e.first())
        .ok_or_else(|| Error::Dimension("empty jet input".into()))?;
    let one = template.constant_like(1.0);
    let zero = template.constant_like(0.0);
    // frame columns (e_ss v, v, e_c v) with e in row-major order
    let rows = m - u;
    let mut frame: Vec<Vec<Taylor>> = vec![Vec::with_capacity(m); u];
    for (k, col) in frame.iter_mut().enumerate() {
        for r in 0..ss {
            col.push(e[r * u + k].clone());
        }
        for i in 0..u {
            col.push(if i == k { one.clone() } else { zero.clone() });
        }
        for r in ss..rows {
            col.push(e[r * u + k].clone());
        }
    }
    let mut t: Vec<Taylor> = sol.t.iter().map(|&v| template.constant_like(v)).collect();
    let d = template.set.d;
    for _ in 0..d + 2 {
        let r = s.tangency_residual_generic(x, &frame, &t);
        t = (0..c)
            .map(|i| {
                let mut acc = t[i].clone();
                for (j, rj) in r.iter().enumerate() {
                    acc = acc - rj.scale(jinv[(i, j)]);
                }
                acc
            })
            .collect();
    }
    Ok(t)
}

/// Largest sine of the angle between a frame vector and `T_{S(x,t)} S`.
pub fn containment_residual(
    s: &FoldingManifold,
    x: &DVector<f64>,
    t: &DVector<f64>,
    frame: &DMatrix<f64>,
) -> f64 {
    let q = s.tangent_frame(x, t).qr().q();
    frame
        .column_iter()
        .map(|v| {
            let v = v.into_owned();
            let p = &q * (q.transpose() * &v);
            (v.clone() - p).norm() / v.norm()
        })
        .fold(0.0, f64::max)
}

/// A point of `S` whose tangent space contains a given `u`-plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyCertificate {
    pub point_x: DVector<f64>,
    pub plane_e: GrassmannPoint,
    pub plane_frame: DMatrix<f64>,
    pub tangent_frame: DMatrix<f64>,
    pub itinerary: Vec<usize>,
    pub containment_angles: Vec<f64>,
    /// Dimension of `E ∩ T_x S` counted by angles below tolerance.
    pub intersection_dim: usize,
    pub codimension: usize,
    /// `|S(x, t) - point|` for the parameters read off the point.
    pub manifold_residual: f64,
    pub tangent: bool,
}

pub fn tangency_certificate(
    s: &FoldingManifold,
    point: &DVector<f64>,
    plane: &GrassmannPoint,
    itinerary: Vec<usize>,
    tol: f64,
) -> Result<TangencyCertificate> {
    if point.len() != s.dims.m() {
        return Err(Error::Dimension(format!(
            "point of length {} in R^{}",
            point.len(),
            s.dims.m()
        )));
    }
    let (x, t) = s.parameters_of(point);
    s.check_point(&x, plane)?;
    let manifold_residual = sup_norm(&(s.embed(&x, &t) - point));
    let tangent_frame = s.tangent_frame(&x, &t);
    let plane_frame = plane.frame();
    let angles = principal_angles(&plane_frame, &tangent_frame)?;
    let intersection_dim = angles.iter().filter(|&&a| a <= tol).count();
    let u = s.dims.u;
    Ok(TangencyCertificate {
        point_x: point.clone(),
        plane_e: plane.clone(),
        plane_frame,
        tangent_frame,
        itinerary,
        tangent: intersection_dim == u && manifold_residual <= tol,
        containment_angles: angles,
        intersection_dim,
        codimension: u,
        manifold_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldingCertificate {
    pub certified: bool,
    pub embedding_ok: bool,
    pub anchor_ok: bool,
    pub anchor_y: DVector<f64>,
    pub anchor_distance: f64,
    pub tangency_ok: bool,
    pub uniqueness_ok: bool,
    pub uniqueness_gap: f64,
    pub max_containment_residual: f64,
    /// `max(1, sup ‖Dh‖∞)`, the floor coming from the identity rows of `h`.
    pub dh_norm: f64,
    pub dh_norm_raw: f64,
    /// Sup of `‖Dt‖∞`, rows against the entries of one frame vector at a time.
    pub dt_norm: f64,
    pub dt_at_origin: f64,
    pub constant_c: f64,
    /// `δ - C ν`.
    pub inequality_margin: f64,
    pub alpha_ok: bool,
    pub solves: usize,
    pub failures: Vec<String>,
}

fn x_samples(s: &FoldingManifold, grid_n: usize, budget: usize) -> Vec<DVector<f64>> {
    IntervalBox::cube(s.dims.ss, 2.0)
        .samples(grid_n, budget)
        .into_iter()
        .map(DVector::from_vec)
        .collect()
}

/// Center, the axis points at `±θ_S`, and seeded uniform points.
pub fn plane_samples(s: &FoldingManifold, count: usize, seed: u64) -> Vec<GrassmannPoint> {
    let (ss, u, m) = (s.dims.ss, s.dims.u, s.dims.m());
    let rows = m - u;
    let ne = rows * u;
    let th = s.theta_s;
    let mut vs: Vec<DVector<f64>> = vec![DVector::zeros(ne)];
    for a in 0..ne {
        for sign in [-1.0, 1.0] {
            let mut v = DVector::zeros(ne);
            v[a] = sign * th;
            vs.push(v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        vs.push(DVector::from_fn(ne, |_, _| rng.gen_range(-th..=th)));
    }
    vs.iter()
        .map(|v| GrassmannPoint::from_vec(v, rows, u, ss))
        .collect()
}

fn frame_groups(s: &FoldingManifold) -> Vec<Vec<usize>> {
    let (ss, u, m) = (s.dims.ss, s.dims.u, s.dims.m());
    let rows = m - u;
    let mut groups: Vec<Vec<usize>> = (0..u)
        .map(|k| (0..rows).map(|r| ss + r * u + k).collect())
        .collect();
    for q in 0..ss {
        groups.push(vec![q]);
    }
    groups
}

/// `Dt` at `(x, E)` by central differences, columns `(x, vec(e))`.
pub fn dt_finite_difference(
    s: &FoldingManifold,
    x: &DVector<f64>,
    e: &GrassmannPoint,
) -> Result<DMatrix<f64>> {
    let (ss, u, m) = (s.dims.ss, s.dims.u, s.dims.m());
    let z = DVector::from_iterator(
        ss + e.e.len(),
        x.iter().cloned().chain(e.to_vec().iter().cloned()),
    );
    finite_diff_jacobian(
        |z| {
            let x = z.rows(0, ss).into_owned();
            let ev = z.rows(ss, z.len() - ss).into_owned();
            let pe = GrassmannPoint::from_vec(&ev, m - u, u, ss);
            Ok(solve_raw(s, &x, &pe.frame(), NEWTON_TOL, NEWTON_MAX_ITER)?.t)
        },
        &z,
        None,
    )
}

/// Grouped norm of `Dt` at `(x, E)`.
pub fn dt_norm_at(s: &FoldingManifold, x: &DVector<f64>, e: &GrassmannPoint) -> Result<f64> {
    Ok(grouped_inf_norm(
        &dt_finite_difference(s, x, e)?,
        &frame_groups(s),
    ))
}

/// `‖Dh(x, t)‖∞` by central differences over `(x, t)`.
pub fn dh_norm_at(s: &FoldingManifold, x: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
    let ss = s.dims.ss;
    let z = DVector::from_iterator(ss + t.len(), x.iter().chain(t.iter()).cloned());
    let j = finite_diff_jacobian(
        |z| {
            let (x, t) = (
                z.rows(0, ss).into_owned(),
                z.rows(ss, z.len() - ss).into_owned(),
            );
            Ok(s.central(&x, &t))
        },
        &z,
        None,
    )?;
    Ok(inf_norm(&j))
}

/// Sampled `(sup ‖Dh‖∞, sup ‖Dt‖∞)`.
fn measure_norms(s: &FoldingManifold, grid_n: usize) -> Result<(f64, f64)> {
    let mut dh: f64 = 0.0;
    for x in x_samples(s, grid_n.min(3), 27) {
        for t in s.t_domain().samples(grid_n, 256) {
            dh = dh.max(dh_norm_at(s, &x, &DVector::from_vec(t))?);
        }
    }
    let mut dt: f64 = 0.0;
    for x in x_samples(s, grid_n.min(3), 27) {
        for e in plane_samples(s, grid_n, 5) {
            dt = dt.max(dt_norm_at(s, &x, &e)?);
        }
    }
    Ok((dh, dt))
}

/// Checks the three folding conditions with anchor `y = 0`.
pub fn certify_folding(
    s: &FoldingManifold,
    alpha: f64,
    nu: f64,
    delta: f64,
    grid_n: usize,
) -> Result<FoldingCertificate> {
    let (ss, c) = (s.dims.ss, s.dims.c);
    let grid_n = grid_n.max(2);
    let mut failures = Vec::new();
    let anchor_y = DVector::zeros(c);

    // (1) embedding: the left inverse recovers the parameters on the grid
    let mut embed_err: f64 = 0.0;
    let mut anchor_distance: f64 = 0.0;
    let ts: Vec<DVector<f64>> = s
        .t_domain()
        .samples(grid_n, 256)
        .into_iter()
        .map(DVector::from_vec)
        .collect();
    let xs = x_samples(s, grid_n, 64);
    for x in &xs {
        for t in &ts {
            let z = s.embed(x, t);
            let (xb, tb) = s.parameters_of(&z);
            embed_err = embed_err.max(sup_norm(&(xb - x))).max(sup_norm(&(tb - t)));
            anchor_distance = anchor_distance.max(sup_norm(&(s.central(x, t) - &anchor_y)));
        }
    }
    let embedding_ok = embed_err <= 1e-14;
    if !embedding_ok {
        failures.push(format!(
            "embedding: parameters recovered with error {embed_err:e}"
        ));
    }
    // (2)
    let anchor_ok = anchor_distance < delta;
    if !anchor_ok {
        failures.push(format!(
            "anchor: sup |h - y| = {anchor_distance} is not below delta = {delta}"
        ));
    }

    // (3) tangency, uniqueness, and the Lipschitz inequality
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let planes = plane_samples(s, grid_n * grid_n, 3);
    let mut solves = 0;
    let mut tangency_ok = true;
    let mut uniqueness_gap: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    for x in x_samples(s, grid_n.min(3), 27) {
        for e in &planes {
            solves += 1;
            let sol = match solve_tangency_params(s, &x, e, NEWTON_TOL, NEWTON_MAX_ITER) {
                Ok(sol) => sol,
                Err(err) => {
                    tangency_ok = false;
                    if failures.len() < 32 {
                        failures.push(format!(
                            "tangency at x = {:?}, e = {:?}: {err}",
                            x.as_slice(),
                            e.to_vec().as_slice()
                        ));
                    }
                    continue;
                }
            };
            max_res = max_res.max(containment_residual(s, &x, &sol.t, &e.frame()));
            let start = DVector::from_fn(c, |_, _| rng.gen_range(-s.epsilon..=s.epsilon));
            match solve_tangency_from(s, &x, e, &start, NEWTON_TOL, NEWTON_MAX_ITER) {
                Ok(other) => uniqueness_gap = uniqueness_gap.max(sup_norm(&(other.t - &sol.t))),
                Err(_) => uniqueness_gap = f64::INFINITY,
            }
        }
    }
    if max_res > 1e-10 {
        tangency_ok = false;
        failures.push(format!("tangency: containment residual {max_res:e}"));
    }
    let uniqueness_ok = uniqueness_gap <= 1e-9;
    if !uniqueness_ok {
        failures.push(format!(
            "uniqueness: Newton starts disagree by {uniqueness_gap:e}"
        ));
    }
    let (dh_raw, dt) = if tangency_ok {
        measure_norms(s, grid_n)?
    } else {
        (f64::NAN, f64::NAN)
    };
    let dh = dh_raw.max(1.0);
    let constant_c = dh * dt.max(1.0);
    let inequality_margin = delta - constant_c * nu;
    if !(inequality_margin > 0.0) {
        failures.push(format!(
            "inequality: C nu = {} is not below delta = {delta}",
            constant_c * nu
        ));
    }
    let alpha_ok = dt <= alpha;
    if !alpha_ok {
        failures.push(format!("alpha: |Dt| = {dt} exceeds alpha = {alpha}"));
    }
    let origin = GrassmannPoint::origin(&s.dims);
    let dt_at_origin = dt_norm_at(s, &DVector::zeros(ss), &origin).unwrap_or(f64::NAN);
    Ok(FoldingCertificate {
        certified: failures.is_empty(),
        embedding_ok,
        anchor_ok,
        anchor_y,
        anchor_distance,
        tangency_ok,
        uniqueness_ok,
        uniqueness_gap,
        max_containment_residual: max_res,
        dh_norm: dh,
        dh_norm_raw: dh_raw,
        dt_norm: dt,
        dt_at_origin,
        constant_c,
        inequality_margin,
        alpha_ok,
        solves,
        failures,
    })
}

/// `(x, E) ↦ (x_u0 + t_{1..u}(x, E), h(x, t(x, E)))` over
/// `[-2,2]^ss × [-θ,θ]^{u(m-u)}`.
#[derive(Clone, Debug)]
pub struct FoldingDisc {
    pub fold: FoldingManifold,
}

impl FoldingDisc {
    fn split(&self, xi: &DVector<f64>) -> (DVector<f64>, GrassmannPoint) {
        let (ss, u, m) = (self.fold.dims.ss, self.fold.dims.u, self.fold.dims.m());
        let x = xi.rows(0, ss).into_owned();
        let ev = xi.rows(ss, xi.len() - ss).into_owned();
        (x, GrassmannPoint::from_vec(&ev, m - u, u, ss))
    }

    /// Parameters, or NaN when the plane leaves the solvable region.
    pub fn params(&self, xi: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (x, e) = self.split(xi);
        let t = solve_raw(&self.fold, &x, &e.frame(), NEWTON_TOL, NEWTON_MAX_ITER)
            .map(|s| s.t)
            .unwrap_or_else(|_| DVector::from_element(self.fold.dims.c, f64::NAN));
        (x, t)
    }
}

impl DiscMaps for FoldingDisc {
    fn g(&self, xi: &DVector<f64>) -> DVector<f64> {
        let (_, t) = self.params(xi);
        let u = self.fold.dims.u;
        t.rows(0, u).into_owned() + &self.fold.u_offset
    }

    fn h(&self, xi: &DVector<f64>) -> DVector<f64> {
        let (x, t) = self.params(xi);
        self.fold.central(&x, &t)
    }

    fn eval_jet(&self, xi: &[Taylor]) -> Option<(Vec<Taylor>, Vec<Taylor>)> {
        let ss = self.fold.dims.ss;
        let (x, e) = xi.split_at(ss);
        let t = solve_tangency_jet(&self.fold, x, e).ok()?;
        let u = self.fold.dims.u;
        let g = (0..u)
            .map(|i| t[i].clone() + t[i].constant_like(self.fold.u_offset[i]))
            .collect();
        Some((g, self.fold.central_generic(x, &t)))
    }
}

/// The disc `H^G(x, E) = (S(x, t(x, E)), E)` over the Grassmannian stable
/// domain of chart radius `theta`. Its Lipschitz constant is the sampled
/// `‖Dh‖∞ · max(1, ‖Dt‖∞)`.
pub fn induced_disc(
    s: &FoldingManifold,
    theta: f64,
    alpha: f64,
    delta: f64,
) -> Result<HorizontalDisc> {
    let mut fold = s.clone();
    fold.theta_s = theta;
    let ne = fold.dims.u * (fold.dims.m() - fold.dims.u);
    let mut lo = vec![-2.0; fold.dims.ss];
    let mut hi = vec![2.0; fold.dims.ss];
    lo.extend(std::iter::repeat_n(-theta, ne));
    hi.extend(std::iter::repeat_n(theta, ne));
    let domain = IntervalBox::new(lo, hi)?;
    for p in domain.samples(3, 512) {
        let xi = DVector::from_vec(p);
        let ss = fold.dims.ss;
        let x = xi.rows(0, ss).into_owned();
        let e = GrassmannPoint::from_vec(
            &xi.rows(ss, ne).into_owned(),
            fold.dims.m() - fold.dims.u,
            fold.dims.u,
            ss,
        );
        solve_tangency_params(&fold, &x, &e, NEWTON_TOL, NEWTON_MAX_ITER)?;
    }
    let (dh, dt) = measure_norms(&fold, 3)?;
    let lipschitz_c = dh.max(1.0) * dt.max(1.0);
    Ok(HorizontalDisc {
        domain,
        maps: Arc::new(FoldingDisc { fold: fold.clone() }),
        alpha,
        delta,
        anchor_y: DVector::zeros(fold.dims.c),
        lipschitz_c,
    })
}

/// `Dt(E^u)` computed three ways, columns `vec(e)` in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub u: usize,
    pub skipped: Option<String>,
    pub finite_difference: DMatrix<f64>,
    pub cramer: DMatrix<f64>,
    pub cofactor: DMatrix<f64>,
    pub max_disagreement: f64,
    pub dt_norm: f64,
    pub dh_norm: f64,
    pub constant_c: f64,
    pub passed: bool,
}

fn adjugate(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |j, i| {
        // adj_{ji} = cofactor_{ij}
        let minor = DMatrix::from_fn(n - 1, n - 1, |r, c| {
            let r = if r >= i { r + 1 } else { r };
            let c = if c >= j { c + 1 } else { c };
            a[(r, c)]
        });
        let sgn = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sgn * if n == 1 { 1.0 } else { minor.determinant() }
    })
}

fn replace_column(a: &DMatrix<f64>, i: usize, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    out.set_column(i, v);
    out
}

/// Derivative bounds at `E^u` for the unperturbed model.
pub fn appendix_derivative_check(s: &FoldingManifold) -> Result<AppendixReport> {
    let (ss, u, c, m) = (s.dims.ss, s.dims.u, s.dims.c, s.dims.m());
    let rows = m - u;
    let ne = rows * u;
    if s.perturbation.is_some() {
        return Ok(AppendixReport {
            u,
            skipped: Some(
                "perturbed model: the closed form holds only for the unperturbed fold at E^u"
                    .into(),
            ),
            finite_difference: DMatrix::zeros(0, 0),
            cramer: DMatrix::zeros(0, 0),
            cofactor: DMatrix::zeros(0, 0),
            max_disagreement: 0.0,
            dt_norm: f64::NAN,
            dh_norm: f64::NAN,
            constant_c: f64::NAN,
            passed: true,
        });
    }
    let origin = GrassmannPoint::origin(&s.dims);
    let x0 = DVector::zeros(ss);

    let fd_full = dt_finite_difference(s, &x0, &origin)?;
    let fd = fd_full.columns(ss, ne).into_owned();

    // Cramer and Jacobi: D t_i = (D det A*_i - tr(A⁻¹ DA) det A*_i) / det A
    let (a0, c0) = assemble_a_c(s, &origin)?;
    let det_a = a0.determinant();
    let a_inv = a0.clone().try_inverse().ok_or(Error::Singular(0.0))?;
    let mut cramer = DMatrix::zeros(c, ne);
    for col in 0..ne {
        let mut ev = DVector::zeros(ne);
        ev[col] = 1.0;
        let dir = GrassmannPoint::from_vec(&ev, rows, u, ss);
        let (a1, c1) = assemble_a_c(s, &dir)?;
        // the assembly is affine in the frame, so one difference is exact
        let da = &a1 - &a0;
        let dc = &c1 - &c0;
        let tr = (&a_inv * &da).trace();
        for i in 0..c {
            let ai = replace_column(&a0, i, &c0);
            let dai = replace_column(&da, i, &dc);
            let ddet = (adjugate(&ai) * dai).trace();
            cramer[(i, col)] = (ddet - tr * ai.determinant()) / det_a;
        }
    }

    // integer cofactors of A(E^u): D_{c_{kι}} t_i = C_{ku+ι, i} / det A
    let a_int: Vec<Vec<i128>> = (0..c)
        .map(|r| (0..c).map(|j| a0[(r, j)].round() as i128).collect())
        .collect();
    let cof = cofactors_i128(&a_int);
    let mut cofactor = DMatrix::zeros(c, ne);
    for k in 0..u {
        for iota in 0..u {
            // chart entry e[ss + iota, k]
            let col = (ss + iota) * u + k;
            for i in 0..c {
                cofactor[(i, col)] = cof[k * u + iota][i] as f64 / det_a;
            }
        }
    }

    let max_disagreement = (&fd - &cramer)
        .amax()
        .max((&fd - &cofactor).amax())
        .max((&cramer - &cofactor).amax());
    let groups: Vec<Vec<usize>> = (0..u)
        .map(|k| (0..rows).map(|r| r * u + k).collect())
        .collect();
    let dt_norm = grouped_inf_norm(&cofactor, &groups);
    let mut dh_raw: f64 = 0.0;
    for t in s.t_domain().samples(3, 256) {
        dh_raw = dh_raw.max(dh_norm_at(s, &x0, &DVector::from_vec(t))?);
    }
    let dh_norm = dh_raw.max(1.0);
    let constant_c = dh_norm * dt_norm.max(1.0);
    Ok(AppendixReport {
        u,
        skipped: None,
        passed: max_disagreement < 1e-6 && dt_norm <= 1.0 + 1e-9,
        finite_difference: fd,
        cramer,
        cofactor,
        max_disagreement,
        dt_norm,
        dh_norm,
        constant_c,
    })
}

/// Adds a seeded bump of C²-size `η` to the first `u` central coordinates.
pub fn perturb_folding(s: &FoldingManifold, eta: f64, seed: u64) -> Result<FoldingManifold> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Precondition(format!(
            "eta must be non-negative, got {eta}"
        )));
    }
    if eta == 0.0 {
        return Ok(s.clone());
    }
    let (ss, u, c) = (s.dims.ss, s.dims.u, s.dims.c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = s.epsilon;
    let scale = eta
        / 1f64
            .max(KERNEL_D1 / radius)
            .max(KERNEL_D2 / (radius * radius));
    let center = DVector::from_fn(ss + c, |i, _| {
        if i < ss {
            rng.gen_range(-1.0..=1.0)
        } else {
            rng.gen_range(-0.5..=0.5) * s.epsilon
        }
    });
    let mut amplitude = DVector::from_fn(u, |_, _| rng.gen_range(-1.0..=1.0) * scale);
    amplitude[0] = scale.copysign(amplitude[0]);
    let mut out = s.clone();
    out.perturbation = Some(Bump {
        center,
        radius,
        amplitude,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fold(u: usize, ss: usize) -> FoldingManifold {
        let dims = Dimensions::plain(ss, u, u * u).unwrap();
        standard_folding(dims, default_epsilon(0.3, 0.5)).unwrap()
    }

    fn plane(s: &FoldingManifold, e: &[f64]) -> GrassmannPoint {
        let rows = s.dims.m() - s.dims.u;
        GrassmannPoint::new(DMatrix::from_row_slice(rows, s.dims.u, e), s.dims.ss).unwrap()
    }

    #[test]
    fn standard_examples() {
        let s = fold(1, 1);
        let x = DVector::from_element(1, 0.7);
        let t = DVector::from_element(1, 0.03);
        let z = s.embed(&x, &t);
        assert_eq!(z.as_slice(), &[0.7, 0.03, 0.03 * 0.03]);

        let s2 = fold(2, 1);
        let t = DVector::from_vec(vec![0.01, 0.02, 0.03, 0.04]);
        let h = s2.central(&DVector::zeros(1), &t);
        assert_abs_diff_eq!(h[0], 0.01 * 0.01 + 0.02 * 0.03, epsilon = 1e-18);
        assert_abs_diff_eq!(h[1], 0.01 * 0.02 + 0.02 * 0.04, epsilon = 1e-18);
        assert_eq!(h[2], 0.03);
        assert_eq!(h[3], 0.04);

        let bad = Dimensions::plain(1, 2, 3).unwrap();
        assert!(matches!(
            standard_folding(bad, 0.05),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn linear_system_at_eu() {
        let s = fold(1, 1);
        let (a, c) = assemble_a_c(&s, &GrassmannPoint::origin(&s.dims)).unwrap();
        assert_eq!(a[(0, 0)], 2.0);
        assert_eq!(c[0], 0.0);

        let s2 = fold(2, 1);
        let (a, c) = assemble_a_c(&s2, &GrassmannPoint::origin(&s2.dims)).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0,
            ],
        );
        assert_eq!(a, expect);
        assert_eq!(c, DVector::zeros(4));
        for u in 1..=3 {
            let s = fold(u, 1);
            let (a, _) = assemble_a_c(&s, &GrassmannPoint::origin(&s.dims)).unwrap();
            let ai: Vec<Vec<i128>> = (0..u * u)
                .map(|r| (0..u * u).map(|j| a[(r, j)] as i128).collect())
                .collect();
            assert_eq!(crate::numerics::det_i128(&ai), 2);
        }

        // span{(0, 1, w)}: t = w/2
        let e = plane(&s, &[0.0, 0.08]);
        let (a, c) = assemble_a_c(&s, &e).unwrap();
        assert_eq!((a[(0, 0)], c[0]), (2.0, 0.08));
        let sol =
            solve_tangency_params(&s, &DVector::zeros(1), &e, NEWTON_TOL, NEWTON_MAX_ITER).unwrap();
        assert_abs_diff_eq!(sol.t[0], 0.04, epsilon = 1e-16);
    }

    #[test]
    fn tangency_solve_examples() {
        let s = fold(1, 1);
        let x = DVector::from_element(1, 0.3);
        let sol = solve_tangency_params(&s, &x, &GrassmannPoint::origin(&s.dims), NEWTON_TOL, 50)
            .unwrap();
        assert_eq!(sol.t[0], 0.0);
        assert_eq!(sol.residual, 0.0);

        let e = plane(&s, &[0.2, 0.1]);
        let sol = solve_tangency_params(&s, &x, &e, NEWTON_TOL, 50).unwrap();
        assert_abs_diff_eq!(sol.t[0], 0.05, epsilon = 1e-16);
        assert!(containment_residual(&s, &x, &sol.t, &e.frame()) < 1e-12);

        // perturbed: Newton result, compared with a dense scan of |R(t)|
        let p = perturb_folding(&s, 1e-3, 7).unwrap();
        let b = p.perturbation.as_ref().unwrap();
        let xb = DVector::from_element(1, b.center[0]);
        let sol_p = solve_tangency_params(&p, &xb, &e, NEWTON_TOL, 50).unwrap();
        assert!(sol_p.residual < 1e-12);
        assert!((sol_p.t[0] - 0.05).abs() < 1e-3);
        let frame = e.frame();
        let n = 20001;
        let best = (0..n)
            .map(|i| -s.epsilon + 2.0 * s.epsilon * i as f64 / (n - 1) as f64)
            .min_by(|a, b| {
                let ra = p.residual(&xb, &frame, &DVector::from_element(1, *a))[0].abs();
                let rb = p.residual(&xb, &frame, &DVector::from_element(1, *b))[0].abs();
                ra.total_cmp(&rb)
            })
            .unwrap();
        assert!((best - sol_p.t[0]).abs() < 2.0 * s.epsilon / (n - 1) as f64);

        // planes too far from E^u leave [-ε, ε]
        let far = plane(&s, &[0.0, 0.4]);
        assert!(matches!(
            solve_tangency_params(&s, &x, &far, NEWTON_TOL, 50),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bump_bounds() {
        let s = fold(1, 1);
        assert_eq!(perturb_folding(&s, 0.0, 1).unwrap(), s);
        let p = perturb_folding(&s, 1e-3, 1).unwrap();
        let b = p.perturbation.as_ref().unwrap();
        assert!(b.c2_size() <= 1e-3 * (1.0 + 1e-12));
        // sampled second differences stay below the bound
        let h = 1e-4;
        let f = |z: f64| b.profile(&[b.center[0], z]) * b.amplitude[0];
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let z = b.center[1] - b.radius + 2.0 * b.radius * i as f64 / 199.0;
            worst = worst.max(((f(z + h) - 2.0 * f(z) + f(z - h)) / (h * h)).abs());
        }
        assert!(worst <= 1e-3);
        assert!(worst > 1e-4);
    }

    #[test]
    fn certificate_examples() {
        let s = fold(1, 1);
        let cert = certify_folding(&s, 2.0, 0.1, 0.3, 5).unwrap();
        assert!(cert.certified, "{:?}", cert.failures);
        assert_abs_diff_eq!(cert.dt_at_origin, 0.5, epsilon = 1e-8);
        assert!(cert.anchor_distance <= s.epsilon * s.epsilon);
        let cert = certify_folding(&s, 2.0, 0.5, 0.3, 5).unwrap();
        assert!(!cert.certified);
        assert!(cert.inequality_margin <= 0.0);

        let p = perturb_folding(&s, 1e-3, 7).unwrap();
        let cert = certify_folding(&p, 2.0, 0.1, 0.3, 5).unwrap();
        assert!(cert.certified, "{:?}", cert.failures);
    }

    #[test]
    fn appendix_routes_agree() {
        let r = appendix_derivative_check(&fold(1, 1)).unwrap();
        assert!(r.passed, "{r:?}");
        assert_abs_diff_eq!(r.dt_norm, 0.5, epsilon = 1e-12);
        let r = appendix_derivative_check(&fold(2, 1)).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.dt_norm <= 1.0 + 1e-9);
        assert_abs_diff_eq!(r.dh_norm, 1.0, epsilon = 1e-9);
        let p = perturb_folding(&fold(1, 1), 1e-3, 2).unwrap();
        assert!(appendix_derivative_check(&p).unwrap().skipped.is_some());
    }

    #[test]
    fn induced_disc_examples() {
        let s = fold(1, 1);
        let disc = induced_disc(&s, s.theta_s, 2.0, 0.3).unwrap();
        assert_eq!(disc.domain.dim(), 3);
        let xi = DVector::from_vec(vec![1.5, 0.0, 0.0]);
        assert_eq!(disc.point(&xi).as_slice(), &[1.5, 0.0, 0.0, 0.0, 0.0]);
        // jets of the disc agree with finite differences of its maps
        let set = Arc::new(MultiIndexSet::new(1, 2));
        let base = [0.4, 0.01, -0.02];
        let dir = [0.1, 0.3, 0.2];
        let jet: Vec<Taylor> = base
            .iter()
            .zip(dir)
            .map(|(b, d)| Taylor::constant(&set, *b) + Taylor::variable(&set, 0.0, 0).scale(d))
            .collect();
        let (_, hj) = disc.maps.eval_jet(&jet).unwrap();
        let s_ = 1e-3;
        let at = |a: f64| DVector::from_fn(3, |i, _| base[i] + a * dir[i]);
        let h0 = disc.maps.h(&at(0.0))[0];
        let hp = disc.maps.h(&at(s_))[0];
        let hm = disc.maps.h(&at(-s_))[0];
        assert_abs_diff_eq!(hj[0].c[0], h0, epsilon = 1e-15);
        assert_abs_diff_eq!(hj[0].c[1], (hp - hm) / (2.0 * s_), epsilon = 1e-9);
        assert_abs_diff_eq!(
            hj[0].c[2],
            (hp - 2.0 * h0 + hm) / (2.0 * s_ * s_),
            epsilon = 1e-6
        );
    }

    #[test]
    fn tangency_certificate_on_manifold() {
        let s = fold(2, 1);
        let e = plane(
            &s,
            &[
                0.01, -0.02, 0.01, 0.005, -0.01, 0.0, 0.02, 0.01, -0.015, 0.0,
            ],
        );
        let x = DVector::from_element(1, -0.5);
        let sol = solve_tangency_params(&s, &x, &e, NEWTON_TOL, 50).unwrap();
        let z = s.embed(&x, &sol.t);
        let cert = tangency_certificate(&s, &z, &e, vec![0, 1], 1e-8).unwrap();
        assert!(cert.tangent, "{:?}", cert.containment_angles);
        assert_eq!(cert.intersection_dim, 2);
        let off = tangency_certificate(&s, &z, &plane(&s, &[0.0; 10]), vec![], 1e-8).unwrap();
        assert!(!off.tangent);
    }
}
