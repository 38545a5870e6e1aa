//! The lifted Grassmannian chart map and the derivative bound of the
//! lifted folding disc.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::family::Jet;
use super::taylor::{MultiIndexSet, Taylor};
use crate::error::{Error, Result};
use crate::folding::{solve_tangency_jet, FoldingManifold};
use crate::grassmann::chart_linear_map;
use crate::numerics::{
    finite_diff_jacobian, grouped_inf_norm, inf_norm, solve_generic, IntervalBox, Scalar,
};
use crate::skew::SkewProductSystem;

/// `J(E_a) ↦ J(M E_a)` in graph coordinates: `e' = rest · mid⁻¹` with the
/// frame `[e_ss; I; e_c]`, `e` row-major `(m-u) × u`.
pub fn jet_plane_action(
    m: &DMatrix<f64>,
    e: &[Taylor],
    ss: usize,
    u: usize,
) -> Result<Vec<Taylor>> {
    let n = m.nrows();
    let rows = n - u;
    if e.len() != rows * u || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{} chart entries for a {n} x {} matrix",
            e.len(),
            m.ncols()
        )));
    }
    let t = &e[0];
    let frame = |r: usize, k: usize| -> Taylor {
        if r < ss {
            e[r * u + k].clone()
        } else if r < ss + u {
            t.constant_like(if r - ss == k { 1.0 } else { 0.0 })
        } else {
            e[(r - u) * u + k].clone()
        }
    };
    let image: Vec<Vec<Taylor>> = (0..n)
        .map(|i| {
            (0..u)
                .map(|k| {
                    (0..n).fold(t.constant_like(0.0), |acc, j| {
                        if m[(i, j)] == 0.0 {
                            acc
                        } else {
                            acc + frame(j, k).scale(m[(i, j)])
                        }
                    })
                })
                .collect()
        })
        .collect();
    // row r of e' solves mid^T x = (row r of rest)^T
    let mid_t: Vec<Vec<Taylor>> = (0..u)
        .map(|i| (0..u).map(|j| image[ss + j][i].clone()).collect())
        .collect();
    let rest: Vec<usize> = (0..ss).chain(ss + u..n).collect();
    let mut out = Vec::with_capacity(rows * u);
    for &r in &rest {
        out.extend(solve_generic(&mid_t, &image[r])?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedChartReport {
    pub branch: usize,
    /// Largest entry above the block diagonal, in graded order.
    pub max_upper: f64,
    /// Largest deviation of a diagonal block from `P`.
    pub max_diagonal_deviation: f64,
    /// Largest deviation of the Jacobian diagonal from the diagonal of `P`.
    pub max_eigen_deviation: f64,
    pub diagonal_norm: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Finite-difference Jacobian of the lifted chart map at `J(E^u) = 0`,
/// checked for block lower-triangularity with diagonal blocks `P`, the
/// chart linear map, and for `‖P‖∞ ≤ βν`.
pub fn lifted_chart_check(
    sys: &SkewProductSystem,
    set: &Arc<MultiIndexSet>,
    tol: f64,
) -> Result<Vec<LiftedChartReport>> {
    let (ss, u) = (sys.d_ss(), sys.d_u());
    let ne = u * (sys.m() - u);
    let n = set.len();
    let bound = sys.fiber.beta * sys.base.nu;
    let mut out = Vec::new();
    for l in 0..sys.kappa() {
        let m = sys.differential(l);
        let (p, _) = chart_linear_map(&m, ss, u)?;
        let jac = finite_diff_jacobian(
            |v| {
                let e = Jet::from_flat(set, ne, v)?.to_taylor();
                let img = jet_plane_action(&m, &e, ss, u)?;
                Ok(Jet::from_taylor(set, &img).flat())
            },
            &DVector::zeros(n * ne),
            None,
        )?;
        let mut max_upper: f64 = 0.0;
        let mut dev: f64 = 0.0;
        let mut eig_dev: f64 = 0.0;
        let mut diag_norm: f64 = 0.0;
        for bi in 0..n {
            for bj in 0..n {
                let block = jac.view((bi * ne, bj * ne), (ne, ne)).into_owned();
                if bj > bi {
                    max_upper = max_upper.max(block.amax());
                } else if bj == bi {
                    dev = dev.max((&block - &p).amax());
                    diag_norm = diag_norm.max(inf_norm(&block));
                    for q in 0..ne {
                        eig_dev = eig_dev.max((block[(q, q)] - p[(q, q)]).abs());
                    }
                }
            }
        }
        out.push(LiftedChartReport {
            branch: l,
            max_upper,
            max_diagonal_deviation: dev,
            max_eigen_deviation: eig_dev,
            diagonal_norm: diag_norm,
            bound,
            passed: max_upper <= tol && dev <= tol && diag_norm <= bound + 1e-6,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedDiscNormReport {
    /// `sup ‖dĥ/dJ(x, t)‖∞`.
    pub dh_norm: f64,
    /// `sup` of the grouped norm of `dt̂/dJ(x, E)`.
    pub dt_norm: f64,
    /// `max(1, dh) · max(1, dt)`.
    pub constant: f64,
    /// The same product at `J(E^u)`.
    pub constant_at_eu: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub samples: usize,
    pub passed: bool,
}

fn lifted_groups(ss: usize, rows: usize, u: usize, n: usize) -> Vec<Vec<usize>> {
    let blk = ss + rows * u;
    let mut groups = Vec::new();
    for p in 0..n {
        for k in 0..u {
            groups.push((0..rows).map(|r| p * blk + ss + r * u + k).collect());
        }
        for q in 0..ss {
            groups.push(vec![p * blk + q]);
        }
    }
    groups
}

/// Samples `‖Dĥ^G‖∞ ≤ max(1, ‖dĥ/dJ(t)‖)·max(1, ‖dt̂/dJ(E)‖)` over
/// `([-2,2]^ss × C^G) × B_ρ(0)` and compares with `1 + ε`. The order-zero
/// plane block ranges over the chart radius of the manifold.
pub fn lifted_disc_norm_check(
    s: &FoldingManifold,
    set: &Arc<MultiIndexSet>,
    rho: f64,
    epsilon: f64,
) -> Result<LiftedDiscNormReport> {
    let (ss, u, m, c) = (s.dims.ss, s.dims.u, s.dims.m(), s.dims.c);
    let rows = m - u;
    let ne = rows * u;
    let n = set.len();
    let blk = ss + ne;
    let mut lo = vec![-2.0; ss];
    let mut hi = vec![2.0; ss];
    lo.extend(std::iter::repeat_n(-s.theta_s, ne));
    hi.extend(std::iter::repeat_n(s.theta_s, ne));
    for _ in 1..n {
        lo.extend(std::iter::repeat_n(-rho, blk));
        hi.extend(std::iter::repeat_n(rho, blk));
    }
    let domain = IntervalBox::new(lo, hi)?;
    let groups = lifted_groups(ss, rows, u, n);
    // columns are ordered (x, vec e) per block; the jet solver wants them split
    let split = |v: &DVector<f64>| -> Result<(Vec<Taylor>, Vec<Taylor>)> {
        let j = Jet::from_flat(set, blk, v)?;
        Ok((j.slice(0, ss).to_taylor(), j.slice(ss, ne).to_taylor()))
    };
    let t_hat = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let (x, e) = split(v)?;
        Ok(Jet::from_taylor(set, &solve_tangency_jet(s, &x, &e)?).flat())
    };
    let h_hat = |w: &DVector<f64>| -> Result<DVector<f64>> {
        let j = Jet::from_flat(set, ss + c, w)?;
        let (x, t) = (j.slice(0, ss).to_taylor(), j.slice(ss, c).to_taylor());
        Ok(Jet::from_taylor(set, &s.central_generic(&x, &t)).flat())
    };
    let norms_at = |v: &DVector<f64>| -> Result<(f64, f64)> {
        let dt = grouped_inf_norm(&finite_diff_jacobian(t_hat, v, None)?, &groups);
        let t = Jet::from_flat(set, c, &t_hat(v)?)?;
        let x = Jet::from_flat(set, blk, v)?.slice(0, ss);
        let w = x.stack(&t).flat();
        let dh = inf_norm(&finite_diff_jacobian(h_hat, &w, None)?);
        Ok((dh, dt))
    };
    let mut dh: f64 = 0.0;
    let mut dt: f64 = 0.0;
    let pts = domain.samples(2, 256);
    for p in &pts {
        let (a, b) = norms_at(&DVector::from_vec(p.clone()))?;
        dh = dh.max(a);
        dt = dt.max(b);
    }
    let (a0, b0) = norms_at(&DVector::zeros(n * blk))?;
    let constant = dh.max(1.0) * dt.max(1.0);
    Ok(LiftedDiscNormReport {
        dh_norm: dh,
        dt_norm: dt,
        constant,
        constant_at_eu: a0.max(1.0) * b0.max(1.0),
        epsilon,
        rho,
        samples: pts.len() + 1,
        passed: constant <= 1.0 + epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folding::standard_folding;
    use crate::grassmann::{plane_action, GrassmannPoint};
    use crate::jets::family::ParamFamily;
    use crate::numerics::Dimensions;

    #[test]
    fn order_zero_matches_the_plane_action() {
        let m = DMatrix::from_row_slice(3, 3, &[0.05, 0.0, 0.1, 0.0, 20.0, 0.0, 0.2, 0.0, 0.75]);
        let set = Arc::new(MultiIndexSet::new(1, 2));
        let e = GrassmannPoint::new(DMatrix::from_column_slice(2, 1, &[0.1, -0.2]), 1).unwrap();
        let jets: Vec<Taylor> = e
            .to_vec()
            .iter()
            .map(|v| Taylor::constant(&set, *v))
            .collect();
        let img = jet_plane_action(&m, &jets, 1, 1).unwrap();
        let direct = plane_action(&m, &e).unwrap().to_vec();
        for (a, b) in img.iter().zip(direct.iter()) {
            assert!((a.re() - b).abs() < 1e-15);
            assert!(a.c[1..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn lifted_chart_is_block_triangular() {
        let fam =
            ParamFamily::translations(Dimensions::new(1, 1, 1, 1, 1).unwrap(), 0.75, 0.1, 0.9)
                .unwrap();
        let reports = lifted_chart_check(&fam.at(&[0.0]).unwrap(), &fam.index_set(), 1e-8).unwrap();
        assert_eq!(reports.len(), 4);
        for r in reports {
            assert!(r.passed, "{r:?}");
            assert!(r.max_eigen_deviation < 1e-8);
        }
    }

    #[test]
    fn lifted_folding_disc_bound() {
        let s = standard_folding(Dimensions::new(1, 1, 1, 1, 1).unwrap(), 0.05).unwrap();
        let set = Arc::new(MultiIndexSet::new(1, 1));
        let r = lifted_disc_norm_check(&s, &set, 0.05, 0.05).unwrap();
        assert!((r.constant_at_eu - 1.0).abs() < 1e-6, "{r:?}");
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn lifted_folding_disc_meets_the_jet_grassmann_blender() {
        use crate::folding::{default_epsilon, induced_disc};
        use crate::jets::{
            constant_family_disc, jet_grassmann_model, parablender_witness, DEFAULT_RHO,
        };
        use crate::skew::certify_horizontal;

        let fam =
            ParamFamily::translations(Dimensions::new(1, 1, 1, 1, 1).unwrap(), 0.75, 0.1, 0.9)
                .unwrap();
        let s = standard_folding(
            Dimensions::plain(1, 1, 1).unwrap(),
            default_epsilon(0.3, 0.5),
        )
        .unwrap()
        .with_u_offset(fam.base.branches[0].u_center.clone())
        .unwrap();
        let jg = jet_grassmann_model(&fam, &[0.0], 0.9, s.theta_s, DEFAULT_RHO).unwrap();
        let disc = induced_disc(&s, s.theta_s, 2.0, 0.3).unwrap();
        let lifted = constant_family_disc(&disc, &jg.set, DEFAULT_RHO).unwrap();
        let cert = certify_horizontal(&lifted, &jg.system, 2).unwrap();
        assert!(cert.certified, "{cert:?}");
        let w = parablender_witness(&jg, &lifted, 12, 1e-10).unwrap();
        assert!(w.jet_residual < 1e-10);
    }
}
