//! Parablender witnesses and the empirical unfolding order.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::family::{Jet, ParamFamily};
use super::lift::JetSystem;
use crate::error::{Error, Result};
use crate::skew::{
    backward_orbit, blender_intersection, unstable_point, HorizontalDisc, SkewProductSystem,
};

/// Distances at or below this are treated as exact matches.
pub const DISTANCE_FLOOR: f64 = 1e-12;
const R_MIN: f64 = 1e-4;
const R_MAX: f64 = 1e-1;

/// `J(x) = J(y)` up to `jet_residual`, with `x` on the lifted local unstable
/// manifold and `y` on the lifted disc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnfoldingWitness {
    pub jet_x: Jet,
    pub jet_y: Jet,
    pub order: usize,
    pub jet_residual: f64,
    pub itinerary: Vec<usize>,
    pub anchor_parameter: Vec<f64>,
    /// Fiber jet at the end of the backward orbit of `q̂`.
    pub terminal_jet: Jet,
    pub n_steps: usize,
    pub disc_residual: f64,
    pub containment_margin: f64,
}

impl UnfoldingWitness {
    /// Copy with `offset` added to every order-zero coordinate of `jet_x`.
    pub fn broken(&self, offset: f64) -> Self {
        let mut w = self.clone();
        w.jet_x.coeffs[0].add_scalar_mut(offset);
        w.jet_residual = w.jet_x.sup_distance(&w.jet_y);
        w
    }
}

/// Steps needed so that the terminal fiber choice moves `q̂` by less than
/// `tol`: `λ^N · 2b̂ < tol`.
pub fn steps_for_tolerance(lambda: f64, b_hat: f64, tol: f64) -> usize {
    ((tol / (2.0 * b_hat)).ln() / lambda.ln()).ceil().max(0.0) as usize + 1
}

/// Runs the blender oracle on the jet model and splits the intersection
/// point into jets on both objects.
pub fn parablender_witness(
    jsys: &JetSystem,
    disc: &HorizontalDisc,
    n: usize,
    tol: f64,
) -> Result<UnfoldingWitness> {
    let sys = &jsys.system;
    let n_eff = n.max(steps_for_tolerance(sys.fiber.lambda, jsys.b_hat, tol));
    let w = blender_intersection(sys, disc, n_eff, tol).map_err(|e| match e {
        Error::OracleFailure { step, reason } => Error::OracleFailure {
            step,
            reason: format!(
                "jet model (k = {}, d = {}, a0 = {:?}): {reason}",
                jsys.k, jsys.d, jsys.a0
            ),
        },
        other => other,
    })?;
    let orbit = backward_orbit(sys, &w.point_q, &w.itinerary)?;
    let (_, _, terminal) = sys.split(orbit.states.last().expect("nonempty orbit"));
    let (_, v, _) = sys.split(&w.point_q);
    let x = unstable_point(sys, &w.itinerary, &v, &terminal);
    let jet_x = jsys.state_jet(&x);
    let jet_y = jsys.state_jet(&w.point_q);
    let jet_residual = jet_x.sup_distance(&jet_y);
    if !(jet_residual < tol) {
        return Err(Error::OracleFailure {
            step: n_eff,
            reason: format!("jet residual {jet_residual:e} above tolerance {tol:e}"),
        });
    }
    let c = jsys.plain.2;
    let terminal_jet = Jet::from_flat(&jsys.set, c, &terminal)?;
    Ok(UnfoldingWitness {
        jet_x,
        jet_y,
        order: jsys.d,
        jet_residual,
        itinerary: w.itinerary,
        anchor_parameter: jsys.a0.clone(),
        terminal_jet,
        n_steps: n_eff,
        disc_residual: w.disc_residual,
        containment_margin: w.containment_margin,
    })
}

/// Order-zero projection checked against the plain system and disc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCheck {
    pub disc_residual: f64,
    pub min_margin: f64,
    pub unstable_residual: f64,
    pub valid: bool,
}

/// Projects the witness to order zero and re-verifies it on `Φ_{a0}` with the
/// plain disc: the point lies on the disc, its backward orbit stays in the
/// cube, and the forward unstable construction reproduces it.
pub fn project_witness(
    w: &UnfoldingWitness,
    sys: &SkewProductSystem,
    disc: &HorizontalDisc,
    tol: f64,
) -> Result<ProjectionCheck> {
    let q = w.jet_y.order0().clone();
    let (xs, xu, y) = sys.split(&q);
    let disc_residual = (xu - disc.maps.g(&xs))
        .amax()
        .max((&y - disc.maps.h(&xs)).amax());
    let orbit = backward_orbit(sys, &q, &w.itinerary)?;
    let (_, _, terminal) = sys.split(orbit.states.last().expect("nonempty orbit"));
    let (_, v, _) = sys.split(&q);
    let x = unstable_point(sys, &w.itinerary, &v, &terminal);
    let unstable_residual = (x - &q).amax();
    let valid = disc_residual < tol && orbit.first_escape.is_none() && unstable_residual < tol;
    Ok(ProjectionCheck {
        disc_residual,
        min_margin: orbit.min_margin,
        unstable_residual,
        valid,
    })
}

/// A family of discs `𝒟_a`, as graph points over the stable coordinate.
pub trait DiscFamily {
    fn point_at(&self, a: &[f64], xi: &DVector<f64>) -> DVector<f64>;
}

/// `𝒟_a = 𝒟` for all `a`.
#[derive(Clone, Debug)]
pub struct ConstantFamily {
    pub disc: HorizontalDisc,
}

impl DiscFamily for ConstantFamily {
    fn point_at(&self, _a: &[f64], xi: &DVector<f64>) -> DVector<f64> {
        self.disc.point(xi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionFit {
    pub direction: Vec<f64>,
    pub radii: Vec<f64>,
    pub distances: Vec<f64>,
    /// `None` when fewer than three distances are above the floor.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub order: usize,
    pub threshold: f64,
    pub fits: Vec<DirectionFit>,
    /// Smallest fitted slope over directions.
    pub slope: Option<f64>,
    /// Every direction matched to machine precision.
    pub at_floor: bool,
    pub passed: bool,
}

fn directions(k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..k {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; k];
            v[i] = sign;
            out.push(v);
        }
    }
    if k > 1 {
        let s = 1.0 / (k as f64).sqrt();
        out.push(vec![s; k]);
        out.push(vec![-s; k]);
    }
    out
}

/// Least-squares slope of `log y` against `log x`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Distance of the continuations `x_a` and `y_a` at `a = a0 + s`.
///
/// `x_a` keeps the stable coordinate of the witness, takes the unstable
/// coordinate from the representative of `jet_x`, and follows the fiber of
/// `Φ_a` forward from the representative of the terminal jet. `y_a` is the
/// point of `𝒟_a` over the stable coordinate of the representative of
/// `jet_y`.
pub fn continuation_distance(
    w: &UnfoldingWitness,
    fam: &ParamFamily,
    discs: &dyn DiscFamily,
    s: &[f64],
) -> f64 {
    let (ss, u) = (fam.base.d_ss(), fam.base.d_u());
    let a: Vec<f64> = w
        .anchor_parameter
        .iter()
        .zip(s)
        .map(|(x, y)| x + y)
        .collect();
    let mut y = w.terminal_jet.eval(s);
    for &l in w.itinerary.iter().rev() {
        y = fam.fiber[l].apply(&a, &y);
    }
    let x0 = w.jet_x.order0();
    let xu = w.jet_x.eval(s).rows(ss, u).into_owned();
    let x_a = SkewProductSystem::join(&x0.rows(0, ss).into_owned(), &xu, &y);
    let xi = w.jet_y.eval(s).rows(0, ss).into_owned();
    let y_a = discs.point_at(&a, &xi);
    (x_a - y_a).amax()
}

/// Fits `log d(x_a, y_a)` against `log ‖a - a0‖` on a log grid of
/// `samples` radii in `[1e-4, 1e-1]` along each axis direction and the
/// diagonals; passes when the smallest slope exceeds `d + 0.3`.
pub fn unfolding_order_check(
    w: &UnfoldingWitness,
    fam: &ParamFamily,
    discs: &dyn DiscFamily,
    samples: usize,
) -> Result<SlopeReport> {
    if samples < 3 {
        return Err(Error::Precondition(format!(
            "need at least 3 samples, got {samples}"
        )));
    }
    if w.anchor_parameter.len() != fam.k {
        return Err(Error::Dimension(
            "witness parameter does not match the family".into(),
        ));
    }
    let radii: Vec<f64> = (0..samples)
        .map(|i| {
            let t = i as f64 / (samples - 1) as f64;
            (R_MIN.ln() + t * (R_MAX.ln() - R_MIN.ln())).exp()
        })
        .collect();
    let mut fits = Vec::new();
    for dir in directions(fam.k) {
        let distances: Vec<f64> = radii
            .iter()
            .map(|r| {
                let s: Vec<f64> = dir.iter().map(|v| v * r).collect();
                continuation_distance(w, fam, discs, &s)
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = radii
            .iter()
            .zip(&distances)
            .filter(|(_, d)| **d > DISTANCE_FLOOR)
            .map(|(r, d)| (*r, *d))
            .unzip();
        let slope = (xs.len() >= 3).then(|| log_slope(&xs, &ys));
        fits.push(DirectionFit {
            direction: dir,
            radii: radii.clone(),
            distances,
            slope,
        });
    }
    let slope = fits.iter().filter_map(|f| f.slope).reduce(f64::min);
    let threshold = w.order as f64 + 0.3;
    let at_floor = slope.is_none();
    let passed = slope.is_none_or(|s| s > threshold);
    Ok(SlopeReport {
        order: w.order,
        threshold,
        fits,
        slope,
        at_floor,
        passed,
    })
}
