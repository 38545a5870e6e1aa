//! Property checks shared by the property tests and the acceptance run.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use parablender::folding::{
    perturb_folding, plane_samples, solve_tangency_from, solve_tangency_params, standard_folding,
};
use parablender::grassmann::{grassmann_skew_model, plane_action, GrassmannPoint};
use parablender::ifs::check_covering;
use parablender::jets::{jet_fiber_ifs, AffineFamily, Jet, MatPoly, MultiIndexSet, Poly};
use parablender::numerics::Dimensions;
use parablender::skew::{
    affine_model, certify_horizontal, graph_transform_pullback, perturb_system,
    random_horizontal_disc, SkewProductSystem,
};
use proptest::prelude::*;
use proptest::test_runner::TestRunner;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    })
}

fn near_identity(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-0.2..0.2f64, n * n)
        .prop_map(move |v| DMatrix::identity(n, n) + DMatrix::from_row_slice(n, n, &v))
}

fn plane(rows: usize, u: usize, ss: usize) -> impl Strategy<Value = GrassmannPoint> {
    prop::collection::vec(-0.3..0.3f64, rows * u)
        .prop_map(move |v| GrassmannPoint::from_vec(&DVector::from_vec(v), rows, u, ss))
}

fn monomials(k: usize, deg: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|a| (0..=deg).map(move |e| [a.clone(), vec![e]].concat()))
            .collect();
    }
    out.into_iter()
        .filter(|a| a.iter().sum::<usize>() <= deg)
        .collect()
}

/// Affine family on `R^n` with polynomial coefficients of degree ≤ 2 in
/// `k` parameters.
fn family(k: usize, n: usize) -> impl Strategy<Value = AffineFamily> {
    let idx = monomials(k, 2);
    let count = idx.len();
    (
        prop::collection::vec(-0.5..0.5f64, count * n * n),
        prop::collection::vec(-0.5..0.5f64, count * n),
    )
        .prop_map(move |(lin, off)| AffineFamily {
            linear: MatPoly {
                k,
                rows: n,
                cols: n,
                terms: idx
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        (
                            a.clone(),
                            DMatrix::from_row_slice(n, n, &lin[i * n * n..(i + 1) * n * n]),
                        )
                    })
                    .collect(),
            },
            offset: Poly {
                k,
                dim: n,
                terms: idx
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (a.clone(), DVector::from_row_slice(&off[i * n..(i + 1) * n])))
                    .collect(),
            },
        })
}

fn jet(set: Arc<MultiIndexSet>, n: usize) -> impl Strategy<Value = Jet> {
    prop::collection::vec(-1.0..1.0f64, n * set.len())
        .prop_map(move |v| Jet::from_flat(&set, n, &DVector::from_vec(v)).unwrap())
}

fn jet_case() -> impl Strategy<Value = (AffineFamily, AffineFamily, Jet, Vec<f64>)> {
    (1usize..=2, 1usize..=2, 1usize..=3).prop_flat_map(|(k, d, n)| {
        let set = Arc::new(MultiIndexSet::new(k, d));
        (
            family(k, n),
            family(k, n),
            jet(set, n),
            prop::collection::vec(-0.5..0.5f64, k),
        )
    })
}

fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * (1.0 + a.amax().max(b.amax()))
}

pub fn plane_action_is_functorial(cases: u32) -> Result<(), String> {
    let strategy = (near_identity(3), near_identity(3), plane(2, 1, 1));
    runner(cases)
        .run(&strategy, |(a, b, e)| {
            let ab = plane_action(&(&a * &b), &e).unwrap();
            let a_b = plane_action(&a, &plane_action(&b, &e).unwrap()).unwrap();
            prop_assert!(close(&ab.to_vec(), &a_b.to_vec(), 1e-10));
            let id = plane_action(&DMatrix::identity(3, 3), &e).unwrap();
            prop_assert!(close(&id.to_vec(), &e.to_vec(), 1e-14));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn plane_action_is_functorial_for_two_planes(cases: u32) -> Result<(), String> {
    let strategy = (near_identity(5), near_identity(5), plane(3, 2, 1));
    runner(cases)
        .run(&strategy, |(a, b, e)| {
            let ab = plane_action(&(&a * &b), &e).unwrap();
            let a_b = plane_action(&a, &plane_action(&b, &e).unwrap()).unwrap();
            prop_assert!(close(&ab.to_vec(), &a_b.to_vec(), 1e-10));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn grassmann_model_lifts_points_and_planes(cases: u32) -> Result<(), String> {
    let strategy = (
        any::<u64>(),
        0.0..1e-3f64,
        -1.9..1.9f64,
        -0.8..0.8f64,
        0usize..2,
        prop::collection::vec(-0.02..0.02f64, 2),
    );
    runner(cases)
        .run(&strategy, |(seed, eta, xi, y, l, e)| {
            let base = affine_model(Dimensions::plain(1, 1, 1).unwrap(), 0.75, 0.1, 0.9).unwrap();
            let sys = perturb_system(&base, eta, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let g = grassmann_skew_model(&sys, 0.025).unwrap();
            let xu = &sys.base.branches[l].u_center + DVector::from_element(1, 0.1 * xi);
            let z = SkewProductSystem::join(
                &DVector::from_element(1, xi),
                &xu,
                &DVector::from_element(1, y),
            );
            let plane = GrassmannPoint::from_vec(&DVector::from_vec(e.clone()), 2, 1, 1);
            let q = SkewProductSystem::join(
                &DVector::from_vec(vec![xi, e[0], e[1]]),
                &xu,
                &DVector::from_element(1, y),
            );
            let img = g.system.forward(l, &q);
            let fz = sys.forward(l, &z);
            let fe = plane_action(&sys.differential(l), &plane).unwrap();
            let (gs, gu, gy) = g.system.split(&img);
            prop_assert!((gs[0] - fz[0]).abs() < 1e-12);
            prop_assert!(close(&gs.rows(1, 2).into_owned(), &fe.to_vec(), 1e-12));
            prop_assert!((gu[0] - fz[1]).abs() < 1e-12);
            prop_assert!((gy[0] - fz[2]).abs() < 1e-12);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn induced_jet_maps_are_functorial(cases: u32) -> Result<(), String> {
    let strategy = jet_case();
    runner(cases)
        .run(&strategy, |(f, g, j, a0)| {
            let fg = f.compose(&g).induced_jet_map(&j, &a0).unwrap();
            let f_g = f
                .induced_jet_map(&g.induced_jet_map(&j, &a0).unwrap(), &a0)
                .unwrap();
            prop_assert!(close(&fg.flat(), &f_g.flat(), 1e-10));
            let id = AffineFamily::identity(f.linear.k, f.linear.cols)
                .induced_jet_map(&j, &a0)
                .unwrap();
            prop_assert!(close(&id.flat(), &j.flat(), 1e-14));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn induced_jet_map_commutes_with_order_zero(cases: u32) -> Result<(), String> {
    let strategy = jet_case();
    runner(cases)
        .run(&strategy, |(f, _g, j, a0)| {
            let out = f.induced_jet_map(&j, &a0).unwrap();
            prop_assert!(close(out.order0(), &f.apply(&a0, j.order0()), 1e-12));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn skew_branches_invert(cases: u32) -> Result<(), String> {
    let strategy = (
        any::<u64>(),
        0.0..1e-3f64,
        0usize..2,
        prop::collection::vec(-0.9..0.9f64, 3),
    );
    runner(cases)
        .run(&strategy, |(seed, eta, l, z)| {
            let base = affine_model(Dimensions::plain(1, 1, 1).unwrap(), 0.75, 0.1, 0.9).unwrap();
            let sys = perturb_system(&base, eta, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let z = DVector::from_vec(z);
            let back = sys.inverse(l, &sys.forward(l, &z)).unwrap();
            prop_assert!(close(&back, &z, 1e-12));
            let d = sys.differential(l);
            let dz = DVector::from_element(3, 1e-3);
            let lin = sys.forward(l, &(&z + &dz)) - sys.forward(l, &z);
            prop_assert!(close(&lin, &(&d * &dz), 1e-10));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn pullback_keeps_discs_horizontal(cases: u32) -> Result<(), String> {
    let strategy = (any::<u64>(), 0.0..1e-3f64);
    runner(cases)
        .run(&strategy, |(seed, eta)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = affine_model(Dimensions::plain(1, 1, 1).unwrap(), 0.75, 0.1, 0.9).unwrap();
            let sys = perturb_system(&base, eta, &mut rng).unwrap();
            let disc = random_horizontal_disc(&sys, 0.3, 0.5, &mut rng);
            prop_assert!(certify_horizontal(&disc, &sys, 3).unwrap().certified);
            let mut pulled = 0;
            for l in 0..sys.kappa() {
                if let Ok(p) = graph_transform_pullback(&sys, &disc, l) {
                    let cert = certify_horizontal(&p, &sys, 3).unwrap();
                    prop_assert!(cert.failed.is_empty(), "branch {l}: {:?}", cert);
                    prop_assert_eq!(cert.rect, Some(l));
                    prop_assert!(sys.fiber.candidate.signed_margin(p.anchor_y.as_slice()) > 0.0);
                    pulled += 1;
                }
            }
            prop_assert!(pulled >= 1);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn tangency_parameters_are_unique(cases: u32) -> Result<(), String> {
    let strategy = (
        any::<u64>(),
        0.0..1e-3f64,
        -2.0..2.0f64,
        0usize..8,
        prop::collection::vec(-1.0..1.0f64, 1),
    );
    runner(cases)
        .run(&strategy, |(seed, eta, x, pick, t0)| {
            let s = standard_folding(Dimensions::plain(1, 1, 1).unwrap(), 0.05).unwrap();
            let s = perturb_folding(&s, eta, seed).unwrap();
            let e = plane_samples(&s, 5, seed)[pick].clone();
            let x = DVector::from_element(1, x);
            let a = solve_tangency_params(&s, &x, &e, 1e-12, 50).unwrap();
            let start = DVector::from_vec(t0) * s.epsilon;
            if let Ok(b) = solve_tangency_from(&s, &x, &e, &start, 1e-12, 50) {
                prop_assert!((&a.t - &b.t).amax() < 1e-9, "{} vs {}", a.t, b.t);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn jet_fiber_systems_cover(cases: u32) -> Result<(), String> {
    let strategy = (0usize..3, 1usize..=2, 1usize..=2, 0.1..0.9f64);
    runner(cases)
        .run(&strategy, |(li, k, d, frac)| {
            let lambda = [0.6, 0.75, 0.9][li];
            let lower = (1.0 - lambda) / lambda;
            let b = lower + frac * (1.0 - lower);
            let ifs = jet_fiber_ifs(lambda, k, d, 1, b).unwrap();
            let cert = check_covering(&ifs, 40).unwrap();
            prop_assert!(
                cert.covered,
                "lambda {lambda}, k {k}, d {d}, b {b}: {:?}",
                cert.failures
            );
            Ok(())
        })
        .map_err(|e| e.to_string())
}
