//! Desk-scale pipelines built from the library, with staged reports.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::folding::{
    appendix_derivative_check, certify_folding, default_epsilon, induced_disc, perturb_folding,
    standard_folding, tangency_certificate, FoldingManifold, TangencyCertificate,
};
use crate::grassmann::{
    grassmann_skew_model, verify_cone_invariance, GrassmannPoint, GrassmannSystem,
};
use crate::ifs::{check_covering, delta_bound, lebesgue_number, product_fiber_ifs};
use crate::jets::{
    constant_family_disc, jet_dim, jet_fiber_ifs, jet_skew_model, lift_system, lifted_chart_check,
    lifted_disc_norm_check, parablender_witness, project_witness, unfolding_order_check,
    ConstantFamily, MultiIndexSet, ParamFamily, UnfoldingWitness, MAX_BRANCHES,
};
use crate::numerics::{binomial, inf_norm, Dimensions, IntervalBox};
use crate::skew::{
    affine_model_with, blender_intersection, certify_horizontal, itinerary_point, perturb_system,
    random_horizontal_disc, HorizontalDisc, SkewProductSystem,
};

/// Bound used for the lifted-disc derivative check.
pub const LIFTED_DISC_EPSILON: f64 = 0.05;
/// Perturbation sizes tried by the sweep.
pub const SWEEP_ETAS: [f64; 5] = [1e-4, 1e-3, 1e-2, 3e-2, 1e-1];
const ANGLE_TOL: f64 = 1e-8;
const CONSISTENCY_TOL: f64 = 1e-8;
const SLOPE_SAMPLES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Covering,
    Blender,
    Tangency,
    CycleUnfolding,
    Paratangency,
    AppendixVerify,
    Sweep,
}

impl Pipeline {
    pub const ALL: [Pipeline; 7] = [
        Pipeline::Covering,
        Pipeline::Blender,
        Pipeline::Tangency,
        Pipeline::CycleUnfolding,
        Pipeline::Paratangency,
        Pipeline::AppendixVerify,
        Pipeline::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Covering => "covering",
            Pipeline::Blender => "blender",
            Pipeline::Tangency => "tangency",
            Pipeline::CycleUnfolding => "cycle-unfolding",
            Pipeline::Paratangency => "paratangency",
            Pipeline::AppendixVerify => "appendix-verify",
            Pipeline::Sweep => "sweep",
        }
    }
}

impl FromStr for Pipeline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pipeline {s:?}")))
    }
}

/// Flat scenario configuration; every key is optional in the TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub ss: usize,
    pub u: usize,
    pub c: usize,
    pub k: usize,
    pub d: usize,
    pub lambda: f64,
    pub beta: f64,
    pub nu: f64,
    pub b: f64,
    pub theta: f64,
    /// Folding size; `0.1 · min(√δ, θ)` when absent.
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub alpha: f64,
    pub n_steps: usize,
    pub tol: f64,
    pub eta: f64,
    pub seed: u64,
    pub sweep_count: usize,
    /// Random discs tried by the blender pipeline.
    pub discs: usize,
    pub max_depth: usize,
    pub rho: f64,
    /// Per-coordinate anchor values; the anchor grid is their `k`-fold product.
    pub anchors: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            ss: 1,
            u: 1,
            c: 1,
            k: 1,
            d: 1,
            lambda: 0.75,
            beta: 0.8,
            nu: 0.1,
            b: 0.9,
            theta: 0.5,
            epsilon: None,
            delta: 0.3,
            alpha: 2.0,
            n_steps: 60,
            tol: 1e-10,
            eta: 1e-3,
            seed: 7,
            sweep_count: 20,
            discs: 100,
            max_depth: 40,
            rho: 0.05,
            anchors: vec![0.0, 0.1, -0.1],
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dims(&self) -> Result<Dimensions> {
        Dimensions::new(self.ss, self.u, self.c, self.k, self.d)
    }

    pub fn plain_dims(&self) -> Result<Dimensions> {
        Dimensions::plain(self.ss, self.u, self.c)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
            .unwrap_or_else(|| default_epsilon(self.delta, self.theta))
    }

    /// Anchor parameters `{anchors}^k`; the single empty anchor when `k = 0`.
    pub fn anchor_grid(&self) -> Vec<Vec<f64>> {
        let mut grid = vec![Vec::new()];
        for _ in 0..self.k {
            grid = grid
                .into_iter()
                .flat_map(|a| {
                    self.anchors.iter().map(move |v| {
                        let mut b = a.clone();
                        b.push(*v);
                        b
                    })
                })
                .collect();
        }
        grid
    }

    /// `λL/2` for the plain fiber cover, when it is certified.
    pub fn delta_max(&self) -> Result<f64> {
        let ifs = product_fiber_ifs(self.lambda, self.c, self.b)?;
        let cert = check_covering(&ifs, self.max_depth)?;
        delta_bound(self.lambda, lebesgue_number(&ifs, &cert)?)
    }

    /// Violated hypotheses for `pipeline`; empty when the config is usable.
    pub fn validate(&self, pipeline: Pipeline) -> Vec<String> {
        let mut v = Vec::new();
        let dims = match self.dims() {
            Ok(d) => d,
            Err(e) => return vec![e.to_string()],
        };
        if !(0.5 < self.lambda && self.lambda < 1.0) {
            v.push(format!("need 1/2 < lambda < 1, got {}", self.lambda));
        }
        if !(0.0 < self.nu && self.nu < self.lambda && self.lambda < self.beta && self.beta < 1.0) {
            v.push(format!(
                "need 0 < nu < lambda < beta < 1, got nu = {}, lambda = {}, beta = {}",
                self.nu, self.lambda, self.beta
            ));
        }
        let lower = (1.0 - self.lambda) / self.lambda;
        if pipeline != Pipeline::Covering && !(lower < self.b && self.b < 1.0) {
            v.push(format!(
                "need (1-lambda)/lambda = {lower} < b < 1, got {}",
                self.b
            ));
        }
        for (name, x) in [
            ("delta", self.delta),
            ("alpha", self.alpha),
            ("theta", self.theta),
            ("tol", self.tol),
            ("rho", self.rho),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name} must be positive, got {x}"));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                v.push(format!("epsilon must lie in (0, 1), got {e}"));
            }
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            v.push(format!("eta must be non-negative, got {}", self.eta));
        }
        for (name, x) in [
            ("n_steps", self.n_steps),
            ("sweep_count", self.sweep_count),
            ("discs", self.discs),
            ("max_depth", self.max_depth),
        ] {
            if x == 0 {
                v.push(format!("{name} must be positive"));
            }
        }
        if self.c > 12 {
            v.push(format!("fiber dimension {} above 12", self.c));
        }
        let needs_delta = !matches!(pipeline, Pipeline::Covering | Pipeline::AppendixVerify);
        if needs_delta && v.is_empty() {
            match self.delta_max() {
                Ok(dm) if self.delta < dm => {}
                Ok(dm) => v.push(format!(
                    "need delta < lambda L / 2 = {dm}, got {}",
                    self.delta
                )),
                Err(e) => v.push(format!("lambda L / 2 unavailable: {e}")),
            }
        }
        let m = dims.m();
        let c = self.c;
        let tangency = matches!(
            pipeline,
            Pipeline::Tangency | Pipeline::Paratangency | Pipeline::Sweep
        );
        let cycle = matches!(pipeline, Pipeline::CycleUnfolding | Pipeline::Sweep);
        let jets = matches!(
            pipeline,
            Pipeline::CycleUnfolding | Pipeline::Paratangency | Pipeline::Sweep
        );
        if tangency {
            if !dims.is_folding_compatible() {
                v.push(format!(
                    "folding needs c = u^2, got u = {}, c = {c}",
                    self.u
                ));
            }
            if m <= c * c + c {
                v.push(format!("tangency needs m > c^2 + c, got m = {m}"));
            }
        }
        if cycle && m <= 1 + c {
            v.push(format!("cycles need m > 1 + c, got m = {m}"));
        }
        if jets || pipeline == Pipeline::Covering {
            if jets && self.d == 0 {
                v.push("jet pipelines need d >= 1".into());
            }
            let c_hat = c * binomial(self.d + self.k, self.d);
            if c_hat >= usize::BITS as usize || (1usize << c_hat) > MAX_BRANCHES {
                v.push(format!(
                    "2^{c_hat} jet branches exceed the cap of {MAX_BRANCHES}"
                ));
            }
        }
        if jets && self.anchors.is_empty() {
            v.push("anchors must not be empty".into());
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

/// Stages in execution order. A failing stage halts the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub pipeline: String,
    pub stages: Vec<StageReport>,
    pub passed: bool,
    pub halted_after: Option<String>,
    /// Wall-clock seconds per stage; not serialized so reports stay
    /// reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl PipelineReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per stage with the scalar entries of its detail.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "pipeline {}: {}",
            self.pipeline,
            pass_word(self.passed)
        );
        for s in &self.stages {
            let _ = writeln!(out, "  [{}] {}", pass_word(s.passed), s.name);
            for (k, v) in scalar_entries(&s.detail) {
                let _ = writeln!(out, "      {k} = {v}");
            }
        }
        if let Some(h) = &self.halted_after {
            let _ = writeln!(out, "  halted after stage {h}");
        }
        out
    }

    /// Rows `pipeline,stage,passed,key,value` for the scalar detail entries.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["pipeline", "stage", "passed", "key", "value"])
            .expect("in-memory write");
        for s in &self.stages {
            let passed = s.passed.to_string();
            let entries = scalar_entries(&s.detail);
            if entries.is_empty() {
                w.write_record([self.pipeline.as_str(), &s.name, &passed, "", ""])
                    .expect("in-memory write");
            }
            for (k, v) in entries {
                w.write_record([self.pipeline.as_str(), &s.name, &passed, &k, &v])
                    .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

fn pass_word(p: bool) -> &'static str {
    if p {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Top-level entries that are scalars or short numeric arrays.
fn scalar_entries(v: &Value) -> Vec<(String, String)> {
    let Value::Object(map) = v else {
        return Vec::new();
    };
    map.iter()
        .filter_map(|(k, v)| match v {
            Value::Null | Value::Bool(_) | Value::Number(_) | Value::String(_) => {
                Some((k.clone(), v.to_string()))
            }
            Value::Array(a) if a.len() <= 8 && a.iter().all(|x| x.is_number() || x.is_null()) => {
                Some((k.clone(), v.to_string()))
            }
            _ => None,
        })
        .collect()
}

struct Runner {
    report: PipelineReport,
}

impl Runner {
    fn new(p: Pipeline) -> Self {
        Runner {
            report: PipelineReport {
                pipeline: p.name().into(),
                stages: Vec::new(),
                passed: false,
                halted_after: None,
                timings: Vec::new(),
            },
        }
    }

    /// Runs a stage unless an earlier one failed; errors become failed
    /// stages.
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<(bool, Value, T)>) -> Option<T> {
        if self.report.halted_after.is_some() {
            return None;
        }
        let t0 = Instant::now();
        let out = f();
        self.report
            .timings
            .push((name.into(), t0.elapsed().as_secs_f64()));
        let (passed, detail, value) = match out {
            Ok((p, d, v)) => (p, d, Some(v)),
            Err(e) => (false, json!({ "error": e.to_string() }), None),
        };
        self.report.stages.push(StageReport {
            name: name.into(),
            passed,
            detail,
        });
        if !passed {
            self.report.halted_after = Some(name.into());
            return None;
        }
        value
    }

    fn finish(mut self) -> PipelineReport {
        self.report.passed = !self.report.stages.is_empty() && self.report.halted_after.is_none();
        self.report
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

fn with_beta(mut sys: SkewProductSystem, beta: f64) -> Result<SkewProductSystem> {
    sys.fiber.beta = beta;
    sys.validate()?;
    Ok(sys)
}

/// Validates the config for the pipeline and runs it.
pub fn run_pipeline(p: Pipeline, cfg: &ScenarioConfig) -> Result<PipelineReport> {
    let violations = cfg.validate(p);
    if !violations.is_empty() {
        return Err(Error::Config(violations.join("; ")));
    }
    Ok(match p {
        Pipeline::Covering => run_covering(cfg),
        Pipeline::Blender => run_blender(cfg),
        Pipeline::Tangency => run_tangency(cfg),
        Pipeline::CycleUnfolding => run_cycle_unfolding(cfg),
        Pipeline::Paratangency => run_paratangency(cfg),
        Pipeline::AppendixVerify => run_appendix_verify(cfg),
        Pipeline::Sweep => run_sweep(cfg),
    })
}

/// Plain and jet fiber covers, the Lebesgue number and `δ_max = λL/2`.
pub fn run_covering(cfg: &ScenarioConfig) -> PipelineReport {
    let mut r = Runner::new(Pipeline::Covering);
    let plain = r.stage("plain-cover", || {
        let ifs = product_fiber_ifs(cfg.lambda, cfg.c, cfg.b)?;
        let cert = check_covering(&ifs, cfg.max_depth)?;
        Ok((cert.covered, to_value(&cert), (ifs, cert)))
    });
    let l = plain.and_then(|(ifs, cert)| {
        r.stage("lebesgue", || {
            let l = lebesgue_number(&ifs, &cert)?;
            let dm = delta_bound(cfg.lambda, l)?;
            let detail = json!({ "lebesgue_number": l, "delta_max": dm, "delta": cfg.delta, "delta_admissible": cfg.delta < dm });
            Ok((l > 0.0, detail, l))
        })
    });
    if let Some(l) = l {
        r.stage("jet-cover", || {
            let ifs = jet_fiber_ifs(cfg.lambda, cfg.k, cfg.d, cfg.c, cfg.b)?;
            let cert = check_covering(&ifs, cfg.max_depth)?;
            let l_hat = if cert.covered {
                Some(lebesgue_number(&ifs, &cert)?)
            } else {
                None
            };
            let detail = json!({
                "k": cfg.k,
                "d": cfg.d,
                "c_hat": ifs.dim(),
                "branches": ifs.kappa(),
                "covered": cert.covered,
                "lebesgue_number": l_hat,
                "plain_lebesgue_number": l,
                "below_plain": l_hat.map(|x| x <= l + 1e-12),
                "failures": to_value(&cert.failures),
            });
            Ok((cert.covered, detail, ()))
        });
    }
    r.finish()
}

fn build_affine(cfg: &ScenarioConfig) -> Result<SkewProductSystem> {
    with_beta(
        affine_model_with(cfg.plain_dims()?, cfg.lambda, cfg.nu, cfg.b, cfg.alpha)?,
        cfg.beta,
    )
}

#[derive(Default)]
struct DiscTally {
    runs: usize,
    ok: usize,
    max_residual: f64,
    min_margin: f64,
    max_diameter: f64,
    errors: Vec<String>,
}

impl DiscTally {
    fn new() -> Self {
        DiscTally {
            min_margin: f64::INFINITY,
            ..Default::default()
        }
    }

    fn run(&mut self, sys: &SkewProductSystem, disc: &HorizontalDisc, cfg: &ScenarioConfig) {
        self.runs += 1;
        let res = certify_horizontal(disc, sys, 3).and_then(|c| {
            if !c.certified {
                return Err(Error::Precondition(format!(
                    "disc not horizontal: conditions {:?}",
                    c.failed
                )));
            }
            blender_intersection(sys, disc, cfg.n_steps, cfg.tol)
        });
        match res {
            Ok(w) => {
                self.max_residual = self.max_residual.max(w.disc_residual);
                self.min_margin = self.min_margin.min(w.containment_margin);
                self.max_diameter = self.max_diameter.max(w.domain_diameter);
                if w.disc_residual < cfg.tol && w.containment_margin >= 0.0 {
                    self.ok += 1;
                }
            }
            Err(e) => {
                if self.errors.len() < 5 {
                    self.errors.push(e.to_string());
                }
            }
        }
    }

    fn detail(&self) -> Value {
        json!({
            "runs": self.runs,
            "succeeded": self.ok,
            "max_disc_residual": self.max_residual,
            "min_containment_margin": self.min_margin,
            "max_domain_diameter": self.max_diameter,
            "errors": self.errors,
        })
    }

    fn passed(&self) -> bool {
        self.runs > 0 && self.ok == self.runs
    }
}

/// Random horizontal discs against the affine model and its perturbations.
pub fn run_blender(cfg: &ScenarioConfig) -> PipelineReport {
    let mut r = Runner::new(Pipeline::Blender);
    let sys = r.stage("model", || {
        let sys = build_affine(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let worst = sys.base.cone_contraction_sample(&mut rng, 500);
        let nu2 = sys.base.nu * sys.base.nu;
        let detail = json!({
            "kappa": sys.kappa(),
            "lambda": sys.fiber.lambda,
            "beta": sys.fiber.beta,
            "nu": sys.base.nu,
            "b": cfg.b,
            "cone_contraction": worst,
            "nu_squared": nu2,
        });
        Ok((worst <= nu2 + 1e-12, detail, sys))
    });
    let Some(sys) = sys else { return r.finish() };
    let ok = r.stage("covering", || {
        let cert = check_covering(&sys.fiber, cfg.max_depth)?;
        let l = lebesgue_number(&sys.fiber, &cert)?;
        let dm = delta_bound(sys.fiber.lambda, l)?;
        let detail = json!({ "covered": cert.covered, "lebesgue_number": l, "delta_max": dm, "delta": cfg.delta });
        Ok((cert.covered && cfg.delta < dm, detail, ()))
    });
    if ok.is_none() {
        return r.finish();
    }
    let ok = r.stage("random-discs", || {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut t = DiscTally::new();
        for _ in 0..cfg.discs {
            let disc = random_horizontal_disc(&sys, cfg.delta, 0.5, &mut rng);
            t.run(&sys, &disc, cfg);
        }
        Ok((t.passed(), t.detail(), ()))
    });
    if ok.is_none() {
        return r.finish();
    }
    r.stage("perturbed", || {
        let mut t = DiscTally::new();
        for i in 0..cfg.sweep_count {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64 + 1));
            match perturb_system(&sys, cfg.eta, &mut rng) {
                Ok(p) => {
                    let disc = random_horizontal_disc(&p, cfg.delta, 0.5, &mut rng);
                    t.run(&p, &disc, cfg);
                }
                Err(e) => {
                    t.runs += 1;
                    t.errors.push(e.to_string());
                }
            }
        }
        let mut detail = t.detail();
        detail["eta"] = json!(cfg.eta);
        Ok((t.passed(), detail, ()))
    });
    r.finish()
}

/// Standard folding manifold for the config, its fold centered on
/// rectangle 0 of `sys`.
fn folding_for(cfg: &ScenarioConfig, sys: &SkewProductSystem) -> Result<FoldingManifold> {
    standard_folding(cfg.plain_dims()?, cfg.epsilon())?
        .with_u_offset(sys.base.branches[0].u_center.clone())
}

/// The tangency plane against the two cone fields at the witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub plane_norm: f64,
    pub cone_width: f64,
    pub in_unstable_cone: bool,
    /// `α ‖e_ss‖∞`; below 1 the plane misses the strong-stable cone.
    pub strong_stable_product: f64,
    pub disjoint_from_strong_stable: bool,
}

fn cone_check(plane: &GrassmannPoint, theta: f64, alpha: f64) -> ConeCheck {
    let plane_norm = plane.norm();
    let prod = alpha * inf_norm(&plane.e_ss());
    ConeCheck {
        plane_norm,
        cone_width: theta,
        in_unstable_cone: plane_norm <= theta,
        strong_stable_product: prod,
        disjoint_from_strong_stable: prod < 1.0,
    }
}

/// Splits a Grassmannian state `(x_ss, e, x_u, y)` into a point of `R^m`
/// and a plane.
fn split_grassmann(g: &GrassmannSystem, q: &DVector<f64>) -> (DVector<f64>, GrassmannPoint) {
    let (ss, u, m) = (g.dims.ss, g.dims.u, g.dims.m());
    let (xs, xu, y) = g.system.split(q);
    let point = SkewProductSystem::join(&xs.rows(0, ss).into_owned(), &xu, &y);
    let plane = GrassmannPoint::from_vec(&xs.rows(ss, xs.len() - ss).into_owned(), m - u, u, ss);
    (point, plane)
}

struct TangencyOutcome {
    certificate: TangencyCertificate,
    cones: ConeCheck,
    max_angle: f64,
}

fn tangency_passed(o: &TangencyOutcome) -> bool {
    o.certificate.tangent
        && o.max_angle < ANGLE_TOL
        && o.cones.in_unstable_cone
        && o.cones.disjoint_from_strong_stable
}

/// Grassmannian model, induced disc, intersection and certificate in one go.
fn tangency_chain(
    cfg: &ScenarioConfig,
    sys: &SkewProductSystem,
    s: &FoldingManifold,
) -> Result<TangencyOutcome> {
    let g = grassmann_skew_model(sys, s.theta_s)?;
    let disc = induced_disc(s, s.theta_s, cfg.alpha, cfg.delta)?;
    let hc = certify_horizontal(&disc, &g.system, 3)?;
    if !hc.certified {
        return Err(Error::Precondition(format!(
            "induced disc not horizontal: conditions {:?}",
            hc.failed
        )));
    }
    let w = blender_intersection(&g.system, &disc, cfg.n_steps, cfg.tol)?;
    certificate_from(cfg, s, &g, &w.point_q, w.itinerary)
}

fn certificate_from(
    cfg: &ScenarioConfig,
    s: &FoldingManifold,
    g: &GrassmannSystem,
    q: &DVector<f64>,
    itinerary: Vec<usize>,
) -> Result<TangencyOutcome> {
    let (point, plane) = split_grassmann(g, q);
    let certificate = tangency_certificate(s, &point, &plane, itinerary, ANGLE_TOL)?;
    let max_angle = certificate
        .containment_angles
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    Ok(TangencyOutcome {
        cones: cone_check(&plane, cfg.theta, cfg.alpha),
        certificate,
        max_angle,
    })
}

/// Affine model, Grassmannian model, folding manifold, induced disc,
/// blender intersection and tangency certificate, then seeded
/// perturbations of both the system and the manifold.
pub fn run_tangency(cfg: &ScenarioConfig) -> PipelineReport {
    let mut r = Runner::new(Pipeline::Tangency);
    let Some(sys) = r.stage("model", || {
        let sys = build_affine(cfg)?;
        Ok((true, json!({ "kappa": sys.kappa(), "m": sys.m() }), sys))
    }) else {
        return r.finish();
    };
    let Some(s) = r.stage("folding", || {
        let s = folding_for(cfg, &sys)?;
        let cert = certify_folding(&s, cfg.alpha, cfg.nu, cfg.delta, 3)?;
        let mut detail = to_value(&cert);
        detail["epsilon"] = json!(s.epsilon);
        detail["theta_s"] = json!(s.theta_s);
        Ok((cert.certified, detail, s))
    }) else {
        return r.finish();
    };
    let Some(g) = r.stage("grassmann", || {
        let g = grassmann_skew_model(&sys, s.theta_s)?;
        let cones = verify_cone_invariance(&sys, s.theta_s, 200)?;
        let detail = json!({
            "d_ss_g": g.d_ss_g,
            "expected_d_ss_g": cfg.ss + cfg.u * (sys.m() - cfg.u),
            "contraction_rho": g.contraction_rho,
            "beta_nu": g.beta_nu,
            "dominated": g.dominated(),
            "cone_invariant": cones.invariant,
            "max_rate": cones.max_rate(),
        });
        let ok = g.dominated() && cones.invariant && g.d_ss_g == cfg.ss + cfg.u * (sys.m() - cfg.u);
        Ok((ok, detail, g))
    }) else {
        return r.finish();
    };
    let Some(disc) = r.stage("induced-disc", || {
        let disc = induced_disc(&s, s.theta_s, cfg.alpha, cfg.delta)?;
        let hc = certify_horizontal(&disc, &g.system, 3)?;
        Ok((hc.certified, to_value(&hc), disc))
    }) else {
        return r.finish();
    };
    let Some(w) = r.stage("intersection", || {
        let w = blender_intersection(&g.system, &disc, cfg.n_steps, cfg.tol)?;
        let detail = json!({
            "itinerary": w.itinerary,
            "disc_residual": w.disc_residual,
            "containment_margin": w.containment_margin,
            "domain_diameter": w.domain_diameter,
        });
        Ok((
            w.disc_residual < cfg.tol && w.containment_margin >= 0.0,
            detail,
            w,
        ))
    }) else {
        return r.finish();
    };
    let ok = r.stage("certificate", || {
        let o = certificate_from(cfg, &s, &g, &w.point_q, w.itinerary.clone())?;
        let detail = json!({
            "tangent": o.certificate.tangent,
            "max_angle": o.max_angle,
            "containment_angles": o.certificate.containment_angles,
            "codimension": o.certificate.codimension,
            "manifold_residual": o.certificate.manifold_residual,
            "point": o.certificate.point_x.as_slice(),
            "plane": o.certificate.plane_e.to_vec().as_slice(),
            "cones": to_value(&o.cones),
        });
        Ok((tangency_passed(&o), detail, ()))
    });
    if ok.is_none() {
        return r.finish();
    }
    r.stage("perturbations", || {
        let mut passed = 0;
        let mut max_angle: f64 = 0.0;
        let mut errors = Vec::new();
        for i in 0..cfg.sweep_count {
            let seed = cfg.seed.wrapping_add(i as u64 + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let run = perturb_system(&sys, cfg.eta, &mut rng)
                .and_then(|p| Ok((p, perturb_folding(&s, cfg.eta, seed)?)))
                .and_then(|(p, ps)| tangency_chain(cfg, &p, &ps));
            match run {
                Ok(o) => {
                    max_angle = max_angle.max(o.max_angle);
                    if tangency_passed(&o) {
                        passed += 1;
                    } else if errors.len() < 5 {
                        errors.push(format!("seed {seed}: max angle {:e}", o.max_angle));
                    }
                }
                Err(e) => {
                    if errors.len() < 5 {
                        errors.push(format!("seed {seed}: {e}"));
                    }
                }
            }
        }
        let detail = json!({
            "eta": cfg.eta,
            "runs": cfg.sweep_count,
            "passed": passed,
            "max_angle": max_angle,
            "errors": errors,
        });
        Ok((passed == cfg.sweep_count, detail, ()))
    });
    r.finish()
}

fn family_for(cfg: &ScenarioConfig) -> Result<ParamFamily> {
    ParamFamily::translations(cfg.dims()?, cfg.lambda, cfg.nu, cfg.b)
}

fn flat_disc(sys: &SkewProductSystem, cfg: &ScenarioConfig) -> HorizontalDisc {
    HorizontalDisc::flat(
        sys.base.stable_domain.clone(),
        sys.base.branches[0].u_center.clone(),
        DVector::from_element(sys.d_c(), 0.1 * cfg.b),
        cfg.alpha,
        cfg.delta,
    )
}

fn witness_summary(w: &UnfoldingWitness) -> Value {
    json!({
        "jet_residual": w.jet_residual,
        "disc_residual": w.disc_residual,
        "containment_margin": w.containment_margin,
        "n_steps": w.n_steps,
        "itinerary_head": w.itinerary.iter().take(12).collect::<Vec<_>>(),
        "jet_x": to_value(&w.jet_x),
    })
}

/// Flat stand-in for `W^s(P_a)`, lifted to jets, met by the jet blender,
/// then the empirical unfolding order.
fn cycle_at(cfg: &ScenarioConfig, fam: &ParamFamily, a0: &[f64]) -> Result<(bool, Value)> {
    let sys = with_beta(fam.at(a0)?, cfg.beta)?;
    let mut jsys = jet_skew_model(fam, a0, cfg.b, cfg.rho)?;
    jsys.system = with_beta(jsys.system, cfg.beta)?;
    let disc = flat_disc(&sys, cfg);
    let plain = certify_horizontal(&disc, &sys, 3)?;
    let lifted = constant_family_disc(&disc, &jsys.set, cfg.rho)?;
    let hc = certify_horizontal(&lifted, &jsys.system, 3)?;
    let w = parablender_witness(&jsys, &lifted, cfg.n_steps, cfg.tol)?;
    let proj = project_witness(&w, &sys, &disc, 1e-9)?;
    let slope = unfolding_order_check(&w, fam, &ConstantFamily { disc }, SLOPE_SAMPLES)?;
    let ok = plain.certified
        && hc.certified
        && jsys.covering.covered
        && w.jet_residual < cfg.tol
        && proj.valid
        && slope.passed;
    let detail = json!({
        "a0": a0,
        "b_hat": jsys.b_hat,
        "d_ss_hat": jsys.d_ss_hat,
        "d_c_hat": jsys.d_c_hat,
        "jet_cover": jsys.covering.covered,
        "disc_certified": plain.certified,
        "lifted_disc_certified": hc.certified,
        "witness": witness_summary(&w),
        "projection": to_value(&proj),
        "slope": slope.slope,
        "at_floor": slope.at_floor,
        "slope_threshold": slope.threshold,
    });
    Ok((ok, detail))
}

/// Jet witnesses at every anchor for the polynomial family and for its
/// perturbation above order `d`, then seeded perturbations at the first
/// anchor.
pub fn run_cycle_unfolding(cfg: &ScenarioConfig) -> PipelineReport {
    let mut r = Runner::new(Pipeline::CycleUnfolding);
    let Some(fam) = r.stage("family", || {
        let fam = family_for(cfg)?;
        let detail = json!({
            "branches": fam.kappa(),
            "jet_dim_state": jet_dim(cfg.ss + cfg.u + cfg.c, cfg.k, cfg.d),
        });
        Ok((true, detail, fam))
    }) else {
        return r.finish();
    };
    let anchors = cfg.anchor_grid();
    for a0 in &anchors {
        if r.stage(&format!("witness a0={a0:?}"), || {
            let (ok, d) = cycle_at(cfg, &fam, a0)?;
            Ok((ok, d, ()))
        })
        .is_none()
        {
            return r.finish();
        }
        if r.stage(&format!("perturbed a0={a0:?}"), || {
            let pf = fam.perturb_above_order(cfg.eta, cfg.seed);
            let (ok, mut d) = cycle_at(cfg, &pf, a0)?;
            d["eta"] = json!(cfg.eta);
            Ok((ok, d, ()))
        })
        .is_none()
        {
            return r.finish();
        }
    }
    r.stage("robustness", || {
        let a0 = &anchors[0];
        let mut passed = 0;
        let mut errors = Vec::new();
        for i in 0..cfg.sweep_count {
            let seed = cfg.seed.wrapping_add(i as u64 + 1);
            match cycle_at(cfg, &fam.perturb_above_order(cfg.eta, seed), a0) {
                Ok((true, _)) => passed += 1,
                Ok((false, d)) => errors.push(format!("seed {seed}: slope {}", d["slope"])),
                Err(e) => errors.push(format!("seed {seed}: {e}")),
            }
        }
        errors.truncate(5);
        let detail =
            json!({ "eta": cfg.eta, "runs": cfg.sweep_count, "passed": passed, "errors": errors });
        Ok((passed == cfg.sweep_count, detail, ()))
    });
    r.finish()
}

/// Jet-Grassmannian witness for the lifted folding disc at one anchor.
fn paratangency_at(
    cfg: &ScenarioConfig,
    fam: &ParamFamily,
    fold: &FoldingManifold,
    a0: &[f64],
) -> Result<(bool, Value)> {
    let theta = fold.theta_s;
    let sys = with_beta(fam.at(a0)?, cfg.beta)?;
    let g = grassmann_skew_model(&sys, theta)?;
    let mut jg = lift_system(&g.system, fam, a0, cfg.b, cfg.rho)?;
    jg.system = with_beta(jg.system, cfg.beta)?;
    let chart = lifted_chart_check(&sys, &jg.set, 1e-8)?;
    let chart_ok = chart.iter().all(|c| c.passed);
    let max_diag = chart.iter().map(|c| c.diagonal_norm).fold(0.0, f64::max);
    let max_upper = chart.iter().map(|c| c.max_upper).fold(0.0, f64::max);
    let disc = induced_disc(fold, theta, cfg.alpha, cfg.delta)?;
    let plain = certify_horizontal(&disc, &g.system, 3)?;
    let lifted = constant_family_disc(&disc, &jg.set, cfg.rho)?;
    let hc = certify_horizontal(&lifted, &jg.system, 2)?;
    let w = parablender_witness(&jg, &lifted, cfg.n_steps, cfg.tol)?;
    // order-zero tangency, and the plain point with the witness itinerary
    let q0 = w.jet_y.order0().clone();
    let tangency = certificate_from(cfg, fold, &g, &q0, w.itinerary.clone())?;
    let center = DVector::from_vec(g.system.base.stable_domain.center());
    let q_plain = disc.point(&itinerary_point(&g.system, &w.itinerary, &center));
    let plain_cert = certificate_from(cfg, fold, &g, &q_plain, w.itinerary.clone())?;
    let consistency = (&q_plain - &q0).amax();
    let proj = project_witness(&w, &g.system, &disc, 1e-9)?;
    let gfam = fam.with_base(g.system.base.clone())?;
    let slope = unfolding_order_check(&w, &gfam, &ConstantFamily { disc }, SLOPE_SAMPLES)?;
    let ok = chart_ok
        && plain.certified
        && hc.certified
        && jg.covering.covered
        && w.jet_residual < cfg.tol
        && tangency_passed(&tangency)
        && tangency_passed(&plain_cert)
        && consistency < CONSISTENCY_TOL
        && proj.valid
        && slope.passed;
    let detail = json!({
        "a0": a0,
        "d_ss_hat_g": jg.d_ss_hat,
        "b_hat": jg.b_hat,
        "chart_triangular": chart_ok,
        "chart_max_upper": max_upper,
        "chart_max_diagonal_norm": max_diag,
        "beta_nu": cfg.beta * cfg.nu,
        "disc_certified": plain.certified,
        "lifted_disc_certified": hc.certified,
        "witness": witness_summary(&w),
        "tangent": tangency.certificate.tangent,
        "max_angle": tangency.max_angle,
        "plain_max_angle": plain_cert.max_angle,
        "order0_vs_plain": consistency,
        "projection": to_value(&proj),
        "slope": slope.slope,
        "at_floor": slope.at_floor,
        "slope_threshold": slope.threshold,
    });
    Ok((ok, detail))
}

/// Jet-Grassmannian blender against the lifted folding disc at every
/// anchor, then with the family and the manifold perturbed.
pub fn run_paratangency(cfg: &ScenarioConfig) -> PipelineReport {
    let mut r = Runner::new(Pipeline::Paratangency);
    let Some((fam, fold)) = r.stage("setup", || {
        let fam = family_for(cfg)?;
        let fold = standard_folding(cfg.plain_dims()?, cfg.epsilon())?
            .with_u_offset(fam.base.branches[0].u_center.clone())?;
        let ne = cfg.u * (cfg.ss + cfg.c);
        let detail = json!({
            "branches": fam.kappa(),
            "epsilon": fold.epsilon,
            "theta_s": fold.theta_s,
            "d_ss_hat_g": jet_dim(cfg.ss, cfg.k, cfg.d) + jet_dim(ne, cfg.k, cfg.d),
        });
        Ok((true, detail, (fam, fold)))
    }) else {
        return r.finish();
    };
    for a0 in cfg.anchor_grid() {
        if r.stage(&format!("witness a0={a0:?}"), || {
            let (ok, d) = paratangency_at(cfg, &fam, &fold, &a0)?;
            Ok((ok, d, ()))
        })
        .is_none()
        {
            return r.finish();
        }
    }
    r.stage("perturbed", || {
        let pf = fam.perturb_above_order(cfg.eta, cfg.seed);
        let ps = perturb_folding(&fold, cfg.eta, cfg.seed)?;
        let a0 = cfg.anchor_grid().remove(0);
        let (ok, mut d) = paratangency_at(cfg, &pf, &ps, &a0)?;
        d["eta"] = json!(cfg.eta);
        Ok((ok, d, ()))
    });
    r.finish()
}

/// The three routes to `Dt(E^u)` for `u ∈ {1, 2}` and the lifted-disc
/// derivative bound.
pub fn run_appendix_verify(cfg: &ScenarioConfig) -> PipelineReport {
    let mut r = Runner::new(Pipeline::AppendixVerify);
    for u in [1usize, 2] {
        if r.stage(&format!("u={u}"), || {
            let s = standard_folding(Dimensions::plain(cfg.ss, u, u * u)?, cfg.epsilon())?;
            let rep = appendix_derivative_check(&s)?;
            Ok((rep.passed, to_value(&rep), ()))
        })
        .is_none()
        {
            return r.finish();
        }
    }
    r.stage("lifted-disc", || {
        let s = standard_folding(Dimensions::plain(cfg.ss, 1, 1)?, cfg.epsilon())?;
        let set = Arc::new(MultiIndexSet::new(cfg.k, cfg.d));
        let rep = lifted_disc_norm_check(&s, &set, cfg.rho, LIFTED_DISC_EPSILON)?;
        Ok((rep.passed, to_value(&rep), ()))
    });
    r.finish()
}

/// Every perturbed pipeline over the `η` ladder; passes when all pipelines
/// pass for `η ≤ 1e-3`.
pub fn run_sweep(cfg: &ScenarioConfig) -> PipelineReport {
    let mut r = Runner::new(Pipeline::Sweep);
    for p in [
        Pipeline::Blender,
        Pipeline::Tangency,
        Pipeline::CycleUnfolding,
        Pipeline::Paratangency,
    ] {
        r.stage(p.name(), || {
            let mut rows = Vec::new();
            let mut required = true;
            let mut max_passing: Option<f64> = None;
            for eta in SWEEP_ETAS {
                let c = ScenarioConfig { eta, ..cfg.clone() };
                let rep = run_pipeline(p, &c)?;
                if rep.passed {
                    max_passing = Some(eta);
                } else if eta <= 1e-3 {
                    required = false;
                }
                rows.push(
                    json!({ "eta": eta, "passed": rep.passed, "halted_after": rep.halted_after }),
                );
            }
            let detail = json!({ "max_passing_eta": max_passing, "runs": rows });
            Ok((required, detail, ()))
        });
    }
    r.finish()
}

/// Box of radius `r` around the origin in the given dimension; exposed for
/// callers building their own stable domains.
pub fn centered_box(dim: usize, r: f64) -> IntervalBox {
    IntervalBox::cube(dim, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ScenarioConfig::default();
        for p in Pipeline::ALL {
            assert!(cfg.validate(p).is_empty(), "{p:?}: {:?}", cfg.validate(p));
        }
        assert!((cfg.epsilon() - 0.05).abs() < 1e-15);
        assert_eq!(cfg.anchor_grid(), vec![vec![0.0], vec![0.1], vec![-0.1]]);
    }

    #[test]
    fn config_rejections() {
        let cfg = ScenarioConfig {
            c: 2,
            ..Default::default()
        };
        assert!(cfg
            .validate(Pipeline::Tangency)
            .iter()
            .any(|v| v.contains("c = u^2")));
        let cfg = ScenarioConfig {
            d: 0,
            ..Default::default()
        };
        assert!(cfg
            .validate(Pipeline::CycleUnfolding)
            .iter()
            .any(|v| v.contains("d >= 1")));
        let cfg = ScenarioConfig {
            b: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate(Pipeline::Covering).is_empty());
        assert!(!cfg.validate(Pipeline::Blender).is_empty());
        let cfg = ScenarioConfig {
            delta: 0.5,
            ..Default::default()
        };
        assert!(cfg
            .validate(Pipeline::Blender)
            .iter()
            .any(|v| v.contains("lambda L / 2")));
        assert!(ScenarioConfig::from_toml("lamda = 0.7").is_err());
        let cfg = ScenarioConfig::from_toml("lambda = 0.7\nanchors = [0.0]").unwrap();
        assert_eq!(cfg.lambda, 0.7);
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn covering_report() {
        let rep = run_covering(&ScenarioConfig::default());
        assert!(rep.passed, "{}", rep.to_text());
        let l = &rep.stage("lebesgue").unwrap().detail;
        assert!((l["lebesgue_number"].as_f64().unwrap() - 0.85).abs() < 0.01);
        let bad = run_covering(&ScenarioConfig {
            b: 1.0,
            ..Default::default()
        });
        assert!(!bad.passed);
        assert_eq!(bad.halted_after.as_deref(), Some("plain-cover"));
        assert_eq!(bad.stages.len(), 1);
        assert!(bad.to_csv().starts_with("pipeline,stage,passed,key,value"));
    }

    #[test]
    fn reports_repeat_exactly() {
        let cfg = ScenarioConfig {
            sweep_count: 2,
            discs: 5,
            ..Default::default()
        };
        assert_eq!(run_tangency(&cfg).to_json(), run_tangency(&cfg).to_json());
        assert_eq!(run_blender(&cfg).to_json(), run_blender(&cfg).to_json());
    }

    #[test]
    fn appendix_report() {
        let rep = run_appendix_verify(&ScenarioConfig::default());
        assert!(rep.passed, "{}", rep.to_text());
    }
}
