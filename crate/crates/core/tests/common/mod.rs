//! Shared oracles for the integration and acceptance tests.
//!
//! Every function here computes a measurement from first principles
//! (analytic fields, brute-force perturbations, refined quadrature) so the
//! tests can compare it against the library's own answer.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use flowtopo::config::RunConfig;
use flowtopo::exec::Execution;
use flowtopo::fem::{ScalarP2Matrices, Tables, Vec2};
use flowtopo::mesh::TriMesh;
use flowtopo::optimizer::Problem;
use flowtopo::quadrature::Quadrature;
use flowtopo::sensitivity::{adjoint_state, alpha_gradient, objective};
use flowtopo::smoothing::Smoother;
use flowtopo::stokes::{AlphaField, BodyForce, StokesDiscretization, VelocityBc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ── tolerances ──────────────────────────────────────────────────────────

/// Minimal observed L2 convergence order of the Taylor-Hood velocity.
pub const VELOCITY_ORDER: f64 = 2.8;
/// Minimal observed L2 convergence order of the P1 pressure.
pub const PRESSURE_ORDER: f64 = 1.8;
/// Net boundary flux of a discretely divergence-free field.
pub const NET_FLUX_TOL: f64 = 1e-8;
/// Inlet flux against the analytic profile integral 0.2.
pub const INLET_FLUX_TOL: f64 = 1e-6;
/// L2 distance of the smoothed cosine from its exact damping.
pub const SPECTRAL_TOL: f64 = 1e-3;
/// Contraction and linearity of the smoother over random fields.
pub const SMOOTHER_ALGEBRA_TOL: f64 = 1e-10;
/// Relative mismatch between finite differences and the adjoint.
pub const ADJOINT_REL_TOL: f64 = 0.01;
/// Fraction of flipped elements whose objective change has the predicted sign.
pub const FLIP_AGREEMENT: f64 = 0.85;
/// Unit-norm preservation of the spherical update.
pub const NORM_TOL: f64 = 1e-10;
/// Projection accuracy on the fluid volume.
pub const EPS_C: f64 = 1e-4;

// ── manufactured Stokes-Brinkman solution ───────────────────────────────
//
// Stream function phi = (1 + (1 - x)^3) sin(pi y), u = (d_y phi, -d_x phi),
// p = (1 - x) cos(pi y). Both d_x u and p vanish on x = 1, so the
// do-nothing outflow condition holds exactly.

pub fn mms_velocity(x: Vec2) -> Vec2 {
    let (s, c) = (PI * x[1]).sin_cos();
    let a = 1.0 + (1.0 - x[0]).powi(3);
    let b = 3.0 * (1.0 - x[0]).powi(2);
    [a * PI * c, b * s]
}

pub fn mms_pressure(x: Vec2) -> f64 {
    (1.0 - x[0]) * (PI * x[1]).cos()
}

pub fn mms_force(x: Vec2, alpha: f64) -> Vec2 {
    let (s, c) = (PI * x[1]).sin_cos();
    let r = 1.0 - x[0];
    let a = 1.0 + r.powi(3);
    let b = 3.0 * r * r;
    let lap_u1 = PI * c * (6.0 * r - PI * PI * a);
    let lap_u2 = s * (6.0 - PI * PI * b);
    let u = mms_velocity(x);
    [
        -lap_u1 + alpha * u[0] - c,
        -lap_u2 + alpha * u[1] - PI * r * s,
    ]
}

/// L2 errors of velocity and pressure for the all-fluid manufactured
/// problem on an `n x n` mesh.
pub fn mms_errors(n: usize, exec: Execution) -> (f64, f64) {
    let cfg = RunConfig::default();
    let mesh = Arc::new(TriMesh::unit_square(n).unwrap());
    let tables = Tables::default();
    let stokes = StokesDiscretization::new(mesh.clone(), tables.clone(), exec).unwrap();
    let psi = vec![-1.0; mesh.n_vertices()];
    let alpha = AlphaField::from_levelset(&mesh, &tables, &psi, cfg.alpha_l, cfg.alpha_u);
    let force = BodyForce::Nodal(
        mesh.p2_nodes()
            .iter()
            .map(|&x| mms_force(x, cfg.alpha_l))
            .collect(),
    );
    let exact = |x: Vec2| mms_velocity(x);
    let system = stokes.assemble(&alpha, &force, VelocityBc::Function(&exact));
    let (state, _, _) = stokes.solve(system).unwrap();

    let points = tables.points(&mesh);
    let weights = tables.weights(&mesh);
    let uh = tables.eval_p2_vec(&mesh, &state.u);
    let ph = tables.eval_p1(&mesh, &state.p);
    let (mut eu, mut ep) = (0.0, 0.0);
    for q in 0..weights.len() {
        let u = mms_velocity(points[q]);
        eu += weights[q] * ((uh[q][0] - u[0]).powi(2) + (uh[q][1] - u[1]).powi(2));
        ep += weights[q] * (ph[q] - mms_pressure(points[q])).powi(2);
    }
    (eu.sqrt(), ep.sqrt())
}

pub fn observed_order(e_coarse: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).log2()
}

// ── smoother ────────────────────────────────────────────────────────────

/// `|u_s - u / (1 + dt pi^2)|` in L2 for `u = (cos pi x, 0)`.
pub fn smoother_spectral_error(n: usize, dt: f64) -> f64 {
    let mesh = TriMesh::unit_square(n).unwrap();
    let tables = Tables::default();
    let matrices = Arc::new(ScalarP2Matrices::assemble(
        &mesh,
        &tables,
        Execution::default(),
    ));
    let smoother = Smoother::new(matrices, dt, Execution::default()).unwrap();
    let u: Vec<Vec2> = mesh
        .p2_nodes()
        .iter()
        .map(|x| [(PI * x[0]).cos(), 0.0])
        .collect();
    let us = smoother.smooth(&u).unwrap();
    let vals = tables.eval_p2_vec(&mesh, &us.u_s);
    let factor = 1.0 / (1.0 + dt * PI * PI);
    tables
        .points(&mesh)
        .iter()
        .zip(tables.weights(&mesh))
        .zip(&vals)
        .map(|((x, w), v)| w * ((v[0] - factor * (PI * x[0]).cos()).powi(2) + v[1].powi(2)))
        .sum::<f64>()
        .sqrt()
}

/// Worst contraction excess `(|S u| - |u|) / |u|` and worst relative
/// linearity defect of the smoother over `count` random fields.
pub fn smoother_algebra(n: usize, dt: f64, count: usize, seed: u64) -> (f64, f64) {
    let mesh = TriMesh::unit_square(n).unwrap();
    let tables = Tables::default();
    let matrices = Arc::new(ScalarP2Matrices::assemble(
        &mesh,
        &tables,
        Execution::default(),
    ));
    let smoother = Smoother::new(matrices.clone(), dt, Execution::default()).unwrap();
    let norm = |f: &[Vec2]| -> f64 {
        (0..2)
            .map(|c| {
                let x: Vec<f64> = f.iter().map(|v| v[c]).collect();
                let mx = matrices.mass_times(&x);
                x.iter().zip(&mx).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = || -> Vec<Vec2> {
        (0..mesh.n_p2())
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect()
    };
    let (mut contraction, mut linearity) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..count {
        let (u, w) = (random(), random());
        let (a, b) = (1.7, -0.6);
        let su = smoother.smooth(&u).unwrap().u_s;
        let sw = smoother.smooth(&w).unwrap().u_s;
        let comb: Vec<Vec2> = u
            .iter()
            .zip(&w)
            .map(|(x, y)| [a * x[0] + b * y[0], a * x[1] + b * y[1]])
            .collect();
        let sc = smoother.smooth(&comb).unwrap().u_s;
        contraction = contraction.max((norm(&su) - norm(&u)) / norm(&u));
        let defect: Vec<Vec2> = sc
            .iter()
            .zip(su.iter().zip(&sw))
            .map(|(c, (x, y))| [c[0] - a * x[0] - b * y[0], c[1] - a * x[1] - b * y[1]])
            .collect();
        linearity = linearity.max(norm(&defect) / norm(&sc));
    }
    (contraction, linearity)
}

// ── adjoint consistency ─────────────────────────────────────────────────

/// Level set with three solid disks, used where a mixed design is needed.
pub fn obstacle_levelset(mesh: &TriMesh) -> Vec<f64> {
    let centers = [[0.3, 0.3], [0.35, 0.75], [0.7, 0.5]];
    mesh.vertices
        .iter()
        .map(|p| {
            let d = centers
                .iter()
                .map(|c| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt())
                .fold(f64::MAX, f64::min);
            0.18 - d
        })
        .collect()
}

pub struct AdjointCheck {
    pub element: usize,
    pub finite_difference: f64,
    pub adjoint: f64,
}

impl AdjointCheck {
    pub fn relative_error(&self) -> f64 {
        (self.finite_difference - self.adjoint).abs() / self.adjoint.abs()
    }
}

/// Central finite differences of `J` with respect to `s`, where the
/// inverse permeability on one fluid element is `alpha_L + s (alpha_U -
/// alpha_L)`, against the adjoint prediction
/// `-(alpha_U - alpha_L) int_element u . v dx`.
pub fn adjoint_checks(n: usize, regions: usize, seed: u64) -> Vec<AdjointCheck> {
    let cfg = RunConfig {
        n_div: n,
        ..RunConfig::default()
    };
    let problem = Problem::new(&cfg, Execution::Sequential).unwrap();
    let mesh = problem.mesh().clone();
    let tables = problem.tables().clone();
    let psi = obstacle_levelset(&mesh);
    let eval = problem.evaluate(&psi).unwrap();
    assert!(
        eval.j > 0.0,
        "the test design must leave part of the domain below the threshold"
    );
    let adj = adjoint_state(
        problem.stokes(),
        &eval.factors,
        problem.smoother(),
        &eval.smoothed,
        cfg.u_t,
    )
    .unwrap();
    let grad = alpha_gradient(&mesh, &tables, &eval.state.u, &adj.v);
    let nq = tables.n_points();
    let jump = cfg.alpha_u - cfg.alpha_l;

    let j_at = |t: usize, s: f64| -> f64 {
        let mut alpha = eval.alpha.clone();
        for q in 0..nq {
            alpha.values_mut()[t * nq + q] = cfg.alpha_l + s * jump;
        }
        let (state, _, _) = problem.stokes().solve_flow(&alpha).unwrap();
        let us = problem.smoother().smooth(&state.u).unwrap();
        objective(&mesh, &tables, &us, cfg.u_t).j
    };

    let fluid: Vec<usize> = (0..mesh.n_triangles())
        .filter(|&t| (0..nq).all(|q| eval.alpha.values()[t * nq + q] == cfg.alpha_l))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut out = Vec::new();
    while out.len() < regions {
        let t = fluid[rng.gen_range(0..fluid.len())];
        if out.iter().any(|c: &AdjointCheck| c.element == t) {
            continue;
        }
        let fd = (j_at(t, h) - j_at(t, -h)) / (2.0 * h);
        let adjoint = jump * (0..nq).map(|q| grad[t * nq + q]).sum::<f64>();
        out.push(AdjointCheck {
            element: t,
            finite_difference: fd,
            adjoint,
        });
    }
    out
}

// ── topological derivative flip oracle ──────────────────────────────────

pub struct FlipSample {
    pub element: usize,
    pub fluid: bool,
    pub delta_j: f64,
    pub d_t: f64,
}

impl FlipSample {
    pub fn agrees(&self) -> bool {
        self.delta_j.signum() == self.d_t.signum()
    }
}

/// Flips single elements at least `2h` away from the interface between
/// fluid and solid, and records the change of `J` next to `D_T` at the
/// element centroid.
pub fn flip_samples(n: usize, count: usize, seed: u64) -> Vec<FlipSample> {
    let cfg = RunConfig {
        n_div: n,
        ..RunConfig::default()
    };
    let problem = Problem::new(&cfg, Execution::default()).unwrap();
    let mesh = problem.mesh().clone();
    let psi = obstacle_levelset(&mesh);
    let eval = problem.evaluate(&psi).unwrap();
    let dir = problem.direction(&eval).unwrap();
    let h = mesh.h();

    let interface: Vec<Vec2> = mesh
        .edges
        .iter()
        .filter(|e| (psi[e.vertices[0]] < 0.0) != (psi[e.vertices[1]] < 0.0))
        .map(|e| e.midpoint)
        .collect();
    let interior = |t: usize| {
        let c = mesh.geometry(t).centroid();
        let far_from_interface = interface
            .iter()
            .all(|m| ((m[0] - c[0]).powi(2) + (m[1] - c[1]).powi(2)).sqrt() > 2.0 * h);
        let far_from_boundary = c.iter().all(|&x| x > 2.0 * h && x < 1.0 - 2.0 * h);
        far_from_interface && far_from_boundary
    };
    let candidates: Vec<usize> = (0..mesh.n_triangles()).filter(|&t| interior(t)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::new();
    // up to half of the samples from the solid region, the rest from the fluid
    let solid: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&t| psi[mesh.triangles[t][0]] >= 0.0)
        .collect();
    let fluid: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&t| psi[mesh.triangles[t][0]] < 0.0)
        .collect();
    let solid_quota = (count / 2).min(solid.len());
    for (pool, quota) in [(&solid, solid_quota), (&fluid, count - solid_quota)] {
        assert!(
            quota <= pool.len(),
            "not enough elements away from the interface"
        );
        while picked.iter().filter(|t| pool.contains(t)).count() < quota {
            let t = pool[rng.gen_range(0..pool.len())];
            if !picked.contains(&t) {
                picked.push(t);
            }
        }
    }

    let deltas = problem.flip_deltas(&eval, &picked).unwrap();
    picked
        .into_iter()
        .zip(deltas)
        .map(|(t, delta_j)| FlipSample {
            element: t,
            fluid: psi[mesh.triangles[t][0]] < 0.0,
            delta_j,
            d_t: mesh
                .interpolate_p2(&dir.top_deriv.values, mesh.geometry(t).centroid())
                .unwrap(),
        })
        .collect()
}

// ── refined quadrature ──────────────────────────────────────────────────

/// Integrates `f` over the mesh by splitting every triangle into `k^2`
/// congruent subtriangles and applying the degree-5 rule on each.
pub fn refined_integral(mesh: &TriMesh, k: usize, f: impl Fn(usize, [f64; 3]) -> f64) -> f64 {
    let rule = Quadrature::degree5();
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let area = mesh.geometry(t).area;
        let sub_area_scale = 2.0 * area / (k * k) as f64;
        for i in 0..k {
            for j in 0..k - i {
                let corners = |a: usize, b: usize| [a as f64 / k as f64, b as f64 / k as f64];
                let mut subs = vec![[corners(i, j), corners(i + 1, j), corners(i, j + 1)]];
                if i + j + 1 < k {
                    subs.push([corners(i + 1, j), corners(i + 1, j + 1), corners(i, j + 1)]);
                }
                for s in subs {
                    for (p, w) in rule.points.iter().zip(&rule.weights) {
                        // reference coordinates (xi, eta) of the quadrature point
                        let xi = p[0] * s[0][0] + p[1] * s[1][0] + p[2] * s[2][0];
                        let eta = p[0] * s[0][1] + p[1] * s[1][1] + p[2] * s[2][1];
                        total += w * sub_area_scale * f(t, [1.0 - xi - eta, xi, eta]);
                    }
                }
            }
        }
    }
    total
}
