//! Threshold-velocity objective, its adjoint chain and the pointwise
//! topological derivative.
//!
//! The objective penalizes smoothed speeds below the threshold `u_t`:
//!
//! ```text
//! J = int_D min(0, |u_s| - u_t)^2 dx
//! ```
//!
//! and is evaluated with the assembly quadrature. The adjoints below are the
//! exact transposes of the discrete state operators, so the derivative of
//! the discrete `J` with respect to the per-point inverse permeability is
//! `-w_q u(x_q) . v(x_q)`.

use crate::error::Result;
use crate::fem::{norm2, Tables, Vec2};
use crate::linalg::LuFactors;
use crate::mesh::TriMesh;
use crate::smoothing::{SmoothedVelocity, Smoother};
use crate::stokes::StokesDiscretization;

/// Below this smoothed speed the direction u_s/|u_s| is undefined and the
/// adjoint source is set to zero.
pub const SPEED_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub j: f64,
    pub u_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub v_s: Vec<Vec2>,
    pub v: Vec<Vec2>,
    pub q: Vec<f64>,
}

/// Topological derivative at every P2 node.
#[derive(Debug, Clone, PartialEq)]
pub struct TopDerivField {
    pub values: Vec<f64>,
}

#[inline]
fn shortfall(speed: f64, u_t: f64) -> f64 {
    (speed - u_t).min(0.0)
}

pub fn objective(
    mesh: &TriMesh,
    tables: &Tables,
    u_s: &SmoothedVelocity,
    u_t: f64,
) -> ObjectiveValue {
    let vals = tables.eval_p2_vec(mesh, &u_s.u_s);
    let j = tables
        .weights(mesh)
        .iter()
        .zip(&vals)
        .map(|(w, v)| w * shortfall(norm2(*v), u_t).powi(2))
        .sum();
    ObjectiveValue { j, u_t }
}

/// Adjoint of the smoothing step: `(1/dt) v_s - lap v_s = 2 (u_s/|u_s|) min(0, |u_s| - u_t)`.
pub fn heat_adjoint(
    mesh: &TriMesh,
    tables: &Tables,
    smoother: &Smoother,
    u_s: &SmoothedVelocity,
    u_t: f64,
) -> Result<Vec<Vec2>> {
    let vals = tables.eval_p2_vec(mesh, &u_s.u_s);
    let mut sources = [
        Vec::with_capacity(vals.len()),
        Vec::with_capacity(vals.len()),
    ];
    for v in &vals {
        let speed = norm2(*v);
        let scale = if speed > SPEED_GUARD {
            2.0 * shortfall(speed, u_t) / speed
        } else {
            0.0
        };
        sources[0].push(scale * v[0]);
        sources[1].push(scale * v[1]);
    }
    let loads = [
        tables.p2_load(mesh, &sources[0]),
        tables.p2_load(mesh, &sources[1]),
    ];
    smoother.solve_vector_load([&loads[0], &loads[1]])
}

/// Adjoint Stokes-Brinkman solve with the state factors:
/// `-lap v + alpha v + grad q = (1/dt) v_s`, `v = 0` on inlet and walls.
pub fn stokes_adjoint(
    stokes: &StokesDiscretization,
    factors: &LuFactors,
    smoother: &Smoother,
    v_s: &[Vec2],
) -> Result<(Vec<Vec2>, Vec<f64>, f64)> {
    let inv_dt = 1.0 / smoother.dt();
    let mut rhs = vec![0.0; 2 * v_s.len()];
    for c in 0..2 {
        let comp: Vec<f64> = v_s.iter().map(|v| v[c] * inv_dt).collect();
        for (k, m) in smoother
            .matrices()
            .mass_times(&comp)
            .into_iter()
            .enumerate()
        {
            rhs[2 * k + c] = m;
        }
    }
    let (state, residual) = stokes.solve_with(factors, &rhs)?;
    Ok((state.u, state.p, residual))
}

/// Full adjoint chain for a solved state.
pub fn adjoint_state(
    stokes: &StokesDiscretization,
    factors: &LuFactors,
    smoother: &Smoother,
    u_s: &SmoothedVelocity,
    u_t: f64,
) -> Result<AdjointState> {
    let mesh = stokes.mesh();
    let v_s = heat_adjoint(mesh, stokes.tables(), smoother, u_s, u_t)?;
    let (v, q, _) = stokes_adjoint(stokes, factors, smoother, &v_s)?;
    Ok(AdjointState { v_s, v, q })
}

/// Pointwise topological derivative at the P2 nodes.
///
/// In the fluid region (level set negative) this is the sensitivity of
/// turning a small fluid ball into solid, `-(alpha_U - alpha_L) u . v`. In
/// the solid region the inclusion changes alpha by the opposite amount, so
/// the sign flips. `psi` is the P1 level set; edge nodes use the value at
/// the edge midpoint.
pub fn topological_derivative(
    mesh: &TriMesh,
    u: &[Vec2],
    v: &[Vec2],
    psi: &[f64],
    alpha_l: f64,
    alpha_u: f64,
) -> TopDerivField {
    let jump = alpha_u - alpha_l;
    let nv = mesh.n_vertices();
    let values = u
        .iter()
        .zip(v)
        .enumerate()
        .map(|(k, (a, b))| {
            let level = if k < nv {
                psi[k]
            } else {
                let e = mesh.edges[k - nv].vertices;
                0.5 * (psi[e[0]] + psi[e[1]])
            };
            let sensitivity = -jump * (a[0] * b[0] + a[1] * b[1]);
            if level < 0.0 {
                sensitivity
            } else {
                -sensitivity
            }
        })
        .collect();
    TopDerivField { values }
}

/// Derivative of the discrete objective with respect to the inverse
/// permeability at each quadrature point: `-w_q u(x_q) . v(x_q)`.
pub fn alpha_gradient(mesh: &TriMesh, tables: &Tables, u: &[Vec2], v: &[Vec2]) -> Vec<f64> {
    let uq = tables.eval_p2_vec(mesh, u);
    let vq = tables.eval_p2_vec(mesh, v);
    tables
        .weights(mesh)
        .iter()
        .zip(uq.iter().zip(&vq))
        .map(|(w, (a, b))| -w * (a[0] * b[0] + a[1] * b[1]))
        .collect()
}
