//! Stokes-Brinkman flow with Taylor-Hood (P2 velocity / P1 pressure)
//! elements.
//!
//! Weak form: find (u, p) with u = g on the inlet and walls such that
//!
//! ```text
//! (grad u, grad w) + (alpha u, w) - (p, div w) = (f, w)
//!                                  -(q, div u) = 0
//! ```
//!
//! for all test pairs (w, q) with w = 0 on the inlet and walls. The outlet
//! carries the natural do-nothing condition, so no boundary integral appears.
//! Dirichlet unknowns are removed from the system and their couplings moved
//! to the right-hand side, which keeps the reduced matrix symmetric.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::element::p2_gradients;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::{Tables, Vec2};
use crate::linalg::{CscPattern, LuAnalysis, LuFactors};
use crate::mesh::{BoundaryTag, TriMesh, WINDOW};
use crate::quadrature::SIMPSON;

/// Volumetric flow rate through the inlet for the parabolic profile.
pub const INLET_FLUX: f64 = 0.2;

/// Relative residual every saddle-point solve must reach.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// Local dofs per element: 6 P2 nodes x 2 components, then 3 pressures.
const LOCAL: usize = 15;

/// Parabolic inflow profile on x = 0, peak speed 1 at y = 0.5.
pub fn inflow_profile(y: f64) -> Result<Vec2> {
    const TOL: f64 = 1e-12;
    if !(y >= WINDOW.0 - TOL && y <= WINDOW.1 + TOL) {
        return Err(Error::OutsideInflow(y));
    }
    Ok([-(400.0 / 9.0) * (y - WINDOW.0) * (y - WINDOW.1), 0.0])
}

/// Inverse permeability sampled at every quadrature point, element-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaField {
    values: Vec<f64>,
    pub alpha_l: f64,
    pub alpha_u: f64,
}

impl AlphaField {
    /// Fluid (`alpha_l`) where the P1 interpolant of `psi` is negative,
    /// solid (`alpha_u`) elsewhere, including on the zero level.
    pub fn from_levelset(
        mesh: &TriMesh,
        tables: &Tables,
        psi: &[f64],
        alpha_l: f64,
        alpha_u: f64,
    ) -> Self {
        let values = tables
            .eval_p1(mesh, psi)
            .into_iter()
            .map(|v| if v < 0.0 { alpha_l } else { alpha_u })
            .collect();
        AlphaField {
            values,
            alpha_l,
            alpha_u,
        }
    }

    /// Arbitrary per-point values; used for blended sensitivity checks.
    pub fn from_values(values: Vec<f64>, alpha_l: f64, alpha_u: f64) -> Self {
        AlphaField {
            values,
            alpha_l,
            alpha_u,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn alpha_from_levelset(
    mesh: &TriMesh,
    tables: &Tables,
    psi: &[f64],
    alpha_l: f64,
    alpha_u: f64,
) -> AlphaField {
    AlphaField::from_levelset(mesh, tables, psi, alpha_l, alpha_u)
}

/// Optional momentum source, given as a P2 vector field.
#[derive(Debug, Clone, Default)]
pub enum BodyForce {
    #[default]
    Zero,
    Nodal(Vec<Vec2>),
}

/// Velocity data on the Dirichlet part of the boundary (inlet and walls).
#[derive(Clone, Copy)]
pub enum VelocityBc<'a> {
    /// Parabolic inflow on the inlet, no-slip on walls.
    Inflow,
    /// Homogeneous data everywhere; used by the adjoint.
    Homogeneous,
    /// Prescribed values at every Dirichlet node.
    Function(&'a (dyn Fn(Vec2) -> Vec2 + Sync)),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Vec<Vec2>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveDiagnostics {
    pub residual: f64,
    pub refinement_sweeps: usize,
    pub assembly_time: Duration,
    pub factor_time: Duration,
    pub solve_time: Duration,
}

/// Assembled reduced saddle-point system.
#[derive(Debug, Clone)]
pub struct StokesSystem {
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Full velocity vector holding the Dirichlet values (zero at free dofs).
    pub lifting: Vec<f64>,
    pub assembly_time: Duration,
}

/// Mesh-dependent data of the Taylor-Hood discretization: dof numbering,
/// Dirichlet set, sparsity pattern and the symbolic factorization.
#[derive(Debug)]
pub struct StokesDiscretization {
    mesh: Arc<TriMesh>,
    tables: Tables,
    exec: Execution,
    /// Reduced index of every global dof, `usize::MAX` for Dirichlet dofs.
    free: Vec<usize>,
    dirichlet_nodes: Vec<bool>,
    n_free: usize,
    positions: Vec<u32>,
    analysis: LuAnalysis,
    inflow: Vec<f64>,
    has_outlet: bool,
}

const NONE: u32 = u32::MAX;

impl StokesDiscretization {
    pub fn new(mesh: Arc<TriMesh>, tables: Tables, exec: Execution) -> Result<Self> {
        for t in 0..mesh.n_triangles() {
            if mesh.geometry(t).area <= 0.0 {
                return Err(Error::DegenerateElement(t));
            }
        }
        let n_p2 = mesh.n_p2();
        let n_total = 2 * n_p2 + mesh.n_vertices();

        let mut dirichlet_nodes = vec![false; n_p2];
        let mut wall_nodes = vec![false; n_p2];
        for f in &mesh.boundary {
            let nodes = mesh.facet_p2_nodes(f);
            match f.tag {
                BoundaryTag::Inlet => nodes.iter().for_each(|&k| dirichlet_nodes[k] = true),
                BoundaryTag::Wall => nodes.iter().for_each(|&k| {
                    dirichlet_nodes[k] = true;
                    wall_nodes[k] = true;
                }),
                BoundaryTag::Outlet => {}
            }
        }
        let has_outlet = mesh.boundary.iter().any(|f| f.tag == BoundaryTag::Outlet);

        let mut free = vec![usize::MAX; n_total];
        let mut n_free = 0;
        for (g, slot) in free.iter_mut().enumerate() {
            if g < 2 * n_p2 && dirichlet_nodes[g / 2] {
                continue;
            }
            *slot = n_free;
            n_free += 1;
        }

        let local_dofs = |t: usize| element_dofs(&mesh, t);
        let pattern = CscPattern::from_entries(
            n_free,
            (0..mesh.n_triangles()).flat_map(|t| {
                let d = local_dofs(t);
                let free = &free;
                (0..LOCAL * LOCAL).filter_map(move |k| {
                    let (i, j) = (free[d[k / LOCAL]], free[d[k % LOCAL]]);
                    (i != usize::MAX && j != usize::MAX).then_some((i, j))
                })
            }),
        );
        let mut positions = vec![NONE; mesh.n_triangles() * LOCAL * LOCAL];
        for t in 0..mesh.n_triangles() {
            let d = local_dofs(t);
            for k in 0..LOCAL * LOCAL {
                let (i, j) = (free[d[k / LOCAL]], free[d[k % LOCAL]]);
                if i != usize::MAX && j != usize::MAX {
                    positions[t * LOCAL * LOCAL + k] = pattern.position(i, j).unwrap() as u32;
                }
            }
        }
        let analysis = LuAnalysis::new(Arc::new(pattern))?;

        // Inlet data: nodal interpolant of the profile, rescaled so that the
        // discrete inflow matches the analytic rate when the window edges do
        // not coincide with mesh vertices.
        let mut inflow = vec![0.0; 2 * n_p2];
        for f in mesh.boundary.iter().filter(|f| f.tag == BoundaryTag::Inlet) {
            for k in mesh.facet_p2_nodes(f) {
                if !wall_nodes[k] {
                    let y = mesh.p2_node(k)[1].clamp(WINDOW.0, WINDOW.1);
                    inflow[2 * k] = inflow_profile(y)?[0];
                }
            }
        }
        let discrete: f64 = mesh
            .boundary
            .iter()
            .filter(|f| f.tag == BoundaryTag::Inlet)
            .map(|f| {
                let nodes = mesh.facet_p2_nodes(f);
                f.length
                    * (0..3)
                        .map(|i| SIMPSON[i] * inflow[2 * nodes[i]])
                        .sum::<f64>()
            })
            .sum();
        if discrete > 0.0 {
            let scale = INLET_FLUX / discrete;
            inflow.iter_mut().for_each(|v| *v *= scale);
        }

        Ok(StokesDiscretization {
            mesh,
            tables,
            exec,
            free,
            dirichlet_nodes,
            n_free,
            positions,
            analysis,
            inflow,
            has_outlet,
        })
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn tables(&self) -> &Tables {
        &self.tables
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    /// Total number of velocity and pressure dofs before elimination.
    pub fn n_dofs(&self) -> usize {
        self.free.len()
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn pattern(&self) -> &CscPattern {
        self.analysis.pattern()
    }

    pub fn is_dirichlet_node(&self, k: usize) -> bool {
        self.dirichlet_nodes[k]
    }

    /// Full velocity vector (interleaved components) of the inflow data.
    pub fn inflow_data(&self) -> &[f64] {
        &self.inflow
    }

    fn dirichlet_values(&self, bc: VelocityBc<'_>) -> Vec<f64> {
        let n_p2 = self.mesh.n_p2();
        match bc {
            VelocityBc::Inflow => self.inflow.clone(),
            VelocityBc::Homogeneous => vec![0.0; 2 * n_p2],
            VelocityBc::Function(g) => {
                let mut out = vec![0.0; 2 * n_p2];
                for k in (0..n_p2).filter(|&k| self.dirichlet_nodes[k]) {
                    let v = g(self.mesh.p2_node(k));
                    out[2 * k] = v[0];
                    out[2 * k + 1] = v[1];
                }
                out
            }
        }
    }

    fn local_matrix(&self, t: usize, alpha: &[f64]) -> [[f64; LOCAL]; LOCAL] {
        let geo = self.mesh.geometry(t);
        let nq = self.tables.n_points();
        let mut a = [[0.0; LOCAL]; LOCAL];
        for (q, l) in self.tables.rule.points.iter().enumerate() {
            let w = self.tables.rule.weights[q] * 2.0 * geo.area;
            let phi = &self.tables.p2[q];
            let psi = &self.tables.p1[q];
            let grad = p2_gradients(l, &geo.grad_lambda);
            let wa = w * alpha[t * nq + q];
            for i in 0..6 {
                for j in 0..6 {
                    let v = w * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1])
                        + wa * phi[i] * phi[j];
                    a[2 * i][2 * j] += v;
                    a[2 * i + 1][2 * j + 1] += v;
                }
                for k in 0..3 {
                    for c in 0..2 {
                        let b = -w * psi[k] * grad[i][c];
                        a[2 * i + c][12 + k] += b;
                        a[12 + k][2 * i + c] += b;
                    }
                }
            }
        }
        a
    }

    fn local_load(&self, t: usize, force: &[Vec2]) -> [f64; 12] {
        let geo = self.mesh.geometry(t);
        let dofs = self.mesh.p2_dofs(t);
        let mut f = [0.0; 12];
        for (q, phi) in self.tables.p2.iter().enumerate() {
            let w = self.tables.rule.weights[q] * 2.0 * geo.area;
            let mut fq = [0.0; 2];
            for (&k, b) in dofs.iter().zip(phi) {
                fq[0] += force[k][0] * b;
                fq[1] += force[k][1] * b;
            }
            for i in 0..6 {
                f[2 * i] += w * fq[0] * phi[i];
                f[2 * i + 1] += w * fq[1] * phi[i];
            }
        }
        f
    }

    /// Assembles the reduced system for the given inverse permeability,
    /// body force and Dirichlet data.
    pub fn assemble(
        &self,
        alpha: &AlphaField,
        force: &BodyForce,
        bc: VelocityBc<'_>,
    ) -> StokesSystem {
        let start = Instant::now();
        assert_eq!(
            alpha.len(),
            self.mesh.n_triangles() * self.tables.n_points()
        );
        let lifting = self.dirichlet_values(bc);
        let locals = self.exec.map(self.mesh.n_triangles(), |t| {
            self.local_matrix(t, alpha.values())
        });
        let mut values = vec![0.0; self.pattern().nnz()];
        let mut rhs = vec![0.0; self.n_free];
        for (t, a) in locals.iter().enumerate() {
            let pos = &self.positions[t * LOCAL * LOCAL..(t + 1) * LOCAL * LOCAL];
            let dofs = element_dofs(&self.mesh, t);
            for i in 0..LOCAL {
                let fi = self.free[dofs[i]];
                if fi == usize::MAX {
                    continue;
                }
                for j in 0..LOCAL {
                    let p = pos[i * LOCAL + j];
                    if p != NONE {
                        values[p as usize] += a[i][j];
                    } else if j < 12 {
                        rhs[fi] -= a[i][j] * lifting[dofs[j]];
                    }
                }
            }
        }
        if let BodyForce::Nodal(f) = force {
            let loads = self
                .exec
                .map(self.mesh.n_triangles(), |t| self.local_load(t, f));
            for (t, load) in loads.iter().enumerate() {
                let dofs = element_dofs(&self.mesh, t);
                for i in 0..12 {
                    let fi = self.free[dofs[i]];
                    if fi != usize::MAX {
                        rhs[fi] += load[i];
                    }
                }
            }
        }
        StokesSystem {
            values,
            rhs,
            lifting,
            assembly_time: start.elapsed(),
        }
    }

    /// Factorizes and solves an assembled system. The factors are returned
    /// so the adjoint can reuse them.
    pub fn solve(&self, system: StokesSystem) -> Result<(FlowState, LuFactors, SolveDiagnostics)> {
        if !self.has_outlet {
            return Err(Error::Singular(
                "no outlet facet: pressure is only determined up to a constant".into(),
            ));
        }
        let t0 = Instant::now();
        let factors = self.analysis.factorize(system.values, self.exec)?;
        let factor_time = t0.elapsed();
        let t1 = Instant::now();
        let report = factors.solve(&system.rhs, SOLVER_TOLERANCE)?;
        let state = self.expand(&report.solution, &system.lifting);
        let diag = SolveDiagnostics {
            residual: report.residual,
            refinement_sweeps: report.refinement_sweeps,
            assembly_time: system.assembly_time,
            factor_time,
            solve_time: t1.elapsed(),
        };
        Ok((state, factors, diag))
    }

    /// Solves with already computed factors for a velocity right-hand side
    /// given on all velocity dofs (interleaved); Dirichlet data are zero.
    pub fn solve_with(
        &self,
        factors: &LuFactors,
        velocity_rhs: &[f64],
    ) -> Result<(FlowState, f64)> {
        let mut rhs = vec![0.0; self.n_free];
        for (g, v) in velocity_rhs.iter().enumerate() {
            let fi = self.free[g];
            if fi != usize::MAX {
                rhs[fi] = *v;
            }
        }
        let report = factors.solve(&rhs, SOLVER_TOLERANCE)?;
        let zero = vec![0.0; velocity_rhs.len()];
        Ok((self.expand(&report.solution, &zero), report.residual))
    }

    /// Assembles and solves the flow problem with the inflow data.
    pub fn solve_flow(
        &self,
        alpha: &AlphaField,
    ) -> Result<(FlowState, LuFactors, SolveDiagnostics)> {
        self.solve(self.assemble(alpha, &BodyForce::Zero, VelocityBc::Inflow))
    }

    fn expand(&self, x: &[f64], lifting: &[f64]) -> FlowState {
        let n_p2 = self.mesh.n_p2();
        let full: Vec<f64> = self
            .free
            .iter()
            .enumerate()
            .map(|(g, &fi)| if fi == usize::MAX { lifting[g] } else { x[fi] })
            .collect();
        let u = (0..n_p2).map(|k| [full[2 * k], full[2 * k + 1]]).collect();
        let p = full[2 * n_p2..].to_vec();
        FlowState { u, p }
    }

    /// Applies the unreduced element operators to (u, p), element by
    /// element. Returns the momentum and continuity residual vectors
    /// `A(u, p) - F` over all dofs; rows of Dirichlet dofs are included.
    pub fn operator_residual(
        &self,
        alpha: &AlphaField,
        force: &BodyForce,
        state: &FlowState,
    ) -> (Vec<f64>, Vec<f64>) {
        let n_p2 = self.mesh.n_p2();
        let mut full = Vec::with_capacity(self.free.len());
        full.extend(state.u.iter().flat_map(|v| [v[0], v[1]]));
        full.extend(&state.p);
        let mut out = vec![0.0; full.len()];
        for t in 0..self.mesh.n_triangles() {
            let a = self.local_matrix(t, alpha.values());
            let dofs = element_dofs(&self.mesh, t);
            for i in 0..LOCAL {
                out[dofs[i]] += (0..LOCAL).map(|j| a[i][j] * full[dofs[j]]).sum::<f64>();
            }
            if let BodyForce::Nodal(f) = force {
                let load = self.local_load(t, f);
                for i in 0..12 {
                    out[dofs[i]] -= load[i];
                }
            }
        }
        let cont = out.split_off(2 * n_p2);
        (out, cont)
    }
}

fn element_dofs(mesh: &TriMesh, t: usize) -> [usize; LOCAL] {
    let nodes = mesh.p2_dofs(t);
    let verts = mesh.triangles[t];
    let off = 2 * mesh.n_p2();
    let mut d = [0; LOCAL];
    for (i, &k) in nodes.iter().enumerate() {
        d[2 * i] = 2 * k;
        d[2 * i + 1] = 2 * k + 1;
    }
    for (i, &v) in verts.iter().enumerate() {
        d[12 + i] = off + v;
    }
    d
}

/// Outward flux of a P2 velocity field through the boundary facets with
/// the given tag (all facets for `None`). Simpson's rule is exact on the
/// quadratic traces.
pub fn boundary_flux(mesh: &TriMesh, u: &[Vec2], tag: Option<BoundaryTag>) -> f64 {
    mesh.boundary
        .iter()
        .filter(|f| tag.is_none_or(|t| t == f.tag))
        .map(|f| {
            let nodes = mesh.facet_p2_nodes(f);
            f.length
                * (0..3)
                    .map(|i| {
                        SIMPSON[i] * (u[nodes[i]][0] * f.normal[0] + u[nodes[i]][1] * f.normal[1])
                    })
                    .sum::<f64>()
        })
        .sum()
}
