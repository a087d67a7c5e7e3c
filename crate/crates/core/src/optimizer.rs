//! Level-set topology optimization on the L2 unit sphere.
//!
//! The level set `psi` is a P1 field whose negative set is the fluid region.
//! Each iteration moves `psi` along the great circle towards the normalized
//! generalized topological derivative `g`, chooses the step by a
//! backtracking line search on the objective and projects every trial onto
//! the volume constraint. The loop stops when the L2 angle between `psi` and
//! `g` drops below a tolerance.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::analysis::{coverage, CoverageReport};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::{P1Mass, ScalarP2Matrices, Tables};
use crate::linalg::LuFactors;
use crate::mesh::TriMesh;
use crate::sensitivity::{
    adjoint_state, objective, topological_derivative, AdjointState, TopDerivField,
};
use crate::smoothing::{SmoothedVelocity, Smoother};
use crate::stokes::{AlphaField, FlowState, SolveDiagnostics, StokesDiscretization};

/// Level sets are normalized to this accuracy.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Bisection steps allowed in the volume projection.
const MAX_BISECTION: usize = 200;

/// L2 geometry of P1 level sets on a fixed mesh.
#[derive(Debug, Clone)]
pub struct LevelSetSpace {
    mesh: Arc<TriMesh>,
    mass: P1Mass,
}

impl LevelSetSpace {
    pub fn new(mesh: Arc<TriMesh>) -> Self {
        let mass = P1Mass::assemble(&mesh);
        LevelSetSpace { mesh, mass }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// `int_D f h dx`, exact for P1 fields.
    pub fn l2_inner(&self, f: &[f64], h: &[f64]) -> f64 {
        self.mass.inner(f, h)
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.mass.norm(f)
    }

    pub fn normalize(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.l2_norm(f);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::DegenerateDerivative(format!(
                "cannot normalize a field of L2 norm {n}"
            )));
        }
        Ok(f.iter().map(|v| v / n).collect())
    }

    /// The all-fluid level set of unit norm.
    pub fn all_fluid(&self) -> Vec<f64> {
        let c = -1.0 / self.mesh.total_area().sqrt();
        vec![c; self.dim()]
    }
}

/// L2 angle between `g` and `psi` in `[0, pi]`.
pub fn compute_theta(space: &LevelSetSpace, g: &[f64], psi: &[f64]) -> Result<f64> {
    let (ng, np) = (space.l2_norm(g), space.l2_norm(psi));
    if ng == 0.0 || np == 0.0 || !(ng * np).is_finite() {
        return Err(Error::DegenerateDerivative(format!(
            "angle undefined for norms |g| = {ng}, |psi| = {np}"
        )));
    }
    let c = space.l2_inner(g, psi) / (ng * np);
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// Spherical interpolation from unit `psi` towards `g / |g|`:
/// `(sin((1 - kappa) theta) psi + sin(kappa theta) g / |g|) / sin(theta)`.
pub fn slerp_update(
    space: &LevelSetSpace,
    psi: &[f64],
    g: &[f64],
    theta: f64,
    kappa: f64,
) -> Result<Vec<f64>> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::DegenerateDerivative(format!(
            "slerp needs 0 < theta < pi, got {theta}"
        )));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParameter(format!(
            "step kappa must lie in [0, 1], got {kappa}"
        )));
    }
    let ng = space.l2_norm(g);
    if ng == 0.0 {
        return Err(Error::DegenerateDerivative(
            "generalized derivative vanishes".into(),
        ));
    }
    let s = theta.sin();
    let a = ((1.0 - kappa) * theta).sin() / s;
    let b = (kappa * theta).sin() / (s * ng);
    Ok(psi.iter().zip(g).map(|(p, q)| a * p + b * q).collect())
}

/// Area of `{psi < 0}` for the piecewise linear interpolant, clipped exactly
/// in every triangle.
pub fn fluid_volume(mesh: &TriMesh, psi: &[f64]) -> f64 {
    mesh.triangles
        .iter()
        .enumerate()
        .map(|(t, v)| mesh.geometry(t).area * negative_fraction([psi[v[0]], psi[v[1]], psi[v[2]]]))
        .sum()
}

/// Fraction of a triangle where the linear function with vertex values `f`
/// is negative.
fn negative_fraction(f: [f64; 3]) -> f64 {
    let neg = f.iter().filter(|v| **v < 0.0).count();
    // corner fraction cut off around vertex i whose sign differs from the rest
    let corner = |i: usize| {
        let (a, b, c) = (f[i], f[(i + 1) % 3], f[(i + 2) % 3]);
        (a / (a - b)) * (a / (a - c))
    };
    match neg {
        0 => 0.0,
        3 => 1.0,
        1 => corner(f.iter().position(|v| *v < 0.0).unwrap()),
        _ => 1.0 - corner(f.iter().position(|v| *v >= 0.0).unwrap()),
    }
}

/// Admissible fluid volumes `[lower, upper]` and the projection accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeBounds {
    pub lower: f64,
    pub upper: f64,
    pub eps_c: f64,
}

impl VolumeBounds {
    pub fn from_config(config: &RunConfig) -> Self {
        VolumeBounds {
            lower: config.v_l,
            upper: config.v_u,
            eps_c: config.eps_c,
        }
    }

    pub fn admits(&self, volume: f64) -> bool {
        volume >= self.lower - self.eps_c && volume <= self.upper + self.eps_c
    }
}

/// Result of a volume projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Shifted and renormalized level set.
    pub psi: Vec<f64>,
    /// Constant added before renormalization.
    pub shift: f64,
    pub volume: f64,
}

/// Shifts `psi` by a constant so the fluid volume lands on the violated
/// bound (within `eps_c`), then rescales to unit L2 norm. Admissible level
/// sets are returned unchanged.
pub fn project_volume(
    space: &LevelSetSpace,
    psi: &[f64],
    bounds: VolumeBounds,
) -> Result<Projection> {
    let mesh = space.mesh();
    let volume = fluid_volume(mesh, psi);
    let target = if volume > bounds.upper {
        bounds.upper
    } else if volume < bounds.lower {
        bounds.lower
    } else {
        return Ok(Projection {
            psi: psi.to_vec(),
            shift: 0.0,
            volume,
        });
    };
    let shifted = |c: f64| -> Vec<f64> { psi.iter().map(|v| v + c).collect() };
    // volume(psi + c) is non-increasing in c
    let reach = psi.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let (mut lo, mut hi) = if target == bounds.upper {
        (0.0, reach)
    } else {
        (-reach, 0.0)
    };
    let mut achieved = volume;
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (lo + hi);
        let trial = shifted(mid);
        achieved = fluid_volume(mesh, &trial);
        if (achieved - target).abs() <= bounds.eps_c {
            let psi = space.normalize(&trial)?;
            return Ok(Projection {
                volume: fluid_volume(mesh, &psi),
                psi,
                shift: mid,
            });
        }
        if achieved > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Projection { target, achieved })
}

/// Outcome of the backtracking search on the step `kappa`.
#[derive(Debug, Clone)]
pub enum LineSearch<T> {
    Accepted {
        kappa: f64,
        psi: Vec<f64>,
        j: f64,
        value: T,
        trials: usize,
    },
    /// No trial down to `kappa_min` decreased the objective.
    Stagnation { trials: usize },
}

/// Parameters of the backtracking line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub kappa_start: f64,
    pub kappa_min: f64,
}

/// Tries `kappa = kappa_start, kappa_start/2, ...` down to `kappa_min` and
/// accepts the first projected trial whose objective is strictly below
/// `j_current`. `evaluate` returns the objective of a trial together with
/// any data the caller wants back for the accepted trial.
#[allow(clippy::too_many_arguments)]
pub fn line_search<T, F>(
    space: &LevelSetSpace,
    psi: &[f64],
    g: &[f64],
    theta: f64,
    j_current: f64,
    bounds: VolumeBounds,
    step: StepControl,
    mut evaluate: F,
) -> Result<LineSearch<T>>
where
    F: FnMut(&[f64]) -> Result<(f64, T)>,
{
    let mut kappa = step.kappa_start.min(1.0);
    let mut trials = 0;
    while kappa >= step.kappa_min {
        let moved = slerp_update(space, psi, g, theta, kappa)?;
        let projected = project_volume(space, &moved, bounds)?.psi;
        trials += 1;
        let (j, value) = evaluate(&projected)?;
        log::debug!("  trial kappa = {kappa:.3e}: J = {j:.6e}");
        if j < j_current {
            return Ok(LineSearch::Accepted {
                kappa,
                psi: projected,
                j,
                value,
                trials,
            });
        }
        kappa *= 0.5;
    }
    Ok(LineSearch::Stagnation { trials })
}

/// Everything computed from one level set by a forward evaluation.
#[derive(Debug)]
pub struct Evaluation {
    pub psi: Vec<f64>,
    pub alpha: AlphaField,
    pub state: FlowState,
    pub factors: LuFactors,
    pub smoothed: SmoothedVelocity,
    pub j: f64,
    pub volume: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Search direction data at an evaluated level set.
#[derive(Debug, Clone)]
pub struct Direction {
    pub adjoint: AdjointState,
    pub top_deriv: TopDerivField,
    /// Generalized derivative at the vertices.
    pub g: Vec<f64>,
}

/// Discretized optimization problem: mesh, flow solver, smoother and the
/// level-set geometry for one configuration.
#[derive(Debug)]
pub struct Problem {
    config: RunConfig,
    stokes: StokesDiscretization,
    smoother: Smoother,
    space: LevelSetSpace,
}

impl Problem {
    pub fn new(config: &RunConfig, exec: Execution) -> Result<Self> {
        config.validate()?;
        let mesh = Arc::new(TriMesh::unit_square(config.n_div)?);
        let tables = Tables::default();
        let matrices = Arc::new(ScalarP2Matrices::assemble(&mesh, &tables, exec));
        let smoother = Smoother::new(matrices, config.dt, exec)?;
        let stokes = StokesDiscretization::new(mesh.clone(), tables, exec)?;
        Ok(Problem {
            config: config.clone(),
            stokes,
            smoother,
            space: LevelSetSpace::new(mesh),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        self.stokes.mesh()
    }

    pub fn tables(&self) -> &Tables {
        self.stokes.tables()
    }

    pub fn stokes(&self) -> &StokesDiscretization {
        &self.stokes
    }

    pub fn smoother(&self) -> &Smoother {
        &self.smoother
    }

    pub fn space(&self) -> &LevelSetSpace {
        &self.space
    }

    pub fn bounds(&self) -> VolumeBounds {
        VolumeBounds::from_config(&self.config)
    }

    /// Flow solve, smoothing and objective for a level set.
    pub fn evaluate(&self, psi: &[f64]) -> Result<Evaluation> {
        let c = &self.config;
        let mesh = self.mesh();
        if psi.len() != mesh.n_vertices() {
            return Err(Error::InvalidParameter(format!(
                "level set has {} values, mesh has {} vertices",
                psi.len(),
                mesh.n_vertices()
            )));
        }
        let alpha = AlphaField::from_levelset(mesh, self.tables(), psi, c.alpha_l, c.alpha_u);
        let (state, factors, diagnostics) = self.stokes.solve_flow(&alpha)?;
        let smoothed = self.smoother.smooth(&state.u)?;
        let j = objective(mesh, self.tables(), &smoothed, c.u_t).j;
        Ok(Evaluation {
            psi: psi.to_vec(),
            alpha,
            state,
            factors,
            smoothed,
            j,
            volume: fluid_volume(mesh, psi),
            diagnostics,
        })
    }

    /// Change of the objective when each listed element alone is switched
    /// between fluid and solid. The flips are independent and run through
    /// the execution mode of the flow solver.
    pub fn flip_deltas(&self, eval: &Evaluation, elements: &[usize]) -> Result<Vec<f64>> {
        let c = &self.config;
        let nq = self.tables().n_points();
        let mesh = self.mesh();
        self.stokes
            .execution()
            .map(elements.len(), |i| {
                let t = elements[i];
                let mut alpha = eval.alpha.clone();
                for a in &mut alpha.values_mut()[t * nq..(t + 1) * nq] {
                    *a = if *a == c.alpha_l {
                        c.alpha_u
                    } else {
                        c.alpha_l
                    };
                }
                let (state, _, _) = self.stokes.solve_flow(&alpha)?;
                let smoothed = self.smoother.smooth(&state.u)?;
                Ok(objective(mesh, self.tables(), &smoothed, c.u_t).j - eval.j)
            })
            .into_iter()
            .collect()
    }

    /// Adjoints, topological derivative and generalized derivative.
    pub fn direction(&self, eval: &Evaluation) -> Result<Direction> {
        let c = &self.config;
        let mesh = self.mesh();
        let adjoint = adjoint_state(
            &self.stokes,
            &eval.factors,
            &self.smoother,
            &eval.smoothed,
            c.u_t,
        )?;
        let top_deriv = topological_derivative(
            mesh,
            &eval.state.u,
            &adjoint.v,
            &eval.psi,
            c.alpha_l,
            c.alpha_u,
        );
        let g = generalized_derivative(&eval.psi, &mesh.restrict_to_vertices(&top_deriv.values));
        Ok(Direction {
            adjoint,
            top_deriv,
            g,
        })
    }

    /// Admissible starting level set: the normalized generalized derivative
    /// of the all-fluid design, projected onto the volume constraint.
    pub fn initial_levelset(&self) -> Result<Vec<f64>> {
        let fluid = self.evaluate(&self.space.all_fluid())?;
        let dir = self.direction(&fluid)?;
        let g = self.space.normalize(&dir.g)?;
        Ok(project_volume(&self.space, &g, self.bounds())?.psi)
    }

    pub fn coverage(&self, eval: &Evaluation) -> Result<CoverageReport> {
        coverage(
            self.mesh(),
            self.tables(),
            &eval.state.u,
            &eval.smoothed.u_s,
            self.config.u_t,
            &eval.psi,
        )
    }
}

/// `g = -D_T` where `psi < 0` and `g = D_T` elsewhere.
pub fn generalized_derivative(psi: &[f64], d_t: &[f64]) -> Vec<f64> {
    psi.iter()
        .zip(d_t)
        .map(|(p, d)| if *p < 0.0 { -d } else { *d })
        .collect()
}

/// Why the optimization loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The optimality angle fell below the tolerance.
    Converged,
    /// The line search found no decrease down to the minimal step.
    Stagnation,
    /// The iteration limit was reached.
    MaxIterations,
    /// The objective reached its lower bound zero, so the derivative
    /// vanishes identically and the optimality angle is undefined.
    ZeroObjective,
    /// The generalized derivative vanished at a positive objective, or is
    /// opposite to the level set.
    Degenerate,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::Stagnation => "stagnation",
            Termination::MaxIterations => "max_iter",
            Termination::ZeroObjective => "zero_objective",
            Termination::Degenerate => "degenerate",
        }
    }
}

/// One row of the convergence history, describing the level set reached at
/// iteration `iter` (`iter = 0` is the initial guess, `kappa` is the step
/// that produced it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    /// Optimality angle at this level set; NaN if undefined.
    pub theta: f64,
    pub kappa: f64,
    pub volume: f64,
    pub coverage_d: f64,
    pub coverage_omega: f64,
    pub wall_time_s: f64,
}

pub const CONVERGENCE_HEADER: &str =
    "iter,J,theta,kappa,volume,coverage_D,coverage_Omega,wall_time_s";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceRecord {
    pub rows: Vec<IterationRecord>,
}

impl ConvergenceRecord {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CONVERGENCE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:.3}",
                r.iter,
                r.j,
                r.theta,
                r.kappa,
                r.volume,
                r.coverage_d,
                r.coverage_omega,
                r.wall_time_s
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// True if J strictly decreases from each row to the next.
    pub fn is_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].j < w[0].j)
    }
}

/// Final state of an optimization run.
#[derive(Debug)]
pub struct OptimizationResult {
    pub evaluation: Evaluation,
    pub record: ConvergenceRecord,
    pub termination: Termination,
    /// Total number of forward evaluations, line-search trials included.
    pub evaluations: usize,
}

/// Runs the optimization loop from `psi0` (unit norm).
pub fn optimize(problem: &Problem, psi0: &[f64]) -> Result<OptimizationResult> {
    optimize_with(problem, psi0, |_, _| Ok(()))
}

/// As [`optimize`], calling `observer` after every recorded iteration.
pub fn optimize_with<F>(
    problem: &Problem,
    psi0: &[f64],
    mut observer: F,
) -> Result<OptimizationResult>
where
    F: FnMut(&IterationRecord, &Evaluation) -> Result<()>,
{
    let cfg = problem.config();
    let space = problem.space();
    let bounds = problem.bounds();
    let start = Instant::now();
    let at = |iteration: usize| {
        move |e: Error| Error::Iteration {
            iteration,
            source: Box::new(e),
        }
    };

    let mut eval = problem.evaluate(psi0).map_err(at(0))?;
    let mut evaluations = 1;
    let mut record = ConvergenceRecord::default();
    let mut kappa_prev: f64 = 0.5;
    let mut kappa_used = 0.0;
    let mut iter = 0;

    let termination = loop {
        let dir = problem.direction(&eval).map_err(at(iter))?;
        let theta = match compute_theta(space, &dir.g, &eval.psi) {
            Ok(t) => Some(t),
            Err(Error::DegenerateDerivative(_)) => None,
            Err(e) => return Err(at(iter)(e)),
        };
        let cov = problem.coverage(&eval).map_err(at(iter))?;
        let row = IterationRecord {
            iter,
            j: eval.j,
            theta: theta.unwrap_or(f64::NAN),
            kappa: kappa_used,
            volume: eval.volume,
            coverage_d: cov.coverage_d,
            coverage_omega: cov.coverage_omega,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "iter {:4}  J = {:.6e}  theta = {:.4}  kappa = {:.3e}  |Omega| = {:.4}  cov_D = {:.4}",
            iter,
            row.j,
            row.theta,
            row.kappa,
            row.volume,
            row.coverage_d
        );
        record.rows.push(row);
        observer(&row, &eval).map_err(at(iter))?;

        let theta = match theta {
            None if eval.j == 0.0 => break Termination::ZeroObjective,
            None => break Termination::Degenerate,
            Some(t) if t < cfg.eps_theta => break Termination::Converged,
            Some(t) if t >= std::f64::consts::PI => break Termination::Degenerate,
            Some(t) => t,
        };
        if iter >= cfg.max_iter {
            break Termination::MaxIterations;
        }

        let step = StepControl {
            kappa_start: (2.0 * kappa_prev).min(1.0),
            kappa_min: cfg.kappa_min,
        };
        let search = line_search(
            space,
            &eval.psi,
            &dir.g,
            theta,
            eval.j,
            bounds,
            step,
            |trial| {
                evaluations += 1;
                let e = problem.evaluate(trial)?;
                Ok((e.j, e))
            },
        )
        .map_err(at(iter + 1))?;
        match search {
            LineSearch::Accepted { kappa, value, .. } => {
                eval = value;
                kappa_prev = kappa;
                kappa_used = kappa;
                iter += 1;
            }
            LineSearch::Stagnation { .. } => break Termination::Stagnation,
        }
    };

    Ok(OptimizationResult {
        evaluation: eval,
        record,
        termination,
        evaluations,
    })
}
