//! One implicit Euler step of the heat equation with homogeneous Neumann
//! data, applied componentwise to a P2 velocity field:
//!
//! ```text
//! (1/dt) (u_s, w) + (grad u_s, grad w) = (1/dt) (u, w)   for all P2 w
//! ```
//!
//! The operator `(1/dt) M + K` does not depend on the geometry, so it is
//! factorized once per time step length and reused for every state and
//! adjoint solve.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::{ScalarP2Matrices, Vec2};
use crate::linalg::CholeskyFactors;

pub const SMOOTHING_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedVelocity {
    pub u_s: Vec<Vec2>,
    pub dt: f64,
}

/// Cached screened-Poisson solver for a fixed `dt`.
#[derive(Debug)]
pub struct Smoother {
    matrices: Arc<ScalarP2Matrices>,
    factors: CholeskyFactors,
    dt: f64,
    exec: Execution,
}

impl Smoother {
    pub fn new(matrices: Arc<ScalarP2Matrices>, dt: f64, exec: Execution) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "smoothing step dt must be positive, got {dt}"
            )));
        }
        let values: Vec<f64> = matrices
            .mass
            .iter()
            .zip(&matrices.stiffness)
            .map(|(m, k)| m / dt + k)
            .collect();
        let factors = CholeskyFactors::new(matrices.pattern.clone(), values, exec)?;
        Ok(Smoother {
            matrices,
            factors,
            dt,
            exec,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn matrices(&self) -> &ScalarP2Matrices {
        &self.matrices
    }

    /// Solves `((1/dt) M + K) w = load` for an assembled load vector.
    pub fn solve_load(&self, load: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factors.solve(load, SMOOTHING_TOLERANCE)?.solution)
    }

    /// Solves `(1/dt) w - lap w = rhs` weakly with Neumann data, for a
    /// right-hand side given as a P2 nodal field.
    pub fn screened_poisson_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solve_load(&self.matrices.mass_times(rhs))
    }

    /// Solves two load vectors (one per component), concurrently when the
    /// execution mode allows.
    pub fn solve_vector_load(&self, load: [&[f64]; 2]) -> Result<Vec<Vec2>> {
        let mut parts = self.exec.map(2, |c| self.solve_load(load[c]));
        let y = parts.pop().unwrap()?;
        let x = parts.pop().unwrap()?;
        Ok(x.into_iter().zip(y).map(|(a, b)| [a, b]).collect())
    }

    pub fn smooth(&self, u: &[Vec2]) -> Result<SmoothedVelocity> {
        let inv_dt = 1.0 / self.dt;
        let loads: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                let comp: Vec<f64> = u.iter().map(|v| v[c] * inv_dt).collect();
                self.matrices.mass_times(&comp)
            })
            .collect();
        let u_s = self.solve_vector_load([&loads[0], &loads[1]])?;
        Ok(SmoothedVelocity { u_s, dt: self.dt })
    }
}

/// Convenience wrapper building a throwaway smoother.
pub fn smooth(
    matrices: Arc<ScalarP2Matrices>,
    u: &[Vec2],
    dt: f64,
    exec: Execution,
) -> Result<SmoothedVelocity> {
    Smoother::new(matrices, dt, exec)?.smooth(u)
}
