//! Shared finite-element plumbing: tabulated basis values, scalar P1/P2
//! mass and stiffness matrices, and quadrature-point evaluation of nodal
//! fields.

use std::sync::Arc;

use crate::element::{p2_gradients, p2_values};
use crate::exec::Execution;
use crate::linalg::CscPattern;
use crate::mesh::TriMesh;
use crate::quadrature::Quadrature;

/// A 2-component vector value.
pub type Vec2 = [f64; 2];

#[inline]
pub fn norm2(v: Vec2) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Basis values tabulated at the quadrature points of the reference triangle.
#[derive(Debug, Clone)]
pub struct Tables {
    pub rule: Quadrature,
    pub p1: Vec<[f64; 3]>,
    pub p2: Vec<[f64; 6]>,
}

impl Tables {
    pub fn new(rule: Quadrature) -> Self {
        let p1 = rule.points.clone();
        let p2 = rule.points.iter().map(p2_values).collect();
        Tables { rule, p1, p2 }
    }

    pub fn n_points(&self) -> usize {
        self.rule.len()
    }

    /// Physical coordinates of every quadrature point, element-major.
    pub fn points(&self, mesh: &TriMesh) -> Vec<Vec2> {
        (0..mesh.n_triangles())
            .flat_map(|t| {
                let g = *mesh.geometry(t);
                self.rule.points.iter().map(move |l| g.point(l))
            })
            .collect()
    }

    /// Physical quadrature weights, element-major.
    pub fn weights(&self, mesh: &TriMesh) -> Vec<f64> {
        (0..mesh.n_triangles())
            .flat_map(|t| {
                let area = mesh.geometry(t).area;
                self.rule.weights.iter().map(move |w| w * 2.0 * area)
            })
            .collect()
    }

    /// Values of a scalar P1 field at every quadrature point.
    pub fn eval_p1(&self, mesh: &TriMesh, field: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(mesh.n_triangles() * self.n_points());
        for tri in &mesh.triangles {
            for phi in &self.p1 {
                out.push(phi[0] * field[tri[0]] + phi[1] * field[tri[1]] + phi[2] * field[tri[2]]);
            }
        }
        out
    }

    /// Values of a scalar P2 field at every quadrature point.
    pub fn eval_p2(&self, mesh: &TriMesh, field: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(mesh.n_triangles() * self.n_points());
        for t in 0..mesh.n_triangles() {
            let dofs = mesh.p2_dofs(t);
            for phi in &self.p2 {
                out.push(dofs.iter().zip(phi).map(|(&k, b)| field[k] * b).sum());
            }
        }
        out
    }

    /// Values of a vector P2 field at every quadrature point.
    pub fn eval_p2_vec(&self, mesh: &TriMesh, field: &[Vec2]) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(mesh.n_triangles() * self.n_points());
        for t in 0..mesh.n_triangles() {
            let dofs = mesh.p2_dofs(t);
            for phi in &self.p2 {
                let mut v = [0.0; 2];
                for (&k, b) in dofs.iter().zip(phi) {
                    v[0] += field[k][0] * b;
                    v[1] += field[k][1] * b;
                }
                out.push(v);
            }
        }
        out
    }

    /// Weak load vector: entry i is sum_q w_q s(x_q) phi_i(x_q) for a P2
    /// basis, given `source` sampled at every quadrature point.
    pub fn p2_load(&self, mesh: &TriMesh, source: &[f64]) -> Vec<f64> {
        let nq = self.n_points();
        let mut out = vec![0.0; mesh.n_p2()];
        for t in 0..mesh.n_triangles() {
            let dofs = mesh.p2_dofs(t);
            let jac = 2.0 * mesh.geometry(t).area;
            for (q, phi) in self.p2.iter().enumerate() {
                let s = source[t * nq + q] * self.rule.weights[q] * jac;
                if s == 0.0 {
                    continue;
                }
                for (&k, b) in dofs.iter().zip(phi) {
                    out[k] += s * b;
                }
            }
        }
        out
    }
}

impl Default for Tables {
    fn default() -> Self {
        Self::new(Quadrature::default())
    }
}

/// Scalar P2 mass and stiffness matrices on a shared pattern.
#[derive(Debug, Clone)]
pub struct ScalarP2Matrices {
    pub pattern: Arc<CscPattern>,
    pub mass: Vec<f64>,
    pub stiffness: Vec<f64>,
}

impl ScalarP2Matrices {
    pub fn assemble(mesh: &TriMesh, tables: &Tables, exec: Execution) -> Self {
        let n = mesh.n_p2();
        let pattern = CscPattern::from_entries(
            n,
            (0..mesh.n_triangles()).flat_map(|t| {
                let d = mesh.p2_dofs(t);
                (0..36).map(move |k| (d[k / 6], d[k % 6]))
            }),
        );
        let locals = exec.map(mesh.n_triangles(), |t| {
            let geo = mesh.geometry(t);
            let mut m = [[0.0; 6]; 6];
            let mut k = [[0.0; 6]; 6];
            for (q, l) in tables.rule.points.iter().enumerate() {
                let w = tables.rule.weights[q] * 2.0 * geo.area;
                let phi = &tables.p2[q];
                let grad = p2_gradients(l, &geo.grad_lambda);
                for a in 0..6 {
                    for b in 0..6 {
                        m[a][b] += w * phi[a] * phi[b];
                        k[a][b] += w * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                    }
                }
            }
            (m, k)
        });
        let mut mass = vec![0.0; pattern.nnz()];
        let mut stiffness = vec![0.0; pattern.nnz()];
        for (t, (m, k)) in locals.iter().enumerate() {
            let d = mesh.p2_dofs(t);
            for a in 0..6 {
                for b in 0..6 {
                    let pos = pattern
                        .position(d[a], d[b])
                        .expect("pattern covers element");
                    mass[pos] += m[a][b];
                    stiffness[pos] += k[a][b];
                }
            }
        }
        ScalarP2Matrices {
            pattern: Arc::new(pattern),
            mass,
            stiffness,
        }
    }

    pub fn mass_times(&self, x: &[f64]) -> Vec<f64> {
        self.pattern.matvec(&self.mass, x)
    }
}

/// Consistent P1 mass matrix; defines the L2 inner product of level sets.
#[derive(Debug, Clone)]
pub struct P1Mass {
    pub pattern: CscPattern,
    pub values: Vec<f64>,
}

impl P1Mass {
    pub fn assemble(mesh: &TriMesh) -> Self {
        let pattern = CscPattern::from_entries(
            mesh.n_vertices(),
            mesh.triangles
                .iter()
                .flat_map(|v| (0..9).map(move |k| (v[k / 3], v[k % 3]))),
        );
        let mut values = vec![0.0; pattern.nnz()];
        for (t, v) in mesh.triangles.iter().enumerate() {
            let area = mesh.geometry(t).area;
            for a in 0..3 {
                for b in 0..3 {
                    let m = if a == b { area / 6.0 } else { area / 12.0 };
                    values[pattern.position(v[a], v[b]).unwrap()] += m;
                }
            }
        }
        P1Mass { pattern, values }
    }

    pub fn inner(&self, f: &[f64], h: &[f64]) -> f64 {
        let mh = self.pattern.matvec(&self.values, h);
        f.iter().zip(&mh).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }
}
