//! Linear and quadratic Lagrange basis functions on triangles.
//!
//! Local P2 node order: the three vertices, then the midpoints of edges
//! (0,1), (1,2) and (2,0).

use crate::quadrature::Quadrature;

pub const P1_NODES: usize = 3;
pub const P2_NODES: usize = 6;

/// Local vertex pairs spanned by the P2 edge nodes 3, 4 and 5.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

#[inline]
pub fn p1_values(l: &[f64; 3]) -> [f64; 3] {
    *l
}

#[inline]
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Gradients of the P2 basis in physical coordinates given the (constant)
/// gradients of the barycentric coordinates.
#[inline]
pub fn p2_gradients(l: &[f64; 3], grad_l: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for d in 0..2 {
        let g = [grad_l[0][d], grad_l[1][d], grad_l[2][d]];
        out[0][d] = (4.0 * l[0] - 1.0) * g[0];
        out[1][d] = (4.0 * l[1] - 1.0) * g[1];
        out[2][d] = (4.0 * l[2] - 1.0) * g[2];
        out[3][d] = 4.0 * (l[0] * g[1] + l[1] * g[0]);
        out[4][d] = 4.0 * (l[1] * g[2] + l[2] * g[1]);
        out[5][d] = 4.0 * (l[2] * g[0] + l[0] * g[2]);
    }
    out
}

/// Affine geometry of a single triangle.
#[derive(Debug, Clone, Copy)]
pub struct TriangleGeometry {
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl TriangleGeometry {
    pub fn new(vertices: [[f64; 2]; 3]) -> Self {
        let [a, b, c] = vertices;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let area = 0.5 * det;
        let inv = 1.0 / det;
        let grad_lambda = [
            [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
            [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
            [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
        ];
        TriangleGeometry {
            vertices,
            area,
            grad_lambda,
        }
    }

    #[inline]
    pub fn point(&self, l: &[f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }

    pub fn centroid(&self) -> [f64; 2] {
        self.point(&[1.0 / 3.0; 3])
    }

    /// Barycentric coordinates of a physical point (may be outside [0,1]).
    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let a = self.vertices[0];
        let g = &self.grad_lambda;
        let dx = p[0] - a[0];
        let dy = p[1] - a[1];
        let l1 = g[1][0] * dx + g[1][1] * dy;
        let l2 = g[2][0] * dx + g[2][1] * dy;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Physical quadrature weights (reference weights times the Jacobian).
    pub fn weights<'a>(&'a self, rule: &'a Quadrature) -> impl Iterator<Item = f64> + 'a {
        rule.weights.iter().map(move |w| w * 2.0 * self.area)
    }
}
