//! Uniform triangulation of the unit square with P1/P2 node maps and
//! boundary tagging for the inlet, outlet and wall segments.

use std::collections::HashMap;

use crate::element::{p2_values, TriangleGeometry, EDGE_VERTICES};
use crate::error::{Error, Result};

/// Lower and upper end of the inlet and outlet windows along y.
pub const WINDOW: (f64, f64) = (0.35, 0.65);
const WINDOW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Inlet,
    Outlet,
    Wall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub midpoint: [f64; 2],
}

/// A boundary edge of the hold-all domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFacet {
    pub edge: usize,
    pub tag: BoundaryTag,
    /// Outward unit normal.
    pub normal: [f64; 2],
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub n_div: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Vertex triples, counterclockwise.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Edge indices of local edges (0,1), (1,2), (2,0) per triangle.
    pub triangle_edges: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryFacet>,
    geometry: Vec<TriangleGeometry>,
}

/// Builds the uniform mesh of (0,1)^2 with `n_div` cells per side. Every
/// cell is split along its lower-left to upper-right diagonal. Boundary
/// facets are tagged by the midpoint rule; use [`TriMesh::tag_boundary`] to
/// also require non-empty inlet and outlet windows.
pub fn build_unit_square_mesh(n_div: usize) -> Result<TriMesh> {
    if n_div < 2 {
        return Err(Error::InvalidResolution(n_div));
    }
    let n = n_div;
    let h = 1.0 / n as f64;
    let vid = |i: usize, j: usize| j * (n + 1) + i;

    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    // Pin the far side to exactly 1.0 regardless of rounding in i * h.
    for v in vertices.iter_mut() {
        for c in v.iter_mut() {
            if (*c - 1.0).abs() < 1e-14 {
                *c = 1.0;
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::with_capacity(3 * n * n + 2 * n);
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    let mut edge_use = Vec::new();
    for tri in &triangles {
        let mut ids = [0; 3];
        for (k, [a, b]) in EDGE_VERTICES.iter().enumerate() {
            let (va, vb) = (tri[*a], tri[*b]);
            let key = (va.min(vb), va.max(vb));
            let id = *edge_ids.entry(key).or_insert_with(|| {
                let (pa, pb) = (vertices[key.0], vertices[key.1]);
                edges.push(Edge {
                    vertices: [key.0, key.1],
                    midpoint: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                });
                edge_use.push(0usize);
                edges.len() - 1
            });
            edge_use[id] += 1;
            ids[k] = id;
        }
        triangle_edges.push(ids);
    }

    let geometry = triangles
        .iter()
        .map(|t| TriangleGeometry::new([vertices[t[0]], vertices[t[1]], vertices[t[2]]]))
        .collect();

    let mut boundary = Vec::new();
    for (id, e) in edges.iter().enumerate() {
        if edge_use[id] != 1 {
            continue;
        }
        let [pa, pb] = [vertices[e.vertices[0]], vertices[e.vertices[1]]];
        let m = e.midpoint;
        let normal = if m[0] < WINDOW_TOL {
            [-1.0, 0.0]
        } else if m[0] > 1.0 - WINDOW_TOL {
            [1.0, 0.0]
        } else if m[1] < WINDOW_TOL {
            [0.0, -1.0]
        } else {
            [0.0, 1.0]
        };
        let length = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        boundary.push(BoundaryFacet {
            edge: id,
            tag: classify_facet(m),
            normal,
            length,
        });
    }

    Ok(TriMesh {
        n_div,
        vertices,
        triangles,
        edges,
        triangle_edges,
        boundary,
        geometry,
    })
}

fn classify_facet(mid: [f64; 2]) -> BoundaryTag {
    let in_window = mid[1] >= WINDOW.0 - WINDOW_TOL && mid[1] <= WINDOW.1 + WINDOW_TOL;
    if in_window && mid[0].abs() < WINDOW_TOL {
        BoundaryTag::Inlet
    } else if in_window && (mid[0] - 1.0).abs() < WINDOW_TOL {
        BoundaryTag::Outlet
    } else {
        BoundaryTag::Wall
    }
}

impl TriMesh {
    /// Builds and tags the mesh, failing when either window is empty.
    pub fn unit_square(n_div: usize) -> Result<TriMesh> {
        let mut mesh = build_unit_square_mesh(n_div)?;
        mesh.tag_boundary()?;
        Ok(mesh)
    }

    /// (Re)assigns boundary tags by the facet-midpoint window test.
    pub fn tag_boundary(&mut self) -> Result<()> {
        for f in self.boundary.iter_mut() {
            f.tag = classify_facet(self.edges[f.edge].midpoint);
        }
        if !self.boundary.iter().any(|f| f.tag == BoundaryTag::Inlet) {
            return Err(Error::EmptyWindow("inlet"));
        }
        if !self.boundary.iter().any(|f| f.tag == BoundaryTag::Outlet) {
            return Err(Error::EmptyWindow("outlet"));
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_p2(&self) -> usize {
        self.vertices.len() + self.edges.len()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_div as f64
    }

    pub fn geometry(&self, t: usize) -> &TriangleGeometry {
        &self.geometry[t]
    }

    /// Global P2 node indices of triangle `t` in local order.
    #[inline]
    pub fn p2_dofs(&self, t: usize) -> [usize; 6] {
        let v = self.triangles[t];
        let e = self.triangle_edges[t];
        let nv = self.vertices.len();
        [v[0], v[1], v[2], nv + e[0], nv + e[1], nv + e[2]]
    }

    /// Coordinates of a P2 node (vertices first, then edge midpoints).
    pub fn p2_node(&self, k: usize) -> [f64; 2] {
        let nv = self.vertices.len();
        if k < nv {
            self.vertices[k]
        } else {
            self.edges[k - nv].midpoint
        }
    }

    pub fn p2_nodes(&self) -> Vec<[f64; 2]> {
        (0..self.n_p2()).map(|k| self.p2_node(k)).collect()
    }

    /// P2 node indices of a boundary facet: the two endpoints and the midpoint.
    pub fn facet_p2_nodes(&self, f: &BoundaryFacet) -> [usize; 3] {
        let e = &self.edges[f.edge];
        [e.vertices[0], self.vertices.len() + f.edge, e.vertices[1]]
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    pub fn tag_length(&self, tag: BoundaryTag) -> f64 {
        self.boundary
            .iter()
            .filter(|f| f.tag == tag)
            .map(|f| f.length)
            .sum()
    }

    /// Finds the triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        if !(p[0] >= -TOL && p[0] <= 1.0 + TOL && p[1] >= -TOL && p[1] <= 1.0 + TOL) {
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        let n = self.n_div;
        let cell = |c: f64| ((c * n as f64).floor().max(0.0) as usize).min(n - 1);
        let (i, j) = (cell(p[0]), cell(p[1]));
        let h = self.h();
        let (dx, dy) = (p[0] - i as f64 * h, p[1] - j as f64 * h);
        let t = 2 * (j * n + i) + usize::from(dy > dx);
        Ok((t, self.geometry[t].barycentric(p)))
    }

    pub fn interpolate_p1(&self, field: &[f64], p: [f64; 2]) -> Result<f64> {
        let (t, l) = self.locate(p)?;
        let v = self.triangles[t];
        Ok(l[0] * field[v[0]] + l[1] * field[v[1]] + l[2] * field[v[2]])
    }

    pub fn interpolate_p2(&self, field: &[f64], p: [f64; 2]) -> Result<f64> {
        let (t, l) = self.locate(p)?;
        let phi = p2_values(&l);
        Ok(self
            .p2_dofs(t)
            .iter()
            .zip(phi)
            .map(|(&k, b)| field[k] * b)
            .sum())
    }

    /// Restricts a P2 nodal field to the vertices (its P1 view).
    pub fn restrict_to_vertices<T: Copy>(&self, field: &[T]) -> Vec<T> {
        field[..self.vertices.len()].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_small_meshes() {
        let m = build_unit_square_mesh(2).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_edges()), (9, 8, 16));
        assert_eq!(m.n_p2(), 25);
        for n in [3, 5, 8] {
            let m = build_unit_square_mesh(n).unwrap();
            assert_eq!(m.n_vertices(), (n + 1) * (n + 1));
            assert_eq!(m.n_triangles(), 2 * n * n);
            assert_eq!(m.n_edges(), 3 * n * n + 2 * n);
        }
    }

    #[test]
    fn default_resolution_has_9800_triangles() {
        assert_eq!(build_unit_square_mesh(70).unwrap().n_triangles(), 9800);
    }

    #[test]
    fn rejects_too_coarse() {
        assert!(matches!(
            build_unit_square_mesh(1),
            Err(Error::InvalidResolution(1))
        ));
        assert!(matches!(
            TriMesh::unit_square(2),
            Err(Error::EmptyWindow("inlet"))
        ));
    }

    #[test]
    fn areas_positive_and_sum_to_one() {
        let m = build_unit_square_mesh(3).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-14);
        assert!((0..m.n_triangles()).all(|t| m.geometry(t).area > 0.0));
    }

    #[test]
    fn conforming_edges() {
        let m = build_unit_square_mesh(6).unwrap();
        let mut uses = vec![0; m.n_edges()];
        for te in &m.triangle_edges {
            for &e in te {
                uses[e] += 1;
            }
        }
        let boundary = uses.iter().filter(|&&u| u == 1).count();
        assert!(uses.iter().all(|&u| u == 1 || u == 2));
        assert_eq!(boundary, 4 * 6);
        assert_eq!(m.boundary.len(), boundary);
    }

    fn facet_tag(m: &TriMesh, a: [f64; 2], b: [f64; 2]) -> BoundaryTag {
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        m.boundary
            .iter()
            .find(|f| {
                let e = m.edges[f.edge].midpoint;
                (e[0] - mid[0]).abs() < 1e-12 && (e[1] - mid[1]).abs() < 1e-12
            })
            .expect("facet exists")
            .tag
    }

    #[test]
    fn window_tags() {
        let m = TriMesh::unit_square(20).unwrap();
        assert_eq!(facet_tag(&m, [0.0, 0.40], [0.0, 0.45]), BoundaryTag::Inlet);
        assert_eq!(facet_tag(&m, [0.0, 0.30], [0.0, 0.35]), BoundaryTag::Wall);
        assert_eq!(facet_tag(&m, [1.0, 0.50], [1.0, 0.55]), BoundaryTag::Outlet);
        assert_eq!(facet_tag(&m, [0.5, 0.0], [0.55, 0.0]), BoundaryTag::Wall);
        for n in [20, 40, 60] {
            let m = TriMesh::unit_square(n).unwrap();
            assert!((m.tag_length(BoundaryTag::Inlet) - 0.3).abs() < 1e-12);
            assert!((m.tag_length(BoundaryTag::Outlet) - 0.3).abs() < 1e-12);
        }
        for n in [7, 13, 70] {
            let m = TriMesh::unit_square(n).unwrap();
            assert!((m.tag_length(BoundaryTag::Inlet) - 0.3).abs() <= m.h() + 1e-12);
            assert!((m.tag_length(BoundaryTag::Outlet) - 0.3).abs() <= m.h() + 1e-12);
        }
    }

    #[test]
    fn normals_point_outward() {
        let m = build_unit_square_mesh(4).unwrap();
        for f in &m.boundary {
            let c = m.edges[f.edge].midpoint;
            let inward = [0.5 - c[0], 0.5 - c[1]];
            assert!(f.normal[0] * inward[0] + f.normal[1] * inward[1] < 0.0);
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let m = build_unit_square_mesh(5).unwrap();
        let f1: Vec<f64> = m.vertices.iter().map(|v| v[0]).collect();
        assert!((m.interpolate_p1(&f1, [0.3, 0.7]).unwrap() - 0.3).abs() < 1e-14);
        let f2: Vec<f64> = m.p2_nodes().iter().map(|v| v[0] * v[0]).collect();
        assert!((m.interpolate_p2(&f2, [0.25, 0.1]).unwrap() - 0.0625).abs() < 1e-14);
        let ones = vec![1.0; m.n_p2()];
        assert!((m.interpolate_p2(&ones, [0.123, 0.987]).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            m.interpolate_p1(&f1, [1.2, 0.5]),
            Err(Error::OutsideDomain(..))
        ));
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = build_unit_square_mesh(7).unwrap();
        for p in [
            [0.0, 0.0],
            [1.0, 1.0],
            [0.5, 0.5],
            [0.91, 0.12],
            [0.12, 0.91],
        ] {
            let (_, l) = m.locate(p).unwrap();
            assert!(l.iter().all(|&x| x > -1e-12), "{p:?} -> {l:?}");
        }
    }
}
