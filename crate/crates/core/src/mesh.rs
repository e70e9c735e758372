//! Conforming triangulations of the unit square.
//!
//! Local numbering convention used throughout the crate: triangle vertices are
//! stored counterclockwise, and local edge `i` is the edge opposite local
//! vertex `i`, traversed counterclockwise from local vertex `i + 1` to
//! `i + 2` (mod 3). Every global edge is oriented from its lower to its higher
//! vertex index; its global normal is the tangent rotated clockwise.

use std::collections::HashMap;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point2<f64>>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    boundary_edges: Vec<bool>,
    triangle_edges: Vec<[usize; 3]>,
    /// `+1` when the outward normal of the triangle on that local edge agrees
    /// with the global edge normal, `-1` otherwise.
    triangle_edge_signs: Vec<[f64; 3]>,
    edge_triangles: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    pub max_aspect_ratio: f64,
    pub min_area: f64,
    pub max_area: f64,
}

impl Mesh {
    /// Uniform `n x n` grid on the unit square, each cell split along the
    /// diagonal from its lower-left to its upper-right corner.
    pub fn build_structured(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "structured mesh needs at least one cell per side".into(),
            ));
        }
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Point2::new(i as f64 * h, j as f64 * h));
            }
        }
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v01 = idx(i, j + 1);
                let v11 = idx(i + 1, j + 1);
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::from_triangles(vertices, triangles)
    }

    /// Builds edge connectivity for an arbitrary triangle soup. Triangles with
    /// clockwise orientation are rejected; degenerate ones are accepted here and
    /// caught by [`Mesh::validate`].
    pub fn from_triangles(vertices: Vec<Point2<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_triangles: Vec<Vec<usize>> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        let mut triangle_edge_signs = Vec::with_capacity(triangles.len());

        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let mut te = [0usize; 3];
            let mut ts = [0.0; 3];
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = [a.min(b), a.max(b)];
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_triangles.push(Vec::with_capacity(2));
                    edges.len() - 1
                });
                edge_triangles[e].push(t);
                te[i] = e;
                ts[i] = if a < b { 1.0 } else { -1.0 };
            }
            triangle_edges.push(te);
            triangle_edge_signs.push(ts);
        }

        if let Some((e, tris)) = edge_triangles.iter().enumerate().find(|(_, t)| t.len() > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge {e} is shared by {} triangles",
                tris.len()
            )));
        }
        let boundary_edges = edge_triangles.iter().map(|t| t.len() == 1).collect();

        Ok(Self {
            vertices,
            triangles,
            edges,
            boundary_edges,
            triangle_edges,
            triangle_edge_signs,
            edge_triangles,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point2<f64> {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Point2<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edges[e]
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.boundary_edges.iter().filter(|&&b| b).count()
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn triangle_edge_signs(&self, t: usize) -> [f64; 3] {
        self.triangle_edge_signs[t]
    }

    pub fn edge_triangles(&self, e: usize) -> &[usize] {
        &self.edge_triangles[e]
    }

    /// Vertices touching at least one boundary edge.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n_vertices()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if self.boundary_edges[e] {
                flags[a] = true;
                flags[b] = true;
            }
        }
        flags
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * (b - a).perp(&(c - a))
    }

    /// Unit global normal of edge `e` (tangent lower -> higher vertex rotated clockwise).
    pub fn edge_normal(&self, e: usize) -> Vector2<f64> {
        let [a, b] = self.edges[e];
        let t = self.vertices[b] - self.vertices[a];
        Vector2::new(t.y, -t.x) / t.norm()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.vertices[b] - self.vertices[a]).norm()
    }

    pub fn edge_midpoint(&self, e: usize) -> Point2<f64> {
        let [a, b] = self.edges[e];
        nalgebra::center(&self.vertices[a], &self.vertices[b])
    }

    /// Checks the structural invariants: positive areas, edge multiplicities,
    /// opposite orientation signs on interior edges.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.n_triangles() {
            let area = self.signed_area(t);
            if !(area > 0.0) {
                return Err(Error::DegenerateTriangle { cell: t, area });
            }
        }
        for (e, tris) in self.edge_triangles.iter().enumerate() {
            match tris.as_slice() {
                [_] => {}
                [t0, t1] => {
                    let s0 = self.local_sign_of(*t0, e);
                    let s1 = self.local_sign_of(*t1, e);
                    if s0 * s1 >= 0.0 {
                        return Err(Error::InvalidMesh(format!(
                            "interior edge {e} has inconsistent orientation signs"
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {e} is shared by {} triangles",
                        tris.len()
                    )))
                }
            }
        }
        Ok(())
    }

    fn local_sign_of(&self, t: usize, e: usize) -> f64 {
        let k = self.triangle_edges[t].iter().position(|&x| x == e).expect("edge incident to triangle");
        self.triangle_edge_signs[t][k]
    }

    /// Angle, aspect-ratio and area statistics. Fails on invalid meshes.
    pub fn quality(&self) -> Result<MeshQuality> {
        self.validate()?;
        let mut q = MeshQuality {
            min_angle_deg: f64::INFINITY,
            max_aspect_ratio: 0.0,
            min_area: f64::INFINITY,
            max_area: 0.0,
        };
        for t in 0..self.n_triangles() {
            let p = self.triangle_points(t);
            let area = self.signed_area(t);
            let len: [f64; 3] = std::array::from_fn(|i| (p[(i + 2) % 3] - p[(i + 1) % 3]).norm());
            for i in 0..3 {
                let u = p[(i + 1) % 3] - p[i];
                let v = p[(i + 2) % 3] - p[i];
                let angle = (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos();
                q.min_angle_deg = q.min_angle_deg.min(angle.to_degrees());
            }
            // circumradius over twice the inradius; equals 1 for equilateral triangles
            let perimeter: f64 = len.iter().sum();
            let circumradius = len[0] * len[1] * len[2] / (4.0 * area);
            let inradius = 2.0 * area / perimeter;
            q.max_aspect_ratio = q.max_aspect_ratio.max(circumradius / (2.0 * inradius));
            q.min_area = q.min_area.min(area);
            q.max_area = q.max_area.max(area);
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_zero_cells() {
        assert!(Mesh::build_structured(0).is_err());
    }

    #[test]
    fn smallest_mesh_counts() {
        let m = Mesh::build_structured(1).unwrap();
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.n_boundary_edges(), 4);
    }

    #[test]
    fn counts_follow_closed_formulas() {
        let m = Mesh::build_structured(2).unwrap();
        assert_eq!((m.n_triangles(), m.n_vertices(), m.n_edges()), (8, 9, 16));
        let m = Mesh::build_structured(32).unwrap();
        assert_eq!((m.n_triangles(), m.n_vertices()), (2048, 1089));
        for n in 1..12 {
            let m = Mesh::build_structured(n).unwrap();
            let euler = m.n_vertices() as i64 - m.n_edges() as i64 + m.n_triangles() as i64;
            assert_eq!(euler, 1);
            assert_eq!(m.n_boundary_edges(), 4 * n);
            m.validate().unwrap();
        }
    }

    #[test]
    fn structured_quality() {
        let q = Mesh::build_structured(4).unwrap().quality().unwrap();
        assert_relative_eq!(q.min_angle_deg, 45.0, epsilon = 1e-12);
        let q = Mesh::build_structured(8).unwrap().quality().unwrap();
        assert_relative_eq!(q.min_area, 1.0 / 128.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_triangle_is_reported() {
        let vertices = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(2.0, 0.0),
        ];
        let m = Mesh::from_triangles(vertices, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert!(matches!(m.quality(), Err(Error::DegenerateTriangle { cell: 1, .. })));
    }

    #[test]
    fn weighted_outward_normals_close() {
        let m = Mesh::build_structured(5).unwrap();
        for t in 0..m.n_triangles() {
            let mut sum = Vector2::zeros();
            for (i, &e) in m.triangle_edges(t).iter().enumerate() {
                sum += m.triangle_edge_signs(t)[i] * m.edge_normal(e) * m.edge_length(e);
            }
            assert!(sum.norm() < 1e-14);
        }
    }

    #[test]
    fn sign_matches_outward_normal() {
        let m = Mesh::build_structured(3).unwrap();
        for t in 0..m.n_triangles() {
            let p = m.triangle_points(t);
            let centroid = Point2::from((p[0].coords + p[1].coords + p[2].coords) / 3.0);
            for (i, &e) in m.triangle_edges(t).iter().enumerate() {
                let outward = m.edge_midpoint(e) - centroid;
                let n = m.triangle_edge_signs(t)[i] * m.edge_normal(e);
                assert!(n.dot(&outward) > 0.0);
            }
        }
    }
}
