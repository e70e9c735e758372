use nalgebra::{Point2, Vector2};

use super::dofmap::DofMap;
use crate::elements::{
    eval_lagrange, eval_rt, quadrature, rt_reference_dofs, ElementKind, Family, GeometryMap, QuadratureRule,
};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

const KINDS: [ElementKind; 4] = [ElementKind::P1, ElementKind::P2, ElementKind::Rt0, ElementKind::Rt1];

fn kind_slot(kind: ElementKind) -> usize {
    match kind {
        ElementKind::P1 => 0,
        ElementKind::P2 => 1,
        ElementKind::Rt0 => 2,
        ElementKind::Rt1 => 3,
    }
}

/// Basis tabulation at a set of points, indexed `[point * n_basis + basis]`.
/// Lagrange kinds fill `value`/`grad`, Raviart-Thomas kinds fill `vector`/`div`.
#[derive(Debug, Clone, Default)]
pub struct Tabulation {
    pub n_basis: usize,
    pub value: Vec<f64>,
    pub grad: Vec<Vector2<f64>>,
    pub vector: Vec<Vector2<f64>>,
    pub div: Vec<f64>,
}

impl Tabulation {
    fn reference(kind: ElementKind, points: &[Point2<f64>]) -> Result<Self> {
        let mut t = Tabulation { n_basis: kind.n_basis(), ..Default::default() };
        for p in points {
            match kind.family() {
                Family::Lagrange => {
                    let e = eval_lagrange(kind.degree(), *p)?;
                    t.value.extend(e.values);
                    t.grad.extend(e.grads);
                }
                Family::RaviartThomas => {
                    let e = eval_rt(kind.degree(), *p)?;
                    t.vector.extend(e.values);
                    t.div.extend(e.divs);
                }
            }
        }
        Ok(t)
    }

    /// Physical values on one cell; Raviart-Thomas functions carry the global
    /// orientation signs.
    fn push(&self, map: &GeometryMap, signs: &[f64]) -> Self {
        let nb = self.n_basis;
        Tabulation {
            n_basis: nb,
            value: self.value.clone(),
            grad: self.grad.iter().map(|g| map.push_gradient(*g)).collect(),
            vector: self.vector.iter().enumerate().map(|(k, v)| map.piola(*v) * signs[k % nb]).collect(),
            div: self.div.iter().enumerate().map(|(k, d)| map.piola_div(*d) * signs[k % nb]).collect(),
        }
    }
}

/// Orientation signs of the local basis on `cell`.
pub fn cell_signs(mesh: &Mesh, kind: ElementKind, cell: usize) -> Vec<f64> {
    let s = mesh.triangle_edge_signs(cell);
    match kind {
        ElementKind::P1 => vec![1.0; 3],
        ElementKind::P2 => vec![1.0; 6],
        ElementKind::Rt0 => s.to_vec(),
        ElementKind::Rt1 => vec![s[0], 1.0, s[1], 1.0, s[2], 1.0, 1.0, 1.0],
    }
}

/// Mesh, physical scaling, quadrature and cached reference tabulations shared
/// by every assembly pass.
#[derive(Debug, Clone)]
pub struct FeContext<'m> {
    mesh: &'m Mesh,
    length: f64,
    rule: QuadratureRule,
    maps: Vec<GeometryMap>,
    reference: Vec<Tabulation>,
}

impl<'m> FeContext<'m> {
    /// `length` is the physical side of the unit-square mesh (metres).
    pub fn new(mesh: &'m Mesh, length: f64, quadrature_order: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!("domain length {length}")));
        }
        let rule = quadrature(quadrature_order)?;
        let maps = (0..mesh.n_triangles())
            .map(|t| {
                let p = mesh.triangle_points(t).map(|p| Point2::from(p.coords * length));
                GeometryMap::new(p, t)
            })
            .collect::<Result<Vec<_>>>()?;
        let reference = KINDS.iter().map(|&k| Tabulation::reference(k, &rule.points)).collect::<Result<_>>()?;
        Ok(Self { mesh, length, rule, maps, reference })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn map(&self, cell: usize) -> &GeometryMap {
        &self.maps[cell]
    }

    pub fn n_cells(&self) -> usize {
        self.maps.len()
    }

    /// Physical domain area.
    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    /// Quadrature data and tabulations of `kinds` on one cell.
    pub fn cell(&self, cell: usize, kinds: &[ElementKind]) -> CellContext {
        let map = &self.maps[cell];
        let jxw = self.rule.weights.iter().map(|w| w * map.det).collect();
        let points = self.rule.points.iter().map(|p| Point2::from(map.map(*p).coords / self.length)).collect();
        let mut tabs: [Option<Tabulation>; 4] = Default::default();
        for &k in kinds {
            let slot = kind_slot(k);
            if tabs[slot].is_none() {
                tabs[slot] = Some(self.reference[slot].push(map, &cell_signs(self.mesh, k, cell)));
            }
        }
        CellContext { cell, n_points: self.rule.len(), jxw, points, tabs }
    }

    /// Tabulation at arbitrary reference points of one cell (used for output).
    pub fn cell_at(&self, cell: usize, kinds: &[ElementKind], points: &[Point2<f64>]) -> Result<CellContext> {
        let map = &self.maps[cell];
        let mut tabs: [Option<Tabulation>; 4] = Default::default();
        for &k in kinds {
            let reference = Tabulation::reference(k, points)?;
            tabs[kind_slot(k)] = Some(reference.push(map, &cell_signs(self.mesh, k, cell)));
        }
        Ok(CellContext {
            cell,
            n_points: points.len(),
            jxw: vec![0.0; points.len()],
            points: points.iter().map(|p| Point2::from(map.map(*p).coords / self.length)).collect(),
            tabs,
        })
    }
}

/// Per-cell view handed to integrands.
#[derive(Debug, Clone)]
pub struct CellContext {
    pub cell: usize,
    pub n_points: usize,
    /// Quadrature weight times Jacobian determinant (physical measure).
    pub jxw: Vec<f64>,
    /// Quadrature points in unit-square coordinates.
    pub points: Vec<Point2<f64>>,
    tabs: [Option<Tabulation>; 4],
}

impl CellContext {
    pub fn tab(&self, kind: ElementKind) -> &Tabulation {
        self.tabs[kind_slot(kind)].as_ref().unwrap_or_else(|| panic!("{kind:?} was not tabulated on this cell"))
    }

    /// Lagrange basis `j` at point `q`: value and physical gradient.
    pub fn lagrange(&self, kind: ElementKind, q: usize, j: usize) -> (f64, Vector2<f64>) {
        let t = self.tab(kind);
        let k = q * t.n_basis + j;
        (t.value[k], t.grad[k])
    }

    /// Raviart-Thomas basis `j` at point `q`: signed physical value and divergence.
    pub fn rt(&self, kind: ElementKind, q: usize, j: usize) -> (Vector2<f64>, f64) {
        let t = self.tab(kind);
        let k = q * t.n_basis + j;
        (t.vector[k], t.div[k])
    }

    /// Component `comp` of a Lagrange field: value and gradient at point `q`.
    pub fn eval_lagrange(&self, dm: &DofMap, coeffs: &[f64], comp: usize, q: usize) -> (f64, Vector2<f64>) {
        let kind = dm.space().element;
        let mut v = 0.0;
        let mut g = Vector2::zeros();
        for (j, &dof) in dm.cell_dofs(self.cell).iter().enumerate() {
            let c = coeffs[dm.global_index(comp, dof)];
            let (phi, grad) = self.lagrange(kind, q, j);
            v += c * phi;
            g += grad * c;
        }
        (v, g)
    }

    /// Component `comp` (a tensor row) of a Raviart-Thomas field: value and divergence.
    pub fn eval_rt(&self, dm: &DofMap, coeffs: &[f64], comp: usize, q: usize) -> (Vector2<f64>, f64) {
        let kind = dm.space().element;
        let mut v = Vector2::zeros();
        let mut d = 0.0;
        for (j, &dof) in dm.cell_dofs(self.cell).iter().enumerate() {
            let c = coeffs[dm.global_index(comp, dof)];
            let (phi, div) = self.rt(kind, q, j);
            v += phi * c;
            d += c * div;
        }
        (v, d)
    }
}

/// Nodal interpolation into a Lagrange space; `f(x, component)` takes
/// unit-square coordinates.
pub fn interpolate_lagrange(mesh: &Mesh, dm: &DofMap, f: impl Fn(Point2<f64>, usize) -> f64) -> Result<Vec<f64>> {
    if dm.family() != Family::Lagrange {
        return Err(Error::Unsupported("Lagrange interpolation into a Raviart-Thomas space".into()));
    }
    let nv = mesh.n_vertices();
    let mut out = vec![0.0; dm.n_global()];
    for c in 0..dm.space().components {
        for g in 0..dm.n_scalar() {
            let x = if g < nv { mesh.vertex(g) } else { mesh.edge_midpoint(g - nv) };
            out[dm.global_index(c, g)] = f(x, c);
        }
    }
    Ok(out)
}

/// Canonical Raviart-Thomas interpolation (edge and interior moments) of
/// `f(x, row)`, with `x` in unit-square coordinates.
pub fn interpolate_rt(fe: &FeContext, dm: &DofMap, f: impl Fn(Point2<f64>, usize) -> Vector2<f64>) -> Result<Vec<f64>> {
    if dm.family() != Family::RaviartThomas {
        return Err(Error::Unsupported("Raviart-Thomas interpolation into a Lagrange space".into()));
    }
    let degree = dm.space().element.degree();
    let mut out = vec![0.0; dm.n_global()];
    for t in 0..fe.n_cells() {
        let map = fe.map(t);
        for c in 0..dm.space().components {
            let local = rt_reference_dofs(degree, |p| {
                let x = Point2::from(map.map(p).coords / fe.length());
                map.pull_back(f(x, c))
            })?;
            for ((&dof, &s), v) in dm.cell_dofs(t).iter().zip(dm.cell_signs(t)).zip(&local) {
                out[dm.global_index(c, dof)] = s * v;
            }
        }
    }
    Ok(out)
}

/// Average over adjacent cells of a field's value at each mesh vertex; one
/// 2-vector per component for Raviart-Thomas fields, one scalar (stored in
/// `.x`) per component for Lagrange fields.
pub fn vertex_average(fe: &FeContext, dm: &DofMap, coeffs: &[f64]) -> Result<Vec<Vec<Vector2<f64>>>> {
    let mesh = fe.mesh();
    let kind = dm.space().element;
    let comps = dm.space().components;
    let nv = mesh.n_vertices();
    let mut sum = vec![vec![Vector2::zeros(); nv]; comps];
    let mut count = vec![0usize; nv];
    let corners: Vec<Point2<f64>> = (0..3).map(crate::elements::reference_vertex).collect();
    for t in 0..fe.n_cells() {
        let ctx = fe.cell_at(t, &[kind], &corners)?;
        for (q, &v) in mesh.triangle(t).iter().enumerate() {
            count[v] += 1;
            for (c, s) in sum.iter_mut().enumerate() {
                s[v] += match dm.family() {
                    Family::Lagrange => Vector2::new(ctx.eval_lagrange(dm, coeffs, c, q).0, 0.0),
                    Family::RaviartThomas => ctx.eval_rt(dm, coeffs, c, q).0,
                };
            }
        }
    }
    for s in &mut sum {
        for (v, n) in s.iter_mut().zip(&count) {
            *v /= *n as f64;
        }
    }
    Ok(sum)
}

/// `∫ f` of a scalar Lagrange field (component 0).
pub fn integrate_lagrange(fe: &FeContext, dm: &DofMap, coeffs: &[f64]) -> f64 {
    let kind = dm.space().element;
    (0..fe.n_cells())
        .map(|t| {
            let ctx = fe.cell(t, &[kind]);
            (0..ctx.n_points).map(|q| ctx.jxw[q] * ctx.eval_lagrange(dm, coeffs, 0, q).0).sum::<f64>()
        })
        .sum()
}

/// Largest jump of the normal component (component 0) across interior edges,
/// sampled at three points per edge.
pub fn max_normal_jump(fe: &FeContext, dm: &DofMap, c: &[f64]) -> f64 {
    let mesh = fe.mesh();
    let kind = dm.space().element;
    let mut worst: f64 = 0.0;
    for e in 0..mesh.n_edges() {
        let tris = mesh.edge_triangles(e);
        if tris.len() != 2 {
            continue;
        }
        let [a, b] = mesh.edge(e);
        let n = mesh.edge_normal(e);
        for s in [0.2, 0.5, 0.9] {
            let x = mesh.vertex(a) + (mesh.vertex(b) - mesh.vertex(a)) * s;
            let vals: Vec<f64> = tris
                .iter()
                .map(|&t| {
                    let map = fe.map(t);
                    let inv = map.jacobian.try_inverse().unwrap();
                    let p = Point2::from(inv * (x * fe.length() - map.origin));
                    let ctx = fe.cell_at(t, &[kind], &[p]).unwrap();
                    ctx.eval_rt(dm, c, 0, 0).0.dot(&n)
                })
                .collect();
            worst = worst.max((vals[0] - vals[1]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::dofmap::Space;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rt_interpolation_reproduces_constants() {
        let mesh = Mesh::build_structured(3).unwrap();
        let fe = FeContext::new(&mesh, 1.0, 4).unwrap();
        for kind in [ElementKind::Rt0, ElementKind::Rt1] {
            let dm = DofMap::new(&mesh, Space::new(kind, 2)).unwrap();
            let c = interpolate_rt(&fe, &dm, |_, r| if r == 0 { Vector2::new(1.0, 0.0) } else { Vector2::new(-0.5, 2.0) })
                .unwrap();
            for t in 0..mesh.n_triangles() {
                let ctx = fe.cell(t, &[kind]);
                for q in 0..ctx.n_points {
                    let (v0, d0) = ctx.eval_rt(&dm, &c, 0, q);
                    let (v1, _) = ctx.eval_rt(&dm, &c, 1, q);
                    assert_relative_eq!(v0, Vector2::new(1.0, 0.0), epsilon = 1e-12);
                    assert_relative_eq!(v1, Vector2::new(-0.5, 2.0), epsilon = 1e-12);
                    assert!(d0.abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn rt1_interpolation_reproduces_linear_fields() {
        let mesh = Mesh::build_structured(2).unwrap();
        let fe = FeContext::new(&mesh, 3.0, 4).unwrap();
        let dm = DofMap::new(&mesh, Space::scalar(ElementKind::Rt1)).unwrap();
        let f = |x: Point2<f64>| Vector2::new(1.0 + 2.0 * x.x - x.y, 0.5 * x.x + 3.0 * x.y);
        let c = interpolate_rt(&fe, &dm, |x, _| f(x)).unwrap();
        for t in 0..mesh.n_triangles() {
            let ctx = fe.cell(t, &[ElementKind::Rt1]);
            for q in 0..ctx.n_points {
                let (v, d) = ctx.eval_rt(&dm, &c, 0, q);
                assert_relative_eq!(v, f(ctx.points[q]), epsilon = 1e-12);
                // div in physical units: (2 + 3) / L
                assert_relative_eq!(d, 5.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn p2_interpolation_is_exact_for_quadratics() {
        let mesh = Mesh::build_structured(3).unwrap();
        let fe = FeContext::new(&mesh, 1.0, 4).unwrap();
        let dm = DofMap::new(&mesh, Space::scalar(ElementKind::P2)).unwrap();
        let f = |x: Point2<f64>| 0.3 + x.x - 2.0 * x.y + 1.5 * x.x * x.x - x.x * x.y + 0.7 * x.y * x.y;
        let c = interpolate_lagrange(&mesh, &dm, |x, _| f(x)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = rng.random_range(0..mesh.n_triangles());
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let p = if a + b > 1.0 { Point2::new(1.0 - a, 1.0 - b) } else { Point2::new(a, b) };
            let ctx = fe.cell_at(t, &[ElementKind::P2], &[p]).unwrap();
            let (v, _) = ctx.eval_lagrange(&dm, &c, 0, 0);
            assert!((v - f(ctx.points[0])).abs() <= 1e-13, "{v} vs {}", f(ctx.points[0]));
        }
    }

    #[test]
    fn normal_traces_agree_across_shared_edges() {
        let mesh = Mesh::build_structured(4).unwrap();
        let fe = FeContext::new(&mesh, 1.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [ElementKind::Rt0, ElementKind::Rt1] {
            let dm = DofMap::new(&mesh, Space::scalar(kind)).unwrap();
            let c: Vec<f64> = (0..dm.n_global()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(max_normal_jump(&fe, &dm, &c) <= 1e-12);
        }
    }
}
