//! Reference-triangle bases: Lagrange P1/P2 and Raviart-Thomas RT0/RT1.
//!
//! Reference vertices are `(0,0)`, `(1,0)`, `(0,1)`. Raviart-Thomas degrees of
//! freedom are, per local edge, the moments `∫_e v·n q ds` against `q = 1` and
//! (RT1 only) `q = 2s - 1`, where `s` runs counterclockwise along the edge; RT1
//! adds the two interior moments `∫_T v_x` and `∫_T v_y`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Point2, Vector2};
use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre, quadrature};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Lagrange,
    RaviartThomas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    P1,
    P2,
    Rt0,
    Rt1,
}

impl ElementKind {
    pub fn lagrange(degree: usize) -> Result<Self> {
        match degree {
            1 => Ok(Self::P1),
            2 => Ok(Self::P2),
            _ => Err(Error::Unsupported(format!("Lagrange degree {degree}"))),
        }
    }

    pub fn raviart_thomas(degree: usize) -> Result<Self> {
        match degree {
            0 => Ok(Self::Rt0),
            1 => Ok(Self::Rt1),
            _ => Err(Error::Unsupported(format!("Raviart-Thomas degree {degree}"))),
        }
    }

    pub fn family(self) -> Family {
        match self {
            Self::P1 | Self::P2 => Family::Lagrange,
            Self::Rt0 | Self::Rt1 => Family::RaviartThomas,
        }
    }

    pub fn degree(self) -> usize {
        match self {
            Self::Rt0 => 0,
            Self::P1 | Self::Rt1 => 1,
            Self::P2 => 2,
        }
    }

    pub fn n_basis(self) -> usize {
        match self {
            Self::P1 | Self::Rt0 => 3,
            Self::P2 => 6,
            Self::Rt1 => 8,
        }
    }

    /// Degrees of freedom attached to each (vertex, edge, cell).
    pub fn dofs_per_entity(self) -> [usize; 3] {
        match self {
            Self::P1 => [1, 0, 0],
            Self::P2 => [1, 1, 0],
            Self::Rt0 => [0, 1, 0],
            Self::Rt1 => [0, 2, 2],
        }
    }
}

pub const REFERENCE_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

pub fn reference_vertex(i: usize) -> Point2<f64> {
    Point2::new(REFERENCE_VERTICES[i][0], REFERENCE_VERTICES[i][1])
}

/// Endpoints of local edge `i`, in counterclockwise traversal order.
pub fn reference_edge(i: usize) -> (Point2<f64>, Point2<f64>) {
    (reference_vertex((i + 1) % 3), reference_vertex((i + 2) % 3))
}

/// Outward unit normal of local edge `i` on the reference triangle.
pub fn reference_normal(i: usize) -> Vector2<f64> {
    let (a, b) = reference_edge(i);
    let t = b - a;
    Vector2::new(t.y, -t.x) / t.norm()
}

#[derive(Debug, Clone)]
pub struct LagrangeEval {
    pub values: Vec<f64>,
    pub grads: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone)]
pub struct RtEval {
    pub values: Vec<Vector2<f64>>,
    pub divs: Vec<f64>,
}

/// Nodal Lagrange basis; P2 ordering is the three vertex functions followed by
/// the edge functions, edge `i` opposite vertex `i`.
pub fn eval_lagrange(degree: usize, p: Point2<f64>) -> Result<LagrangeEval> {
    let l = [1.0 - p.x - p.y, p.x, p.y];
    let dl = [Vector2::new(-1.0, -1.0), Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
    match degree {
        1 => Ok(LagrangeEval { values: l.to_vec(), grads: dl.to_vec() }),
        2 => {
            let mut values = Vec::with_capacity(6);
            let mut grads = Vec::with_capacity(6);
            for i in 0..3 {
                values.push(l[i] * (2.0 * l[i] - 1.0));
                grads.push(dl[i] * (4.0 * l[i] - 1.0));
            }
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                values.push(4.0 * l[j] * l[k]);
                grads.push((dl[j] * l[k] + dl[k] * l[j]) * 4.0);
            }
            Ok(LagrangeEval { values, grads })
        }
        _ => Err(Error::Unsupported(format!("Lagrange degree {degree}"))),
    }
}

/// Nodes of the Lagrange basis on the reference triangle.
pub fn lagrange_nodes(degree: usize) -> Result<Vec<Point2<f64>>> {
    let mut nodes: Vec<_> = (0..3).map(reference_vertex).collect();
    match degree {
        1 => Ok(nodes),
        2 => {
            for i in 0..3 {
                let (a, b) = reference_edge(i);
                nodes.push(nalgebra::center(&a, &b));
            }
            Ok(nodes)
        }
        _ => Err(Error::Unsupported(format!("Lagrange degree {degree}"))),
    }
}

/// Raviart-Thomas basis values and divergences on the reference triangle.
pub fn eval_rt(degree: usize, p: Point2<f64>) -> Result<RtEval> {
    match degree {
        0 => {
            // (x - v_i) / (2 |T|) with |T| = 1/2: unit flux through edge i
            let values = (0..3).map(|i| p - reference_vertex(i)).collect();
            Ok(RtEval { values, divs: vec![2.0; 3] })
        }
        1 => {
            let coeffs = rt1_coefficients();
            let (psi, dpsi) = rt1_spanning(p);
            let mut values = vec![Vector2::zeros(); 8];
            let mut divs = vec![0.0; 8];
            for k in 0..8 {
                for j in 0..8 {
                    values[k] += psi[j] * coeffs[(j, k)];
                    divs[k] += dpsi[j] * coeffs[(j, k)];
                }
            }
            Ok(RtEval { values, divs })
        }
        _ => Err(Error::Unsupported(format!("Raviart-Thomas degree {degree}"))),
    }
}

/// `RT1 = P1^2 + x P~1`: six vector monomials plus `(x^2, xy)` and `(xy, y^2)`.
fn rt1_spanning(p: Point2<f64>) -> ([Vector2<f64>; 8], [f64; 8]) {
    let (x, y) = (p.x, p.y);
    (
        [
            Vector2::new(1.0, 0.0),
            Vector2::new(x, 0.0),
            Vector2::new(y, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(0.0, x),
            Vector2::new(0.0, y),
            Vector2::new(x * x, x * y),
            Vector2::new(x * y, y * y),
        ],
        [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 3.0 * x, 3.0 * y],
    )
}

fn rt1_coefficients() -> &'static DMatrix<f64> {
    static COEFFS: OnceLock<DMatrix<f64>> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let mut dual = DMatrix::zeros(8, 8);
        for j in 0..8 {
            let dofs = rt_reference_dofs(1, |p| rt1_spanning(p).0[j]).expect("degree 1 supported");
            for (i, v) in dofs.iter().enumerate() {
                dual[(i, j)] = *v;
            }
        }
        dual.try_inverse().expect("RT1 dual matrix is invertible")
    })
}

/// Applies the reference degree-of-freedom functionals to a vector field.
pub fn rt_reference_dofs(degree: usize, f: impl Fn(Point2<f64>) -> Vector2<f64>) -> Result<Vec<f64>> {
    let n_moments = match degree {
        0 => 1,
        1 => 2,
        _ => return Err(Error::Unsupported(format!("Raviart-Thomas degree {degree}"))),
    };
    let (s_nodes, s_weights) = gauss_legendre(5);
    let mut dofs = Vec::with_capacity(3 * n_moments + 2);
    for i in 0..3 {
        let (a, b) = reference_edge(i);
        let n = reference_normal(i);
        let len = (b - a).norm();
        for m in 0..n_moments {
            let moment: f64 = s_nodes
                .iter()
                .zip(&s_weights)
                .map(|(&s, &w)| {
                    let q = if m == 0 { 1.0 } else { 2.0 * s - 1.0 };
                    w * len * f(a + (b - a) * s).dot(&n) * q
                })
                .sum();
            dofs.push(moment);
        }
    }
    if degree == 1 {
        let rule = quadrature(6)?;
        dofs.push(rule.integrate(|p| f(p).x));
        dofs.push(rule.integrate(|p| f(p).y));
    }
    Ok(dofs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_points() -> Vec<Point2<f64>> {
        let mut pts = quadrature(6).unwrap().points;
        pts.extend((0..3).map(reference_vertex));
        pts.push(Point2::new(0.5, 0.0));
        pts
    }

    #[test]
    fn lagrange_nodal_values() {
        let e = eval_lagrange(1, Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(e.values, vec![1.0, 0.0, 0.0]);
        let e = eval_lagrange(1, Point2::new(1.0 / 3.0, 1.0 / 3.0)).unwrap();
        for v in e.values {
            assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        // (1/2, 0) is the midpoint of edge 2
        let e = eval_lagrange(2, Point2::new(0.5, 0.0)).unwrap();
        for (k, v) in e.values.iter().enumerate() {
            assert_relative_eq!(*v, if k == 5 { 1.0 } else { 0.0 }, epsilon = 1e-15);
        }
        for degree in 1..=2 {
            let nodes = lagrange_nodes(degree).unwrap();
            for (i, node) in nodes.iter().enumerate() {
                let e = eval_lagrange(degree, *node).unwrap();
                for (k, v) in e.values.iter().enumerate() {
                    assert_relative_eq!(*v, if k == i { 1.0 } else { 0.0 }, epsilon = 1e-15);
                }
            }
        }
        assert!(eval_lagrange(3, Point2::origin()).is_err());
    }

    #[test]
    fn partition_of_unity() {
        for degree in 1..=2 {
            for p in sample_points() {
                let e = eval_lagrange(degree, p).unwrap();
                assert_relative_eq!(e.values.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
                let g: Vector2<f64> = e.grads.iter().sum();
                assert!(g.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn lagrange_gradients_match_finite_differences() {
        let h = 1e-6;
        for degree in 1..=2 {
            let p = Point2::new(0.21, 0.37);
            let e = eval_lagrange(degree, p).unwrap();
            for axis in 0..2 {
                let mut dp = Vector2::zeros();
                dp[axis] = h;
                let fp = eval_lagrange(degree, p + dp).unwrap();
                let fm = eval_lagrange(degree, p - dp).unwrap();
                for k in 0..e.values.len() {
                    let fd = (fp.values[k] - fm.values[k]) / (2.0 * h);
                    assert_relative_eq!(fd, e.grads[k][axis], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn rt_dof_duality() {
        for degree in 0..=1 {
            let n = ElementKind::raviart_thomas(degree).unwrap().n_basis();
            for k in 0..n {
                let dofs = rt_reference_dofs(degree, |p| eval_rt(degree, p).unwrap().values[k]).unwrap();
                for (i, d) in dofs.iter().enumerate() {
                    assert!((d - if i == k { 1.0 } else { 0.0 }).abs() < 1e-13, "degree {degree}: l_{i}(phi_{k}) = {d}");
                }
            }
        }
    }

    #[test]
    fn rt0_worked_values() {
        let e = eval_rt(0, Point2::new(0.3, 0.1)).unwrap();
        assert_eq!(e.divs[0], 2.0);
        // normal trace of basis 1 vanishes on edge 2
        let n = reference_normal(2);
        for s in [0.1, 0.5, 0.9] {
            let v = eval_rt(0, Point2::new(s, 0.0)).unwrap().values[1];
            assert_eq!(v.dot(&n), 0.0);
        }
        // interpolate (1, 0) and evaluate at the centroid
        let dofs = rt_reference_dofs(0, |_| Vector2::new(1.0, 0.0)).unwrap();
        let c = eval_rt(0, Point2::new(1.0 / 3.0, 1.0 / 3.0)).unwrap();
        let v: Vector2<f64> = c.values.iter().zip(&dofs).map(|(phi, d)| phi * *d).sum();
        assert_relative_eq!(v, Vector2::new(1.0, 0.0), epsilon = 1e-14);
        assert!(eval_rt(2, Point2::origin()).is_err());
    }

    #[test]
    fn rt0_normal_trace_constant() {
        for i in 0..3 {
            let (a, b) = reference_edge(i);
            let n = reference_normal(i);
            let len = (b - a).norm();
            for s in [0.0, 0.25, 0.8, 1.0] {
                let vals = eval_rt(0, a + (b - a) * s).unwrap().values;
                for (k, v) in vals.iter().enumerate() {
                    let expected = if k == i { 1.0 / len } else { 0.0 };
                    assert_relative_eq!(v.dot(&n), expected, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn rt_divergence_theorem() {
        let rule = quadrature(6).unwrap();
        for degree in 0..=1 {
            let n = ElementKind::raviart_thomas(degree).unwrap().n_basis();
            for k in 0..n {
                let volume = rule.integrate(|p| eval_rt(degree, p).unwrap().divs[k]);
                let dofs = rt_reference_dofs(degree, |p| eval_rt(degree, p).unwrap().values[k]).unwrap();
                let stride = if degree == 0 { 1 } else { 2 };
                let flux: f64 = (0..3).map(|e| dofs[e * stride]).sum();
                assert!((volume - flux).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rt_divergence_matches_finite_differences() {
        let h = 1e-6;
        let p = Point2::new(0.23, 0.41);
        for degree in 0..=1 {
            let e = eval_rt(degree, p).unwrap();
            let dx = Vector2::new(h, 0.0);
            let dy = Vector2::new(0.0, h);
            let xp = eval_rt(degree, p + dx).unwrap();
            let xm = eval_rt(degree, p - dx).unwrap();
            let yp = eval_rt(degree, p + dy).unwrap();
            let ym = eval_rt(degree, p - dy).unwrap();
            for k in 0..e.values.len() {
                let fd = (xp.values[k].x - xm.values[k].x + yp.values[k].y - ym.values[k].y) / (2.0 * h);
                assert_relative_eq!(fd, e.divs[k], epsilon = 1e-7);
            }
        }
    }
}
