use nalgebra::Point2;

use crate::error::{Error, Result};

/// Quadrature on the reference triangle `{x, y >= 0, x + y <= 1}`; weights sum
/// to its area 1/2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Point2<f64>) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }
}

/// Rule exact for every polynomial of total degree `order`, `order` in 1..=6.
pub fn quadrature(order: usize) -> Result<QuadratureRule> {
    match order {
        1 => Ok(QuadratureRule {
            points: vec![Point2::new(1.0 / 3.0, 1.0 / 3.0)],
            weights: vec![0.5],
            degree: 1,
        }),
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            Ok(QuadratureRule {
                points: vec![Point2::new(a, a), Point2::new(b, a), Point2::new(a, b)],
                weights: vec![1.0 / 6.0; 3],
                degree: 2,
            })
        }
        3..=5 => Ok(radon_degree5()),
        6 => Ok(collapsed_gauss(4, 6)),
        _ => Err(Error::Unsupported(format!("quadrature order {order} (supported: 1..=6)"))),
    }
}

/// Seven-point symmetric rule with closed-form nodes.
fn radon_degree5() -> QuadratureRule {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 2400.0;
    let w2 = (155.0 + s15) / 2400.0;
    let third = 1.0 / 3.0;
    QuadratureRule {
        points: vec![
            Point2::new(third, third),
            Point2::new(a1, a1),
            Point2::new(1.0 - 2.0 * a1, a1),
            Point2::new(a1, 1.0 - 2.0 * a1),
            Point2::new(a2, a2),
            Point2::new(1.0 - 2.0 * a2, a2),
            Point2::new(a2, 1.0 - 2.0 * a2),
        ],
        weights: vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
        degree: 5,
    }
}

/// Tensor Gauss-Legendre rule pulled onto the triangle through the collapsed
/// (Duffy) map `(s, t) -> (s, t (1 - s))`.
fn collapsed_gauss(m: usize, degree: usize) -> QuadratureRule {
    let (nodes, weights) = gauss_legendre(m);
    let mut rule = QuadratureRule { points: Vec::with_capacity(m * m), weights: Vec::with_capacity(m * m), degree };
    for (s, ws) in nodes.iter().zip(&weights) {
        for (t, wt) in nodes.iter().zip(&weights) {
            rule.points.push(Point2::new(*s, t * (1.0 - s)));
            rule.weights.push(ws * wt * (1.0 - s));
        }
    }
    rule
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, exact to degree `2m - 1`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // Newton on P_m starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    // ascending order
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
