use nalgebra::{Matrix2, Point2, Vector2};

use crate::error::{Error, Result};

/// Affine map `x = x0 + J x̂` from the reference triangle onto a physical one.
#[derive(Debug, Clone, Copy)]
pub struct GeometryMap {
    pub origin: Point2<f64>,
    pub jacobian: Matrix2<f64>,
    pub det: f64,
    pub inv_transpose: Matrix2<f64>,
}

impl GeometryMap {
    /// `cell` is only used to label the error.
    pub fn new(points: [Point2<f64>; 3], cell: usize) -> Result<Self> {
        let jacobian = Matrix2::from_columns(&[points[1] - points[0], points[2] - points[0]]);
        Self::from_jacobian(points[0], jacobian, cell)
    }

    pub fn from_jacobian(origin: Point2<f64>, jacobian: Matrix2<f64>, cell: usize) -> Result<Self> {
        let det = jacobian.determinant();
        if !(det > 0.0) {
            return Err(Error::NonPositiveDeterminant { cell, det });
        }
        let inv = jacobian.try_inverse().ok_or(Error::NonPositiveDeterminant { cell, det })?;
        Ok(Self { origin, jacobian, det, inv_transpose: inv.transpose() })
    }

    pub fn identity() -> Self {
        Self { origin: Point2::origin(), jacobian: Matrix2::identity(), det: 1.0, inv_transpose: Matrix2::identity() }
    }

    pub fn map(&self, p: Point2<f64>) -> Point2<f64> {
        self.origin + self.jacobian * p.coords
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    /// Covariant push-forward of a reference gradient.
    pub fn push_gradient(&self, g: Vector2<f64>) -> Vector2<f64> {
        self.inv_transpose * g
    }

    /// Contravariant Piola transform `v = J v̂ / det J`.
    pub fn piola(&self, v: Vector2<f64>) -> Vector2<f64> {
        self.jacobian * v / self.det
    }

    pub fn piola_div(&self, div: f64) -> f64 {
        div / self.det
    }

    /// Inverse Piola: reference field whose push-forward is `v`.
    pub fn pull_back(&self, v: Vector2<f64>) -> Vector2<f64> {
        self.inv_transpose.transpose() * v * self.det
    }
}

/// Pushes reference Raviart-Thomas values and divergences to a physical cell.
pub fn piola_push(
    map: &GeometryMap,
    ref_values: &[Vector2<f64>],
    ref_divs: &[f64],
) -> (Vec<Vector2<f64>>, Vec<f64>) {
    (
        ref_values.iter().map(|v| map.piola(*v)).collect(),
        ref_divs.iter().map(|d| map.piola_div(*d)).collect(),
    )
}
