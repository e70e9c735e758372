//! Moving-cyclone benchmark on the unit square: wind, ocean gyre, and
//! initial ice state.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::assembly::{interpolate_lagrange, interpolate_rt, FeContext};
use crate::constitutive::{ice_strength, PhysParams};
use crate::error::{Error, Result};
use crate::state::{Spaces, StateFields};

pub const SECONDS_PER_DAY: f64 = 86400.0;

/// Wind forcing variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindProfile {
    /// The switching-factor cyclone formula, taken literally.
    #[default]
    Printed,
    /// No wind.
    Calm,
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Time-dependent amplitude `1 - 2/(e^{t_m} e^{8-|t_m|} + 1)`; zero at `t_m = -4`.
pub fn wind_switch(t_m: f64) -> f64 {
    1.0 - 2.0 / ((t_m + 8.0 - t_m.abs()).exp() + 1.0)
}

/// Rotation angle `17π/40 + sign(t_m) π/40`, with `sign(0) = 0`.
pub fn wind_angle(t_m: f64) -> f64 {
    let s = if t_m > 0.0 {
        1.0
    } else if t_m < 0.0 {
        -1.0
    } else {
        0.0
    };
    17.0 * PI / 40.0 + s * PI / 40.0
}

/// Cyclone centre `0.1 (9 - |t_m|) (1, 1)`.
pub fn vortex_center(t_days: f64) -> Point2<f64> {
    let xm = 0.1 * (9.0 - (t_days - 4.0).abs());
    Point2::new(xm, xm)
}

/// Wind velocity (m/s) at unit-square point `x` and time `t_days`.
pub fn wind(x: Point2<f64>, t_days: f64, params: &PhysParams) -> Vector2<f64> {
    let t_m = t_days - 4.0;
    let xt = x - vortex_center(t_days);
    rotation(wind_angle(t_m)) * xt * (10.0 * params.v_a_max * wind_switch(t_m) * (-xt.norm() / 10.0).exp())
}

/// Steady ocean gyre `v_o^m (2y - 1, 1 - 2x)`.
pub fn ocean(x: Point2<f64>, params: &PhysParams) -> Vector2<f64> {
    Vector2::new(2.0 * x.y - 1.0, 1.0 - 2.0 * x.x) * params.v_o_max
}

/// Initial concentration and height `H = h_mean + h_amplitude (sin(k x) + sin(k y))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCondition {
    pub a: f64,
    pub h_mean: f64,
    pub h_amplitude: f64,
    pub h_wavenumber: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self { a: 1.0, h_mean: 0.3, h_amplitude: 0.005, h_wavenumber: 250.0 }
    }
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::Config(format!("initial.a = {} outside [0, 1]", self.a)));
        }
        if !(self.h_mean - 2.0 * self.h_amplitude.abs() >= 0.0) {
            return Err(Error::Config("initial height may become negative".into()));
        }
        if !self.h_wavenumber.is_finite() {
            return Err(Error::Config("initial.h_wavenumber must be finite".into()));
        }
        Ok(())
    }

    pub fn height(&self, x: Point2<f64>) -> f64 {
        let k = self.h_wavenumber;
        self.h_mean + self.h_amplitude * ((k * x.x).sin() + (k * x.y).sin())
    }

    /// Exact mean of [`height`](Self::height) over the unit square.
    pub fn mean_height(&self) -> f64 {
        let k = self.h_wavenumber;
        if k == 0.0 {
            return self.h_mean;
        }
        self.h_mean + self.h_amplitude * 2.0 * (1.0 - k.cos()) / k
    }
}

/// `u = 0`, `A`, `H` interpolated, and `σ` the Raviart-Thomas interpolant of
/// the rest state `-(P/2) I`.
pub fn initial_state(fe: &FeContext, spaces: &Spaces, ic: &InitialCondition, params: &PhysParams) -> Result<StateFields> {
    ic.validate()?;
    let mesh = fe.mesh();
    let a = interpolate_lagrange(mesh, &spaces.tracer, |_, _| ic.a)?;
    let h = interpolate_lagrange(mesh, &spaces.tracer, |x, _| ic.height(x))?;
    let strength = |x: Point2<f64>| ice_strength(ic.a, ic.height(x).max(0.0), params).unwrap_or(0.0);
    let sigma = interpolate_rt(fe, &spaces.sigma, |x, row| {
        let p = -0.5 * strength(x);
        if row == 0 {
            Vector2::new(p, 0.0)
        } else {
            Vector2::new(0.0, p)
        }
    })?;
    Ok(StateFields { sigma, u: vec![0.0; spaces.u.n_global()], a, h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::integrate_lagrange;
    use crate::mesh::Mesh;
    use crate::state::ElementPair;
    use approx::assert_relative_eq;

    #[test]
    fn wind_vanishes_at_start_and_at_centre() {
        let p = PhysParams::default();
        assert_eq!(wind_switch(-4.0), 0.0);
        assert_eq!(wind(Point2::new(0.3, 0.8), 0.0, &p), Vector2::zeros());
        for t in [0.5, 2.0, 4.0, 7.5] {
            assert_eq!(wind(vortex_center(t), t, &p).norm(), 0.0);
        }
    }

    #[test]
    fn rotation_identities() {
        assert_relative_eq!(rotation(0.0), Matrix2::identity());
        assert_relative_eq!(rotation(PI / 2.0) * Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn angle_takes_two_values_off_the_switch() {
        for t in [0.0, 1.0, 3.99] {
            assert_relative_eq!(wind_angle(t - 4.0), 16.0 * PI / 40.0);
        }
        for t in [4.01, 6.0, 8.0] {
            assert_relative_eq!(wind_angle(t - 4.0), 18.0 * PI / 40.0);
        }
        assert_relative_eq!(wind_angle(0.0), 17.0 * PI / 40.0);
    }

    #[test]
    fn switch_is_never_negative() {
        for k in 0..=800 {
            let t = k as f64 / 100.0;
            let s = wind_switch(t - 4.0);
            assert!((0.0..1.0).contains(&s), "t={t} s={s}");
        }
    }

    #[test]
    fn wind_is_bounded() {
        let p = PhysParams::default();
        for k in 0..=80 {
            let t = k as f64 / 10.0;
            let c = vortex_center(t);
            let max_dist = [0.0f64, 1.0].iter().flat_map(|&x| [0.0f64, 1.0].map(move |y| (x, y)))
                .map(|(x, y)| (Point2::new(x, y) - c).norm())
                .fold(0.0, f64::max);
            for i in 0..=10 {
                for j in 0..=10 {
                    let x = Point2::new(i as f64 / 10.0, j as f64 / 10.0);
                    assert!(wind(x, t, &p).norm() <= 10.0 * p.v_a_max * max_dist + 1e-12);
                }
            }
        }
    }

    #[test]
    fn ocean_worked_values() {
        let p = PhysParams::default();
        assert_eq!(ocean(Point2::new(0.5, 0.5), &p), Vector2::zeros());
        assert_relative_eq!(ocean(Point2::new(1.0, 0.5), &p), Vector2::new(0.0, -0.01));
        // divergence-free: ∂x(2y-1) + ∂y(1-2x) = 0, checked by differences
        let h = 1e-6;
        for (x, y) in [(0.1, 0.7), (0.4, 0.2), (0.9, 0.9)] {
            let dx = (ocean(Point2::new(x + h, y), &p).x - ocean(Point2::new(x - h, y), &p).x) / (2.0 * h);
            let dy = (ocean(Point2::new(x, y + h), &p).y - ocean(Point2::new(x, y - h), &p).y) / (2.0 * h);
            assert!((dx + dy).abs() < 1e-12);
        }
        // tangential at boundary midpoints
        for (x, n) in [((0.5, 0.0), (0.0, -1.0)), ((1.0, 0.5), (1.0, 0.0)), ((0.5, 1.0), (0.0, 1.0)), ((0.0, 0.5), (-1.0, 0.0))] {
            let v = ocean(Point2::new(x.0, x.1), &p);
            assert_eq!(v.dot(&Vector2::new(n.0, n.1)), 0.0);
            assert!(v.norm() > 0.0);
        }
    }

    #[test]
    fn initial_fields() {
        let ic = InitialCondition::default();
        assert_eq!(ic.height(Point2::origin()), 0.3);
        assert_relative_eq!(ic.mean_height(), 0.3 + 0.005 * 2.0 * (1.0 - 250f64.cos()) / 250.0);
        let mesh = Mesh::build_structured(4).unwrap();
        let fe = FeContext::new(&mesh, 1.0, 4).unwrap();
        let spaces = Spaces::new(&mesh, ElementPair::Rt0P1).unwrap();
        let p = PhysParams::default();
        let s = initial_state(&fe, &spaces, &ic, &p).unwrap();
        assert!(s.a.iter().all(|&a| a == 1.0));
        assert!(s.u.iter().all(|&u| u == 0.0));
        assert_eq!(s.h[0], 0.3);
        // uniform height gives an exactly constant -(P/2) I stress
        let flat = InitialCondition { h_amplitude: 0.0, ..ic };
        let s = initial_state(&fe, &spaces, &flat, &p).unwrap();
        let ctx = fe.cell(5, &[spaces.sigma.space().element]);
        let (row0, _) = ctx.eval_rt(&spaces.sigma, &s.sigma, 0, 2);
        assert_relative_eq!(row0, Vector2::new(-0.5 * 8.25e3, 0.0), epsilon = 1e-12 * 8.25e3);
        assert_relative_eq!(integrate_lagrange(&fe, &spaces.tracer, &s.h), 0.3, max_relative = 1e-14);
    }

    #[test]
    fn interpolated_mean_height_converges_to_analytic_value() {
        let ic = InitialCondition::default();
        let mesh = Mesh::build_structured(256).unwrap();
        let fe = FeContext::new(&mesh, 1.0, 2).unwrap();
        let spaces = Spaces::new(&mesh, ElementPair::Rt0P1).unwrap();
        let h = interpolate_lagrange(&mesh, &spaces.tracer, |x, _| ic.height(x)).unwrap();
        let mean = integrate_lagrange(&fe, &spaces.tracer, &h);
        assert!((mean - ic.mean_height()).abs() < 1e-4, "{mean} vs {}", ic.mean_height());
    }
}
