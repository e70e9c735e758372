//! Pointwise viscous-plastic rheology, ice strength and surface forcing, with
//! the directional derivatives the Gauss-Newton linearization needs.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator floor for the water-drag Jacobian at `u = v_o` (m/s).
pub const DRAG_JACOBIAN_REGULARIZATION: f64 = 1e-8;

/// Physical parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysParams {
    /// kg m^-3
    pub rho_ice: f64,
    /// kg m^-3
    pub rho_a: f64,
    /// kg m^-3
    pub rho_o: f64,
    pub c_a: f64,
    pub c_o: f64,
    /// Coriolis parameter, s^-1
    pub f_c: f64,
    /// N m^-2
    pub p_star: f64,
    /// Ice concentration parameter in the strength exponent.
    pub c_conc: f64,
    /// s^-1
    pub delta_min: f64,
    /// m s^-1
    pub v_a_max: f64,
    /// m s^-1
    pub v_o_max: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            rho_ice: 900.0,
            rho_a: 1.3,
            rho_o: 1026.0,
            c_a: 1.2e-3,
            c_o: 5.5e-3,
            f_c: 1.46e-4,
            p_star: 27.5e3,
            c_conc: 20.0,
            delta_min: 2e-9,
            v_a_max: 15.0,
            v_o_max: 0.01,
        }
    }
}

impl PhysParams {
    /// Material constants must be strictly positive; the two forcing amplitudes
    /// may be zero to switch wind or ocean off.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_ice", self.rho_ice),
            ("rho_a", self.rho_a),
            ("rho_o", self.rho_o),
            ("c_a", self.c_a),
            ("c_o", self.c_o),
            ("f_c", self.f_c),
            ("p_star", self.p_star),
            ("c_conc", self.c_conc),
            ("delta_min", self.delta_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("physics.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("v_a_max", self.v_a_max), ("v_o_max", self.v_o_max)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("physics.{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Strain-rate tensor of a velocity gradient together with its deviatoric
/// part, trace, and regularized magnitude `Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainState {
    pub eps: Matrix2<f64>,
    pub dev: Matrix2<f64>,
    pub tr: f64,
    pub delta: f64,
}

impl StrainState {
    /// `Δ = sqrt(dev ε : dev ε + 4 tr(ε)^2 + Δ_min^2)`.
    pub fn new(grad_u: &Matrix2<f64>, delta_min: f64) -> Result<Self> {
        if grad_u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("velocity gradient".into()));
        }
        Ok(Self::from_gradient(grad_u, delta_min))
    }

    pub(crate) fn from_gradient(grad_u: &Matrix2<f64>, delta_min: f64) -> Self {
        let eps = (grad_u + grad_u.transpose()) * 0.5;
        let tr = eps.trace();
        let dev = eps - Matrix2::identity() * (0.5 * tr);
        let delta = (dev.component_mul(&dev).sum() + 4.0 * tr * tr + delta_min * delta_min).sqrt();
        Self { eps, dev, tr, delta }
    }

    /// `dev ε + k tr ε I`, the tensor the viscous part of the stress scales.
    fn flow_tensor(&self, trace_factor: f64) -> Matrix2<f64> {
        self.dev + Matrix2::identity() * (trace_factor * self.tr)
    }
}

/// `P = P★ H exp(-C (1 - A))`.
pub fn ice_strength(a: f64, h: f64, params: &PhysParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::InvalidArgument(format!("ice concentration {a} outside [0, 1]")));
    }
    if !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!("ice height {h} is negative")));
    }
    Ok(ice_strength_clamped(a, h, params))
}

/// Strength with the arguments clamped into their admissible ranges; used at
/// quadrature points where interpolation may overshoot bounds by round-off.
pub(crate) fn ice_strength_clamped(a: f64, h: f64, params: &PhysParams) -> f64 {
    let a = a.clamp(0.0, 1.0);
    let h = h.max(0.0);
    params.p_star * h * (-params.c_conc * (1.0 - a)).exp()
}

/// Viscous-plastic stress with the trace weighting `k` exposed
/// (`σ = P/2 ((dev ε + k tr ε I)/Δ - I)`).
pub fn stress_with_trace_factor(strain: &StrainState, p: f64, trace_factor: f64) -> Matrix2<f64> {
    (strain.flow_tensor(trace_factor) / strain.delta - Matrix2::identity()) * (0.5 * p)
}

pub fn stress(strain: &StrainState, p: f64) -> Matrix2<f64> {
    stress_with_trace_factor(strain, p, 2.0)
}

/// Directional derivative of `1/Δ(u)` in direction `v`.
pub fn jac_delta_inv(strain_u: &StrainState, strain_v: &StrainState) -> f64 {
    let inner = strain_u.dev.component_mul(&strain_v.dev).sum() + 4.0 * strain_u.tr * strain_v.tr;
    -inner / strain_u.delta.powi(3)
}

pub fn jac_stress_with_trace_factor(
    strain_u: &StrainState,
    strain_v: &StrainState,
    p: f64,
    trace_factor: f64,
) -> Matrix2<f64> {
    let direct = strain_v.flow_tensor(trace_factor) / strain_u.delta;
    let through_delta = strain_u.flow_tensor(trace_factor) * jac_delta_inv(strain_u, strain_v);
    (direct + through_delta) * (0.5 * p)
}

pub fn jac_stress(strain_u: &StrainState, strain_v: &StrainState, p: f64) -> Matrix2<f64> {
    jac_stress_with_trace_factor(strain_u, strain_v, p, 2.0)
}

/// `e_r × w` for a planar vector (rotation by +90°).
pub fn cross_radial(w: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-w.y, w.x)
}

/// Surface force density `f_c e_r×(u - v_o) - τ_a - τ_o(u)`.
pub fn force(u: Vector2<f64>, v_a: Vector2<f64>, v_o: Vector2<f64>, params: &PhysParams) -> Vector2<f64> {
    let coriolis = cross_radial(u - v_o) * params.f_c;
    let tau_a = v_a * (params.rho_a * params.c_a * v_a.norm());
    let rel = v_o - u;
    let tau_o = rel * (params.rho_o * params.c_o * rel.norm());
    coriolis - tau_a - tau_o
}

/// Derivative of [`force`] with respect to `u` in direction `w`.
pub fn jac_force(u: Vector2<f64>, v_o: Vector2<f64>, w: Vector2<f64>, params: &PhysParams) -> Vector2<f64> {
    let rel = v_o - u;
    let speed = rel.norm();
    let drag = w * speed + rel * (rel.dot(&w) / speed.max(DRAG_JACOBIAN_REGULARIZATION));
    cross_radial(w) * params.f_c + drag * (params.rho_o * params.c_o)
}
