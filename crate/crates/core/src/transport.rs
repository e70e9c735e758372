//! Least-squares advection of ice concentration and height over one step,
//! followed by bound enforcement.

use serde::Serialize;

use crate::active_set::{solve_box_qp, ActiveSet};
use crate::assembly::{
    assemble_ls, residual_norms, solve_spd_many, CellContext, CsrMatrix, DofMap, FeContext, LsIntegrand,
    SolverOptions,
};
use crate::elements::ElementKind;
use crate::error::{Error, Result};

/// Residual `(q - q_old)/dt + u·∇q + q div u` of one P1 tracer.
pub struct TracerResidual<'a> {
    pub tracer: &'a DofMap,
    pub velocity: &'a DofMap,
    pub u: &'a [f64],
    pub q: &'a [f64],
    pub q_old: &'a [f64],
    pub dt: f64,
}

impl LsIntegrand for TracerResidual<'_> {
    fn n_components(&self) -> usize {
        1
    }

    fn n_local(&self) -> usize {
        self.tracer.n_local()
    }

    fn kinds(&self) -> Vec<ElementKind> {
        vec![self.tracer.space().element, self.velocity.space().element]
    }

    fn evaluate(&self, cell: &CellContext, q: usize, ops: Option<&mut [f64]>, residual: &mut [f64]) {
        let (ux, gx) = cell.eval_lagrange(self.velocity, self.u, 0, q);
        let (uy, gy) = cell.eval_lagrange(self.velocity, self.u, 1, q);
        let div_u = gx.x + gy.y;
        let (val, grad) = cell.eval_lagrange(self.tracer, self.q, 0, q);
        let (old, _) = cell.eval_lagrange(self.tracer, self.q_old, 0, q);
        residual[0] = (val - old) / self.dt + ux * grad.x + uy * grad.y + val * div_u;
        if let Some(ops) = ops {
            let kind = self.tracer.space().element;
            for (j, op) in ops.iter_mut().enumerate() {
                let (phi, g) = cell.lagrange(kind, q, j);
                *op = phi / self.dt + ux * g.x + uy * g.y + phi * div_u;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracerBounds {
    pub lower: f64,
    pub upper: f64,
}

pub const CONCENTRATION_BOUNDS: TracerBounds = TracerBounds { lower: 0.0, upper: 1.0 };
pub const HEIGHT_BOUNDS: TracerBounds = TracerBounds { lower: 0.0, upper: f64::INFINITY };

#[derive(Debug, Clone)]
pub struct AdvectOutcome {
    pub a: Vec<f64>,
    pub h: Vec<f64>,
    pub a_set: ActiveSet,
    pub h_set: ActiveSet,
    /// Residual functional of both tracers at the constrained solution.
    pub functional: f64,
}

/// Normal equations `K q = b` of one tracer's functional.
pub fn tracer_system(
    fe: &FeContext,
    tracer: &DofMap,
    velocity: &DofMap,
    u: &[f64],
    q_old: &[f64],
    dt: f64,
) -> Result<(CsrMatrix, Vec<f64>, f64)> {
    let zero = vec![0.0; tracer.n_global()];
    let integrand = TracerResidual { tracer, velocity, u, q: &zero, q_old, dt };
    let ls = assemble_ls(fe, &[tracer], &integrand)?;
    let constant = ls.functional();
    Ok((ls.system.matrix, ls.system.rhs, constant))
}

pub fn tracer_functional(fe: &FeContext, tracer: &DofMap, velocity: &DofMap, u: &[f64], q: &[f64], q_old: &[f64], dt: f64) -> f64 {
    residual_norms(fe, &TracerResidual { tracer, velocity, u, q, q_old, dt })[0]
}

/// Minimizes the advection functional of `A` and `H` with velocity `u`
/// (previous time level), then enforces `A ∈ [0, 1]`, `H ≥ 0`.
#[allow(clippy::too_many_arguments)]
pub fn advect_step(
    fe: &FeContext,
    tracer: &DofMap,
    velocity: &DofMap,
    u: &[f64],
    a_old: &[f64],
    h_old: &[f64],
    dt: f64,
    solver: &SolverOptions,
    active_set_cap: Option<usize>,
) -> Result<AdvectOutcome> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt}")));
    }
    let (k, b_a, _) = tracer_system(fe, tracer, velocity, u, a_old, dt)?;
    // same operator; only the right-hand side differs
    let (_, b_h, _) = tracer_system(fe, tracer, velocity, u, h_old, dt)?;
    let mut sols = solve_spd_many(&k, &[&b_a, &b_h], solver)?;
    let (h_free, _) = sols.pop().expect("two solutions");
    let (a_free, _) = sols.pop().expect("two solutions");
    let enforce = |b: &[f64], x: &[f64], bounds: TracerBounds| {
        let n = x.len();
        solve_box_qp(&k, b, &vec![bounds.lower; n], &vec![bounds.upper; n], Some(x), solver, active_set_cap)
    };
    let a_set = enforce(&b_a, &a_free, CONCENTRATION_BOUNDS)?;
    let h_set = enforce(&b_h, &h_free, HEIGHT_BOUNDS)?;
    let functional = tracer_functional(fe, tracer, velocity, u, &a_set.x, a_old, dt)
        + tracer_functional(fe, tracer, velocity, u, &h_set.x, h_old, dt);
    Ok(AdvectOutcome { a: a_set.x.clone(), h: h_set.x.clone(), a_set, h_set, functional })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{interpolate_lagrange, Space};
    use crate::mesh::Mesh;
    use nalgebra::Point2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        mesh: Mesh,
    }

    impl Setup {
        fn new(n: usize) -> Self {
            Self { mesh: Mesh::build_structured(n).unwrap() }
        }
        fn spaces(&self, vel: ElementKind) -> (DofMap, DofMap) {
            (
                DofMap::new(&self.mesh, Space::scalar(ElementKind::P1)).unwrap(),
                DofMap::new(&self.mesh, Space::new(vel, 2)).unwrap(),
            )
        }
    }

    #[test]
    fn zero_velocity_is_identity_and_idempotent() {
        let s = Setup::new(8);
        let fe = FeContext::new(&s.mesh, 1.0, 4).unwrap();
        let (tr, vel) = s.spaces(ElementKind::P1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a0: Vec<f64> = (0..tr.n_global()).map(|_| rng.random_range(0.0..1.0)).collect();
        let h0: Vec<f64> = (0..tr.n_global()).map(|_| rng.random_range(0.0..2.0)).collect();
        let u = vec![0.0; vel.n_global()];
        let opts = SolverOptions::default();
        let (mut a, mut h) = (a0.clone(), h0.clone());
        for _ in 0..5 {
            let out = advect_step(&fe, &tr, &vel, &u, &a, &h, 1800.0, &opts, None).unwrap();
            a = out.a;
            h = out.h;
        }
        for i in 0..a.len() {
            assert!((a[i] - a0[i]).abs() <= 1e-10 && (h[i] - h0[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn constant_field_under_constant_flow_is_invariant() {
        let s = Setup::new(6);
        let fe = FeContext::new(&s.mesh, 1.0, 4).unwrap();
        let (tr, vel) = s.spaces(ElementKind::P1);
        let u = interpolate_lagrange(&s.mesh, &vel, |_, c| if c == 0 { 0.3 } else { -0.1 }).unwrap();
        let a = vec![0.7; tr.n_global()];
        let h = vec![1.3; tr.n_global()];
        let out = advect_step(&fe, &tr, &vel, &u, &a, &h, 0.01, &SolverOptions::default(), None).unwrap();
        for i in 0..a.len() {
            assert!((out.a[i] - 0.7).abs() < 1e-10 && (out.h[i] - 1.3).abs() < 1e-10);
        }
        assert!(out.functional < 1e-16);
    }

    #[test]
    fn bounds_hold_exactly() {
        let s = Setup::new(8);
        let fe = FeContext::new(&s.mesh, 1.0, 4).unwrap();
        let (tr, vel) = s.spaces(ElementKind::P1);
        // strongly converging flow piles concentration above one
        let u = interpolate_lagrange(&s.mesh, &vel, |x, c| {
            let d = if c == 0 { 0.5 - x.x } else { 0.5 - x.y };
            d * (1.0 - (2.0 * x.x - 1.0).powi(2)) * (1.0 - (2.0 * x.y - 1.0).powi(2))
        })
        .unwrap();
        let a = vec![1.0; tr.n_global()];
        let h = interpolate_lagrange(&s.mesh, &tr, |x, _| (x.x - 0.5).max(0.0) * 0.1).unwrap();
        let out = advect_step(&fe, &tr, &vel, &u, &a, &h, 0.5, &SolverOptions::default(), None).unwrap();
        assert!(out.a_set.n_active() > 0);
        assert!(out.a.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(out.h.iter().all(|&v| v >= 0.0));
        for m in out.a_set.multipliers.iter().chain(&out.h_set.multipliers) {
            assert!(*m >= -1e-12);
        }
    }

    #[test]
    fn functional_equals_quadratic_form() {
        let s = Setup::new(5);
        let fe = FeContext::new(&s.mesh, 1.0, 4).unwrap();
        let (tr, vel) = s.spaces(ElementKind::P2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u: Vec<f64> = (0..vel.n_global()).map(|_| rng.random_range(-0.1..0.1)).collect();
        let q_old: Vec<f64> = (0..tr.n_global()).map(|_| rng.random_range(0.0..1.0)).collect();
        let q: Vec<f64> = (0..tr.n_global()).map(|_| rng.random_range(0.0..1.0)).collect();
        let dt = 0.7;
        let (k, b, c) = tracer_system(&fe, &tr, &vel, &u, &q_old, dt).unwrap();
        let quad = k.quadratic_form(&q) - 2.0 * b.iter().zip(&q).map(|(b, q)| b * q).sum::<f64>() + c;
        let direct = tracer_functional(&fe, &tr, &vel, &u, &q, &q_old, dt);
        assert!(direct >= 0.0);
        assert!((quad - direct).abs() <= 1e-10 * direct.max(1.0), "{quad} vs {direct}");
    }

    /// First-order upwind finite volumes on the cell-centred grid, used as an
    /// independent oracle for a smooth profile moving in x.
    fn upwind_1d(profile: impl Fn(f64) -> f64, speed: f64, dt: f64, x: f64, h: f64) -> f64 {
        profile(x) - speed * dt / h * (profile(x) - profile(x - h))
    }

    #[test]
    fn agrees_with_upwind_oracle() {
        let n = 32;
        let s = Setup::new(n);
        let fe = FeContext::new(&s.mesh, 1.0, 4).unwrap();
        let (tr, vel) = s.spaces(ElementKind::P1);
        let speed = 0.5;
        let dt = 0.002;
        let profile = |x: f64| 0.5 + 0.4 * (2.0 * std::f64::consts::PI * x).sin();
        let u = interpolate_lagrange(&s.mesh, &vel, |_, c| if c == 0 { speed } else { 0.0 }).unwrap();
        let a = interpolate_lagrange(&s.mesh, &tr, |x: Point2<f64>, _| profile(x.x)).unwrap();
        let out = advect_step(&fe, &tr, &vel, &u, &a, &a, dt, &SolverOptions::default(), None).unwrap();
        let h = 1.0 / n as f64;
        let mut worst: f64 = 0.0;
        for (i, v) in s.mesh.vertices().iter().enumerate() {
            // stay clear of the inflow boundary, where the LS solution has no boundary data
            if v.x < 0.25 || v.x > 0.75 {
                continue;
            }
            let oracle = upwind_1d(profile, speed, dt, v.x, h);
            worst = worst.max((out.a[i] - oracle).abs());
        }
        // the step changes A by up to `update`; the two schemes should agree on
        // that change to within the oracle's own numerical diffusion
        let update = dt * speed * 0.4 * 2.0 * std::f64::consts::PI;
        assert!(worst <= 0.15 * update, "worst {worst} vs update {update}");
    }
}
