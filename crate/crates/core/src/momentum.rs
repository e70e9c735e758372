//! One θ-scheme step of the stress/velocity least-squares problem, minimized
//! by damped Gauss-Newton.

use nalgebra::{Matrix2, Point2, Vector2};
use serde::Serialize;

use crate::assembly::{
    assemble_ls, residual_norms, solve_spd, CellContext, CsrMatrix, DofMap, FeContext, LsIntegrand, LsSystem, SolveStats,
    SolverOptions,
};
use crate::constitutive::{
    force, ice_strength_clamped, jac_force, jac_stress_with_trace_factor, stress_with_trace_factor, PhysParams,
    StrainState,
};
use crate::elements::ElementKind;
use crate::error::{Error, Result};
use crate::scenario::{ocean, wind, WindProfile};

/// Constitutive map `C(u; A, H)` and its directional derivative.
pub trait Rheology: Sync {
    fn stress(&self, grad_u: &Matrix2<f64>, a: f64, h: f64) -> Matrix2<f64>;

    /// `J_C(u)[v_k]` for each direction gradient `∇v_k`.
    fn jacobian(&self, grad_u: &Matrix2<f64>, a: f64, h: f64, directions: &[Matrix2<f64>], out: &mut [Matrix2<f64>]);
}

/// Viscous-plastic law with the trace weighting exposed.
#[derive(Debug, Clone, Copy)]
pub struct ViscousPlastic {
    pub params: PhysParams,
    pub trace_factor: f64,
}

impl ViscousPlastic {
    pub fn new(params: PhysParams) -> Self {
        Self { params, trace_factor: 2.0 }
    }
}

impl Rheology for ViscousPlastic {
    fn stress(&self, grad_u: &Matrix2<f64>, a: f64, h: f64) -> Matrix2<f64> {
        let s = StrainState::from_gradient(grad_u, self.params.delta_min);
        stress_with_trace_factor(&s, ice_strength_clamped(a, h, &self.params), self.trace_factor)
    }

    fn jacobian(&self, grad_u: &Matrix2<f64>, a: f64, h: f64, directions: &[Matrix2<f64>], out: &mut [Matrix2<f64>]) {
        let su = StrainState::from_gradient(grad_u, self.params.delta_min);
        let p = ice_strength_clamped(a, h, &self.params);
        for (d, o) in directions.iter().zip(out.iter_mut()) {
            let sv = StrainState::from_gradient(d, self.params.delta_min);
            *o = jac_stress_with_trace_factor(&su, &sv, p, self.trace_factor);
        }
    }
}

/// Linear surrogate `C(u) = ε(u)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearStrain;

impl Rheology for LinearStrain {
    fn stress(&self, grad_u: &Matrix2<f64>, _a: f64, _h: f64) -> Matrix2<f64> {
        (grad_u + grad_u.transpose()) * 0.5
    }

    fn jacobian(&self, _grad_u: &Matrix2<f64>, _a: f64, _h: f64, directions: &[Matrix2<f64>], out: &mut [Matrix2<f64>]) {
        for (d, o) in directions.iter().zip(out.iter_mut()) {
            *o = (d + d.transpose()) * 0.5;
        }
    }
}

/// Surface forcing `F(x, u)` with `x` in unit-square coordinates.
pub trait Forcing: Sync {
    fn force(&self, x: Point2<f64>, u: Vector2<f64>) -> Vector2<f64>;
    fn jacobian(&self, x: Point2<f64>, u: Vector2<f64>, w: Vector2<f64>) -> Vector2<f64>;
}

/// Coriolis, wind drag and water drag at a fixed time.
#[derive(Debug, Clone, Copy)]
pub struct SeaIceForcing {
    pub params: PhysParams,
    pub wind: WindProfile,
    pub t_days: f64,
}

impl SeaIceForcing {
    fn wind_at(&self, x: Point2<f64>) -> Vector2<f64> {
        match self.wind {
            WindProfile::Printed => wind(x, self.t_days, &self.params),
            WindProfile::Calm => Vector2::zeros(),
        }
    }
}

impl Forcing for SeaIceForcing {
    fn force(&self, x: Point2<f64>, u: Vector2<f64>) -> Vector2<f64> {
        force(u, self.wind_at(x), ocean(x, &self.params), &self.params)
    }

    fn jacobian(&self, x: Point2<f64>, u: Vector2<f64>, w: Vector2<f64>) -> Vector2<f64> {
        jac_force(u, ocean(x, &self.params), w, &self.params)
    }
}

/// `F(x, u) = M u + s(x)`.
pub struct LinearForcing<S: Fn(Point2<f64>) -> Vector2<f64> + Sync> {
    pub matrix: Matrix2<f64>,
    pub source: S,
}

impl<S: Fn(Point2<f64>) -> Vector2<f64> + Sync> Forcing for LinearForcing<S> {
    fn force(&self, x: Point2<f64>, u: Vector2<f64>) -> Vector2<f64> {
        self.matrix * u + (self.source)(x)
    }

    fn jacobian(&self, _x: Point2<f64>, _u: Vector2<f64>, w: Vector2<f64>) -> Vector2<f64> {
        self.matrix * w
    }
}

/// Everything fixed during one momentum step. The unknown is the stacked
/// vector `[σ row 0 | σ row 1 | u_x | u_y]`.
pub struct MomentumProblem<'a> {
    pub fe: &'a FeContext<'a>,
    pub sigma_dm: &'a DofMap,
    pub u_dm: &'a DofMap,
    pub tracer_dm: &'a DofMap,
    pub sigma_old: &'a [f64],
    pub u_old: &'a [f64],
    /// Post-advection tracers.
    pub a: &'a [f64],
    pub h: &'a [f64],
    pub dt: f64,
    pub theta: f64,
    pub rho_ice: f64,
    pub rheology: &'a dyn Rheology,
    pub forcing: &'a dyn Forcing,
}

impl MomentumProblem<'_> {
    pub fn n_unknowns(&self) -> usize {
        self.sigma_dm.n_global() + self.u_dm.n_global()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step {}", self.dt)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!("theta {} outside [0, 1]", self.theta)));
        }
        let checks = [
            (self.sigma_old.len(), self.sigma_dm.n_global()),
            (self.u_old.len(), self.u_dm.n_global()),
            (self.a.len(), self.tracer_dm.n_global()),
            (self.h.len(), self.tracer_dm.n_global()),
        ];
        for (found, expected) in checks {
            if found != expected {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        Ok(())
    }

    /// Stacked indices of the velocity dofs on the boundary.
    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        let off = self.sigma_dm.n_global();
        self.u_dm.boundary_dofs().into_iter().map(|d| off + d).collect()
    }

    fn integrand<'b>(&'b self, x: &'b [f64]) -> MomentumResidual<'b> {
        MomentumResidual { p: self, x }
    }

    /// `(F_m, F_c)`: squared L² norms of the momentum and constitutive residuals.
    pub fn functional_parts(&self, x: &[f64]) -> (f64, f64) {
        let r = residual_norms(self.fe, &self.integrand(x));
        (r[0] + r[1], r[2..].iter().sum())
    }

    pub fn functional_value(&self, x: &[f64]) -> f64 {
        let (m, c) = self.functional_parts(x);
        m + c
    }

    /// Gauss-Newton normal equations at `x`, without boundary conditions.
    /// The right-hand side is `-½ ∇F(x)`.
    pub fn linearize(&self, x: &[f64]) -> Result<LsSystem> {
        if x.len() != self.n_unknowns() {
            return Err(Error::DimensionMismatch { expected: self.n_unknowns(), found: x.len() });
        }
        assemble_ls(self.fe, &[self.sigma_dm, self.u_dm], &self.integrand(x))
    }

    /// First variation `B(x)[dir] = d/dτ F(x + τ dir)` at `τ = 0`, from the
    /// assembled right-hand side.
    pub fn first_variation(&self, x: &[f64], dir: &[f64]) -> Result<f64> {
        let ls = self.linearize(x)?;
        Ok(-2.0 * dot(&ls.system.rhs, dir))
    }
}

/// Six residual components: momentum (2), then `σ - C(u)` entries
/// `(00, 01, 10, 11)`.
struct MomentumResidual<'a> {
    p: &'a MomentumProblem<'a>,
    x: &'a [f64],
}

impl LsIntegrand for MomentumResidual<'_> {
    fn n_components(&self) -> usize {
        6
    }

    fn n_local(&self) -> usize {
        self.p.sigma_dm.n_local() + self.p.u_dm.n_local()
    }

    fn kinds(&self) -> Vec<ElementKind> {
        vec![self.p.sigma_dm.space().element, self.p.u_dm.space().element, self.p.tracer_dm.space().element]
    }

    fn evaluate(&self, cell: &CellContext, q: usize, ops: Option<&mut [f64]>, r: &mut [f64]) {
        let p = self.p;
        let ns = p.sigma_dm.n_global();
        let (sigma, u) = self.x.split_at(ns);
        let th = p.theta;

        let mut row = [Vector2::zeros(); 2];
        let mut div_theta = Vector2::zeros();
        for k in 0..2 {
            let (v, d) = cell.eval_rt(p.sigma_dm, sigma, k, q);
            let (_, d_old) = cell.eval_rt(p.sigma_dm, p.sigma_old, k, q);
            row[k] = v;
            div_theta[k] = th * d + (1.0 - th) * d_old;
        }
        let mut vel = Vector2::zeros();
        let mut vel_old = Vector2::zeros();
        let mut grad = Matrix2::zeros();
        for c in 0..2 {
            let (v, g) = cell.eval_lagrange(p.u_dm, u, c, q);
            vel[c] = v;
            grad.set_row(c, &g.transpose());
            vel_old[c] = cell.eval_lagrange(p.u_dm, p.u_old, c, q).0;
        }
        let a = cell.eval_lagrange(p.tracer_dm, p.a, 0, q).0;
        let h = cell.eval_lagrange(p.tracer_dm, p.h, 0, q).0;
        let x = cell.points[q];
        let vel_theta = vel * th + vel_old * (1.0 - th);
        let mass = p.rho_ice * h / p.dt;

        let rm = (vel - vel_old) * mass + p.forcing.force(x, vel_theta) - div_theta;
        let c = p.rheology.stress(&grad, a, h);
        r[0] = rm.x;
        r[1] = rm.y;
        r[2] = row[0].x - c[(0, 0)];
        r[3] = row[0].y - c[(0, 1)];
        r[4] = row[1].x - c[(1, 0)];
        r[5] = row[1].y - c[(1, 1)];

        let Some(ops) = ops else { return };
        let sk = p.sigma_dm.space().element;
        let nbs = p.sigma_dm.n_basis();
        for k in 0..2 {
            for j in 0..nbs {
                let (phi, div) = cell.rt(sk, q, j);
                let o = &mut ops[(k * nbs + j) * 6..(k * nbs + j + 1) * 6];
                o[k] = -th * div;
                o[2 + 2 * k] = phi.x;
                o[3 + 2 * k] = phi.y;
            }
        }
        let uk = p.u_dm.space().element;
        let nbu = p.u_dm.n_basis();
        let base = 2 * nbs;
        let mut dirs = vec![Matrix2::zeros(); 2 * nbu];
        let mut vals = vec![0.0; nbu];
        for j in 0..nbu {
            let (phi, g) = cell.lagrange(uk, q, j);
            vals[j] = phi;
            for c in 0..2 {
                dirs[c * nbu + j].set_row(c, &g.transpose());
            }
        }
        let mut jac = vec![Matrix2::zeros(); 2 * nbu];
        p.rheology.jacobian(&grad, a, h, &dirs, &mut jac);
        for c in 0..2 {
            for j in 0..nbu {
                let idx = base + c * nbu + j;
                let mut w = Vector2::zeros();
                w[c] = vals[j];
                let m = w * mass + p.forcing.jacobian(x, vel_theta, w * th);
                let jc = &jac[c * nbu + j];
                let o = &mut ops[idx * 6..(idx + 1) * 6];
                o[0] = m.x;
                o[1] = m.y;
                o[2] = -jc[(0, 0)];
                o[3] = -jc[(0, 1)];
                o[4] = -jc[(1, 0)];
                o[5] = -jc[(1, 1)];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GnOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step halvings before the line search gives up.
    pub max_halvings: usize,
    pub solver: SolverOptions,
}

impl Default for GnOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50, armijo: 1e-4, max_halvings: 40, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GnIteration {
    /// Functional before and after the step.
    pub functional_before: f64,
    pub functional: f64,
    pub step_norm: f64,
    pub alpha: f64,
    /// Decrease predicted by the linearized model, `bᵀδ`.
    pub predicted_decrease: f64,
    /// Relative diagonal shift needed to factorize, 0 when none.
    pub shift: f64,
    pub solve: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GnReport {
    pub initial_functional: f64,
    pub iterations: Vec<GnIteration>,
    pub converged: bool,
    pub functional_m: f64,
    pub functional_c: f64,
}

impl GnReport {
    pub fn final_functional(&self) -> f64 {
        self.functional_m + self.functional_c
    }

    /// Whether the functional never increased across accepted steps.
    pub fn is_monotone(&self) -> bool {
        let mut prev = self.initial_functional;
        self.iterations.iter().all(|it| {
            let ok = it.functional <= prev;
            prev = it.functional;
            ok
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Result of solving one linearized problem, before the line search.
#[derive(Debug, Clone)]
pub struct GnDirection {
    pub delta: Vec<f64>,
    pub functional: f64,
    pub predicted_decrease: f64,
    pub shift: f64,
    pub solve: SolveStats,
}

/// Solves the Gauss-Newton normal equations at `x` with `δu = 0` on the boundary.
///
/// The matrix is positive definite in exact arithmetic, but near `Δ = Δ_min`
/// the viscosities make it numerically singular. If factorization fails the
/// solve is retried with `G + μ diag(G)`, growing `μ` from 1e-12; the result
/// is still a descent direction.
pub fn gn_direction(problem: &MomentumProblem, x: &[f64], solver: &SolverOptions) -> Result<GnDirection> {
    let mut ls = problem.linearize(x)?;
    let functional = ls.functional();
    let fixed: Vec<(usize, f64)> = problem.dirichlet_dofs().into_iter().map(|d| (d, 0.0)).collect();
    ls.system.eliminate(&fixed);
    let g = &ls.system.matrix;
    let b = &ls.system.rhs;
    let mut shift = 0.0;
    let (delta, solve) = loop {
        let attempt = if shift == 0.0 { solve_spd(g, b, solver) } else { solve_spd(&shifted(g, shift), b, solver) };
        match attempt {
            Ok(r) => break r,
            Err(Error::NotPositiveDefinite { .. } | Error::SolverBreakdown { .. }) if shift < 1e-2 => {
                shift = if shift == 0.0 { 1e-12 } else { shift * 100.0 };
                log::debug!("Gauss-Newton matrix not numerically definite; retrying with shift {shift:e}");
            }
            Err(e) => return Err(e),
        }
    };
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gauss-Newton update".into()));
    }
    let predicted_decrease = dot(b, &delta);
    Ok(GnDirection { delta, functional, predicted_decrease, shift, solve })
}

fn shifted(g: &CsrMatrix, mu: f64) -> CsrMatrix {
    let diag = g.diagonal();
    let mut t: Vec<_> = g.triplets().collect();
    t.extend(diag.iter().enumerate().map(|(i, d)| (i, i, mu * d)));
    CsrMatrix::from_triplets(g.n(), t)
}

/// One damped Gauss-Newton step: direction, then Armijo backtracking.
/// `iteration` only labels errors.
pub fn gn_step(problem: &MomentumProblem, x: &[f64], opts: &GnOptions, iteration: usize) -> Result<(Vec<f64>, GnIteration)> {
    let dir = gn_direction(problem, x, &opts.solver)?;
    line_search(problem, x, &dir, opts, iteration)
}

fn line_search(
    problem: &MomentumProblem,
    x: &[f64],
    dir: &GnDirection,
    opts: &GnOptions,
    iteration: usize,
) -> Result<(Vec<f64>, GnIteration)> {
    let f0 = dir.functional;
    let mut alpha = 1.0;
    for _ in 0..=opts.max_halvings {
        let trial: Vec<f64> = x.iter().zip(&dir.delta).map(|(x, d)| x + alpha * d).collect();
        let f = problem.functional_value(&trial);
        // directional derivative of F along δ is -2 bᵀδ
        if f.is_finite() && f <= f0 - 2.0 * opts.armijo * alpha * dir.predicted_decrease {
            let step_norm = alpha * norm(&dir.delta);
            return Ok((
                trial,
                GnIteration {
                    functional_before: f0,
                    functional: f,
                    step_norm,
                    alpha,
                    predicted_decrease: dir.predicted_decrease,
                    shift: dir.shift,
                    solve: dir.solve,
                },
            ));
        }
        alpha *= 0.5;
    }
    Err(Error::LineSearch { iteration, functional: f0 })
}

/// Whether every block of the step is small relative to the new iterate.
fn step_converged(x_new: &[f64], step: &[f64], n_sigma: usize, tol: f64) -> bool {
    let (xs, xu) = x_new.split_at(n_sigma);
    let (ds, du) = step.split_at(n_sigma);
    norm(ds) <= tol * norm(xs) && norm(du) <= tol * norm(xu)
}

/// Size of `F` attributable to rounding: `(1000 ε)²` times `F` at `x = 0`,
/// where every residual term keeps its full magnitude.
fn rounding_floor(problem: &MomentumProblem) -> f64 {
    let scale = problem.functional_value(&vec![0.0; problem.n_unknowns()]);
    (1e3 * f64::EPSILON).powi(2) * scale
}

/// Iterates [`gn_step`] from `x0` until the relative functional decrease, the
/// relative step, or the predicted relative decrease falls below `tol`.
/// Exhausting `max_iter` is not an error: the report says `converged: false`.
/// A failed line search is, unless `F` is already at rounding level.
pub fn gn_solve(problem: &MomentumProblem, x0: &[f64], opts: &GnOptions) -> Result<(Vec<f64>, GnReport)> {
    problem.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("Gauss-Newton tolerance {}", opts.tol)));
    }
    let ns = problem.sigma_dm.n_global();
    let mut x = x0.to_vec();
    let (fm0, fc0) = problem.functional_parts(&x);
    let initial = fm0 + fc0;
    let mut iterations = Vec::new();
    let mut converged = initial == 0.0;
    for k in 1..=opts.max_iter {
        if converged {
            break;
        }
        let dir = gn_direction(problem, &x, &opts.solver)?;
        let f = dir.functional;
        if dir.predicted_decrease <= opts.tol * f {
            converged = true;
            break;
        }
        let (x_new, it) = match line_search(problem, &x, &dir, opts, k) {
            Ok(r) => r,
            // no step length helps: stop if that is because F sits at rounding level
            Err(Error::LineSearch { .. }) if f <= rounding_floor(problem) => {
                log::debug!("gauss-newton {k}: F = {f:.3e} at rounding level, stopping");
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let rel_decrease = (it.functional_before - it.functional) / it.functional_before;
        converged = (it.alpha == 1.0 && rel_decrease < opts.tol)
            || step_converged(&x_new, &step, ns, opts.tol)
            || it.functional == 0.0;
        log::debug!(
            "gauss-newton {k}: F = {:.6e} (alpha {}, predicted decrease {:.3e})",
            it.functional,
            it.alpha,
            it.predicted_decrease
        );
        iterations.push(it);
        x = x_new;
    }
    let (functional_m, functional_c) = problem.functional_parts(&x);
    Ok((x, GnReport { initial_functional: initial, iterations, converged, functional_m, functional_c }))
}

/// `∫ (σ_01 - σ_10)²` of a stress field stored as two Raviart-Thomas rows.
pub fn symmetry_defect(fe: &FeContext, sigma_dm: &DofMap, sigma: &[f64]) -> f64 {
    let kind = sigma_dm.space().element;
    (0..fe.n_cells())
        .map(|t| {
            let ctx = fe.cell(t, &[kind]);
            (0..ctx.n_points)
                .map(|q| {
                    let r0 = ctx.eval_rt(sigma_dm, sigma, 0, q).0;
                    let r1 = ctx.eval_rt(sigma_dm, sigma, 1, q).0;
                    ctx.jxw[q] * (r0.y - r1.x).powi(2)
                })
                .sum::<f64>()
        })
        .sum()
}
