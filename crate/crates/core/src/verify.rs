//! Self-checks: finite-difference derivative studies, manufactured-solution
//! convergence of the linear surrogate, and element exactness identities.
//!
//! Failures are report entries, not errors.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{interpolate_lagrange, max_normal_jump, DofMap, FeContext, Space};
use crate::constitutive::{
    force, ice_strength, jac_delta_inv, jac_force, jac_stress_with_trace_factor, stress_with_trace_factor, PhysParams,
    StrainState,
};
use crate::elements::{eval_lagrange, eval_rt, lagrange_nodes, quadrature, rt_reference_dofs, ElementKind, GeometryMap};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::momentum::{gn_solve, GnOptions, LinearForcing, LinearStrain, MomentumProblem, SeaIceForcing, ViscousPlastic};
use crate::scenario::WindProfile;
use crate::state::{ElementPair, Spaces};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Derivatives,
    Convergence,
    Elements,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Derivatives, Suite::Convergence, Suite::Elements];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Derivatives => "derivatives",
            Suite::Convergence => "convergence",
            Suite::Elements => "elements",
        }
    }

    /// `all` or a comma-separated list of suite names.
    pub fn parse_list(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',')
            .map(|name| {
                Self::ALL
                    .into_iter()
                    .find(|x| x.name() == name.trim())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown suite `{name}` (derivatives, convergence, elements, all)")))
            })
            .collect()
    }

    pub fn run(self) -> Result<Report> {
        match self {
            Suite::Derivatives => derivatives(100, 7),
            Suite::Convergence => convergence(),
            Suite::Elements => elements(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}/{}: {}", self.suite, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub entries: Vec<Entry>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn push_max(&mut self, suite: &'static str, name: &str, value: f64, tol: f64) {
        self.entries.push(Entry {
            suite,
            name: name.into(),
            passed: value <= tol,
            detail: format!("max error {value:.3e} (tolerance {tol:.0e})"),
        });
    }
}

// ---------------------------------------------------------------------------
// finite differences

/// Relative steps of a derivative study.
pub const FD_STEPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

/// Central-difference errors of one scalar directional derivative.
#[derive(Debug, Clone)]
pub struct FdStudy {
    /// `(h, relative error)` for each step.
    pub errors: Vec<(f64, f64)>,
    /// Smallest order over consecutive step pairs whose errors sit above the
    /// rounding floor; `None` when every error is at rounding level.
    pub order: Option<f64>,
}

impl FdStudy {
    pub fn error_at(&self, h: f64) -> f64 {
        self.errors.iter().find(|(s, _)| *s == h).map_or(f64::NAN, |(_, e)| *e)
    }
}

/// Compares `exact` with `(f(h) - f(-h)) / 2h` for each step. A step pair
/// counts towards the order only if both errors exceed the rounding level
/// `~ ε |f| / h` by a wide margin; below that the error is noise.
pub fn fd_study(f: impl Fn(f64) -> f64, exact: f64) -> FdStudy {
    let f0 = f(0.0).abs();
    let scale = exact.abs().max(f64::MIN_POSITIVE);
    let mut errors = Vec::with_capacity(FD_STEPS.len());
    let mut floors = Vec::with_capacity(FD_STEPS.len());
    for &h in &FD_STEPS {
        let fd = (f(h) - f(-h)) / (2.0 * h);
        errors.push((h, (fd - exact).abs() / scale));
        floors.push(100.0 * f64::EPSILON * f0.max(f(h).abs()) / h / scale);
    }
    let order = (1..errors.len())
        .filter(|&i| errors[i].1 > floors[i] && errors[i - 1].1 > floors[i - 1])
        .map(|i| (errors[i - 1].1 / errors[i].1).log10() / (errors[i - 1].0 / errors[i].0).log10())
        .min_by(f64::total_cmp);
    FdStudy { errors, order }
}

/// Aggregate of many studies of one derivative.
#[derive(Debug, Clone, Default)]
pub struct FdSummary {
    pub states: usize,
    /// Studies with at least one pair above the rounding floor.
    pub resolved: usize,
    pub min_order: f64,
    pub max_error_1e5: f64,
}

impl FdSummary {
    fn add(&mut self, s: &FdStudy) {
        if self.states == 0 {
            self.min_order = f64::INFINITY;
        }
        self.states += 1;
        if let Some(o) = s.order {
            self.resolved += 1;
            self.min_order = self.min_order.min(o);
        }
        self.max_error_1e5 = self.max_error_1e5.max(s.error_at(1e-5));
    }

    pub fn passed(&self) -> bool {
        self.states > 0 && self.min_order >= 1.9 && self.max_error_1e5 <= 1e-5
    }

    fn entry(&self, name: &str) -> Entry {
        Entry {
            suite: "derivatives",
            name: name.into(),
            passed: self.passed(),
            detail: format!(
                "{} states ({} above rounding), min order {:.3}, max rel. error at h=1e-5 {:.2e}",
                self.states, self.resolved, self.min_order, self.max_error_1e5
            ),
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

fn random_matrix(rng: &mut ChaCha8Rng, scale: f64) -> Matrix2<f64> {
    Matrix2::from_fn(|_, _| rng.random_range(-scale..scale))
}

fn random_vector(rng: &mut ChaCha8Rng, scale: f64) -> Vector2<f64> {
    Vector2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

/// `J_{Δ⁻¹}`, `J_C`, `J_F` at random pointwise states, and the assembled first
/// variation at random discrete states on small meshes.
pub fn derivative_summaries(n_states: usize, seed: u64) -> Result<[FdSummary; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = PhysParams::default();
    let dmin = params.delta_min;
    let mut out: [FdSummary; 4] = Default::default();

    for _ in 0..n_states {
        // strain rates from the regularization scale up to fast deformation
        let scale = log_uniform(&mut rng, 1e-9, 1e-5);
        let gu = random_matrix(&mut rng, scale);
        let gv = random_matrix(&mut rng, scale);
        let su = StrainState::new(&gu, dmin)?;
        let sv = StrainState::new(&gv, dmin)?;
        let at = |h: f64| StrainState::from_gradient(&(gu + gv * h), dmin);
        out[0].add(&fd_study(|h| 1.0 / at(h).delta, jac_delta_inv(&su, &sv)));

        let p = ice_strength(rng.random_range(0.5..=1.0), rng.random_range(0.05..1.0), &params)?;
        let k = rng.random_range(1.0..3.0);
        let w = random_matrix(&mut rng, 1.0);
        let exact = jac_stress_with_trace_factor(&su, &sv, p, k).component_mul(&w).sum();
        out[1].add(&fd_study(|h| stress_with_trace_factor(&at(h), p, k).component_mul(&w).sum(), exact));

        let u = random_vector(&mut rng, 0.2);
        let d = random_vector(&mut rng, 0.2);
        let v_a = random_vector(&mut rng, 15.0);
        let v_o = random_vector(&mut rng, 0.01);
        let wv = random_vector(&mut rng, 1.0);
        let exact = jac_force(u, v_o, d, &params).dot(&wv);
        out[2].add(&fd_study(|h| force(u + d * h, v_a, v_o, &params).dot(&wv), exact));
    }

    let meshes = [Mesh::build_structured(2)?, Mesh::build_structured(3)?];
    for i in 0..n_states {
        let mesh = &meshes[i % 2];
        let pair = if i % 4 < 2 { ElementPair::Rt0P1 } else { ElementPair::Rt1P2 };
        out[3].add(&first_variation_study(&mut rng, mesh, pair, &params, i % 2 == 1)?);
    }
    Ok(out)
}

/// With `velocity_only` the direction leaves the stress alone; the functional
/// is quadratic in the stress, so those are the directions with curvature
/// beyond second order.
fn first_variation_study(
    rng: &mut ChaCha8Rng,
    mesh: &Mesh,
    pair: ElementPair,
    params: &PhysParams,
    velocity_only: bool,
) -> Result<FdStudy> {
    let fe = FeContext::new(mesh, 1.0, 4)?;
    let sp = Spaces::new(mesh, pair)?;
    let ns = sp.sigma.n_global();
    let stress_scale = log_uniform(rng, 1e2, 1e4);
    let speed = log_uniform(rng, 1e-9, 1e-2);
    let rand_s = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..ns).map(|_| rng.random_range(-stress_scale..stress_scale)).collect() };
    let rand_u = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..sp.u.n_global()).map(|i| if sp.u.is_boundary(i) { 0.0 } else { rng.random_range(-speed..speed) }).collect()
    };
    let sigma_old = rand_s(rng);
    let u_old = rand_u(rng);
    let a: Vec<f64> = (0..sp.tracer.n_global()).map(|_| rng.random_range(0.7..=1.0)).collect();
    let h: Vec<f64> = (0..sp.tracer.n_global()).map(|_| rng.random_range(0.1..0.5)).collect();
    let rheology = ViscousPlastic::new(*params);
    let forcing = SeaIceForcing { params: *params, wind: WindProfile::Printed, t_days: rng.random_range(0.0..8.0) };
    let problem = MomentumProblem {
        fe: &fe,
        sigma_dm: &sp.sigma,
        u_dm: &sp.u,
        tracer_dm: &sp.tracer,
        sigma_old: &sigma_old,
        u_old: &u_old,
        a: &a,
        h: &h,
        dt: 1800.0,
        theta: rng.random_range(0.0..=1.0),
        rho_ice: params.rho_ice,
        rheology: &rheology,
        forcing: &forcing,
    };
    let mut x = rand_s(rng);
    x.extend(rand_u(rng));
    let mut dir = if velocity_only { vec![0.0; ns] } else { rand_s(rng) };
    dir.extend(rand_u(rng));
    let b = problem.first_variation(&x, &dir)?;
    Ok(fd_study(
        |t| {
            let y: Vec<f64> = x.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            problem.functional_value(&y)
        },
        b,
    ))
}

pub fn derivatives(n_states: usize, seed: u64) -> Result<Report> {
    let s = derivative_summaries(n_states, seed)?;
    let names = ["delta_inverse", "stress", "force", "first_variation"];
    Ok(Report { entries: s.iter().zip(names).map(|(s, n)| s.entry(n)).collect() })
}

// ---------------------------------------------------------------------------
// manufactured solution

/// Exact velocity, vanishing on the boundary of the unit square.
pub fn manufactured_velocity(x: Point2<f64>) -> Vector2<f64> {
    let sx = (PI * x.x).sin();
    Vector2::new(sx * (PI * x.y).sin(), sx * (2.0 * PI * x.y).sin())
}

/// `ε(u*)`, used as the exact stress.
pub fn manufactured_stress(x: Point2<f64>) -> Matrix2<f64> {
    let (sx, cx) = (PI * x.x).sin_cos();
    let (sy, cy) = (PI * x.y).sin_cos();
    let (s2y, c2y) = (2.0 * PI * x.y).sin_cos();
    let u1x = PI * cx * sy;
    let u1y = PI * sx * cy;
    let u2x = PI * cx * s2y;
    let u2y = 2.0 * PI * sx * c2y;
    let off = 0.5 * (u1y + u2x);
    Matrix2::new(u1x, off, off, u2y)
}

/// Row-wise divergence of [`manufactured_stress`].
pub fn manufactured_stress_divergence(x: Point2<f64>) -> Vector2<f64> {
    let pi2 = PI * PI;
    let (sx, cx) = (PI * x.x).sin_cos();
    let (sy, cy) = (PI * x.y).sin_cos();
    let (s2y, c2y) = (2.0 * PI * x.y).sin_cos();
    let u1 = sx * sy;
    let u2 = sx * s2y;
    let u1xx = -pi2 * u1;
    let u1yy = -pi2 * u1;
    let u1xy = pi2 * cx * cy;
    let u2xx = -pi2 * u2;
    let u2yy = -4.0 * pi2 * u2;
    let u2xy = 2.0 * pi2 * cx * c2y;
    Vector2::new(u1xx + 0.5 * (u1yy + u2xy), 0.5 * (u1xy + u2xx) + u2yy)
}

/// L² errors of velocity and stress for the surrogate problem at one resolution.
pub fn manufactured_errors(n: usize, pair: ElementPair) -> Result<(f64, f64)> {
    let mesh = Mesh::build_structured(n)?;
    let fe = FeContext::new(&mesh, 1.0, 6)?;
    let sp = Spaces::new(&mesh, pair)?;
    let m = Matrix2::new(0.5, -0.3, 0.3, 0.5);
    let (rho, dt) = (2.0, 0.5);
    // with θ = 1, u^n = 0 and H = 1 the momentum residual vanishes at (ε(u*), u*)
    let forcing = LinearForcing {
        matrix: m,
        source: move |x: Point2<f64>| {
            let u = manufactured_velocity(x);
            manufactured_stress_divergence(x) - u * (rho / dt) - m * u
        },
    };
    let zero_s = vec![0.0; sp.sigma.n_global()];
    let zero_u = vec![0.0; sp.u.n_global()];
    let ones = vec![1.0; sp.tracer.n_global()];
    let problem = MomentumProblem {
        fe: &fe,
        sigma_dm: &sp.sigma,
        u_dm: &sp.u,
        tracer_dm: &sp.tracer,
        sigma_old: &zero_s,
        u_old: &zero_u,
        a: &ones,
        h: &ones,
        dt,
        theta: 1.0,
        rho_ice: rho,
        rheology: &LinearStrain,
        forcing: &forcing,
    };
    let mut x0 = zero_s.clone();
    x0.extend(&zero_u);
    let (x, _) = gn_solve(&problem, &x0, &GnOptions { tol: 1e-12, max_iter: 3, ..Default::default() })?;
    let (sigma, u) = x.split_at(sp.sigma.n_global());
    let (mut eu, mut es) = (0.0, 0.0);
    let kinds = [pair.velocity(), pair.stress()];
    for t in 0..fe.n_cells() {
        let ctx = fe.cell(t, &kinds);
        for q in 0..ctx.n_points {
            let p = ctx.points[q];
            let uh = Vector2::new(ctx.eval_lagrange(&sp.u, u, 0, q).0, ctx.eval_lagrange(&sp.u, u, 1, q).0);
            eu += ctx.jxw[q] * (uh - manufactured_velocity(p)).norm_squared();
            let s = manufactured_stress(p);
            for r in 0..2 {
                let row = ctx.eval_rt(&sp.sigma, sigma, r, q).0;
                es += ctx.jxw[q] * (row - s.row(r).transpose()).norm_squared();
            }
        }
    }
    Ok((eu.sqrt(), es.sqrt()))
}

/// Observed rates between successive resolutions.
pub fn rates(ns: &[usize], errors: &[f64]) -> Vec<f64> {
    (1..ns.len()).map(|i| (errors[i - 1] / errors[i]).ln() / (ns[i] as f64 / ns[i - 1] as f64).ln()).collect()
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")
}

fn fixed(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}

pub const CONVERGENCE_MESHES: [usize; 4] = [4, 8, 16, 32];

pub fn convergence() -> Result<Report> {
    let mut report = Report::default();
    for (pair, name) in [(ElementPair::Rt0P1, "rt0-p1")] {
        let errs = CONVERGENCE_MESHES.iter().map(|&n| manufactured_errors(n, pair)).collect::<Result<Vec<_>>>()?;
        let eu: Vec<f64> = errs.iter().map(|e| e.0).collect();
        let es: Vec<f64> = errs.iter().map(|e| e.1).collect();
        let ru = rates(&CONVERGENCE_MESHES, &eu);
        let rs = rates(&CONVERGENCE_MESHES, &es);
        let min_rate = ru.iter().copied().fold(f64::INFINITY, f64::min);
        report.entries.push(Entry {
            suite: "convergence",
            name: format!("{name}-velocity"),
            passed: min_rate >= 0.9,
            detail: format!("L2 errors {}, rates {} (required >= 0.9)", sci(&eu), fixed(&ru)),
        });
        report.entries.push(Entry {
            suite: "convergence",
            name: format!("{name}-stress"),
            passed: true,
            detail: format!("L2 errors {}, rates {} (reported only)", sci(&es), fixed(&rs)),
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// elements

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn quadrature_exactness() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for order in 1..=6 {
        let rule = quadrature(order)?;
        for a in 0..=rule.degree as u32 {
            for b in 0..=(rule.degree as u32 - a) {
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let q = rule.integrate(|p| p.x.powi(a as i32) * p.y.powi(b as i32));
                worst = worst.max(((q - exact) / exact).abs());
            }
        }
    }
    Ok(worst)
}

pub fn lagrange_duality() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for degree in 1..=2 {
        for (i, p) in lagrange_nodes(degree)?.into_iter().enumerate() {
            for (j, v) in eval_lagrange(degree, p)?.values.iter().enumerate() {
                worst = worst.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    Ok(worst)
}

pub fn rt_duality() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for degree in 0..=1 {
        let n = ElementKind::raviart_thomas(degree)?.n_basis();
        for k in 0..n {
            let dofs = rt_reference_dofs(degree, |p| eval_rt(degree, p).expect("degree checked").values[k])?;
            for (i, d) in dofs.iter().enumerate() {
                worst = worst.max((d - if i == k { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    Ok(worst)
}

/// `∫_T div φ` against the boundary flux of every pushed RT basis function on
/// random triangles.
pub fn rt_divergence_theorem(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rule = quadrature(6)?;
    let (gx, gw) = crate::elements::gauss_legendre(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let pts: [Point2<f64>; 3] = loop {
            let p = [0, 1, 2].map(|_| Point2::new(rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)));
            let area = (p[1] - p[0]).perp(&(p[2] - p[0]));
            if area > 0.1 {
                break p;
            }
        };
        let map = GeometryMap::new(pts, 0)?;
        for degree in 0..=1 {
            let n = ElementKind::raviart_thomas(degree)?.n_basis();
            for k in 0..n {
                let volume = rule.integrate(|p| map.piola_div(eval_rt(degree, p).expect("degree checked").divs[k])) * map.det;
                let mut flux = 0.0;
                for e in 0..3 {
                    let (a, b) = crate::elements::reference_edge(e);
                    let (pa, pb) = (map.map(a), map.map(b));
                    let t = pb - pa;
                    let normal = Vector2::new(t.y, -t.x); // outward for counterclockwise cells, length |t|
                    // Gauss-Legendre on [0, 1]
                    for (s, w) in gx.iter().zip(&gw) {
                        let v = map.piola(eval_rt(degree, a + (b - a) * *s)?.values[k]);
                        flux += w * v.dot(&normal);
                    }
                }
                worst = worst.max((volume - flux).abs() / (1.0 + flux.abs()));
            }
        }
    }
    Ok(worst)
}

pub fn piola_continuity(seed: u64) -> Result<f64> {
    let mesh = Mesh::build_structured(4)?;
    let fe = FeContext::new(&mesh, 1.0, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for kind in [ElementKind::Rt0, ElementKind::Rt1] {
        let dm = DofMap::new(&mesh, Space::scalar(kind))?;
        for _ in 0..5 {
            let c: Vec<f64> = (0..dm.n_global()).map(|_| rng.random_range(-1.0..1.0)).collect();
            worst = worst.max(max_normal_jump(&fe, &dm, &c));
        }
    }
    Ok(worst)
}

/// Interpolating a polynomial of the space's degree reproduces it.
pub fn lagrange_reproduction() -> Result<f64> {
    let mesh = Mesh::build_structured(3)?;
    let fe = FeContext::new(&mesh, 1.0, 4)?;
    let mut worst: f64 = 0.0;
    for (kind, f) in [
        (ElementKind::P1, (|x: Point2<f64>| 0.3 - 2.0 * x.x + 0.7 * x.y) as fn(Point2<f64>) -> f64),
        (ElementKind::P2, |x: Point2<f64>| 1.0 + x.x * x.y - 3.0 * x.y * x.y + 0.5 * x.x),
    ] {
        let dm = DofMap::new(&mesh, Space::scalar(kind))?;
        let c = interpolate_lagrange(&mesh, &dm, |x, _| f(x))?;
        for t in 0..fe.n_cells() {
            let ctx = fe.cell(t, &[kind]);
            for q in 0..ctx.n_points {
                worst = worst.max((ctx.eval_lagrange(&dm, &c, 0, q).0 - f(ctx.points[q])).abs());
            }
        }
    }
    Ok(worst)
}

pub fn elements() -> Result<Report> {
    let mut r = Report::default();
    r.push_max("elements", "quadrature", quadrature_exactness()?, 1e-13);
    r.push_max("elements", "lagrange-duality", lagrange_duality()?, 1e-13);
    r.push_max("elements", "lagrange-reproduction", lagrange_reproduction()?, 1e-12);
    r.push_max("elements", "rt-duality", rt_duality()?, 1e-12);
    r.push_max("elements", "rt-divergence-theorem", rt_divergence_theorem(3)?, 1e-12);
    r.push_max("elements", "piola-continuity", piola_continuity(11)?, 1e-12);
    Ok(r)
}
