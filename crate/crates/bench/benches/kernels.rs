use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{Matrix2, Vector2};

use seaice_bench::Fixture;
use seaice_core::assembly::{solve_spd, LinearSolver, SolverOptions};
use seaice_core::constitutive::{force, jac_stress, stress, StrainState};
use seaice_core::momentum::{MomentumProblem, SeaIceForcing, ViscousPlastic};
use seaice_core::scenario::WindProfile;
use seaice_core::state::ElementPair;
use seaice_core::transport::advect_step;

fn constitutive(c: &mut Criterion) {
    let gu = Matrix2::new(1e-7, -3e-8, 2e-8, -5e-8);
    let gv = Matrix2::new(-2e-8, 1e-8, 4e-8, 3e-8);
    c.bench_function("constitutive/stress", |b| {
        b.iter(|| {
            let s = StrainState::new(black_box(&gu), 2e-9).unwrap();
            stress(&s, black_box(8.25e3))
        })
    });
    c.bench_function("constitutive/jac_stress", |b| {
        let su = StrainState::new(&gu, 2e-9).unwrap();
        let sv = StrainState::new(&gv, 2e-9).unwrap();
        b.iter(|| jac_stress(black_box(&su), black_box(&sv), 8.25e3))
    });
    c.bench_function("constitutive/force", |b| {
        let p = Default::default();
        b.iter(|| force(black_box(Vector2::new(0.05, -0.02)), Vector2::new(8.0, 3.0), Vector2::new(0.01, 0.0), &p))
    });
}

fn momentum(c: &mut Criterion) {
    let mut g = c.benchmark_group("momentum");
    g.sample_size(10);
    for n in [8, 16, 32] {
        let fx = Fixture::new(n, ElementPair::Rt0P1);
        let fe = fx.fe();
        let rheo = ViscousPlastic::new(fx.params);
        let forcing = SeaIceForcing { params: fx.params, wind: WindProfile::Printed, t_days: 2.0 };
        let p = MomentumProblem {
            fe: &fe,
            sigma_dm: &fx.spaces.sigma,
            u_dm: &fx.spaces.u,
            tracer_dm: &fx.spaces.tracer,
            sigma_old: &fx.state.sigma,
            u_old: &fx.state.u,
            a: &fx.state.a,
            h: &fx.state.h,
            dt: 1800.0,
            theta: 0.5,
            rho_ice: fx.params.rho_ice,
            rheology: &rheo,
            forcing: &forcing,
        };
        let x = fx.state.momentum();
        g.bench_with_input(BenchmarkId::new("linearize", n), &n, |b, _| b.iter(|| p.linearize(&x).unwrap()));

        let mut ls = p.linearize(&x).unwrap();
        let fixed: Vec<_> = p.dirichlet_dofs().into_iter().map(|d| (d, 0.0)).collect();
        ls.system.eliminate(&fixed);
        let opts = SolverOptions { linear: LinearSolver::Direct, ..Default::default() };
        g.bench_with_input(BenchmarkId::new("direct_solve", n), &n, |b, _| {
            b.iter(|| solve_spd(&ls.system.matrix, &ls.system.rhs, &opts).unwrap())
        });
    }
    g.finish();
}

fn transport(c: &mut Criterion) {
    let mut g = c.benchmark_group("transport");
    g.sample_size(10);
    for n in [16, 32] {
        let fx = Fixture::new(n, ElementPair::Rt0P1);
        let fe = fx.fe();
        let opts = SolverOptions::default();
        let s = &fx.spaces;
        g.bench_with_input(BenchmarkId::new("advect_step", n), &n, |b, _| {
            b.iter(|| advect_step(&fe, &s.tracer, &s.u, &fx.state.u, &fx.state.a, &fx.state.h, 1800.0, &opts, None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, constitutive, momentum, transport);
criterion_main!(benches);
