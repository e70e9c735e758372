//! Time loop: advect `A`, `H` with the old velocity, then solve for the new
//! stress and velocity by Gauss-Newton. Writes a CSV run log and periodic
//! VTK snapshots.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{integrate_lagrange, vertex_average, FeContext};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::momentum::{gn_solve, symmetry_defect, GnReport, MomentumProblem, SeaIceForcing, ViscousPlastic};
use crate::output::{write_vtk, PointField};
use crate::scenario::{initial_state, SECONDS_PER_DAY};
use crate::state::{Spaces, StateFields};
use crate::transport::advect_step;

/// First line of every run log.
pub const RUNLOG_SCHEMA: &str = "# runlog-schema=1";

/// Order in which each step executes its sub-problems.
pub const STEP_PHASES: &str = "advect>momentum";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time_days: f64,
    pub phases: String,
    pub gn_iterations: usize,
    pub gn_converged: bool,
    pub gn_monotone: bool,
    pub f_total: f64,
    pub f_m: f64,
    pub f_c: f64,
    pub f_e: f64,
    pub int_h: f64,
    pub int_a: f64,
    pub min_a: f64,
    pub max_a: f64,
    pub min_h: f64,
    pub max_h: f64,
    pub max_speed: f64,
    pub sigma_sym_defect: f64,
    pub active_a: usize,
    pub active_h: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub index: usize,
    pub step: usize,
    pub time_days: f64,
    pub file: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: StateFields,
}

impl RunOutcome {
    /// Every Gauss-Newton solve converged.
    pub fn healthy(&self) -> bool {
        self.records.iter().all(|r| r.gn_converged)
    }
}

/// What an observer sees after each completed step.
pub struct StepView<'a> {
    pub record: &'a StepRecord,
    pub state: &'a StateFields,
    pub gn: &'a GnReport,
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

struct Writer {
    dir: PathBuf,
    log: Option<csv::Writer<BufWriter<File>>>,
    snapshots: Vec<Snapshot>,
}

impl Writer {
    fn new(config: &Config) -> Result<Self> {
        let dir = config.output.dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(&config.output.log_file);
        let mut file = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        writeln!(file, "{RUNLOG_SCHEMA}").map_err(|e| Error::io(&path, e))?;
        // header written by hand so it is present even when there are no steps
        let mut log = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        log.write_record(StepRecord::HEADER).map_err(|e| csv_error(&path, e))?;
        Ok(Self { dir, log: Some(log), snapshots: Vec::new() })
    }

    fn log_path(&self, config: &Config) -> PathBuf {
        self.dir.join(&config.output.log_file)
    }

    fn record(&mut self, config: &Config, r: &StepRecord) -> Result<()> {
        let path = self.log_path(config);
        let log = self.log.as_mut().expect("log open");
        log.serialize(r).map_err(|e| csv_error(&path, e))?;
        log.flush().map_err(|e| Error::io(&path, e))
    }

    fn snapshot(&mut self, fe: &FeContext, spaces: &Spaces, state: &StateFields, step: usize, t_days: f64) -> Result<()> {
        let index = self.snapshots.len();
        let file = format!("snapshot_{index:04}.vtk");
        let u = vertex_average(fe, &spaces.u, &state.u)?;
        let sigma = vertex_average(fe, &spaces.sigma, &state.sigma)?;
        let scalar = |name: &str, c: &[f64]| -> Result<PointField> {
            let v = vertex_average(fe, &spaces.tracer, c)?;
            Ok(PointField::Scalar(name.into(), v[0].iter().map(|x| x.x).collect()))
        };
        let u_vec = u[0].iter().zip(&u[1]).map(|(a, b)| nalgebra::Vector2::new(a.x, b.x)).collect();
        let fields = [
            scalar("A", &state.a)?,
            scalar("H", &state.h)?,
            PointField::Vector("u".into(), u_vec),
            PointField::Vector("sigma_row0".into(), sigma[0].clone()),
            PointField::Vector("sigma_row1".into(), sigma[1].clone()),
        ];
        let title = format!("sea ice step {step} t = {t_days} days");
        write_vtk(&self.dir.join(&file), fe.mesh(), fe.length(), &title, &fields)?;
        self.snapshots.push(Snapshot { index, step, time_days: t_days, file });
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<Snapshot>> {
        if let Some(mut log) = self.log.take() {
            log.flush().map_err(|e| Error::io(&self.dir, e))?;
        }
        let path = self.dir.join("snapshots.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        for s in &self.snapshots {
            w.serialize(s).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(self.snapshots)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

impl StepRecord {
    pub const HEADER: [&'static str; 21] = [
        "step",
        "time_days",
        "phases",
        "gn_iterations",
        "gn_converged",
        "gn_monotone",
        "f_total",
        "f_m",
        "f_c",
        "f_e",
        "int_h",
        "int_a",
        "min_a",
        "max_a",
        "min_h",
        "max_h",
        "max_speed",
        "sigma_sym_defect",
        "active_a",
        "active_h",
        "wall_time_s",
    ];
}

/// Runs the configured simulation, writing outputs under `config.output.dir`.
pub fn run(config: &Config) -> Result<RunOutcome> {
    run_observed(config, |_| {})
}

/// As [`run`], calling `observe` after every completed step.
pub fn run_observed(config: &Config, mut observe: impl FnMut(StepView)) -> Result<RunOutcome> {
    config.validate()?;
    let mesh = Mesh::build_structured(config.mesh.n)?;
    let fe = FeContext::new(&mesh, config.mesh.length, config.mesh.quadrature_order)?;
    let spaces = Spaces::new(&mesh, config.mesh.elements)?;
    let params = config.physics.params;
    let rheology = ViscousPlastic { params, trace_factor: config.physics.trace_factor };
    let solver = config.solver_options();
    let gn_opts = config.gn_options();
    let dt = config.time.dt;
    let n_steps = config.time.n_steps()?;
    let cadence_s = config.output.vtk_every_hours * 3600.0;

    let mut state = initial_state(&fe, &spaces, &config.initial, &params)?;
    let mut out = Writer::new(config)?;
    if cadence_s > 0.0 {
        out.snapshot(&fe, &spaces, &state, 0, 0.0)?;
    }
    let mut next_snapshot = cadence_s;
    let mut records = Vec::with_capacity(n_steps);
    log::info!(
        "mesh n={} ({} stress + {} velocity unknowns), {} steps of {} s",
        config.mesh.n,
        spaces.sigma.n_global(),
        spaces.u.n_global(),
        n_steps,
        dt
    );

    for step in 1..=n_steps {
        let t0 = Instant::now();
        let t_old = (step - 1) as f64 * dt;
        let t_new = step as f64 * dt;
        let (new_state, gn, mut record) = advance(
            &fe,
            &spaces,
            config,
            &rheology,
            &state,
            t_old,
            &solver,
            &gn_opts,
        )
        .map_err(|e| Error::Step { step, source: Box::new(e) })?;
        record.step = step;
        record.time_days = t_new / SECONDS_PER_DAY;
        record.wall_time_s = if config.output.wall_time { t0.elapsed().as_secs_f64() } else { 0.0 };
        state = new_state;
        out.record(config, &record)?;
        if cadence_s > 0.0 && t_new >= next_snapshot - 1e-9 * dt {
            out.snapshot(&fe, &spaces, &state, step, record.time_days)?;
            while next_snapshot <= t_new + 1e-9 * dt {
                next_snapshot += cadence_s;
            }
        }
        log::info!(
            "step {step}/{n_steps} t={:.4} d: {} GN its{}, F={:.4e}",
            record.time_days,
            record.gn_iterations,
            if record.gn_converged { "" } else { " (not converged)" },
            record.f_total
        );
        observe(StepView { record: &record, state: &state, gn: &gn });
        records.push(record);
    }
    let snapshots = out.finish()?;
    Ok(RunOutcome { records, snapshots, final_state: state })
}

#[allow(clippy::too_many_arguments)]
fn advance(
    fe: &FeContext,
    spaces: &Spaces,
    config: &Config,
    rheology: &ViscousPlastic,
    state: &StateFields,
    t_old: f64,
    solver: &crate::assembly::SolverOptions,
    gn_opts: &crate::momentum::GnOptions,
) -> Result<(StateFields, GnReport, StepRecord)> {
    let dt = config.time.dt;
    let theta = config.time.theta;
    let params = config.physics.params;

    let adv = advect_step(fe, &spaces.tracer, &spaces.u, &state.u, &state.a, &state.h, dt, solver, config.active_set_cap())?;
    let forcing = SeaIceForcing { params, wind: config.physics.wind, t_days: (t_old + theta * dt) / SECONDS_PER_DAY };
    let problem = MomentumProblem {
        fe,
        sigma_dm: &spaces.sigma,
        u_dm: &spaces.u,
        tracer_dm: &spaces.tracer,
        sigma_old: &state.sigma,
        u_old: &state.u,
        a: &adv.a,
        h: &adv.h,
        dt,
        theta,
        rho_ice: params.rho_ice,
        rheology,
        forcing: &forcing,
    };
    let (x, gn) = gn_solve(&problem, &state.momentum(), gn_opts)?;
    let mut next = StateFields { sigma: state.sigma.clone(), u: state.u.clone(), a: adv.a, h: adv.h };
    next.set_momentum(&x);
    if !next.is_finite() {
        return Err(Error::NonFinite("state after Gauss-Newton".into()));
    }
    let (min_a, max_a) = min_max(&next.a);
    let (min_h, max_h) = min_max(&next.h);
    let nu = spaces.u.n_scalar();
    let max_speed = (0..nu)
        .map(|i| (spaces.u.global_index(0, i), spaces.u.global_index(1, i)))
        .map(|(a, b)| next.u[a].hypot(next.u[b]))
        .fold(0.0, f64::max);
    let record = StepRecord {
        step: 0,
        time_days: 0.0,
        phases: STEP_PHASES.into(),
        gn_iterations: gn.iterations.len(),
        gn_converged: gn.converged,
        gn_monotone: gn.is_monotone(),
        f_total: gn.final_functional() + adv.functional,
        f_m: gn.functional_m,
        f_c: gn.functional_c,
        f_e: adv.functional,
        int_h: integrate_lagrange(fe, &spaces.tracer, &next.h),
        int_a: integrate_lagrange(fe, &spaces.tracer, &next.a),
        min_a,
        max_a,
        min_h,
        max_h,
        max_speed,
        sigma_sym_defect: symmetry_defect(fe, &spaces.sigma, &next.sigma),
        active_a: adv.a_set.n_active(),
        active_h: adv.h_set.n_active(),
        wall_time_s: 0.0,
    };
    Ok((next, gn, record))
}

/// Reads a run log written by [`run`].
pub fn read_run_log(path: &Path) -> Result<Vec<StepRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let body = text
        .strip_prefix(RUNLOG_SCHEMA)
        .and_then(|t| t.strip_prefix('\n'))
        .ok_or_else(|| Error::InvalidArgument(format!("{}: missing `{RUNLOG_SCHEMA}` line", path.display())))?;
    csv::Reader::from_reader(body.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<StepRecord>, _>>()
        .map_err(|e| csv_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::apply_override;

    fn config(dir: &Path, sets: &[&str]) -> Config {
        let mut t = toml::Table::new();
        for s in sets {
            apply_override(&mut t, s).unwrap();
        }
        let mut c = Config::from_table(t).unwrap();
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn zero_end_time_writes_initial_snapshot_and_empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), &["mesh.n=4", "time.t_end_days=0"]);
        let out = run(&c).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0].time_days, 0.0);
        assert!(dir.path().join("snapshot_0000.vtk").exists());
        let log = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert_eq!(log.lines().count(), 2);
        assert!(read_run_log(&dir.path().join("run.csv")).unwrap().is_empty());
    }

    #[test]
    fn no_forcing_and_flat_ice_is_a_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            dir.path(),
            &[
                "mesh.n=4",
                "time.dt=3600",
                "time.t_end_days=0.25",
                "physics.wind=calm",
                "physics.v_a_max=0.0",
                "physics.v_o_max=0.0",
                "initial.h_amplitude=0.0",
                "output.vtk_every_hours=0",
            ],
        );
        let out = run(&c).unwrap();
        assert_eq!(out.records.len(), 6);
        assert!(out.healthy());
        assert!(out.snapshots.is_empty());
        for r in &out.records {
            assert!(r.max_speed <= 1e-9, "{}", r.max_speed);
            assert!((r.min_a - 1.0).abs() < 1e-12 && r.max_a <= 1.0);
            assert!((r.min_h - 0.3).abs() < 1e-12 && (r.max_h - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn log_reads_back_with_phase_marker() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), &["mesh.n=4", "time.dt=3600", "time.t_end_days=0.125", "output.wall_time=false"]);
        let mut seen = 0;
        let out = run_observed(&c, |v| {
            seen += 1;
            assert_eq!(v.gn.iterations.len(), v.record.gn_iterations);
        })
        .unwrap();
        assert_eq!(seen, 3);
        let path = dir.path().join("run.csv");
        assert!(std::fs::read_to_string(&path).unwrap().starts_with(RUNLOG_SCHEMA));
        let back = read_run_log(&path).unwrap();
        assert_eq!(back, out.records);
        assert!(back.iter().all(|r| r.phases == STEP_PHASES && r.wall_time_s == 0.0));
        assert_eq!(back.iter().map(|r| r.step).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn snapshot_cadence() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), &["mesh.n=2", "time.dt=3600", "time.t_end_days=0.5", "output.vtk_every_hours=4.0"]);
        let out = run(&c).unwrap();
        let steps: Vec<usize> = out.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, [0, 4, 8, 12]);
        let index = std::fs::read_to_string(dir.path().join("snapshots.csv")).unwrap();
        assert_eq!(index.lines().count(), 5);
    }
}
