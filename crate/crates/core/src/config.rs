//! Run configuration: TOML sections `[mesh]`, `[time]`, `[physics]`,
//! `[initial]`, `[solver]`, `[output]`, every key optional.
//!
//! Unknown keys are rejected by comparing against the serialized defaults,
//! so overrides such as `--set solver.gn_tol=1e-6` are checked the same way
//! as file contents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::assembly::{LinearSolver, SolverOptions};
use crate::constitutive::PhysParams;
use crate::error::{Error, Result};
use crate::momentum::GnOptions;
use crate::scenario::{InitialCondition, WindProfile, SECONDS_PER_DAY};
use crate::state::ElementPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshConfig {
    /// Cells per side.
    pub n: usize,
    /// Physical side length in metres; 1 keeps the unit square.
    pub length: f64,
    pub elements: ElementPair,
    pub quadrature_order: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n: 32, length: 1.0, elements: ElementPair::Rt0P1, quadrature_order: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeConfig {
    /// Seconds.
    pub dt: f64,
    pub t_end_days: f64,
    pub theta: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { dt: 1800.0, t_end_days: 8.0, theta: 0.5 }
    }
}

impl TimeConfig {
    /// Number of steps; `t_end` must be a whole multiple of `dt`.
    pub fn n_steps(&self) -> Result<usize> {
        let steps = self.t_end_days * SECONDS_PER_DAY / self.dt;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::Config(format!(
                "t_end_days = {} is not a whole number of dt = {} s steps",
                self.t_end_days, self.dt
            )));
        }
        Ok(rounded as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    #[serde(flatten)]
    pub params: PhysParams,
    /// Weight of `tr ε I` in the stress; 2 in the standard rheology.
    pub trace_factor: f64,
    pub wind: WindProfile,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { params: PhysParams::default(), trace_factor: 2.0, wind: WindProfile::Printed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub linear: LinearSolver,
    pub cg_tol: f64,
    /// 0 means `10 n`.
    pub cg_max_iter: usize,
    pub gn_tol: f64,
    pub gn_max_iter: usize,
    pub armijo: f64,
    pub max_halvings: usize,
    /// 0 means `2 n + 10`.
    pub active_set_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let gn = GnOptions::default();
        let lin = SolverOptions::default();
        Self {
            linear: lin.linear,
            cg_tol: lin.cg_tol,
            cg_max_iter: 0,
            gn_tol: gn.tol,
            gn_max_iter: gn.max_iter,
            armijo: gn.armijo,
            max_halvings: gn.max_halvings,
            active_set_cap: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Simulated hours between VTK snapshots; 0 disables them.
    pub vtk_every_hours: f64,
    pub log_file: String,
    /// Record wall-clock time per step. Off makes the log byte-reproducible.
    pub wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("output"), vtk_every_hours: 6.0, log_file: "run.csv".into(), wall_time: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub physics: PhysicsConfig,
    pub initial: InitialCondition,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        Self::from_table(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Loads `path` (defaults if `None`) and applies `section.key=value` overrides.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<Table>().map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn from_table(table: Table) -> Result<Self> {
        let defaults = Table::try_from(Config::default()).map_err(|e| Error::Config(e.to_string()))?;
        check_keys(&table, &defaults, "")?;
        let config: Config = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.mesh.n == 0 {
            return bad("mesh.n must be positive".into());
        }
        if !(self.mesh.length > 0.0 && self.mesh.length.is_finite()) {
            return bad(format!("mesh.length = {}", self.mesh.length));
        }
        if !(self.time.dt > 0.0 && self.time.dt.is_finite()) {
            return bad(format!("time.dt = {}", self.time.dt));
        }
        if !(self.time.t_end_days >= 0.0 && self.time.t_end_days.is_finite()) {
            return bad(format!("time.t_end_days = {}", self.time.t_end_days));
        }
        if !(0.0..=1.0).contains(&self.time.theta) {
            return bad(format!("time.theta = {} outside [0, 1]", self.time.theta));
        }
        self.time.n_steps()?;
        self.physics.params.validate()?;
        if !self.physics.trace_factor.is_finite() {
            return bad("physics.trace_factor must be finite".into());
        }
        self.initial.validate()?;
        let s = &self.solver;
        if !(s.gn_tol > 0.0) || !(s.cg_tol > 0.0) {
            return bad("solver tolerances must be positive".into());
        }
        if !(s.armijo > 0.0 && s.armijo < 0.5) {
            return bad(format!("solver.armijo = {} outside (0, 0.5)", s.armijo));
        }
        if !(self.output.vtk_every_hours >= 0.0) {
            return bad(format!("output.vtk_every_hours = {}", self.output.vtk_every_hours));
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            linear: self.solver.linear,
            cg_tol: self.solver.cg_tol,
            cg_max_iter: (self.solver.cg_max_iter > 0).then_some(self.solver.cg_max_iter),
            mesh_n: self.mesh.n,
        }
    }

    pub fn gn_options(&self) -> GnOptions {
        GnOptions {
            tol: self.solver.gn_tol,
            max_iter: self.solver.gn_max_iter,
            armijo: self.solver.armijo,
            max_halvings: self.solver.max_halvings,
            solver: self.solver_options(),
        }
    }

    pub fn active_set_cap(&self) -> Option<usize> {
        (self.solver.active_set_cap > 0).then_some(self.solver.active_set_cap)
    }
}

fn check_keys(given: &Table, known: &Table, prefix: &str) -> Result<()> {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, known.get(k)) {
            (_, None) => return Err(Error::Config(format!("unknown key `{path}`"))),
            (Value::Table(g), Some(Value::Table(d))) => check_keys(g, d, &path)?,
            (Value::Table(_), Some(_)) => return Err(Error::Config(format!("`{path}` is not a section"))),
            _ => {}
        }
    }
    Ok(())
}

/// Parses `section.key=value`. The value is read as a TOML literal, falling
/// back to a bare string (`--set physics.wind=calm`).
pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.len() != 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override key `{path}` must be section.key")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let section = table.entry(keys[0]).or_insert_with(|| Value::Table(Table::new()));
    match section {
        Value::Table(s) => {
            s.insert(keys[1].to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{}` is not a section", keys[0]))),
    }
}
