//! Flat TOML experiment configuration. A file holds one experiment; any key
//! may also be set with `--override key=value`. Every value is validated,
//! and all derived solver objects are built, before anything is computed.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::dynamics::{CanonicalChart, ChartHamiltonian, Inertia};
use crate::field::Grid2D;
use crate::fokker_planck::{chart_grid, Boundary, NoiseSpec, SolverConfig};
use crate::magnetosphere::{
    DipoleGeometry, MagnetoGrid, MagnetoRunConfig, MeasureJacobian,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    RigidBody,
    Magnetosphere,
    FpVsSde,
}

impl Experiment {
    pub fn tag(self) -> &'static str {
        match self {
            Experiment::RigidBody => "rigid-body",
            Experiment::Magnetosphere => "magnetosphere",
            Experiment::FpVsSde => "fp-vs-sde",
        }
    }
}

/// Every key accepted in a configuration file.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    pub seed: Option<u64>,

    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub trace_interval: Option<f64>,

    pub casimir: Option<f64>,
    pub inertia_x: Option<f64>,
    pub inertia_y: Option<f64>,
    pub inertia_z: Option<f64>,
    pub chi_max: Option<f64>,
    pub z_max: Option<f64>,
    pub wall_taper: Option<f64>,
    pub n_chi: Option<usize>,
    pub n_z: Option<usize>,
    pub d_chi: Option<f64>,
    pub d_z: Option<f64>,
    pub snapshot_interval: Option<f64>,
    pub boundary: Option<String>,
    pub flatness_tolerance: Option<f64>,

    pub particles: Option<usize>,
    pub sde_dt: Option<f64>,
    pub compare_times: Option<Vec<f64>>,
    pub compare_n_chi: Option<usize>,
    pub compare_n_z: Option<usize>,
    pub l1_threshold: Option<f64>,

    pub dipole_moment: Option<f64>,
    pub particle_mass: Option<f64>,
    pub temperature: Option<f64>,
    pub psi_min: Option<f64>,
    pub psi_max: Option<f64>,
    pub n_psi: Option<usize>,
    pub n_mu: Option<usize>,
    pub n_v: Option<usize>,
    pub mu_max: Option<f64>,
    pub v_max: Option<f64>,
    pub d_psi: Option<f64>,
    pub map_r_min: Option<f64>,
    pub map_r_max: Option<f64>,
    pub map_z_max: Option<f64>,
    pub map_n_r: Option<usize>,
    pub map_n_z: Option<usize>,
}

/// Parse an override value as a TOML value, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    toml::from_str::<toml::Table>(&doc)
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Merge the optional file and `key=value` overrides into a [`ConfigFile`].
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ConfigFile, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{o}` is not key=value")))?;
        table.insert(key.trim().to_string(), override_value(value.trim()));
    }
    table
        .try_into::<ConfigFile>()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

/// Resolved rigid-body Fokker–Planck experiment.
#[derive(Clone, Debug)]
pub struct RigidBodyParams {
    pub chart: CanonicalChart,
    pub grid: Grid2D,
    pub noise: NoiseSpec,
    pub solver: SolverConfig,
    pub flatness_tolerance: f64,
}

/// Resolved particle-vs-solver comparison.
#[derive(Clone, Debug)]
pub struct SdeParams {
    pub rigid: RigidBodyParams,
    pub particles: usize,
    pub sde_dt: f64,
    pub compare_times: Vec<f64>,
    pub comparison: Grid2D,
    pub l1_threshold: f64,
    pub seed: u64,
}

/// Resolved magnetosphere experiment.
#[derive(Clone, Debug)]
pub struct MagnetoParams {
    pub geometry: DipoleGeometry,
    pub grid: MagnetoGrid,
    pub particle_mass: f64,
    pub temperature: f64,
    pub d_psi: f64,
    pub run: MagnetoRunConfig,
    pub r_range: (f64, f64),
    pub z_max: f64,
    pub n_r: usize,
    pub n_z: usize,
}

#[derive(Clone, Debug)]
pub enum Resolved {
    RigidBody(RigidBodyParams),
    FpVsSde(SdeParams),
    Magnetosphere(MagnetoParams),
}

pub const DEFAULT_SEED: u64 = 1;

impl ConfigFile {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn rigid_body(&self, snapshot_default: f64) -> Result<RigidBodyParams, CliError> {
        let inertia = Inertia::new(
            self.inertia_x.unwrap_or(1.0),
            self.inertia_y.unwrap_or(2.0),
            self.inertia_z.unwrap_or(3.0),
        )
        .map_err(config_err)?;
        let chart = CanonicalChart::new(
            self.casimir.unwrap_or(2.0),
            ChartHamiltonian::RigidBody(inertia),
            self.chi_max.unwrap_or(1.0),
            self.z_max.unwrap_or(1.5),
        )
        .and_then(|c| c.with_wall_taper(self.wall_taper.unwrap_or(0.25)))
        .map_err(config_err)?;
        let grid = chart_grid(&chart, self.n_chi.unwrap_or(128), self.n_z.unwrap_or(128))
            .map_err(config_err)?;
        let noise =
            NoiseSpec::new(self.d_chi.unwrap_or(0.1), self.d_z.unwrap_or(0.1)).map_err(config_err)?;
        if noise.is_zero() {
            return Err(CliError::Config("at least one diffusion coefficient must be positive".into()));
        }
        let boundary = match &self.boundary {
            Some(b) => b.parse::<Boundary>().map_err(config_err)?,
            None => Boundary::NoFlux,
        };
        let solver = SolverConfig {
            dt: self.dt.map(|d| positive("dt", d)).transpose()?,
            t_end: positive("t_end", self.t_end.unwrap_or(20.0))?,
            trace_interval: positive("trace_interval", self.trace_interval.unwrap_or(0.05))?,
            snapshot_interval: positive(
                "snapshot_interval",
                self.snapshot_interval.unwrap_or(snapshot_default),
            )?,
            boundary,
        };
        let ratio = solver.snapshot_interval / solver.trace_interval;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return Err(CliError::Config(
                "snapshot_interval must be a multiple of trace_interval".into(),
            ));
        }
        // surface step-size problems now rather than mid-run
        let op = crate::fokker_planck::FpOperator::new(&chart, grid, noise).map_err(config_err)?;
        if let Some(dt) = solver.dt {
            if dt > op.max_stable_dt() * (1.0 + 1e-12) {
                return Err(CliError::Config(format!(
                    "dt = {dt} exceeds the stability bound {}",
                    op.max_stable_dt()
                )));
            }
        }
        Ok(RigidBodyParams {
            chart,
            grid,
            noise,
            solver,
            flatness_tolerance: positive(
                "flatness_tolerance",
                self.flatness_tolerance.unwrap_or(0.01),
            )?,
        })
    }

    fn sde(&self) -> Result<SdeParams, CliError> {
        let mut rigid = self.rigid_body(self.trace_interval.unwrap_or(0.05))?;
        let times = self.compare_times.clone().unwrap_or_else(|| vec![2.0, 5.0, 10.0]);
        if times.is_empty() {
            return Err(CliError::Config("compare_times must not be empty".into()));
        }
        let step = rigid.solver.snapshot_interval;
        let mut last = 0.0;
        for &t in &times {
            let k = t / step;
            if !(t > last) || (k - k.round()).abs() > 1e-9 * k.max(1.0) {
                return Err(CliError::Config(format!(
                    "compare_times must increase and be multiples of {step}, got {t}"
                )));
            }
            last = t;
        }
        if self.t_end.is_none() {
            rigid.solver.t_end = last;
        } else if last > rigid.solver.t_end + 1e-12 {
            return Err(CliError::Config(format!(
                "compare time {last} is beyond t_end {}",
                rigid.solver.t_end
            )));
        }
        let (cx, cz) = (self.compare_n_chi.unwrap_or(8), self.compare_n_z.unwrap_or(8));
        if cx == 0 || cz == 0 || rigid.grid.n_chi % cx != 0 || rigid.grid.n_z % cz != 0 {
            return Err(CliError::Config(format!(
                "comparison grid {cx}×{cz} must divide the solver grid {}×{}",
                rigid.grid.n_chi, rigid.grid.n_z
            )));
        }
        let comparison = rigid
            .grid
            .coarsened(rigid.grid.n_chi / cx, rigid.grid.n_z / cz)
            .map_err(config_err)?;
        let particles = self.particles.unwrap_or(100_000);
        if particles == 0 {
            return Err(CliError::Config("particles must be positive".into()));
        }
        Ok(SdeParams {
            rigid,
            particles,
            sde_dt: positive("sde_dt", self.sde_dt.unwrap_or(0.005))?,
            compare_times: times,
            comparison,
            l1_threshold: positive("l1_threshold", self.l1_threshold.unwrap_or(0.05))?,
            seed: self.seed(),
        })
    }

    fn magnetosphere(&self) -> Result<MagnetoParams, CliError> {
        let geometry = DipoleGeometry::new(self.dipole_moment.unwrap_or(1.0)).map_err(config_err)?;
        let defaults = MagnetoGrid::default();
        let grid = MagnetoGrid {
            psi_min: self.psi_min.unwrap_or(defaults.psi_min),
            psi_max: self.psi_max.unwrap_or(defaults.psi_max),
            n_psi: self.n_psi.unwrap_or(defaults.n_psi),
            mu_max: self.mu_max.unwrap_or(defaults.mu_max),
            n_mu: self.n_mu.unwrap_or(defaults.n_mu),
            v_max: self.v_max.unwrap_or(defaults.v_max),
            n_v: self.n_v.unwrap_or(defaults.n_v),
        };
        grid.validate().map_err(config_err)?;
        let d_psi = positive("d_psi", self.d_psi.unwrap_or(0.05))?;
        let bound = grid.d_psi().powi(2) / d_psi;
        let dt = self.dt.map(|d| positive("dt", d)).transpose()?;
        if let Some(dt) = dt {
            if dt > bound * (1.0 + 1e-12) {
                return Err(CliError::Config(format!(
                    "dt = {dt} exceeds the stability bound {bound}"
                )));
            }
        }
        let run = MagnetoRunConfig {
            dt,
            t_end: positive("t_end", self.t_end.unwrap_or(30.0))?,
            trace_interval: positive("trace_interval", self.trace_interval.unwrap_or(0.25))?,
            jacobian: MeasureJacobian::Dipole,
        };
        let r_range = (
            positive("map_r_min", self.map_r_min.unwrap_or(0.5))?,
            self.map_r_max.unwrap_or(6.0),
        );
        if !(r_range.1 > r_range.0 && r_range.1.is_finite()) {
            return Err(CliError::Config("map_r_max must exceed map_r_min".into()));
        }
        let n_r = self.map_n_r.unwrap_or(110);
        let n_z = self.map_n_z.unwrap_or(100);
        if n_r < 2 || n_z < 2 {
            return Err(CliError::Config("maps need at least 2×2 points".into()));
        }
        Ok(MagnetoParams {
            geometry,
            grid,
            particle_mass: positive("particle_mass", self.particle_mass.unwrap_or(1.0))?,
            temperature: positive("temperature", self.temperature.unwrap_or(1.0))?,
            d_psi,
            run,
            r_range,
            z_max: positive("map_z_max", self.map_z_max.unwrap_or(2.5))?,
            n_r,
            n_z,
        })
    }

    /// Validate every key relevant to `experiment` and build its parameters.
    pub fn resolve(&self, experiment: Experiment) -> Result<Resolved, CliError> {
        if let Some(tag) = &self.experiment {
            if tag != experiment.tag() {
                return Err(CliError::Config(format!(
                    "config is for `{tag}` but `{}` was requested",
                    experiment.tag()
                )));
            }
        }
        match experiment {
            Experiment::RigidBody => Ok(Resolved::RigidBody(self.rigid_body(2.0)?)),
            Experiment::FpVsSde => Ok(Resolved::FpVsSde(self.sde()?)),
            Experiment::Magnetosphere => Ok(Resolved::Magnetosphere(self.magnetosphere()?)),
        }
    }
}

/// Output directory: the flag wins, then the default `out`.
pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out"))
}
