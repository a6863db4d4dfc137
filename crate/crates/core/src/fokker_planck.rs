//! Conservative finite-volume solver for
//! `∂ₜP = H_z ∂_χP − H_χ ∂_zP + ½D_χ ∂²_χP + ½D_z ∂²_zP` on the `(χ, z)` chart.
//!
//! The drift `u = (−H_z, H_χ)` is sampled as differences of the stream
//! function at cell corners, so its discrete divergence vanishes in every
//! cell. Each face carries a linear flux `F = a_L P_L + a_R P_R`; the
//! advective part is central unless the cell Péclet number exceeds 2, in
//! which case just enough upwind weight is added to keep every coefficient
//! of the update non-negative. Walls carry no flux.
//!
//! Under the time-step bound the one-step map is therefore a non-negative,
//! doubly stochastic matrix: mass and constants are preserved exactly and
//! the discrete Σ cannot decrease.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{CanonicalChart, DynamicsError};
use crate::entropy::{self, EntropyError, EntropyRow, EntropyTrace, JacobianField};
use crate::field::{DensityField2D, FieldError, Grid2D};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("time step {dt} exceeds the stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },
    #[error("density became negative ({value}) at cell {index}")]
    Negative { index: usize, value: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Largest negative value tolerated after a step before it is a fault.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-14;

/// Diffusion coefficients of the white noises acting on χ and z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub d_chi: f64,
    pub d_z: f64,
}

impl NoiseSpec {
    pub fn new(d_chi: f64, d_z: f64) -> Result<Self> {
        let ok = |d: f64| d.is_finite() && d >= 0.0;
        if !ok(d_chi) || !ok(d_z) {
            return Err(SolverError::Config(format!(
                "diffusion coefficients must be finite and ≥ 0, got ({d_chi}, {d_z})"
            )));
        }
        Ok(Self { d_chi, d_z })
    }

    pub fn isotropic(d: f64) -> Result<Self> {
        Self::new(d, d)
    }

    pub fn is_zero(&self) -> bool {
        self.d_chi == 0.0 && self.d_z == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { d_chi: 0.1, d_z: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    /// Reflecting walls: neither advective nor diffusive flux crosses them.
    #[default]
    NoFlux,
}

impl std::str::FromStr for Boundary {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflecting" | "no-flux" => Ok(Boundary::NoFlux),
            other => Err(SolverError::Config(format!("unknown boundary `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Requested step; `None` uses the stability bound.
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Time between entropy-trace rows.
    pub trace_interval: f64,
    /// Time between stored density snapshots.
    pub snapshot_interval: f64,
    pub boundary: Boundary,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: 20.0,
            trace_interval: 0.05,
            snapshot_interval: 2.0,
            boundary: Boundary::NoFlux,
        }
    }
}

/// A field sampled on cell faces: χ-faces are `(n_chi + 1) × n_z`, z-faces
/// `n_chi × (n_z + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceVelocity {
    grid: Grid2D,
    chi: Vec<f64>,
    z: Vec<f64>,
}

impl FaceVelocity {
    pub fn new(grid: Grid2D, chi: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let (nc, nz) = ((grid.n_chi + 1) * grid.n_z, grid.n_chi * (grid.n_z + 1));
        if chi.len() != nc || z.len() != nz {
            return Err(SolverError::Config(format!(
                "face arrays need {nc} and {nz} entries, got {} and {}",
                chi.len(),
                z.len()
            )));
        }
        Ok(Self { grid, chi, z })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            chi: vec![0.0; (grid.n_chi + 1) * grid.n_z],
            z: vec![0.0; grid.n_chi * (grid.n_z + 1)],
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// χ-component on face `i` (left edge of cell `i`) of row `j`.
    #[inline]
    pub fn chi_face(&self, i: usize, j: usize) -> f64 {
        self.chi[j * (self.grid.n_chi + 1) + i]
    }

    /// z-component on face `j` (lower edge of row `j`) of column `i`.
    #[inline]
    pub fn z_face(&self, i: usize, j: usize) -> f64 {
        self.z[j * self.grid.n_chi + i]
    }

    pub fn set_chi_face(&mut self, i: usize, j: usize, v: f64) {
        self.chi[j * (self.grid.n_chi + 1) + i] = v;
    }

    pub fn set_z_face(&mut self, i: usize, j: usize, v: f64) {
        self.z[j * self.grid.n_chi + i] = v;
    }

    pub fn chi_values(&self) -> &[f64] {
        &self.chi
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    /// Average of the two faces bounding each cell.
    pub fn cell_centered(&self) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let mut c = Vec::with_capacity(g.len());
        let mut z = Vec::with_capacity(g.len());
        for j in 0..g.n_z {
            for i in 0..g.n_chi {
                c.push(0.5 * (self.chi_face(i, j) + self.chi_face(i + 1, j)));
                z.push(0.5 * (self.z_face(i, j) + self.z_face(i, j + 1)));
            }
        }
        (c, z)
    }

    pub fn max_abs(&self) -> f64 {
        self.chi
            .iter()
            .chain(&self.z)
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Grid covering the full chart rectangle.
pub fn chart_grid(chart: &CanonicalChart, n_chi: usize, n_z: usize) -> Result<Grid2D> {
    Ok(Grid2D::new(n_chi, n_z, chart.chi_bounds(), chart.z_bounds())?)
}

/// Flux weights `F = a_L P_L + a_R P_R` for a face with velocity `u`,
/// spacing `h` and diffusion `d` (the PDE carries `½d`).
#[inline]
fn face_coefficients(u: f64, h: f64, d: f64) -> (f64, f64) {
    let nu = 0.5 * d / h;
    let w_down = if u == 0.0 {
        0.5
    } else {
        (nu / u.abs()).min(0.5)
    };
    let w_up = 1.0 - w_down;
    let (w_l, w_r) = if u >= 0.0 { (w_up, w_down) } else { (w_down, w_up) };
    (u * w_l + nu, u * w_r - nu)
}

/// Discretised Fokker–Planck operator on a fixed chart, grid and noise.
#[derive(Clone, Debug)]
pub struct FpOperator {
    grid: Grid2D,
    noise: NoiseSpec,
    drift: FaceVelocity,
    chi_coeff: Vec<(f64, f64)>,
    z_coeff: Vec<(f64, f64)>,
    positivity_dt: f64,
    cfl_dt: f64,
}

impl FpOperator {
    pub fn new(chart: &CanonicalChart, grid: Grid2D, noise: NoiseSpec) -> Result<Self> {
        let rect = chart_grid(chart, grid.n_chi, grid.n_z)?;
        if !rect.matches(&grid) {
            return Err(SolverError::Config(
                "solver grid must cover the chart rectangle".into(),
            ));
        }
        let (nx, nz) = (grid.n_chi, grid.n_z);
        let (dx, dz) = (grid.d_chi(), grid.d_z());

        // stream function at cell corners
        let mut psi = vec![0.0; (nx + 1) * (nz + 1)];
        for j in 0..=nz {
            for i in 0..=nx {
                psi[j * (nx + 1) + i] = chart.h2d(grid.chi_face(i), grid.z_face(j));
            }
        }
        let corner = |i: usize, j: usize| psi[j * (nx + 1) + i];

        let mut drift = FaceVelocity::zeros(grid);
        for j in 0..nz {
            for i in 1..nx {
                drift.set_chi_face(i, j, -(corner(i, j + 1) - corner(i, j)) / dz);
            }
        }
        for j in 1..nz {
            for i in 0..nx {
                drift.set_z_face(i, j, (corner(i + 1, j) - corner(i, j)) / dx);
            }
        }

        let mut chi_coeff = vec![(0.0, 0.0); (nx + 1) * nz];
        for j in 0..nz {
            for i in 1..nx {
                chi_coeff[j * (nx + 1) + i] =
                    face_coefficients(drift.chi_face(i, j), dx, noise.d_chi);
            }
        }
        let mut z_coeff = vec![(0.0, 0.0); nx * (nz + 1)];
        for j in 1..nz {
            for i in 0..nx {
                z_coeff[j * nx + i] = face_coefficients(drift.z_face(i, j), dz, noise.d_z);
            }
        }

        let mut max_rate: f64 = 0.0;
        for j in 0..nz {
            for i in 0..nx {
                let west = chi_coeff[j * (nx + 1) + i].1;
                let east = chi_coeff[j * (nx + 1) + i + 1].0;
                let south = z_coeff[j * nx + i].1;
                let north = z_coeff[(j + 1) * nx + i].0;
                max_rate = max_rate.max((east - west) / dx + (north - south) / dz);
            }
        }
        let positivity_dt = if max_rate > 0.0 { 1.0 / max_rate } else { f64::INFINITY };

        let h = dx.min(dz);
        let d_sum = noise.d_chi + noise.d_z;
        let u_max = drift.max_abs();
        let diff_dt = if d_sum > 0.0 { h * h / (2.0 * d_sum) } else { f64::INFINITY };
        let adv_dt = if u_max > 0.0 { 0.5 * h / u_max } else { f64::INFINITY };
        let cfl_dt = 0.9 * diff_dt.min(adv_dt);

        Ok(Self {
            grid,
            noise,
            drift,
            chi_coeff,
            z_coeff,
            positivity_dt,
            cfl_dt,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// Discrete drift `u` on the faces (zero on the walls).
    pub fn drift(&self) -> &FaceVelocity {
        &self.drift
    }

    /// Largest admissible step: `0.9·min(h²/(2(D_χ+D_z)), h/(2 max|u|))`,
    /// further capped by the positivity limit of the update.
    pub fn max_stable_dt(&self) -> f64 {
        self.cfl_dt.min(self.positivity_dt)
    }

    /// Discrete divergence of the drift in every cell.
    pub fn drift_divergence(&self) -> Vec<f64> {
        let g = &self.grid;
        let u = &self.drift;
        let mut out = Vec::with_capacity(g.len());
        for j in 0..g.n_z {
            for i in 0..g.n_chi {
                out.push(
                    (u.chi_face(i + 1, j) - u.chi_face(i, j)) / g.d_chi()
                        + (u.z_face(i, j + 1) - u.z_face(i, j)) / g.d_z(),
                );
            }
        }
        out
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        let bound = self.max_stable_dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::Config(format!("time step must be positive, got {dt}")));
        }
        if dt > bound * (1.0 + 1e-12) {
            return Err(SolverError::Unstable { dt, bound });
        }
        Ok(())
    }

    /// Advance `P` by one explicit step.
    pub fn step(&self, p: &DensityField2D, dt: f64) -> Result<DensityField2D> {
        if !self.grid.matches(p.grid()) {
            return Err(FieldError::GridMismatch.into());
        }
        self.check_dt(dt)?;
        let mut out = vec![0.0; self.grid.len()];
        self.step_into(p.values(), &mut out, dt);
        if let Some((index, &value)) = out
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= -NEGATIVITY_TOLERANCE))
        {
            return Err(SolverError::Negative { index, value });
        }
        for v in out.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(DensityField2D::from_parts_unchecked(self.grid, out))
    }

    fn step_into(&self, p: &[f64], out: &mut [f64], dt: f64) {
        let (nx, nz) = (self.grid.n_chi, self.grid.n_z);
        let (rx, rz) = (dt / self.grid.d_chi(), dt / self.grid.d_z());
        out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
            let cx = &self.chi_coeff[j * (nx + 1)..(j + 1) * (nx + 1)];
            let below = &self.z_coeff[j * nx..(j + 1) * nx];
            let above = &self.z_coeff[(j + 1) * nx..(j + 2) * nx];
            let centre = &p[j * nx..(j + 1) * nx];
            for i in 0..nx {
                let pc = centre[i];
                let west = if i > 0 {
                    let (a, b) = cx[i];
                    a * centre[i - 1] + b * pc
                } else {
                    0.0
                };
                let east = if i + 1 < nx {
                    let (a, b) = cx[i + 1];
                    a * pc + b * centre[i + 1]
                } else {
                    0.0
                };
                let south = if j > 0 {
                    let (a, b) = below[i];
                    a * p[(j - 1) * nx + i] + b * pc
                } else {
                    0.0
                };
                let north = if j + 1 < nz {
                    let (a, b) = above[i];
                    a * pc + b * p[(j + 1) * nx + i]
                } else {
                    0.0
                };
                row[i] = pc - rx * (east - west) - rz * (north - south);
            }
        });
    }

    /// Fokker–Planck velocity `Z = u − ½ D ∇ln P` on the faces, zero on the
    /// walls. Also returns the number of cells below the log floor.
    pub fn velocity(&self, p: &DensityField2D) -> Result<(FaceVelocity, usize)> {
        if !self.grid.matches(p.grid()) {
            return Err(FieldError::GridMismatch.into());
        }
        let g = &self.grid;
        let floor = entropy::LOG_FLOOR_FACTOR * p.mean_value();
        let floored = p.values().iter().filter(|&&v| v < floor).count();
        let logs: Vec<f64> = p
            .values()
            .iter()
            .map(|&v| entropy::log_floored(v, floor))
            .collect();
        let mut z = self.drift.clone();
        let (kx, kz) = (
            0.5 * self.noise.d_chi / g.d_chi(),
            0.5 * self.noise.d_z / g.d_z(),
        );
        for j in 0..g.n_z {
            for i in 1..g.n_chi {
                let grad = logs[g.index(i, j)] - logs[g.index(i - 1, j)];
                z.set_chi_face(i, j, self.drift.chi_face(i, j) - kx * grad);
            }
        }
        for j in 1..g.n_z {
            for i in 0..g.n_chi {
                let grad = logs[g.index(i, j)] - logs[g.index(i, j - 1)];
                z.set_z_face(i, j, self.drift.z_face(i, j) - kz * grad);
            }
        }
        Ok((z, floored))
    }

    /// Entropy diagnostics of one state.
    pub fn diagnostics(&self, p: &DensityField2D, t: f64, jac: &JacobianField) -> Result<EntropyRow> {
        let direct = entropy::entropy_production_direct(p, &self.noise);
        let (z, _) = self.velocity(p)?;
        Ok(EntropyRow {
            t,
            sigma_entropy: entropy::sigma_entropy(p),
            tilde_entropy: entropy::tilde_entropy(p, jac)?.value(),
            production_direct: direct.value,
            production_fisher: entropy::entropy_production_fisher(p, &self.noise),
            flow: entropy::entropy_flow(p, &z)?,
            mass: p.mass(),
            excluded_mass: direct.excluded_mass,
        })
    }
}

/// One explicit step; builds the operator on the fly.
pub fn fp_step(
    p: &DensityField2D,
    chart: &CanonicalChart,
    noise: &NoiseSpec,
    dt: f64,
) -> Result<DensityField2D> {
    FpOperator::new(chart, *p.grid(), *noise)?.step(p, dt)
}

/// `Z` for a density on the chart; see [`FpOperator::velocity`].
pub fn fp_velocity(
    p: &DensityField2D,
    chart: &CanonicalChart,
    noise: &NoiseSpec,
) -> Result<(FaceVelocity, usize)> {
    FpOperator::new(chart, *p.grid(), *noise)?.velocity(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub density: DensityField2D,
}

#[derive(Clone, Debug)]
pub struct FpRun {
    pub snapshots: Vec<Snapshot>,
    pub trace: EntropyTrace,
    pub dt: f64,
    pub steps: usize,
}

impl FpRun {
    pub fn final_density(&self) -> &DensityField2D {
        &self.snapshots.last().expect("runs always store the final state").density
    }
}

/// Initial state with a flat Cartesian density `f`, i.e. `P ∝ 1/𝔍 = e^{z²/2}`.
pub fn flat_cartesian_density(chart: &CanonicalChart, grid: Grid2D) -> Result<DensityField2D> {
    Ok(DensityField2D::from_fn(grid, |_, z| 1.0 / chart.jacobian(z))?)
}

/// Integrate from `p0` to `cfg.t_end`, recording entropy diagnostics and
/// snapshots.
pub fn fp_solve(
    p0: &DensityField2D,
    chart: &CanonicalChart,
    noise: &NoiseSpec,
    cfg: &SolverConfig,
) -> Result<FpRun> {
    let mut snapshots = Vec::new();
    let mut run = fp_solve_with(p0, chart, noise, cfg, |s| snapshots.push(s.clone()))?;
    run.snapshots = snapshots;
    Ok(run)
}

/// As [`fp_solve`], but snapshots are handed to `hook` as they are taken
/// and only the final one is kept in the returned run.
pub fn fp_solve_with(
    p0: &DensityField2D,
    chart: &CanonicalChart,
    noise: &NoiseSpec,
    cfg: &SolverConfig,
    mut hook: impl FnMut(&Snapshot),
) -> Result<FpRun> {
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return Err(SolverError::Config(format!("t_end must be ≥ 0, got {}", cfg.t_end)));
    }
    if !(cfg.trace_interval > 0.0 && cfg.snapshot_interval > 0.0) {
        return Err(SolverError::Config("output intervals must be positive".into()));
    }
    let ratio = cfg.snapshot_interval / cfg.trace_interval;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
        return Err(SolverError::Config(format!(
            "snapshot interval {} must be a multiple of the trace interval {}",
            cfg.snapshot_interval, cfg.trace_interval
        )));
    }
    let op = FpOperator::new(chart, *p0.grid(), *noise)?;
    let requested = cfg.dt.unwrap_or(op.max_stable_dt());
    op.check_dt(requested)?;
    // every output time falls on a step boundary
    let trace_every = (cfg.trace_interval / requested - 1e-9).ceil().max(1.0) as usize;
    let dt = cfg.trace_interval / trace_every as f64;
    let snap_every = trace_every * ratio.round() as usize;
    let steps = (cfg.t_end / dt - 1e-9).ceil().max(0.0) as usize;

    let jac = JacobianField::from_fn(*p0.grid(), |_, z| chart.jacobian(z))?;
    let mut trace = EntropyTrace::new();
    let mut p = p0.clone();
    trace.push(op.diagnostics(&p, 0.0, &jac)?)?;
    let first = Snapshot { t: 0.0, density: p.clone() };
    hook(&first);
    for n in 1..=steps {
        let t = if n == steps { cfg.t_end } else { n as f64 * dt };
        p = op.step(&p, t - (n - 1) as f64 * dt)?;
        if n % trace_every == 0 || n == steps {
            trace.push(op.diagnostics(&p, t, &jac)?)?;
        }
        if n % snap_every == 0 || n == steps {
            let s = Snapshot { t, density: p.clone() };
            hook(&s);
        }
    }
    let t_final = if steps > 0 { cfg.t_end } else { 0.0 };
    Ok(FpRun {
        snapshots: vec![Snapshot { t: t_final, density: p }],
        trace,
        dt,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ChartHamiltonian;

    #[test]
    fn face_coefficients_are_central_at_low_peclet() {
        let (a, b) = face_coefficients(1.0, 0.01, 0.1);
        assert!((a - (0.5 + 5.0)).abs() < 1e-12);
        assert!((b - (0.5 - 5.0)).abs() < 1e-12);
    }

    #[test]
    fn face_coefficients_stay_monotone() {
        for &u in &[-30.0, -3.0, -0.1, 0.0, 0.2, 7.0, 100.0] {
            for &d in &[0.0, 0.01, 0.1, 1.0] {
                let (a, b) = face_coefficients(u, 0.02, d);
                assert!(a >= 0.0 && b <= 0.0, "u={u} d={d}: {a} {b}");
                assert!((a + b - u).abs() < 1e-12 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn boundary_tags_parse() {
        assert_eq!("reflecting".parse::<Boundary>().unwrap(), Boundary::NoFlux);
        assert_eq!("no-flux".parse::<Boundary>().unwrap(), Boundary::NoFlux);
        assert!("periodic".parse::<Boundary>().is_err());
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseSpec::new(-0.1, 0.1).is_err());
        assert!(NoiseSpec::new(0.1, f64::NAN).is_err());
    }

    #[test]
    fn unstable_step_rejected() {
        let chart = CanonicalChart::default();
        let grid = chart_grid(&chart, 32, 32).unwrap();
        let op = FpOperator::new(&chart, grid, NoiseSpec::default()).unwrap();
        let p = DensityField2D::uniform(grid);
        let err = op.step(&p, 10.0 * op.max_stable_dt()).unwrap_err();
        assert!(matches!(err, SolverError::Unstable { .. }));
    }

    fn default_operator(n: usize, noise: NoiseSpec) -> (CanonicalChart, FpOperator) {
        let chart = CanonicalChart::default();
        let grid = chart_grid(&chart, n, n).unwrap();
        let op = FpOperator::new(&chart, grid, noise).unwrap();
        (chart, op)
    }

    #[test]
    fn uniform_state_is_fixed_point() {
        let (_, op) = default_operator(64, NoiseSpec::default());
        let p = DensityField2D::uniform(*op.grid());
        let next = op.step(&p, op.max_stable_dt()).unwrap();
        assert!(next.max_relative_deviation() < 1e-12);
    }

    #[test]
    fn step_conserves_mass() {
        let (chart, op) = default_operator(48, NoiseSpec::default());
        let mut p = flat_cartesian_density(&chart, *op.grid()).unwrap();
        let dt = op.max_stable_dt();
        for _ in 0..200 {
            p = op.step(&p, dt).unwrap();
        }
        assert!((p.mass() - 1.0).abs() < 1e-14);
        assert!(p.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn drift_is_discretely_divergence_free() {
        let (_, op) = default_operator(40, NoiseSpec::default());
        let worst = op.drift_divergence().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn uniform_velocity_is_drift() {
        let (_, op) = default_operator(32, NoiseSpec::default());
        let (z, floored) = op.velocity(&DensityField2D::uniform(*op.grid())).unwrap();
        assert_eq!(floored, 0);
        assert_eq!(&z, op.drift());
    }

    #[test]
    fn noiseless_velocity_is_canonical() {
        let chart = CanonicalChart::default();
        let none = NoiseSpec::new(0.0, 0.0).unwrap();
        let mut errs = Vec::new();
        for n in [64, 256] {
            let grid = chart_grid(&chart, n, n).unwrap();
            let p = DensityField2D::from_fn(grid, |c, z| 1.0 + 0.3 * c * z + z * z).unwrap();
            let (z, _) = fp_velocity(&p, &chart, &none).unwrap();
            let mut worst: f64 = 0.0;
            for j in 0..n {
                for i in 1..n {
                    let (u, _) = chart
                        .canonical_velocity(grid.chi_face(i), grid.z_center(j))
                        .unwrap();
                    worst = worst.max((z.chi_face(i, j) - u).abs());
                }
            }
            errs.push(worst);
        }
        // the band edge of the taper sits at varying offsets inside a cell,
        // so only demand clearly better than first order over h → h/4
        assert!(errs[1] < 5e-3 && errs[0] / errs[1] > 8.0, "{errs:?}");
    }

    #[test]
    fn gaussian_velocity_is_linear_in_z() {
        let chart = CanonicalChart::new(2.0, ChartHamiltonian::Constant(1.0), 1.0, 1.5).unwrap();
        let grid = chart_grid(&chart, 8, 64).unwrap();
        let s = 0.4;
        let p = DensityField2D::from_fn(grid, |_, z| (-0.5 * z * z / (s * s)).exp()).unwrap();
        let noise = NoiseSpec::new(0.1, 0.3).unwrap();
        let (z, _) = fp_velocity(&p, &chart, &noise).unwrap();
        for j in 1..grid.n_z {
            let expected = 0.5 * noise.d_z * grid.z_face(j) / (s * s);
            assert!((z.z_face(3, j) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_kernel_variance_grows_linearly() {
        // wide domain, the walls never see the packet
        let chart = CanonicalChart::new(50.0, ChartHamiltonian::Constant(0.0), 5.0, 5.0).unwrap();
        let grid = chart_grid(&chart, 8, 256).unwrap();
        let s2 = 0.25;
        let p0 = DensityField2D::from_fn(grid, |_, z| (-0.5 * z * z / s2).exp()).unwrap();
        let noise = NoiseSpec::new(0.0, 0.2).unwrap();
        let cfg = SolverConfig {
            dt: None,
            t_end: 2.0,
            trace_interval: 0.5,
            snapshot_interval: 1.0,
            boundary: Boundary::NoFlux,
        };
        let run = fp_solve(&p0, &chart, &noise, &cfg).unwrap();
        let var0 = p0.moments().3;
        let grown = run.final_density().moments().3 - var0;
        assert!((grown / (noise.d_z * 2.0) - 1.0).abs() < 0.02, "{grown}");
    }

    #[test]
    fn grid_must_cover_chart() {
        let chart = CanonicalChart::default();
        let grid = Grid2D::new(16, 16, (-0.5, 0.5), (-1.5, 1.5)).unwrap();
        assert!(FpOperator::new(&chart, grid, NoiseSpec::default()).is_err());
    }
}
