//! μ-conserving diffusion of trapped particles in a point-dipole field.
//!
//! The state is a density `P(ψ, μ, v_∥)` on the invariant measure
//! `dV_I = dμ dv_∥ dψ` (the field-line length and toroidal angle are
//! collapsed). Diffusion acts only across flux surfaces,
//! `∂ₜP = ½D_ψ ∂²_ψP`, so the `(μ, v_∥)` marginals are exact invariants.
//! Spatial maps are evaluated through `f = P·B`, which turns a flat `P`
//! into a density and a perpendicular temperature that both grow with `B`.

use rayon::prelude::*;
use thiserror::Error;

use crate::entropy::{log_floored, plogp, EntropyRow, EntropyTrace, LOG_FLOOR_FACTOR};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MagnetoError {
    #[error("point (r = {r}, z = {z}) is outside the dipole domain r > 0")]
    Domain { r: f64, z: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("time step {dt} exceeds the stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },
    #[error("density became negative ({value}) at cell {index}")]
    Negative { index: usize, value: f64 },
    #[error(transparent)]
    Entropy(#[from] crate::entropy::EntropyError),
}

pub type Result<T> = std::result::Result<T, MagnetoError>;

/// Point dipole with flux function `ψ = M r²/(r²+z²)^{3/2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipoleGeometry {
    pub moment: f64,
}

impl Default for DipoleGeometry {
    fn default() -> Self {
        Self { moment: 1.0 }
    }
}

impl DipoleGeometry {
    pub fn new(moment: f64) -> Result<Self> {
        if !(moment > 0.0 && moment.is_finite()) {
            return Err(MagnetoError::Config(format!(
                "dipole moment must be positive, got {moment}"
            )));
        }
        Ok(Self { moment })
    }

    fn check(r: f64, z: f64) -> Result<()> {
        if r > 0.0 && r.is_finite() && z.is_finite() {
            Ok(())
        } else {
            Err(MagnetoError::Domain { r, z })
        }
    }

    pub fn flux_function(&self, r: f64, z: f64) -> Result<f64> {
        Self::check(r, z)?;
        let s = r * r + z * z;
        Ok(self.moment * r * r / (s * s.sqrt()))
    }

    /// `(∂ψ/∂r, ∂ψ/∂z)`.
    pub fn flux_gradient(&self, r: f64, z: f64) -> Result<(f64, f64)> {
        Self::check(r, z)?;
        let s = r * r + z * z;
        let s52 = s * s * s.sqrt();
        Ok((
            self.moment * r * (2.0 * z * z - r * r) / s52,
            -3.0 * self.moment * r * r * z / s52,
        ))
    }

    /// `B = |∇ψ|/r`.
    pub fn field_strength(&self, r: f64, z: f64) -> Result<f64> {
        let (gr, gz) = self.flux_gradient(r, z)?;
        Ok(gr.hypot(gz) / r)
    }

    /// Density `𝔍 = B` of the invariant measure relative to `dV`.
    pub fn measure_jacobian(&self, r: f64, z: f64) -> Result<f64> {
        self.field_strength(r, z)
    }

    /// Radius where the flux surface `ψ` crosses the equator.
    pub fn equatorial_radius(&self, psi: f64) -> f64 {
        self.moment / psi
    }

    /// `B` where the flux surface `ψ` crosses the equator: `ψ³/M²`.
    pub fn equatorial_field(&self, psi: f64) -> f64 {
        psi.powi(3) / (self.moment * self.moment)
    }
}

/// Weight relating the invariant measure to the Cartesian one along ψ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeasureJacobian {
    /// Equatorial dipole field `B(ψ) = ψ³/M²`.
    Dipole,
    /// Uniform field, used as a control.
    Constant(f64),
}

/// Cell-centred grid over `(ψ, μ, v_∥)` with `μ ∈ [0, μ_max]` and
/// `v_∥ ∈ [−v_max, v_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagnetoGrid {
    pub psi_min: f64,
    pub psi_max: f64,
    pub n_psi: usize,
    pub mu_max: f64,
    pub n_mu: usize,
    pub v_max: f64,
    pub n_v: usize,
}

impl Default for MagnetoGrid {
    fn default() -> Self {
        Self {
            psi_min: 0.2,
            psi_max: 1.0,
            n_psi: 128,
            mu_max: 10.0,
            n_mu: 32,
            v_max: 5.0,
            n_v: 32,
        }
    }
}

impl MagnetoGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MagnetoError::Config(m));
        if !(self.psi_min > 0.0 && self.psi_max > self.psi_min && self.psi_max.is_finite()) {
            return bad(format!(
                "ψ range must satisfy 0 < min < max, got [{}, {}]",
                self.psi_min, self.psi_max
            ));
        }
        if self.n_psi < 4 || self.n_mu < 1 || self.n_v < 1 {
            return bad("need at least 4 ψ cells and one (μ, v∥) cell".into());
        }
        if !(self.mu_max > 0.0 && self.v_max > 0.0 && self.mu_max.is_finite() && self.v_max.is_finite())
        {
            return bad("μ_max and v_max must be positive".into());
        }
        Ok(())
    }

    pub fn d_psi(&self) -> f64 {
        (self.psi_max - self.psi_min) / self.n_psi as f64
    }

    pub fn d_mu(&self) -> f64 {
        self.mu_max / self.n_mu as f64
    }

    pub fn d_v(&self) -> f64 {
        2.0 * self.v_max / self.n_v as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.d_psi() * self.d_mu() * self.d_v()
    }

    pub fn psi_center(&self, i: usize) -> f64 {
        self.psi_min + (i as f64 + 0.5) * self.d_psi()
    }

    pub fn mu_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.d_mu()
    }

    pub fn v_center(&self, l: usize) -> f64 {
        -self.v_max + (l as f64 + 0.5) * self.d_v()
    }

    /// Number of `(μ, v_∥)` columns.
    pub fn columns(&self) -> usize {
        self.n_mu * self.n_v
    }

    pub fn len(&self) -> usize {
        self.columns() * self.n_psi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index; ψ is contiguous within a column `k_mu * n_v + l_v`.
    #[inline]
    pub fn index(&self, i_psi: usize, k_mu: usize, l_v: usize) -> usize {
        (k_mu * self.n_v + l_v) * self.n_psi + i_psi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MagnetoState {
    grid: MagnetoGrid,
    /// Particle mass.
    pub mass: f64,
    /// Diffusion coefficient across flux surfaces.
    pub d_psi: f64,
    values: Vec<f64>,
}

impl MagnetoState {
    /// Normalise `values` to unit mass on `dV_I`.
    pub fn new(grid: MagnetoGrid, mass: f64, d_psi: f64, mut values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(MagnetoError::Config(format!("particle mass must be positive, got {mass}")));
        }
        if !(d_psi >= 0.0 && d_psi.is_finite()) {
            return Err(MagnetoError::Config(format!("D_ψ must be ≥ 0, got {d_psi}")));
        }
        if values.len() != grid.len() {
            return Err(MagnetoError::Config(format!(
                "state needs {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MagnetoError::Config("density must be finite and ≥ 0".into()));
        }
        let total: f64 = values.iter().sum::<f64>() * grid.cell_volume();
        if !(total > 0.0) {
            return Err(MagnetoError::Config("density has zero mass".into()));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(Self {
            grid,
            mass,
            d_psi,
            values,
        })
    }

    pub fn from_fn(
        grid: MagnetoGrid,
        mass: f64,
        d_psi: f64,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Self> {
        grid.validate()?;
        let mut values = vec![0.0; grid.len()];
        for k in 0..grid.n_mu {
            for l in 0..grid.n_v {
                for i in 0..grid.n_psi {
                    values[grid.index(i, k, l)] =
                        f(grid.psi_center(i), grid.mu_center(k), grid.v_center(l));
                }
            }
        }
        Self::new(grid, mass, d_psi, values)
    }

    /// `P ∝ exp(−(μB(ψ) + ½m v_∥²)/T)`: a Maxwellian of temperature `T` at
    /// every equatorial point.
    pub fn maxwell_boltzmann(
        grid: MagnetoGrid,
        geom: &DipoleGeometry,
        mass: f64,
        temperature: f64,
        d_psi: f64,
    ) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(MagnetoError::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Self::from_fn(grid, mass, d_psi, |psi, mu, v| {
            (-(mu * geom.equatorial_field(psi) + 0.5 * mass * v * v) / temperature).exp()
        })
    }

    pub fn grid(&self) -> &MagnetoGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Largest explicit step keeping the update non-negative: `Δψ²/D_ψ`.
    pub fn positivity_dt(&self) -> f64 {
        if self.d_psi > 0.0 {
            self.grid.d_psi().powi(2) / self.d_psi
        } else {
            f64::INFINITY
        }
    }

    /// Default step, 0.9 of the positivity bound.
    pub fn stable_dt(&self) -> f64 {
        0.9 * self.positivity_dt()
    }

    /// One explicit step of `∂ₜP = ½D_ψ ∂²_ψP` with no-flux ends, applied
    /// independently to every `(μ, v_∥)` column.
    pub fn diffuse(&mut self, dt: f64) -> Result<()> {
        let bound = self.positivity_dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MagnetoError::Config(format!("time step must be positive, got {dt}")));
        }
        if dt > bound * (1.0 + 1e-12) {
            return Err(MagnetoError::Unstable { dt, bound });
        }
        let rate = 0.5 * self.d_psi * dt / self.grid.d_psi().powi(2);
        let n = self.grid.n_psi;
        self.values.par_chunks_mut(n).for_each(|col| {
            let mut prev = col[0];
            let first = col[0];
            col[0] = first + rate * (col[1] - first);
            for i in 1..n - 1 {
                let here = col[i];
                col[i] = here + rate * (col[i + 1] - here) - rate * (here - prev);
                prev = here;
            }
            let last = col[n - 1];
            col[n - 1] = last - rate * (last - prev);
        });
        if let Some((index, &value)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= -crate::fokker_planck::NEGATIVITY_TOLERANCE))
        {
            return Err(MagnetoError::Negative { index, value });
        }
        self.values.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(())
    }

    fn column_sums(&self) -> Vec<f64> {
        self.values
            .chunks(self.grid.n_psi)
            .map(|c| c.iter().sum::<f64>())
            .collect()
    }

    /// Marginal density in μ.
    pub fn mu_marginal(&self) -> Vec<f64> {
        let g = &self.grid;
        let sums = self.column_sums();
        (0..g.n_mu)
            .map(|k| sums[k * g.n_v..(k + 1) * g.n_v].iter().sum::<f64>() * g.d_psi() * g.d_v())
            .collect()
    }

    /// Marginal density in `v_∥`.
    pub fn v_marginal(&self) -> Vec<f64> {
        let g = &self.grid;
        let sums = self.column_sums();
        (0..g.n_v)
            .map(|l| (0..g.n_mu).map(|k| sums[k * g.n_v + l]).sum::<f64>() * g.d_psi() * g.d_mu())
            .collect()
    }

    /// Marginal density in ψ.
    pub fn psi_marginal(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut out = vec![0.0; g.n_psi];
        for col in self.values.chunks(g.n_psi) {
            for (o, v) in out.iter_mut().zip(col) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v *= g.d_mu() * g.d_v());
        out
    }

    /// `max |P − P̄_col| / max P̄_col`, where `P̄_col` is the ψ-average of
    /// each column.
    pub fn psi_nonuniformity(&self) -> f64 {
        let n = self.grid.n_psi as f64;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for col in self.values.chunks(self.grid.n_psi) {
            let mean = col.iter().sum::<f64>() / n;
            scale = scale.max(mean);
            for v in col {
                worst = worst.max((v - mean).abs());
            }
        }
        worst / scale
    }

    /// Per-ψ-cell integrals `(∫P, ∫μP, ∫v²P)` over `(μ, v_∥)`.
    fn velocity_integrals(&self) -> Vec<(f64, f64, f64)> {
        let g = &self.grid;
        let dw = g.d_mu() * g.d_v();
        let mut out = vec![(0.0, 0.0, 0.0); g.n_psi];
        for k in 0..g.n_mu {
            let mu = g.mu_center(k);
            for l in 0..g.n_v {
                let v2 = g.v_center(l).powi(2);
                let col = &self.values[g.index(0, k, l)..g.index(0, k, l) + g.n_psi];
                for (o, &p) in out.iter_mut().zip(col) {
                    o.0 += p * dw;
                    o.1 += mu * p * dw;
                    o.2 += v2 * p * dw;
                }
            }
        }
        out
    }

    fn jacobian_at(&self, geom: &DipoleGeometry, jac: MeasureJacobian, i: usize) -> f64 {
        match jac {
            MeasureJacobian::Dipole => geom.equatorial_field(self.grid.psi_center(i)),
            MeasureJacobian::Constant(b) => b,
        }
    }
}

/// `Σ = −∫P ln P dV_I`.
pub fn magneto_sigma(state: &MagnetoState) -> f64 {
    -state.values.iter().map(|&p| plogp(p)).sum::<f64>() * state.grid.cell_volume()
}

/// `(Σ, S̃)` with `S̃ = −∫f ln f dV = Σ − ⟨ln 𝔍⟩`.
pub fn magneto_entropies(
    state: &MagnetoState,
    geom: &DipoleGeometry,
    jac: MeasureJacobian,
) -> Result<(f64, f64)> {
    if let MeasureJacobian::Constant(b) = jac {
        if !(b > 0.0 && b.is_finite()) {
            return Err(MagnetoError::Config(format!("uniform field must be positive, got {b}")));
        }
    }
    let g = &state.grid;
    let sigma = magneto_sigma(state);
    let psi_mass = state.psi_marginal();
    let mean_log_jac: f64 = psi_mass
        .iter()
        .enumerate()
        .map(|(i, m)| m * g.d_psi() * state.jacobian_at(geom, jac, i).ln())
        .sum();
    Ok((sigma, sigma - mean_log_jac))
}

/// Fisher form of the ψ-diffusion entropy production,
/// `½D_ψ Σ_faces (ΔP)(Δ ln P)/Δψ² ΔV_I`.
pub fn magneto_production(state: &MagnetoState) -> f64 {
    let g = &state.grid;
    let floor = LOG_FLOOR_FACTOR / (g.len() as f64 * g.cell_volume());
    let total: f64 = state
        .values
        .par_chunks(g.n_psi)
        .map(|col| {
            col.windows(2)
                .map(|w| {
                    (w[1] - w[0]) * (log_floored(w[1], floor) - log_floored(w[0], floor))
                })
                .sum::<f64>()
        })
        .sum();
    0.5 * state.d_psi * total / g.d_psi().powi(2) * g.cell_volume()
}

/// Direct form `−½D_ψ ⟨∂²_ψ ln P⟩` with mirrored ghost cells at the ends.
pub fn magneto_production_direct(state: &MagnetoState) -> f64 {
    let g = &state.grid;
    let n = g.n_psi;
    let floor = LOG_FLOOR_FACTOR / (g.len() as f64 * g.cell_volume());
    let total: f64 = state
        .values
        .par_chunks(n)
        .map(|col| {
            let logs: Vec<f64> = col.iter().map(|&p| log_floored(p, floor)).collect();
            (0..n)
                .filter(|&i| col[i] >= floor)
                .map(|i| {
                    let left = logs[i.saturating_sub(1)];
                    let right = logs[(i + 1).min(n - 1)];
                    col[i] * (right - 2.0 * logs[i] + left)
                })
                .sum::<f64>()
        })
        .sum();
    -0.5 * state.d_psi * total / g.d_psi().powi(2) * g.cell_volume()
}

/// Density, perpendicular and parallel temperature on an `(r, z)` grid;
/// points whose flux surface is outside the simulated ψ-range are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMaps {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    /// Row-major, one row per `z`.
    pub density: Vec<f64>,
    pub t_perp: Vec<f64>,
    pub t_par: Vec<f64>,
    pub psi: Vec<f64>,
    pub field: Vec<f64>,
}

impl MomentMaps {
    #[inline]
    pub fn index(&self, i_r: usize, j_z: usize) -> usize {
        j_z * self.r.len() + i_r
    }

    pub fn anisotropy(&self) -> Vec<f64> {
        self.t_perp.iter().zip(&self.t_par).map(|(a, b)| a / b).collect()
    }
}

/// Cell-centred sample axis.
pub fn axis(min: f64, max: f64, n: usize) -> Vec<f64> {
    let h = (max - min) / n as f64;
    (0..n).map(|i| min + (i as f64 + 0.5) * h).collect()
}

/// Linear interpolation of per-ψ-cell data, constant within the outer
/// half cells; `None` outside `[ψ_min, ψ_max]`.
fn interpolate<T: Copy>(
    g: &MagnetoGrid,
    data: &[T],
    psi: f64,
    lerp: impl Fn(T, T, f64) -> T,
) -> Option<T> {
    if !(psi >= g.psi_min && psi <= g.psi_max) {
        return None;
    }
    let s = ((psi - g.psi_min) / g.d_psi() - 0.5).clamp(0.0, (g.n_psi - 1) as f64);
    let i = (s.floor() as usize).min(g.n_psi - 2);
    Some(lerp(data[i], data[i + 1], s - i as f64))
}

/// Moments at points `(r, z)`; `n = B∫P`, `T_⊥ = B⟨μ⟩`, `T_∥ = m⟨v_∥²⟩`.
pub fn moments(
    state: &MagnetoState,
    geom: &DipoleGeometry,
    r_axis: &[f64],
    z_axis: &[f64],
) -> Result<MomentMaps> {
    let g = &state.grid;
    let integrals = state.velocity_integrals();
    let lerp = |a: (f64, f64, f64), b: (f64, f64, f64), t: f64| {
        (
            a.0 + t * (b.0 - a.0),
            a.1 + t * (b.1 - a.1),
            a.2 + t * (b.2 - a.2),
        )
    };
    let size = r_axis.len() * z_axis.len();
    let mut maps = MomentMaps {
        r: r_axis.to_vec(),
        z: z_axis.to_vec(),
        density: Vec::with_capacity(size),
        t_perp: Vec::with_capacity(size),
        t_par: Vec::with_capacity(size),
        psi: Vec::with_capacity(size),
        field: Vec::with_capacity(size),
    };
    for &z in z_axis {
        for &r in r_axis {
            let psi = geom.flux_function(r, z)?;
            let b = geom.field_strength(r, z)?;
            maps.psi.push(psi);
            maps.field.push(b);
            match interpolate(g, &integrals, psi, lerp) {
                Some((m0, m_mu, m_v2)) if m0 > 0.0 => {
                    maps.density.push(b * m0);
                    maps.t_perp.push(b * m_mu / m0);
                    maps.t_par.push(state.mass * m_v2 / m0);
                }
                _ => {
                    maps.density.push(f64::NAN);
                    maps.t_perp.push(f64::NAN);
                    maps.t_par.push(f64::NAN);
                }
            }
        }
    }
    Ok(maps)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagnetoRunConfig {
    pub dt: Option<f64>,
    pub t_end: f64,
    pub trace_interval: f64,
    pub jacobian: MeasureJacobian,
}

impl Default for MagnetoRunConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: 30.0,
            trace_interval: 0.25,
            jacobian: MeasureJacobian::Dipole,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MagnetoRun {
    pub initial: MagnetoState,
    pub state: MagnetoState,
    pub trace: EntropyTrace,
    /// `(t, ψ-nonuniformity)` at every trace row.
    pub nonuniformity: Vec<(f64, f64)>,
    pub dt: f64,
    pub steps: usize,
}

fn magneto_row(
    state: &MagnetoState,
    geom: &DipoleGeometry,
    jac: MeasureJacobian,
    t: f64,
) -> Result<EntropyRow> {
    let (sigma, tilde) = magneto_entropies(state, geom, jac)?;
    Ok(EntropyRow {
        t,
        sigma_entropy: sigma,
        tilde_entropy: tilde,
        production_direct: magneto_production_direct(state),
        production_fisher: magneto_production(state),
        flow: 0.0,
        mass: state.total_mass(),
        excluded_mass: 0.0,
    })
}

/// Diffuse `initial` to `cfg.t_end`, recording entropies every
/// `cfg.trace_interval`.
pub fn magneto_run(
    initial: MagnetoState,
    geom: &DipoleGeometry,
    cfg: &MagnetoRunConfig,
) -> Result<MagnetoRun> {
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite() && cfg.trace_interval > 0.0) {
        return Err(MagnetoError::Config(
            "t_end must be ≥ 0 and the trace interval positive".into(),
        ));
    }
    let requested = cfg.dt.unwrap_or_else(|| initial.stable_dt());
    if !(requested > 0.0) {
        return Err(MagnetoError::Config(format!("time step must be positive, got {requested}")));
    }
    if requested > initial.positivity_dt() * (1.0 + 1e-12) {
        return Err(MagnetoError::Unstable {
            dt: requested,
            bound: initial.positivity_dt(),
        });
    }
    let trace_every = (cfg.trace_interval / requested - 1e-9).ceil().max(1.0) as usize;
    let dt = cfg.trace_interval / trace_every as f64;
    let steps = (cfg.t_end / dt - 1e-9).ceil().max(0.0) as usize;

    let mut state = initial.clone();
    let mut trace = EntropyTrace::new();
    let mut nonuniformity = vec![(0.0, state.psi_nonuniformity())];
    trace.push(magneto_row(&state, geom, cfg.jacobian, 0.0)?)?;
    for n in 1..=steps {
        let t = if n == steps { cfg.t_end } else { n as f64 * dt };
        state.diffuse(t - (n - 1) as f64 * dt)?;
        if n % trace_every == 0 || n == steps {
            trace.push(magneto_row(&state, geom, cfg.jacobian, t)?)?;
            nonuniformity.push((t, state.psi_nonuniformity()));
        }
    }
    Ok(MagnetoRun {
        initial,
        state,
        trace,
        nonuniformity,
        dt,
        steps,
    })
}
