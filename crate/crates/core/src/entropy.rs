//! Entropy diagnostics on the invariant measure.
//!
//! With `P` the density w.r.t. `dV_I` and `𝔍 = dV_I/dV` the Jacobian to
//! the Cartesian volume, the Cartesian density is `f = P𝔍` and
//!
//! * `Σ  = −∫ P ln P dV_I`
//! * `S̃  = −∫ f ln f dV = Σ − ⟨ln 𝔍⟩`
//! * `σ  = −½ Σ_d D_d ⟨∂²_d ln P⟩ = ½ Σ_d D_d ∫ (∂_d P)²/P dV_I`
//! * `L  = −∮ P ln P Z·n`
//!
//! where `⟨·⟩` is the average against `P dV_I`. The discrete Fisher form
//! uses `(ΔP)(Δ ln P)` on each interior face, which is the summation-by-parts
//! partner of the cell-centred second difference with mirrored ghosts.

use thiserror::Error;

use crate::field::{DensityField2D, Grid2D};
use crate::fokker_planck::{FaceVelocity, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("Jacobian must be positive and finite, got {value} at cell {index}")]
    NonPositiveJacobian { index: usize, value: f64 },
    #[error("field and Jacobian live on different grids")]
    GridMismatch,
    #[error("trace rows must be time ordered: {prev} then {next}")]
    Unordered { prev: f64, next: f64 },
}

pub type Result<T> = std::result::Result<T, EntropyError>;

/// Floor for logarithms, relative to the mean density.
pub const LOG_FLOOR_FACTOR: f64 = 1e-12;

#[inline]
pub fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

#[inline]
pub fn log_floored(p: f64, floor: f64) -> f64 {
    p.max(floor).ln()
}

/// `(P_R − P_L)(ln P_R − ln P_L)`, never negative.
#[inline]
pub fn face_fisher(p_l: f64, p_r: f64, floor: f64) -> f64 {
    (p_r - p_l) * (log_floored(p_r, floor) - log_floored(p_l, floor))
}

/// `−Σ P ln P ΔV` over raw cell values.
pub fn sigma_of_cells(values: &[f64], cell_volume: f64) -> f64 {
    -values.iter().map(|&p| plogp(p)).sum::<f64>() * cell_volume
}

/// Cell-centred `𝔍 = dV_I / dV`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl JacobianField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        assert_eq!(values.len(), grid.len(), "Jacobian length must match grid");
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(EntropyError::NonPositiveJacobian { index, value });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.n_z {
            for i in 0..grid.n_chi {
                values.push(f(grid.chi_center(i), grid.z_center(j)));
            }
        }
        Self::new(grid, values)
    }

    /// `𝔍 = e^{-z²/2}` of the distorted rigid body.
    pub fn rigid_body(grid: Grid2D) -> Self {
        Self::from_fn(grid, |_, z| (-0.5 * z * z).exp()).expect("exponential is positive")
    }

    pub fn unit(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![1.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cartesian density `f = P𝔍`.
    pub fn cartesian_density(&self, p: &DensityField2D) -> Result<Vec<f64>> {
        if !self.grid.matches(p.grid()) {
            return Err(EntropyError::GridMismatch);
        }
        Ok(p.values().iter().zip(&self.values).map(|(a, b)| a * b).collect())
    }
}

/// `Σ = −Σ_cells P ln P ΔV_I`.
pub fn sigma_entropy(p: &DensityField2D) -> f64 {
    sigma_of_cells(p.values(), p.grid().cell_area())
}

/// S̃ computed two ways.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TildeEntropy {
    /// `−Σ f ln f ΔV` with `f = P𝔍` and `ΔV = ΔV_I / 𝔍`.
    pub direct: f64,
    /// `Σ − Σ P ln 𝔍 ΔV_I`.
    pub via_sigma: f64,
}

impl TildeEntropy {
    pub fn value(&self) -> f64 {
        self.direct
    }
}

pub fn tilde_entropy(p: &DensityField2D, jac: &JacobianField) -> Result<TildeEntropy> {
    if !jac.grid.matches(p.grid()) {
        return Err(EntropyError::GridMismatch);
    }
    let da = p.grid().cell_area();
    let mut direct = 0.0;
    let mut mean_log_jac = 0.0;
    for (&pv, &j) in p.values().iter().zip(&jac.values) {
        direct -= plogp(pv * j) / j;
        mean_log_jac += pv * j.ln();
    }
    Ok(TildeEntropy {
        direct: direct * da,
        via_sigma: sigma_entropy(p) - mean_log_jac * da,
    })
}

/// Result of the second-derivative form of σ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectProduction {
    pub value: f64,
    /// Cells whose density fell below the log floor and were skipped.
    pub excluded_cells: usize,
    pub excluded_mass: f64,
}

fn log_floor_for(p: &DensityField2D) -> f64 {
    LOG_FLOOR_FACTOR * p.mean_value()
}

/// Mirrored-ghost second difference along one line of logs.
#[inline]
fn second_difference(logs: &[f64], k: usize, stride: usize, n: usize, idx: usize) -> f64 {
    let c = logs[idx];
    let lo = if k > 0 { logs[idx - stride] } else { c };
    let hi = if k + 1 < n { logs[idx + stride] } else { c };
    hi - 2.0 * c + lo
}

/// `σ = −½ D_χ ⟨∂²_χ ln P⟩ − ½ D_z ⟨∂²_z ln P⟩`.
pub fn entropy_production_direct(p: &DensityField2D, noise: &NoiseSpec) -> DirectProduction {
    let g = p.grid();
    let floor = log_floor_for(p);
    let logs: Vec<f64> = p.values().iter().map(|&v| log_floored(v, floor)).collect();
    let (cx, cz) = (
        0.5 * noise.d_chi / (g.d_chi() * g.d_chi()),
        0.5 * noise.d_z / (g.d_z() * g.d_z()),
    );
    let mut acc = 0.0;
    let mut excluded_cells = 0;
    let mut excluded = 0.0;
    for j in 0..g.n_z {
        for i in 0..g.n_chi {
            let idx = g.index(i, j);
            let pv = p.values()[idx];
            if pv < floor {
                excluded_cells += 1;
                excluded += pv;
                continue;
            }
            let dxx = second_difference(&logs, i, 1, g.n_chi, idx);
            let dzz = second_difference(&logs, j, g.n_chi, g.n_z, idx);
            acc += pv * (cx * dxx + cz * dzz);
        }
    }
    DirectProduction {
        value: -acc * g.cell_area(),
        excluded_cells,
        excluded_mass: excluded * g.cell_area(),
    }
}

/// `σ = ½ Σ_d D_d ∫ (∂_d P)²/P dV_I`, non-negative by construction.
pub fn entropy_production_fisher(p: &DensityField2D, noise: &NoiseSpec) -> f64 {
    let g = p.grid();
    let floor = log_floor_for(p);
    let v = p.values();
    let (cx, cz) = (
        0.5 * noise.d_chi / (g.d_chi() * g.d_chi()),
        0.5 * noise.d_z / (g.d_z() * g.d_z()),
    );
    let mut sx = 0.0;
    let mut sz = 0.0;
    for j in 0..g.n_z {
        for i in 0..g.n_chi {
            let idx = g.index(i, j);
            if i + 1 < g.n_chi {
                sx += face_fisher(v[idx], v[idx + 1], floor);
            }
            if j + 1 < g.n_z {
                sz += face_fisher(v[idx], v[idx + g.n_chi], floor);
            }
        }
    }
    (cx * sx + cz * sz) * g.cell_area()
}

/// `L = −∮ P ln P Z·n dℓ`, summed over the wall faces.
pub fn entropy_flow(p: &DensityField2D, z: &FaceVelocity) -> Result<f64> {
    let g = p.grid();
    if !g.matches(z.grid()) {
        return Err(EntropyError::GridMismatch);
    }
    let mut out = 0.0;
    for j in 0..g.n_z {
        let west = -z.chi_face(0, j) * plogp(p.at(0, j));
        let east = z.chi_face(g.n_chi, j) * plogp(p.at(g.n_chi - 1, j));
        out += (west + east) * g.d_z();
    }
    for i in 0..g.n_chi {
        let south = -z.z_face(i, 0) * plogp(p.at(i, 0));
        let north = z.z_face(i, g.n_z) * plogp(p.at(i, g.n_z - 1));
        out += (south + north) * g.d_chi();
    }
    Ok(-out)
}

/// One row of an entropy time series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyRow {
    pub t: f64,
    pub sigma_entropy: f64,
    pub tilde_entropy: f64,
    pub production_direct: f64,
    pub production_fisher: f64,
    pub flow: f64,
    pub mass: f64,
    /// Mass in cells skipped by the direct production estimate.
    pub excluded_mass: f64,
}

/// Time-ordered entropy diagnostics of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntropyTrace {
    rows: Vec<EntropyRow>,
}

impl EntropyTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: EntropyRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(EntropyError::Unordered {
                    prev: last.t,
                    next: row.t,
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[EntropyRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first(&self) -> Option<&EntropyRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&EntropyRow> {
        self.rows.last()
    }

    /// Most negative change of Σ between consecutive rows (0 if none).
    pub fn worst_sigma_decrease(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].sigma_entropy - w[0].sigma_entropy)
            .fold(0.0, f64::min)
    }

    pub fn max_mass_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        self.rows
            .iter()
            .map(|r| (r.mass - first.mass).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_production(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.production_fisher)
            .fold(0.0, f64::max)
    }

    /// `(t, dΣ/dt − σ − L)` at interior rows, dΣ/dt by centred differences.
    pub fn budget_residuals(&self) -> Vec<(f64, f64)> {
        self.rows
            .windows(3)
            .map(|w| {
                let rate = (w[2].sigma_entropy - w[0].sigma_entropy) / (w[2].t - w[0].t);
                let r = &w[1];
                (r.t, rate - r.production_fisher - r.flow)
            })
            .collect()
    }
}
