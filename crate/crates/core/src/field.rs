//! Uniform cell-centred grids and probability densities on them.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("grid needs at least 8 cells per axis, got {n_chi}×{n_z}")]
    TooFewCells { n_chi: usize, n_z: usize },
    #[error("invalid grid bounds [{lo}, {hi}]")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("density value {value} at cell {index} is negative or not finite")]
    InvalidValue { index: usize, value: f64 },
    #[error("density has zero total mass")]
    ZeroMass,
    #[error("grids do not match")]
    GridMismatch,
    #[error("cannot coarsen {n} cells by a factor of {factor}")]
    BadCoarsening { n: usize, factor: usize },
}

pub type Result<T> = std::result::Result<T, FieldError>;

pub const MIN_CELLS: usize = 8;

/// Uniform rectangular grid of `n_chi × n_z` cells.
///
/// Cells are stored row-major: row `j` (along z), column `i` (along χ),
/// flat index `j * n_chi + i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    pub n_chi: usize,
    pub n_z: usize,
    pub chi_min: f64,
    pub chi_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Grid2D {
    pub fn new(
        n_chi: usize,
        n_z: usize,
        (chi_min, chi_max): (f64, f64),
        (z_min, z_max): (f64, f64),
    ) -> Result<Self> {
        if n_chi < MIN_CELLS || n_z < MIN_CELLS {
            return Err(FieldError::TooFewCells { n_chi, n_z });
        }
        for (lo, hi) in [(chi_min, chi_max), (z_min, z_max)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(FieldError::InvalidBounds { lo, hi });
            }
        }
        Ok(Self {
            n_chi,
            n_z,
            chi_min,
            chi_max,
            z_min,
            z_max,
        })
    }

    #[inline]
    pub fn d_chi(&self) -> f64 {
        (self.chi_max - self.chi_min) / self.n_chi as f64
    }

    #[inline]
    pub fn d_z(&self) -> f64 {
        (self.z_max - self.z_min) / self.n_z as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.d_chi() * self.d_z()
    }

    pub fn area(&self) -> f64 {
        (self.chi_max - self.chi_min) * (self.z_max - self.z_min)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_chi * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n_chi + i
    }

    #[inline]
    pub fn chi_center(&self, i: usize) -> f64 {
        self.chi_min + (i as f64 + 0.5) * self.d_chi()
    }

    #[inline]
    pub fn z_center(&self, j: usize) -> f64 {
        self.z_min + (j as f64 + 0.5) * self.d_z()
    }

    /// χ of face `i` (0..=n_chi), the left edge of cell `i`.
    #[inline]
    pub fn chi_face(&self, i: usize) -> f64 {
        self.chi_min + i as f64 * self.d_chi()
    }

    #[inline]
    pub fn z_face(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.d_z()
    }

    /// Cell containing `(chi, z)`; points on the upper walls belong to the
    /// last cell.
    pub fn locate(&self, chi: f64, z: f64) -> Option<(usize, usize)> {
        if !(chi >= self.chi_min && chi <= self.chi_max && z >= self.z_min && z <= self.z_max) {
            return None;
        }
        let i = (((chi - self.chi_min) / self.d_chi()) as usize).min(self.n_chi - 1);
        let j = (((z - self.z_min) / self.d_z()) as usize).min(self.n_z - 1);
        Some((i, j))
    }

    /// Same bounds, `n_chi / f_chi × n_z / f_z` cells.
    pub fn coarsened(&self, f_chi: usize, f_z: usize) -> Result<Grid2D> {
        if f_chi == 0 || !self.n_chi.is_multiple_of(f_chi) {
            return Err(FieldError::BadCoarsening {
                n: self.n_chi,
                factor: f_chi,
            });
        }
        if f_z == 0 || !self.n_z.is_multiple_of(f_z) {
            return Err(FieldError::BadCoarsening {
                n: self.n_z,
                factor: f_z,
            });
        }
        Grid2D::new(
            self.n_chi / f_chi,
            self.n_z / f_z,
            (self.chi_min, self.chi_max),
            (self.z_min, self.z_max),
        )
    }

    /// Bounds and cell counts agree to rounding.
    pub fn matches(&self, other: &Grid2D) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.n_chi == other.n_chi
            && self.n_z == other.n_z
            && close(self.chi_min, other.chi_min)
            && close(self.chi_max, other.chi_max)
            && close(self.z_min, other.z_min)
            && close(self.z_max, other.z_max)
    }
}

/// Probability density at cell centres, w.r.t. the invariant measure `dχ∧dz`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl DensityField2D {
    /// Wrap raw values without renormalising; they must be finite and ≥ 0.
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(FieldError::InvalidValue { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Values scaled so that the total mass is one.
    pub fn normalized(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        let mut field = Self::new(grid, values)?;
        let mass = field.mass();
        if !(mass > 0.0) {
            return Err(FieldError::ZeroMass);
        }
        field.values.iter_mut().for_each(|v| *v /= mass);
        Ok(field)
    }

    /// Sample `f(χ, z)` at cell centres and normalise.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.n_z {
            let z = grid.z_center(j);
            for i in 0..grid.n_chi {
                values.push(f(grid.chi_center(i), z));
            }
        }
        Self::normalized(grid, values)
    }

    pub fn uniform(grid: Grid2D) -> Self {
        let v = 1.0 / grid.area();
        Self {
            grid,
            values: vec![v; grid.len()],
        }
    }

    /// Used by the stepper, which guarantees the invariants itself.
    pub(crate) fn from_parts_unchecked(grid: Grid2D, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Mean density `1 / area` of a normalised field.
    pub fn mean_value(&self) -> f64 {
        self.mass() / self.grid.area()
    }

    /// `max |P − P̄| / P̄`.
    pub fn max_relative_deviation(&self) -> f64 {
        let mean = self.mean_value();
        self.values
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0, f64::max)
            / mean
    }

    /// First and second moments `(⟨χ⟩, ⟨z⟩, Var χ, Var z)`.
    pub fn moments(&self) -> (f64, f64, f64, f64) {
        let g = &self.grid;
        let da = g.cell_area();
        let (mut m, mut mc, mut mz, mut mcc, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..g.n_z {
            let z = g.z_center(j);
            for i in 0..g.n_chi {
                let c = g.chi_center(i);
                let w = self.at(i, j) * da;
                m += w;
                mc += w * c;
                mz += w * z;
                mcc += w * c * c;
                mzz += w * z * z;
            }
        }
        let (ec, ez) = (mc / m, mz / m);
        (ec, ez, mcc / m - ec * ec, mzz / m - ez * ez)
    }

    /// Block-average onto a grid coarser by integer factors; mass is kept.
    pub fn coarsen(&self, f_chi: usize, f_z: usize) -> Result<DensityField2D> {
        let coarse = self.grid.coarsened(f_chi, f_z)?;
        let mut values = vec![0.0; coarse.len()];
        for j in 0..self.grid.n_z {
            for i in 0..self.grid.n_chi {
                values[coarse.index(i / f_chi, j / f_z)] += self.at(i, j);
            }
        }
        let scale = 1.0 / (f_chi * f_z) as f64;
        values.iter_mut().for_each(|v| *v *= scale);
        Ok(DensityField2D::from_parts_unchecked(coarse, values))
    }

    /// `Σ |P − Q| ΔA` on a common grid.
    pub fn l1_distance(&self, other: &DensityField2D) -> Result<f64> {
        if !self.grid.matches(&other.grid) {
            return Err(FieldError::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_area())
    }
}
