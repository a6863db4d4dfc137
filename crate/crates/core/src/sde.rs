//! Euler–Maruyama ensemble for the noisy canonical equations
//!
//! ```text
//! dχ = −∂H/∂z dt − √D_χ dW₁,   dz = ∂H/∂χ dt + √D_z dW₂
//! ```
//!
//! whose Kolmogorov forward equation is the solver's Fokker–Planck equation.
//! Every particle owns a ChaCha stream selected by its index, so results do
//! not depend on the thread count or on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::CanonicalChart;
use crate::field::{DensityField2D, FieldError, Grid2D};
use crate::fokker_planck::{NoiseSpec, Snapshot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub type Result<T> = std::result::Result<T, SdeError>;

/// Tolerance when matching ensemble times to snapshot times.
const TIME_MATCH: f64 = 1e-9;

#[derive(Clone, Debug)]
struct Particle {
    chi: f64,
    z: f64,
    rng: ChaCha8Rng,
}

/// Mirror `x` into `[lo, hi]`.
#[inline]
fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if x < lo || x > hi {
        // fold onto one period of the reflected motion
        let period = 2.0 * width;
        let mut s = (x - lo).rem_euclid(period);
        if s > width {
            s = period - s;
        }
        x = lo + s;
    }
    x
}

#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    particles: Vec<Particle>,
    seed: u64,
    time: f64,
    chi_bounds: (f64, f64),
    z_bounds: (f64, f64),
}

impl ParticleEnsemble {
    fn empty(chart: &CanonicalChart, seed: u64, n: usize) -> Self {
        let particles = (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                Particle { chi: 0.0, z: 0.0, rng }
            })
            .collect();
        Self {
            particles,
            seed,
            time: 0.0,
            chi_bounds: chart.chi_bounds(),
            z_bounds: chart.z_bounds(),
        }
    }

    /// `n` particles at explicit positions.
    pub fn from_points(
        chart: &CanonicalChart,
        seed: u64,
        points: &[(f64, f64)],
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(SdeError::Config("ensemble needs at least one particle".into()));
        }
        let mut ens = Self::empty(chart, seed, points.len());
        for (p, &(chi, z)) in ens.particles.iter_mut().zip(points) {
            if !chart.contains(chi, z) {
                return Err(SdeError::Config(format!(
                    "particle ({chi}, {z}) lies outside the chart"
                )));
            }
            p.chi = chi;
            p.z = z;
        }
        Ok(ens)
    }

    /// `n` particles drawn from the piecewise-constant density `p0`: a cell
    /// is chosen with probability equal to its mass, then a uniform point
    /// inside it.
    pub fn sample(
        chart: &CanonicalChart,
        p0: &DensityField2D,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(SdeError::Config("ensemble needs at least one particle".into()));
        }
        let g = *p0.grid();
        let (cb, zb) = (chart.chi_bounds(), chart.z_bounds());
        if g.chi_min < cb.0 || g.chi_max > cb.1 || g.z_min < zb.0 || g.z_max > zb.1 {
            return Err(SdeError::Config(
                "initial density extends beyond the chart".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(g.len());
        let mut acc = 0.0;
        for &v in p0.values() {
            acc += v;
            cumulative.push(acc);
        }
        let total = acc;
        let mut ens = Self::empty(chart, seed, n);
        ens.particles.par_iter_mut().for_each(|p| {
            let u: f64 = p.rng.random::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= u).min(g.len() - 1);
            let (i, j) = (k % g.n_chi, k / g.n_chi);
            p.chi = g.chi_face(i) + p.rng.random::<f64>() * g.d_chi();
            p.z = g.z_face(j) + p.rng.random::<f64>() * g.d_z();
        });
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.particles.iter().map(|p| (p.chi, p.z)).collect()
    }

    /// `(⟨χ⟩, ⟨z⟩, Var χ, Var z)` of the ensemble.
    pub fn moments(&self) -> (f64, f64, f64, f64) {
        let n = self.len() as f64;
        let (sc, sz) = self
            .particles
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.chi, b + p.z));
        let (mc, mz) = (sc / n, sz / n);
        let (vc, vz) = self.particles.iter().fold((0.0, 0.0), |(a, b), p| {
            (a + (p.chi - mc).powi(2), b + (p.z - mz).powi(2))
        });
        (mc, mz, vc / n, vz / n)
    }

    /// One Euler–Maruyama step of length `dt`.
    pub fn step(&mut self, chart: &CanonicalChart, noise: &NoiseSpec, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SdeError::Config(format!("time step must be positive, got {dt}")));
        }
        let (s_chi, s_z) = ((noise.d_chi * dt).sqrt(), (noise.d_z * dt).sqrt());
        let ((c0, c1), (z0, z1)) = (self.chi_bounds, self.z_bounds);
        self.particles.par_iter_mut().for_each(|p| {
            let (u_chi, u_z) = chart.drift(p.chi, p.z);
            let xi1: f64 = p.rng.sample(StandardNormal);
            let xi2: f64 = p.rng.sample(StandardNormal);
            p.chi = reflect(p.chi + u_chi * dt - s_chi * xi1, c0, c1);
            p.z = reflect(p.z + u_z * dt + s_z * xi2, z0, z1);
        });
        self.time += dt;
        Ok(())
    }

    /// Step until `t_target` with steps no longer than `dt`; the last step
    /// is shortened to land on the target exactly.
    pub fn evolve_to(
        &mut self,
        chart: &CanonicalChart,
        noise: &NoiseSpec,
        dt: f64,
        t_target: f64,
    ) -> Result<()> {
        if t_target < self.time - TIME_MATCH {
            return Err(SdeError::Config(format!(
                "cannot evolve backwards from {} to {t_target}",
                self.time
            )));
        }
        let remaining = t_target - self.time;
        if remaining <= TIME_MATCH {
            return Ok(());
        }
        let steps = (remaining / dt - 1e-9).ceil().max(1.0) as usize;
        let h = remaining / steps as f64;
        for _ in 0..steps {
            self.step(chart, noise, h)?;
        }
        self.time = t_target;
        Ok(())
    }

    /// Normalised histogram on `grid`; particles outside it are dropped
    /// from the counts but not from the normalisation.
    pub fn histogram(&self, grid: Grid2D) -> DensityField2D {
        let mut counts = vec![0.0; grid.len()];
        for p in &self.particles {
            if let Some((i, j)) = grid.locate(p.chi, p.z) {
                counts[grid.index(i, j)] += 1.0;
            }
        }
        let scale = 1.0 / (self.len() as f64 * grid.cell_area());
        counts.iter_mut().for_each(|c| *c *= scale);
        DensityField2D::from_parts_unchecked(grid, counts)
    }
}

/// One Euler–Maruyama step; see [`ParticleEnsemble::step`].
pub fn em_step(
    ens: &ParticleEnsemble,
    chart: &CanonicalChart,
    noise: &NoiseSpec,
    dt: f64,
) -> Result<ParticleEnsemble> {
    let mut next = ens.clone();
    next.step(chart, noise, dt)?;
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub t: f64,
    /// `Σ|hist − P| ΔA` on the comparison grid.
    pub l1: f64,
    /// Expected L1 of a perfect sampler with the same particle count.
    pub sampling_floor: f64,
}

/// Expected L1 error of an `n`-sample histogram of `p`, using the normal
/// approximation `E|X| = σ√(2/π)` for each cell count.
pub fn expected_sampling_l1(p: &DensityField2D, n: usize) -> f64 {
    let da = p.grid().cell_area();
    let n = n as f64;
    p.values()
        .iter()
        .map(|&v| {
            let m = (v * da).clamp(0.0, 1.0);
            (2.0 * m * (1.0 - m) / (std::f64::consts::PI * n)).sqrt()
        })
        .sum()
}

/// Block-average `p` onto `coarse`, which must share its bounds and divide
/// its cell counts.
pub fn coarsen_to(p: &DensityField2D, coarse: &Grid2D) -> Result<DensityField2D> {
    let g = p.grid();
    if coarse.n_chi == 0
        || coarse.n_z == 0
        || !g.n_chi.is_multiple_of(coarse.n_chi)
        || !g.n_z.is_multiple_of(coarse.n_z)
    {
        return Err(SdeError::Config(format!(
            "comparison grid {}×{} does not divide {}×{}",
            coarse.n_chi, coarse.n_z, g.n_chi, g.n_z
        )));
    }
    let out = p.coarsen(g.n_chi / coarse.n_chi, g.n_z / coarse.n_z)?;
    if !out.grid().matches(coarse) {
        return Err(SdeError::Config("comparison grid bounds differ".into()));
    }
    Ok(out)
}

/// L1 distance between ensemble histograms and solver snapshots at matching
/// times, both on the `comparison` grid.
pub fn compare_to_fp(
    ensembles: &[&ParticleEnsemble],
    snapshots: &[Snapshot],
    comparison: Grid2D,
) -> Result<Vec<Comparison>> {
    ensembles
        .iter()
        .map(|ens| {
            let snap = snapshots
                .iter()
                .find(|s| (s.t - ens.time()).abs() <= TIME_MATCH * (1.0 + s.t.abs()))
                .ok_or_else(|| {
                    SdeError::Config(format!("no solver snapshot at t = {}", ens.time()))
                })?;
            let p = coarsen_to(&snap.density, &comparison)?;
            let hist = ens.histogram(comparison);
            Ok(Comparison {
                t: ens.time(),
                l1: hist.l1_distance(&p)?,
                sampling_floor: expected_sampling_l1(&p, ens.len()),
            })
        })
        .collect()
}
