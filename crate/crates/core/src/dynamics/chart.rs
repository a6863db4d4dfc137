use std::f64::consts::PI;

use super::{DynamicsError, Inertia, Result, Vec3};

/// Point in the `(C, χ, z)` coordinates of the distorted rigid body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalPoint {
    pub c: f64,
    pub chi: f64,
    pub z: f64,
}

/// Map an angular momentum to `(C, χ, z)` with `C = |p|²/2` and
/// `χ = e^{-z²/2} atan2(y, x)`, the angle taken in `(-π, π]`.
pub fn to_canonical(p: Vec3) -> Result<CanonicalPoint> {
    if !p.is_finite() {
        return Err(DynamicsError::InvalidPoint(p));
    }
    if p.x == 0.0 && p.y == 0.0 {
        return Err(DynamicsError::CoordinateSingularity);
    }
    let phi = p.y.atan2(p.x);
    Ok(CanonicalPoint {
        c: 0.5 * p.norm_squared(),
        chi: (-0.5 * p.z * p.z).exp() * phi,
        z: p.z,
    })
}

/// Inverse of [`to_canonical`] on the principal sheet `φ = χ e^{z²/2} ∈ (-π, π]`.
pub fn from_canonical(c: f64, chi: f64, z: f64) -> Result<Vec3> {
    let rho2 = 2.0 * c - z * z;
    if !(rho2 > 0.0) || !chi.is_finite() {
        return Err(DynamicsError::OutOfDomain { chi, z });
    }
    let phi = chi * (0.5 * z * z).exp();
    if !(phi > -PI && phi <= PI) {
        return Err(DynamicsError::OutOfDomain { chi, z });
    }
    let rho = rho2.sqrt();
    Ok(Vec3::new(rho * phi.cos(), rho * phi.sin(), z))
}

/// Hamiltonian expressed on the `(χ, z)` chart at fixed Casimir level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChartHamiltonian {
    /// `H = ½[ρ²(cos²φ/I_x + sin²φ/I_y) + z²/I_z]` with `ρ² = 2C − z²`
    /// and `φ = χ e^{z²/2}`.
    RigidBody(Inertia),
    /// No drift at all; the solver reduces to pure diffusion.
    Constant(f64),
}

impl ChartHamiltonian {
    /// Returns `(H, ∂H/∂χ, ∂H/∂z)`.
    #[inline]
    fn eval(&self, c: f64, chi: f64, z: f64) -> (f64, f64, f64) {
        match *self {
            ChartHamiltonian::Constant(h) => (h, 0.0, 0.0),
            ChartHamiltonian::RigidBody(i) => {
                let lambda = (0.5 * z * z).exp();
                let phi = chi * lambda;
                let (s, co) = phi.sin_cos();
                let rho2 = 2.0 * c - z * z;
                let g = co * co / i.x + s * s / i.y;
                // dg/dφ
                let dg = 2.0 * s * co * (1.0 / i.y - 1.0 / i.x);
                let h = 0.5 * (rho2 * g + z * z / i.z);
                let h_chi = 0.5 * rho2 * dg * lambda;
                // ∂φ/∂z at fixed χ is zφ
                let h_z = z * (1.0 / i.z - g + 0.5 * rho2 * dg * phi);
                (h, h_chi, h_z)
            }
        }
    }
}

/// Smooth confinement of the stream function near the chart walls.
///
/// Inside a band of relative width `fraction` along each wall the
/// Hamiltonian is blended towards the constant `wall_value`, so the drift
/// is tangent to the walls and exactly divergence free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallTaper {
    pub fraction: f64,
    pub wall_value: f64,
}

/// Quintic step, C² at both ends so the drift is C¹.
#[inline]
fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        let s = 1.0 - t;
        (t * t * t * (10.0 - 15.0 * t + 6.0 * t * t), 30.0 * t * t * s * s)
    }
}

/// Window that is 1 away from `±half_width` and 0 on the walls, with its
/// derivative.
#[inline]
fn wall_window(x: f64, half_width: f64, band: f64) -> (f64, f64) {
    let (w, dw) = smoothstep((half_width - x.abs()) / band);
    (w, -x.signum() * dw / band)
}

/// Rectangular `(χ, z)` chart at a fixed Casimir level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalChart {
    pub c_value: f64,
    pub hamiltonian: ChartHamiltonian,
    pub chi_max: f64,
    pub z_max: f64,
    pub taper: Option<WallTaper>,
}

pub const DEFAULT_CASIMIR: f64 = 2.0;
pub const DEFAULT_CHI_MAX: f64 = 1.0;
pub const DEFAULT_Z_MAX: f64 = 1.5;
pub const DEFAULT_TAPER_FRACTION: f64 = 0.25;

impl Default for CanonicalChart {
    fn default() -> Self {
        CanonicalChart::new(
            DEFAULT_CASIMIR,
            ChartHamiltonian::RigidBody(Inertia::default()),
            DEFAULT_CHI_MAX,
            DEFAULT_Z_MAX,
        )
        .and_then(|c| c.with_wall_taper(DEFAULT_TAPER_FRACTION))
        .expect("default chart is valid")
    }
}

impl CanonicalChart {
    pub fn new(
        c_value: f64,
        hamiltonian: ChartHamiltonian,
        chi_max: f64,
        z_max: f64,
    ) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(c_value) {
            return Err(DynamicsError::InvalidChart(format!(
                "Casimir level must be positive, got {c_value}"
            )));
        }
        if !positive(chi_max) || !positive(z_max) {
            return Err(DynamicsError::InvalidChart(format!(
                "half-widths must be positive, got chi_max={chi_max}, z_max={z_max}"
            )));
        }
        if z_max * z_max >= 2.0 * c_value {
            return Err(DynamicsError::InvalidChart(format!(
                "z_max² = {} must stay below 2C = {}",
                z_max * z_max,
                2.0 * c_value
            )));
        }
        Ok(Self {
            c_value,
            hamiltonian,
            chi_max,
            z_max,
            taper: None,
        })
    }

    /// Rigid-body chart without wall confinement.
    pub fn rigid_body(inertia: Inertia, c_value: f64, chi_max: f64, z_max: f64) -> Result<Self> {
        Self::new(c_value, ChartHamiltonian::RigidBody(inertia), chi_max, z_max)
    }

    /// Add the wall taper; the wall value is the midrange of H along the
    /// boundary.
    pub fn with_wall_taper(mut self, fraction: f64) -> Result<Self> {
        if fraction == 0.0 {
            self.taper = None;
            return Ok(self);
        }
        if !(fraction > 0.0 && fraction <= 0.5) {
            return Err(DynamicsError::InvalidChart(format!(
                "wall taper fraction must lie in (0, 0.5], got {fraction}"
            )));
        }
        const SAMPLES: usize = 512;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=SAMPLES {
            let s = -1.0 + 2.0 * k as f64 / SAMPLES as f64;
            for (chi, z) in [
                (-self.chi_max, s * self.z_max),
                (self.chi_max, s * self.z_max),
                (s * self.chi_max, -self.z_max),
                (s * self.chi_max, self.z_max),
            ] {
                let h = self.raw_hamiltonian(chi, z);
                lo = lo.min(h);
                hi = hi.max(h);
            }
        }
        self.taper = Some(WallTaper {
            fraction,
            wall_value: 0.5 * (lo + hi),
        });
        Ok(self)
    }

    pub fn chi_bounds(&self) -> (f64, f64) {
        (-self.chi_max, self.chi_max)
    }

    pub fn z_bounds(&self) -> (f64, f64) {
        (-self.z_max, self.z_max)
    }

    pub fn area(&self) -> f64 {
        4.0 * self.chi_max * self.z_max
    }

    pub fn contains(&self, chi: f64, z: f64) -> bool {
        chi.abs() <= self.chi_max && z.abs() <= self.z_max
    }

    /// The rigid-body Hamiltonian without wall confinement.
    pub fn raw_hamiltonian(&self, chi: f64, z: f64) -> f64 {
        self.hamiltonian.eval(self.c_value, chi, z).0
    }

    /// Stream function `H(χ, z)` used for the dynamics on this chart.
    pub fn h2d(&self, chi: f64, z: f64) -> f64 {
        self.h2d_with_gradient(chi, z).0
    }

    /// `(H, ∂H/∂χ, ∂H/∂z)` including the wall taper.
    #[inline]
    pub fn h2d_with_gradient(&self, chi: f64, z: f64) -> (f64, f64, f64) {
        let (h, h_chi, h_z) = self.hamiltonian.eval(self.c_value, chi, z);
        match self.taper {
            None => (h, h_chi, h_z),
            Some(t) => {
                let (wc, dwc) = wall_window(chi, self.chi_max, t.fraction * self.chi_max);
                let (wz, dwz) = wall_window(z, self.z_max, t.fraction * self.z_max);
                let w = wc * wz;
                let dh = h - t.wall_value;
                (
                    t.wall_value + dh * w,
                    h_chi * w + dh * dwc * wz,
                    h_z * w + dh * wc * dwz,
                )
            }
        }
    }

    /// Drift `(−∂H/∂z, ∂H/∂χ)` without the domain check.
    #[inline]
    pub fn drift(&self, chi: f64, z: f64) -> (f64, f64) {
        let (_, h_chi, h_z) = self.h2d_with_gradient(chi, z);
        (-h_z, h_chi)
    }

    /// `(dχ/dt, dz/dt) = (−∂H/∂z, ∂H/∂χ)`.
    pub fn canonical_velocity(&self, chi: f64, z: f64) -> Result<(f64, f64)> {
        if !self.contains(chi, z) {
            return Err(DynamicsError::OutOfDomain { chi, z });
        }
        Ok(self.drift(chi, z))
    }

    /// Density `𝔍 = e^{-z²/2}` of the invariant measure relative to the
    /// Cartesian volume on the constant-C surface.
    #[inline]
    pub fn jacobian(&self, z: f64) -> f64 {
        (-0.5 * z * z).exp()
    }

    /// Lift a chart point back to angular momentum on the level `C`.
    pub fn lift(&self, chi: f64, z: f64) -> Result<Vec3> {
        from_canonical(self.c_value, chi, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn to_canonical_examples() {
        let a = to_canonical(Vec3::new(1.0, 1.0, 0.0)).unwrap();
        assert!((a.c - 1.0).abs() < 1e-15);
        assert!((a.chi - PI / 4.0).abs() < 1e-15);
        assert_eq!(a.z, 0.0);

        let b = to_canonical(Vec3::X).unwrap();
        assert_eq!((b.c, b.chi, b.z), (0.5, 0.0, 0.0));
    }

    #[test]
    fn singular_axis_rejected() {
        assert_eq!(
            to_canonical(Vec3::new(0.0, 0.0, 1.0)),
            Err(DynamicsError::CoordinateSingularity)
        );
    }

    #[test]
    fn from_canonical_domain() {
        assert!(from_canonical(2.0, 0.1, 2.0).is_err());
        // φ = 4 > π is off the principal sheet
        assert!(from_canonical(2.0, 4.0, 0.0).is_err());
        assert!(from_canonical(2.0, -1.0, 1.2).is_ok());
    }

    #[test]
    fn chart_validation() {
        let rb = ChartHamiltonian::RigidBody(Inertia::default());
        assert!(CanonicalChart::new(2.0, rb, 1.0, 2.0).is_err());
        assert!(CanonicalChart::new(-1.0, rb, 1.0, 0.5).is_err());
        assert!(CanonicalChart::new(2.0, rb, 1.0, 1.5).is_ok());
        let chart = CanonicalChart::new(2.0, rb, 1.0, 1.5).unwrap();
        assert!(chart.with_wall_taper(0.7).is_err());
    }

    #[test]
    fn symmetric_top_has_no_vertical_drift() {
        let chart =
            CanonicalChart::rigid_body(Inertia::new(1.5, 1.5, 3.0).unwrap(), 2.0, 1.0, 1.5)
                .unwrap();
        for k in 0..50 {
            let chi = -0.95 + 0.038 * k as f64;
            let z = 1.4 * (0.3 * k as f64).sin();
            let (_, dz) = chart.canonical_velocity(chi, z).unwrap();
            assert_eq!(dz, 0.0);
        }
    }

    #[test]
    fn out_of_domain_velocity() {
        let chart = CanonicalChart::default();
        assert!(matches!(
            chart.canonical_velocity(1.5, 0.0),
            Err(DynamicsError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn chart_hamiltonian_matches_3d_energy() {
        let inertia = Inertia::default();
        let chart = CanonicalChart::rigid_body(inertia, 2.0, 1.0, 1.5).unwrap();
        for &(chi, z) in &[(0.3, 0.2), (-0.8, 1.4), (0.0, -1.1)] {
            let p = chart.lift(chi, z).unwrap();
            assert!((chart.h2d(chi, z) - inertia.energy(p)).abs() < 1e-13);
        }
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let chart = CanonicalChart::default();
        let h = 1e-6;
        for &(chi, z) in &[(0.3, 0.2), (-0.85, 1.3), (0.9, -1.4), (0.0, 0.0)] {
            let (_, hc, hz) = chart.h2d_with_gradient(chi, z);
            let nc = (chart.h2d(chi + h, z) - chart.h2d(chi - h, z)) / (2.0 * h);
            let nz = (chart.h2d(chi, z + h) - chart.h2d(chi, z - h)) / (2.0 * h);
            assert!((hc - nc).abs() < 1e-7, "{hc} vs {nc}");
            assert!((hz - nz).abs() < 1e-7, "{hz} vs {nz}");
        }
    }

    #[test]
    fn taper_makes_walls_streamlines() {
        let chart = CanonicalChart::default();
        let wall = chart.taper.unwrap().wall_value;
        for k in 0..=40 {
            let s = -1.0 + k as f64 / 20.0;
            for (chi, z) in [(1.0, 1.5 * s), (-1.0, 1.5 * s), (s, 1.5), (s, -1.5)] {
                assert!((chart.h2d(chi, z) - wall).abs() < 1e-14);
            }
            // normal drift vanishes on the walls
            assert!(chart.drift(1.0, 1.5 * s).0.abs() < 1e-14);
            assert!(chart.drift(s, -1.5).1.abs() < 1e-14);
        }
        // untouched away from the walls
        assert_eq!(chart.h2d(0.1, 0.2), chart.raw_hamiltonian(0.1, 0.2));
    }
}
