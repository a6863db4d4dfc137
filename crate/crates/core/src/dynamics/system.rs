use std::fmt;
use std::sync::Arc;

use super::{DynamicsError, Result, Vec3};

type ValueFn = dyn Fn(Vec3) -> f64 + Send + Sync;
type GradFn = dyn Fn(Vec3) -> Vec3 + Send + Sync;

/// Default central-difference step: 1e-4 of the extent of the `[-2, 2]³`
/// sampling box.
pub const DEFAULT_FD_STEP: f64 = 4.0e-4;

/// A scalar field on phase space, with an optional analytic gradient.
///
/// Without an analytic gradient, [`ScalarField::gradient`] falls back to
/// second-order central differences.
#[derive(Clone)]
pub struct ScalarField {
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
}

impl ScalarField {
    pub fn new(value: impl Fn(Vec3) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        value: impl Fn(Vec3) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Some(Arc::new(gradient)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::with_gradient(move |_| c, |_| Vec3::ZERO)
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    #[inline]
    pub fn value(&self, p: Vec3) -> f64 {
        (self.value)(p)
    }

    pub fn gradient(&self, p: Vec3, h: f64) -> Vec3 {
        match &self.gradient {
            Some(g) => g(p),
            None => {
                let d = |axis: usize| {
                    let e = Vec3::unit(axis) * h;
                    (self.value(p + e) - self.value(p - e)) / (2.0 * h)
                };
                Vec3::new(d(0), d(1), d(2))
            }
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

/// Principal moments of inertia of a rigid body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inertia {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Inertia {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(x) && ok(y) && ok(z) {
            Ok(Self { x, y, z })
        } else {
            Err(DynamicsError::InvalidInertia([x, y, z]))
        }
    }

    /// Rigid-body kinetic energy `(x²/I_x + y²/I_y + z²/I_z) / 2`.
    pub fn energy(&self, p: Vec3) -> f64 {
        0.5 * (p.x * p.x / self.x + p.y * p.y / self.y + p.z * p.z / self.z)
    }

    pub fn energy_gradient(&self, p: Vec3) -> Vec3 {
        Vec3::new(p.x / self.x, p.y / self.y, p.z / self.z)
    }
}

impl Default for Inertia {
    fn default() -> Self {
        Self {
            x: 1.0,
            y: 2.0,
            z: 3.0,
        }
    }
}

/// A 3D noncanonical Hamiltonian system `v = λ ∇C × ∇H`.
#[derive(Clone, Debug)]
pub struct ConstrainedSystem3D {
    lambda: ScalarField,
    casimir: ScalarField,
    hamiltonian: ScalarField,
    inertia: Option<Inertia>,
    fd_step: f64,
}

impl ConstrainedSystem3D {
    pub fn new(lambda: ScalarField, casimir: ScalarField, hamiltonian: ScalarField) -> Self {
        Self {
            lambda,
            casimir,
            hamiltonian,
            inertia: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Euler's rigid body: `λ = 1`, `C = |x|²/2`, `H = Σ x_i²/(2 I_i)`.
    pub fn rigid_body(inertia: Inertia) -> Self {
        Self::with_lambda(ScalarField::constant(1.0), inertia)
    }

    /// Anisotropic rotation with `λ = e^{z²/2}`; same Casimir and Hamiltonian.
    pub fn distorted_rigid_body(inertia: Inertia) -> Self {
        let lambda = ScalarField::with_gradient(
            |p: Vec3| (0.5 * p.z * p.z).exp(),
            |p: Vec3| Vec3::new(0.0, 0.0, p.z * (0.5 * p.z * p.z).exp()),
        );
        Self::with_lambda(lambda, inertia)
    }

    /// Rigid-body Casimir and Hamiltonian with an arbitrary integration factor.
    pub fn with_lambda(lambda: ScalarField, inertia: Inertia) -> Self {
        let casimir = ScalarField::with_gradient(|p: Vec3| 0.5 * p.norm_squared(), |p| p);
        let hamiltonian = ScalarField::with_gradient(
            move |p| inertia.energy(p),
            move |p| inertia.energy_gradient(p),
        );
        Self {
            inertia: Some(inertia),
            ..Self::new(lambda, casimir, hamiltonian)
        }
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        assert!(h.is_finite() && h > 0.0, "finite-difference step must be positive");
        self.fd_step = h;
        self
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn inertia(&self) -> Option<Inertia> {
        self.inertia
    }

    fn checked(field: &'static str, value: f64, p: Vec3) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(DynamicsError::NonFinite { field, point: p })
        }
    }

    fn checked_vec(field: &'static str, value: Vec3, p: Vec3) -> Result<Vec3> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(DynamicsError::NonFinite { field, point: p })
        }
    }

    fn check_point(p: Vec3) -> Result<()> {
        if p.is_finite() {
            Ok(())
        } else {
            Err(DynamicsError::InvalidPoint(p))
        }
    }

    pub fn lambda(&self, p: Vec3) -> Result<f64> {
        Self::checked("lambda", self.lambda.value(p), p)
    }

    pub fn casimir(&self, p: Vec3) -> Result<f64> {
        Self::checked("casimir", self.casimir.value(p), p)
    }

    pub fn hamiltonian(&self, p: Vec3) -> Result<f64> {
        Self::checked("hamiltonian", self.hamiltonian.value(p), p)
    }

    /// The kernel vector `ξ = λ∇C` (also the `w` of `v = w × ∇H`).
    pub fn kernel(&self, p: Vec3) -> Result<Vec3> {
        Self::check_point(p)?;
        let lambda = self.lambda(p)?;
        let grad_c = Self::checked_vec("casimir", self.casimir.gradient(p, self.fd_step), p)?;
        Ok(grad_c * lambda)
    }

    /// Phase-space velocity `λ(p) ∇C(p) × ∇H(p)`.
    pub fn poisson_velocity(&self, p: Vec3) -> Result<Vec3> {
        let w = self.kernel(p)?;
        let grad_h = Self::checked_vec(
            "hamiltonian",
            self.hamiltonian.gradient(p, self.fd_step),
            p,
        )?;
        Ok(w.cross(grad_h))
    }

    /// `ξ · v`, which vanishes for every Hamiltonian by antisymmetry.
    pub fn topological_residual(&self, p: Vec3) -> Result<f64> {
        let xi = self.kernel(p)?;
        let v = self.poisson_velocity(p)?;
        Ok(xi.dot(v))
    }

    /// `w · (∇ × w)` with `w = λ∇C`, curl by central differences.
    pub fn jacobi_residual(&self, p: Vec3) -> Result<f64> {
        Self::check_point(p)?;
        let mut failure = None;
        let res = jacobi_residual_of(
            |q| match self.kernel(q) {
                Ok(w) => w,
                Err(e) => {
                    failure.get_or_insert(e);
                    Vec3::ZERO
                }
            },
            p,
            self.fd_step,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(res),
        }
    }

    /// `∇ · (𝔍 v)` with the invariant density `𝔍 = 1/λ`.
    pub fn liouville_residual(&self, p: Vec3) -> Result<f64> {
        self.liouville_residual_with(p, |q| 1.0 / self.lambda.value(q))
    }

    /// `∇ · (𝔍 v)` for a caller-supplied density `𝔍`.
    pub fn liouville_residual_with(&self, p: Vec3, jac: impl Fn(Vec3) -> f64) -> Result<f64> {
        Self::check_point(p)?;
        let mut failure = None;
        let res = divergence_fd(
            |q| match self.poisson_velocity(q) {
                Ok(v) => v * jac(q),
                Err(e) => {
                    failure.get_or_insert(e);
                    Vec3::ZERO
                }
            },
            p,
            self.fd_step,
        );
        match failure {
            Some(e) => Err(e),
            None => Self::checked("liouville density", res, p),
        }
    }
}

/// Central-difference curl of a vector field.
pub fn curl_fd(mut w: impl FnMut(Vec3) -> Vec3, p: Vec3, h: f64) -> Vec3 {
    // jac[i][j] = ∂w_i/∂x_j
    let mut jac = [[0.0; 3]; 3];
    for j in 0..3 {
        let e = Vec3::unit(j) * h;
        let plus = w(p + e);
        let minus = w(p - e);
        for (i, row) in jac.iter_mut().enumerate() {
            row[j] = (plus.component(i) - minus.component(i)) / (2.0 * h);
        }
    }
    Vec3::new(
        jac[2][1] - jac[1][2],
        jac[0][2] - jac[2][0],
        jac[1][0] - jac[0][1],
    )
}

/// Central-difference divergence of a vector field.
pub fn divergence_fd(mut v: impl FnMut(Vec3) -> Vec3, p: Vec3, h: f64) -> f64 {
    (0..3)
        .map(|axis| {
            let e = Vec3::unit(axis) * h;
            (v(p + e).component(axis) - v(p - e).component(axis)) / (2.0 * h)
        })
        .sum()
}

/// `w · (∇ × w)` for an arbitrary field, the integrability condition of the
/// kernel direction.
pub fn jacobi_residual_of(mut w: impl FnMut(Vec3) -> Vec3, p: Vec3, h: f64) -> f64 {
    let centre = w(p);
    centre.dot(curl_fd(w, p, h))
}
