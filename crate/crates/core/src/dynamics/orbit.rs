use super::{CanonicalChart, ConstrainedSystem3D, DynamicsError, Result, Vec3};

/// Sampled orbit with the conservation diagnostics of the run.
#[derive(Clone, Debug)]
pub struct Trajectory<P> {
    pub times: Vec<f64>,
    pub points: Vec<P>,
    /// Largest relative deviation of the Casimir from its initial value.
    pub casimir_drift: f64,
    /// Largest relative deviation of the Hamiltonian from its initial value.
    pub energy_drift: f64,
    /// Set when a chart orbit left the rectangle; the trajectory is cut at
    /// the last interior point.
    pub exited_domain: bool,
}

impl<P> Trajectory<P> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Step so that `dt · max|u| ≤ 0.1 · h_grid`.
pub fn suggested_dt(max_speed: f64, h_grid: f64) -> f64 {
    if max_speed > 0.0 {
        0.1 * h_grid / max_speed
    } else {
        0.1 * h_grid
    }
}

fn relative(value: f64, reference: f64) -> f64 {
    let d = (value - reference).abs();
    if reference != 0.0 {
        d / reference.abs()
    } else {
        d
    }
}

fn check_step(dt: f64) -> Result<()> {
    if dt.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::InvalidChart(format!("time step must be finite, got {dt}")))
    }
}

/// Fixed-step RK4 integration of `v = λ∇C×∇H`.
pub fn integrate_orbit(
    sys: &ConstrainedSystem3D,
    p0: Vec3,
    dt: f64,
    steps: usize,
) -> Result<Trajectory<Vec3>> {
    check_step(dt)?;
    let c0 = sys.casimir(p0)?;
    let h0 = sys.hamiltonian(p0)?;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        casimir_drift: 0.0,
        energy_drift: 0.0,
        exited_domain: false,
    };
    traj.times.push(0.0);
    traj.points.push(p0);
    let mut p = p0;
    for n in 1..=steps {
        let k1 = sys.poisson_velocity(p)?;
        let k2 = sys.poisson_velocity(p + k1 * (0.5 * dt))?;
        let k3 = sys.poisson_velocity(p + k2 * (0.5 * dt))?;
        let k4 = sys.poisson_velocity(p + k3 * dt)?;
        p += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
        traj.casimir_drift = traj.casimir_drift.max(relative(sys.casimir(p)?, c0));
        traj.energy_drift = traj.energy_drift.max(relative(sys.hamiltonian(p)?, h0));
        traj.times.push(n as f64 * dt);
        traj.points.push(p);
    }
    Ok(traj)
}

/// Fixed-step RK4 integration of the canonical chart equations.
pub fn integrate_chart_orbit(
    chart: &CanonicalChart,
    start: (f64, f64),
    dt: f64,
    steps: usize,
) -> Result<Trajectory<(f64, f64)>> {
    check_step(dt)?;
    let (chi0, z0) = start;
    if !chart.contains(chi0, z0) {
        return Err(DynamicsError::OutOfDomain { chi: chi0, z: z0 });
    }
    let h0 = chart.h2d(chi0, z0);
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![start],
        casimir_drift: 0.0,
        energy_drift: 0.0,
        exited_domain: false,
    };
    let f = |(c, z): (f64, f64)| chart.drift(c, z);
    let (mut chi, mut z) = start;
    for n in 1..=steps {
        let k1 = f((chi, z));
        let k2 = f((chi + 0.5 * dt * k1.0, z + 0.5 * dt * k1.1));
        let k3 = f((chi + 0.5 * dt * k2.0, z + 0.5 * dt * k2.1));
        let k4 = f((chi + dt * k3.0, z + dt * k3.1));
        let next_chi = chi + dt / 6.0 * (k1.0 + 2.0 * (k2.0 + k3.0) + k4.0);
        let next_z = z + dt / 6.0 * (k1.1 + 2.0 * (k2.1 + k3.1) + k4.1);
        if !chart.contains(next_chi, next_z) {
            traj.exited_domain = true;
            break;
        }
        chi = next_chi;
        z = next_z;
        traj.energy_drift = traj.energy_drift.max(relative(chart.h2d(chi, z), h0));
        traj.times.push(n as f64 * dt);
        traj.points.push((chi, z));
    }
    Ok(traj)
}
