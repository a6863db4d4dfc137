use std::f64::consts::PI;

use uphill::fokker_planck::{chart_grid, fp_solve, fp_velocity, Boundary};
use uphill::{
    CanonicalChart, ChartHamiltonian, DensityField2D, FpOperator, Grid2D, NoiseSpec, SolverConfig,
};

fn diffusion_chart() -> CanonicalChart {
    CanonicalChart::new(2.0, ChartHamiltonian::Constant(0.0), 1.0, 1.5).unwrap()
}

/// Cell average of `cos(k (x − lo))` over `[a, b]`.
fn cos_average(k: f64, lo: f64, a: f64, b: f64) -> f64 {
    ((k * (b - lo)).sin() - (k * (a - lo)).sin()) / (k * (b - a))
}

/// Cell-averaged reflecting-wall eigenmode `1 + ε cos(k_χ χ') cos(k_z z')`
/// (unnormalised) at amplitude `amp`.
fn cosine_mode(g: &Grid2D, kx: f64, kz: f64, amp: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(g.len());
    for j in 0..g.n_z {
        let cz = cos_average(kz, g.z_min, g.z_face(j), g.z_face(j + 1));
        for i in 0..g.n_chi {
            let cx = cos_average(kx, g.chi_min, g.chi_face(i), g.chi_face(i + 1));
            v.push(1.0 + amp * cx * cz);
        }
    }
    v
}

/// Relative L1 error of the pure-diffusion solve against the decayed mode.
fn cosine_mode_error(n: usize) -> f64 {
    let chart = diffusion_chart();
    let grid = chart_grid(&chart, n, n).unwrap();
    let (lx, lz) = (grid.chi_max - grid.chi_min, grid.z_max - grid.z_min);
    let (kx, kz) = (PI / lx, 2.0 * PI / lz);
    let noise = NoiseSpec::new(0.3, 0.2).unwrap();
    let t = 0.5;
    let amp0 = 0.6;
    let p0 = DensityField2D::normalized(grid, cosine_mode(&grid, kx, kz, amp0)).unwrap();
    let cfg = SolverConfig {
        dt: None,
        t_end: t,
        trace_interval: 0.05,
        snapshot_interval: 0.5,
        boundary: Boundary::NoFlux,
    };
    let run = fp_solve(&p0, &chart, &noise, &cfg).unwrap();

    // ∂ₜP = ½ D ∇²P damps the mode at ½(D_χ k_χ² + D_z k_z²)
    let rate = 0.5 * (noise.d_chi * kx * kx + noise.d_z * kz * kz);
    let amp = amp0 * (-rate * t).exp();
    let exact = DensityField2D::normalized(grid, cosine_mode(&grid, kx, kz, amp)).unwrap();
    let mean = 1.0 / grid.area();
    let deviation: f64 =
        exact.values().iter().map(|v| (v - mean).abs()).sum::<f64>() * grid.cell_area();
    run.final_density().l1_distance(&exact).unwrap() / deviation
}

#[test]
fn pure_diffusion_matches_reflected_eigenmode() {
    let fine = cosine_mode_error(256);
    assert!(fine < 0.01, "relative L1 error {fine}");
}

#[test]
fn pure_diffusion_converges_at_second_order() {
    let errors: Vec<f64> = [32, 64, 128].iter().map(|&n| cosine_mode_error(n)).collect();
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate >= 1.8, "errors {errors:?}, rate {rate}");
    }
}

/// Max over cells of `(P¹ − P⁰)/dt + ∇·(Z P⁰)` with `Z` from the
/// velocity reconstruction and central face averages of `P`.
fn transport_residual(n: usize) -> (f64, f64) {
    let chart = CanonicalChart::default();
    let grid = chart_grid(&chart, n, n).unwrap();
    // large enough diffusion that every face stays central at n ≥ 64
    let noise = NoiseSpec::new(0.5, 0.5).unwrap();
    let p0 = DensityField2D::from_fn(grid, |c, z| {
        1.0 + 0.4 * (PI * c).cos() * (PI * z / 3.0).sin() + 0.2 * z
    })
    .unwrap();
    let op = FpOperator::new(&chart, grid, noise).unwrap();
    assert!(op.drift().max_abs() <= noise.d_chi / grid.d_chi());
    let dt = 0.25 * op.max_stable_dt();
    let p1 = op.step(&p0, dt).unwrap();
    let (z, floored) = fp_velocity(&p0, &chart, &noise).unwrap();
    assert_eq!(floored, 0);

    let g = &grid;
    let p = |i: usize, j: usize| p0.at(i, j);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..g.n_z {
        for i in 0..g.n_chi {
            let flux_x = |f: usize| {
                if f == 0 || f == g.n_chi {
                    0.0
                } else {
                    z.chi_face(f, j) * 0.5 * (p(f - 1, j) + p(f, j))
                }
            };
            let flux_z = |f: usize| {
                if f == 0 || f == g.n_z {
                    0.0
                } else {
                    z.z_face(i, f) * 0.5 * (p(i, f - 1) + p(i, f))
                }
            };
            let div = (flux_x(i + 1) - flux_x(i)) / g.d_chi() + (flux_z(j + 1) - flux_z(j)) / g.d_z();
            let rate = (p1.at(i, j) - p0.at(i, j)) / dt;
            worst = worst.max((rate + div).abs());
            scale = scale.max(rate.abs());
        }
    }
    (worst, scale)
}

#[test]
fn transport_residual_is_second_order_in_h() {
    let (coarse, scale) = transport_residual(64);
    let (fine, _) = transport_residual(128);
    assert!(coarse < 0.05 * scale, "residual {coarse} vs rate {scale}");
    let rate = (coarse / fine).log2();
    assert!(rate > 1.7, "residuals {coarse} {fine}");
}

#[test]
fn long_time_state_flattens_monotonically() {
    let chart = CanonicalChart::default();
    let grid = chart_grid(&chart, 48, 48).unwrap();
    let p0 = uphill::fokker_planck::flat_cartesian_density(&chart, grid).unwrap();
    let cfg = SolverConfig {
        t_end: 20.0,
        snapshot_interval: 1.0,
        ..SolverConfig::default()
    };
    let run = fp_solve(&p0, &chart, &NoiseSpec::default(), &cfg).unwrap();
    let dev: Vec<f64> = run.snapshots.iter().map(|s| s.density.max_relative_deviation()).collect();
    // after the initial transient
    for w in dev[2..].windows(2) {
        assert!(w[1] <= w[0], "{dev:?}");
    }
    assert!(*dev.last().unwrap() < 0.01, "{dev:?}");
}
