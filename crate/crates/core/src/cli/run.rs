//! Experiment drivers. Each computes its results in memory, runs the
//! invariant checks relevant to it, and only then writes the artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{
    self, Experiment, MagnetoParams, Resolved, RigidBodyParams, SdeParams,
};
use super::csv::{emit_field, emit_trace};
use super::svg::{self, ColorScale, ContourSet, FieldView, Series};
use super::{Args, CliError};
use crate::entropy::{EntropyTrace, JacobianField};
use crate::field::DensityField2D;
use crate::fokker_planck::{
    flat_cartesian_density, fp_solve_with, FpRun, Snapshot, SolverError,
};
use crate::magnetosphere::{
    axis, magneto_run, moments, MagnetoError, MagnetoState, MomentMaps,
};
use crate::sde::{compare_to_fp, coarsen_to, ParticleEnsemble, SdeError};

/// Outcome of one invariant check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub experiment: Experiment,
    pub out_dir: PathBuf,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary_line(&self) -> String {
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let total = self.checks.len();
        if self.all_passed() {
            format!(
                "{}: PASS ({passed}/{total} invariant checks) -> {}",
                self.experiment.tag(),
                self.out_dir.display()
            )
        } else {
            let failed: Vec<&str> = self
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            format!(
                "{}: FAIL ({passed}/{total} invariant checks; failed: {})",
                self.experiment.tag(),
                failed.join(", ")
            )
        }
    }
}

/// Files produced by a run, written only after it completes.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: String, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    fn text(&mut self, name: &str, text: String) {
        self.add(name.to_string(), text.into_bytes());
    }

    fn trace(&mut self, name: &str, trace: &EntropyTrace) {
        let mut buf = Vec::new();
        emit_trace(trace, &mut buf).expect("writing to memory cannot fail");
        self.add(name.to_string(), buf);
    }

    fn field(&mut self, name: String, x: (f64, f64), y: (f64, f64), nx: usize, ny: usize, v: &[f64]) {
        let mut buf = Vec::new();
        emit_field(x, y, nx, ny, v, &mut buf).expect("field sizes are consistent");
        self.add(name, buf);
    }

    fn density(&mut self, name: String, p: &DensityField2D) {
        let g = p.grid();
        self.field(
            name,
            (g.chi_min, g.chi_max),
            (g.z_min, g.z_max),
            g.n_chi,
            g.n_z,
            p.values(),
        );
    }

    fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        self.files
            .iter()
            .map(|(name, bytes)| {
                let path = dir.join(name);
                std::fs::write(&path, bytes).map_err(|source| CliError::Output {
                    path: path.clone(),
                    source,
                })?;
                Ok(path)
            })
            .collect()
    }
}

fn prepare_output(dir: &Path) -> Result<(), CliError> {
    let err = |source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(err)?;
    std::fs::remove_file(&probe).map_err(err)
}

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::Config(m) => CliError::Config(m),
        other => numerical(other),
    }
}

fn sde_error(e: SdeError) -> CliError {
    match e {
        SdeError::Config(m) => CliError::Config(m),
        other => numerical(other),
    }
}

fn magneto_error(e: MagnetoError) -> CliError {
    match e {
        MagnetoError::Config(m) => CliError::Config(m),
        other => numerical(other),
    }
}

/// Parse, validate, run and write.
pub fn run(args: &Args) -> Result<Report, CliError> {
    let cfg = config::load(args.config.as_deref(), &args.all_overrides())?;
    let resolved = cfg.resolve(args.experiment)?;
    let out_dir = config::output_dir(args.out.as_deref());
    prepare_output(&out_dir)?;

    let mut art = Artifacts::default();
    let checks = match &resolved {
        Resolved::RigidBody(p) => rigid_body(p, &mut art)?,
        Resolved::FpVsSde(p) => fp_vs_sde(p, &mut art)?,
        Resolved::Magnetosphere(p) => magnetosphere_experiment(p, &mut art)?,
    };
    let mut listing = String::new();
    for c in &checks {
        let _ = writeln!(
            listing,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    art.text("checks.txt", listing);
    let files = art.write(&out_dir)?;
    Ok(Report {
        experiment: args.experiment,
        out_dir,
        checks,
        files,
    })
}

fn snapshot_name(prefix: &str, t: f64) -> String {
    format!("{prefix}_t{t:08.3}.csv")
}

/// Checks shared by every Fokker–Planck trace.
fn second_law_checks(trace: &EntropyTrace, checks: &mut Vec<Check>) {
    let drift = trace.max_mass_drift();
    checks.push(Check::new("mass_conserved", drift <= 1e-12, format!("max drift {drift:.3e}")));

    let min_sigma = trace
        .rows()
        .iter()
        .map(|r| r.production_fisher)
        .fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        "production_non_negative",
        min_sigma >= 0.0,
        format!("min σ {min_sigma:.3e}"),
    ));

    let worst = trace.worst_sigma_decrease();
    checks.push(Check::new(
        "sigma_non_decreasing",
        worst >= -1e-9,
        format!("worst step change {worst:.3e}"),
    ));

    if let (Some(a), Some(b)) = (trace.first(), trace.last()) {
        checks.push(Check::new(
            "tilde_entropy_decreased",
            b.tilde_entropy < a.tilde_entropy,
            format!("{:.6} -> {:.6}", a.tilde_entropy, b.tilde_entropy),
        ));
    }

    let worst_rel = trace
        .rows()
        .iter()
        .filter(|r| r.excluded_mass < 1e-6)
        .map(|r| {
            let gap = (r.production_direct - r.production_fisher).abs();
            if gap <= 1e-15 {
                0.0
            } else {
                gap / r.production_fisher.abs()
            }
        })
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "production_forms_agree",
        worst_rel <= 0.02,
        format!("max relative gap {worst_rel:.3e}"),
    ));
}

fn budget_check(trace: &EntropyTrace, checks: &mut Vec<Check>) {
    let scale = trace.max_production();
    let worst = trace
        .budget_residuals()
        .iter()
        .map(|r| r.1.abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "entropy_budget_closes",
        worst <= 0.05 * scale,
        format!("max |dΣ/dt − σ − L| = {worst:.3e} vs max σ {scale:.3e}"),
    ));
}

fn entropy_plots(art: &mut Artifacts, trace: &EntropyTrace, title: &str) {
    let t: Vec<f64> = trace.rows().iter().map(|r| r.t).collect();
    let sigma: Vec<f64> = trace.rows().iter().map(|r| r.sigma_entropy).collect();
    let tilde: Vec<f64> = trace.rows().iter().map(|r| r.tilde_entropy).collect();
    let fisher: Vec<f64> = trace.rows().iter().map(|r| r.production_fisher).collect();
    let direct: Vec<f64> = trace.rows().iter().map(|r| r.production_direct).collect();
    art.text(
        "entropy.svg",
        svg::line_plot(
            &format!("{title}: entropies"),
            "t",
            "entropy",
            &[
                Series { label: "Σ on dV_I", x: &t, y: &sigma },
                Series { label: "S̃ on dV", x: &t, y: &tilde },
            ],
        ),
    );
    art.text(
        "production.svg",
        svg::line_plot(
            &format!("{title}: entropy production"),
            "t",
            "σ",
            &[
                Series { label: "σ Fisher", x: &t, y: &fisher },
                Series { label: "σ direct", x: &t, y: &direct },
            ],
        ),
    );
}

fn heat(art: &mut Artifacts, name: &str, title: &str, p: &DensityField2D, values: &[f64]) {
    let g = p.grid();
    let view = FieldView {
        x_range: (g.chi_min, g.chi_max),
        y_range: (g.z_min, g.z_max),
        nx: g.n_chi,
        ny: g.n_z,
        values,
    };
    art.text(name, svg::heatmap(title, "χ", "z", &view, &[], ColorScale::Linear));
}

fn run_rigid(p: &RigidBodyParams, keep: impl FnMut(&Snapshot)) -> Result<(DensityField2D, FpRun), CliError> {
    let p0 = flat_cartesian_density(&p.chart, p.grid).map_err(solver_error)?;
    let run = fp_solve_with(&p0, &p.chart, &p.noise, &p.solver, keep).map_err(solver_error)?;
    Ok((p0, run))
}

fn rigid_body(p: &RigidBodyParams, art: &mut Artifacts) -> Result<Vec<Check>, CliError> {
    let mut snapshots = Vec::new();
    let (p0, run) = run_rigid(p, |s| snapshots.push(s.clone()))?;
    let final_p = run.final_density().clone();
    let jac = JacobianField::from_fn(p.grid, |_, z| p.chart.jacobian(z)).map_err(numerical)?;
    let cartesian = jac.cartesian_density(&final_p).map_err(numerical)?;

    let mut checks = Vec::new();
    second_law_checks(&run.trace, &mut checks);
    budget_check(&run.trace, &mut checks);
    let flat = final_p.max_relative_deviation();
    checks.push(Check::new(
        "final_state_flat",
        flat < p.flatness_tolerance,
        format!("max |P − P̄|/P̄ = {flat:.3e}"),
    ));
    // f·λ with λ = 1/𝔍 recovers P; measured from the Cartesian density
    let f_lambda: Vec<f64> = cartesian
        .iter()
        .zip(jac.values())
        .map(|(f, j)| f / j)
        .collect();
    let mean = f_lambda.iter().sum::<f64>() / f_lambda.len() as f64;
    let spread = f_lambda.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean;
    checks.push(Check::new(
        "cartesian_density_times_lambda_constant",
        spread < p.flatness_tolerance,
        format!("max relative spread {spread:.3e}"),
    ));

    art.trace("entropy_trace.csv", &run.trace);
    for s in &snapshots {
        art.density(snapshot_name("density", s.t), &s.density);
    }
    let g = p.grid;
    art.field(
        "cartesian_density_final.csv".into(),
        (g.chi_min, g.chi_max),
        (g.z_min, g.z_max),
        g.n_chi,
        g.n_z,
        &cartesian,
    );
    art.field(
        "jacobian.csv".into(),
        (g.chi_min, g.chi_max),
        (g.z_min, g.z_max),
        g.n_chi,
        g.n_z,
        jac.values(),
    );
    entropy_plots(art, &run.trace, "rigid body");
    heat(art, "density_initial.svg", "P at t = 0", &p0, p0.values());
    heat(art, "density_final.svg", "P at t_end", &final_p, final_p.values());
    heat(art, "cartesian_final.svg", "f = P·J at t_end", &final_p, &cartesian);
    heat(art, "jacobian.svg", "J = exp(−z²/2)", &final_p, jac.values());
    Ok(checks)
}

/// Particles used for the replay check.
const REPLAY_PARTICLES: usize = 1000;

fn fp_vs_sde(p: &SdeParams, art: &mut Artifacts) -> Result<Vec<Check>, CliError> {
    let r = &p.rigid;
    let mut kept: Vec<Snapshot> = Vec::new();
    let times = p.compare_times.clone();
    let (p0, run) = run_rigid(r, |s| {
        if times.iter().any(|t| (t - s.t).abs() <= 1e-9 * (1.0 + t)) {
            kept.push(s.clone());
        }
    })?;

    let evolve = |n: usize| -> Result<Vec<ParticleEnsemble>, CliError> {
        let mut ens = ParticleEnsemble::sample(&r.chart, &p0, n, p.seed).map_err(sde_error)?;
        let mut out = Vec::with_capacity(times.len());
        for &t in &times {
            ens.evolve_to(&r.chart, &r.noise, p.sde_dt, t).map_err(sde_error)?;
            out.push(ens.clone());
        }
        Ok(out)
    };
    let ensembles = evolve(p.particles)?;
    let refs: Vec<&ParticleEnsemble> = ensembles.iter().collect();
    let comparisons = compare_to_fp(&refs, &kept, p.comparison).map_err(sde_error)?;

    let mut checks = Vec::new();
    second_law_checks(&run.trace, &mut checks);
    for c in &comparisons {
        checks.push(Check::new(
            &format!("l1_below_threshold_t{}", c.t),
            c.l1 < p.l1_threshold,
            format!("L1 {:.4} (sampling floor {:.4})", c.l1, c.sampling_floor),
        ));
    }
    // per-particle streams: a smaller ensemble replays the leading particles
    let m = p.particles.min(REPLAY_PARTICLES);
    let replay = evolve(m)?;
    let same = replay.iter().zip(&ensembles).all(|(a, b)| {
        let pa = a.positions();
        let pb = b.positions();
        pa.iter().zip(&pb[..m]).all(|(x, y)| {
            x.0.to_bits() == y.0.to_bits() && x.1.to_bits() == y.1.to_bits()
        })
    });
    checks.push(Check::new(
        "seeded_replay_identical",
        same,
        format!("first {m} particles re-simulated"),
    ));

    art.trace("entropy_trace.csv", &run.trace);
    let mut table = String::from("t,l1,sampling_floor\n");
    for c in &comparisons {
        let _ = writeln!(table, "{:.16e},{:.16e},{:.16e}", c.t, c.l1, c.sampling_floor);
    }
    art.text("comparison.csv", table);
    for (ens, snap) in ensembles.iter().zip(&kept) {
        let hist = ens.histogram(p.comparison);
        art.density(snapshot_name("histogram", ens.time()), &hist);
        let coarse = coarsen_to(&snap.density, &p.comparison).map_err(sde_error)?;
        art.density(snapshot_name("fp_coarse", snap.t), &coarse);
    }
    let t: Vec<f64> = comparisons.iter().map(|c| c.t).collect();
    let l1: Vec<f64> = comparisons.iter().map(|c| c.l1).collect();
    let floor: Vec<f64> = comparisons.iter().map(|c| c.sampling_floor).collect();
    let limit = vec![p.l1_threshold; t.len()];
    art.text(
        "comparison.svg",
        svg::line_plot(
            "particles vs Fokker–Planck",
            "t",
            "L1 distance",
            &[
                Series { label: "L1", x: &t, y: &l1 },
                Series { label: "sampling floor", x: &t, y: &floor },
                Series { label: "threshold", x: &t, y: &limit },
            ],
        ),
    );
    entropy_plots(art, &run.trace, "Fokker–Planck");
    Ok(checks)
}

/// Geometric levels between the finite extremes of `values`.
fn geometric_levels(values: &[f64], count: usize) -> Vec<f64> {
    let finite = values.iter().filter(|v| v.is_finite() && **v > 0.0);
    let lo = finite.clone().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = finite.fold(0.0f64, |a, &b| a.max(b));
    if !(lo.is_finite() && hi > lo) {
        return Vec::new();
    }
    let ratio = (hi / lo).ln();
    (1..=count)
        .map(|k| lo * (ratio * k as f64 / (count + 1) as f64).exp())
        .collect()
}

fn magnetosphere_experiment(
    p: &MagnetoParams,
    art: &mut Artifacts,
) -> Result<Vec<Check>, CliError> {
    let geom = &p.geometry;
    let s0 = MagnetoState::maxwell_boltzmann(p.grid, geom, p.particle_mass, p.temperature, p.d_psi)
        .map_err(magneto_error)?;
    let run = magneto_run(s0, geom, &p.run).map_err(magneto_error)?;

    let mut checks = Vec::new();
    second_law_checks(&run.trace, &mut checks);
    let gap = |a: Vec<f64>, b: Vec<f64>| {
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let mu_gap = gap(run.initial.mu_marginal(), run.state.mu_marginal());
    let v_gap = gap(run.initial.v_marginal(), run.state.v_marginal());
    checks.push(Check::new(
        "mu_marginal_conserved",
        mu_gap <= 1e-14,
        format!("max change {mu_gap:.3e}"),
    ));
    checks.push(Check::new(
        "v_parallel_marginal_conserved",
        v_gap <= 1e-14,
        format!("max change {v_gap:.3e}"),
    ));
    let monotone = run.nonuniformity.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    checks.push(Check::new(
        "psi_nonuniformity_decays",
        monotone,
        format!(
            "{:.3e} -> {:.3e}",
            run.nonuniformity.first().map_or(0.0, |x| x.1),
            run.nonuniformity.last().map_or(0.0, |x| x.1)
        ),
    ));

    // two flux surfaces at a quarter and three quarters of the ψ range
    let g = &p.grid;
    let psi_a = g.psi_min + 0.75 * (g.psi_max - g.psi_min);
    let psi_b = g.psi_min + 0.25 * (g.psi_max - g.psi_min);
    let (ra, rb) = (geom.equatorial_radius(psi_a), geom.equatorial_radius(psi_b));
    let eq = moments(&run.state, geom, &[ra, rb], &[0.0]).map_err(magneto_error)?;
    let b_ratio = geom.field_strength(ra, 0.0).map_err(magneto_error)?
        / geom.field_strength(rb, 0.0).map_err(magneto_error)?;
    let n_ratio = eq.density[0] / eq.density[1];
    let aniso = eq.anisotropy();
    let a_ratio = aniso[0] / aniso[1];
    checks.push(Check::new(
        "density_ratio_matches_field_ratio",
        (n_ratio / b_ratio - 1.0).abs() < 0.01,
        format!("n({ra:.3})/n({rb:.3}) = {n_ratio:.5}, B ratio {b_ratio:.5}"),
    ));
    checks.push(Check::new(
        "anisotropy_ratio_matches_field_ratio",
        (a_ratio / b_ratio - 1.0).abs() < 0.01,
        format!("anisotropy ratio {a_ratio:.5}, B ratio {b_ratio:.5}"),
    ));

    let r_axis = axis(p.r_range.0, p.r_range.1, p.n_r);
    let z_axis = axis(-p.z_max, p.z_max, p.n_z);
    let maps = moments(&run.state, geom, &r_axis, &z_axis).map_err(magneto_error)?;

    art.trace("entropy_trace.csv", &run.trace);
    let mut marg = String::from("mu,initial,final\n");
    for (k, (a, b)) in run.initial.mu_marginal().iter().zip(run.state.mu_marginal()).enumerate() {
        let _ = writeln!(marg, "{:.16e},{a:.16e},{b:.16e}", g.mu_center(k));
    }
    art.text("mu_marginal.csv", marg);
    let mut psi_prof = String::from("psi,initial,final\n");
    for (i, (a, b)) in run.initial.psi_marginal().iter().zip(run.state.psi_marginal()).enumerate() {
        let _ = writeln!(psi_prof, "{:.16e},{a:.16e},{b:.16e}", g.psi_center(i));
    }
    art.text("psi_marginal.csv", psi_prof);
    map_outputs(art, p, &maps);
    entropy_plots(art, &run.trace, "magnetosphere");
    Ok(checks)
}

fn map_outputs(art: &mut Artifacts, p: &MagnetoParams, maps: &MomentMaps) {
    let xr = p.r_range;
    let yr = (-p.z_max, p.z_max);
    let (nx, ny) = (p.n_r, p.n_z);
    let anisotropy = maps.anisotropy();
    let fields: [(&str, &str, &[f64]); 6] = [
        ("density", "density n (f = P·B), log colour", &maps.density),
        ("anisotropy", "anisotropy T⊥/T∥, log colour", &anisotropy),
        ("t_perp", "perpendicular temperature T⊥, log colour", &maps.t_perp),
        ("t_par", "parallel temperature T∥", &maps.t_par),
        ("field_strength", "|B|", &maps.field),
        ("flux_function", "ψ", &maps.psi),
    ];
    let b_levels = geometric_levels(&maps.field, 7);
    let psi_levels: Vec<f64> = (1..=7)
        .map(|k| p.grid.psi_min + (p.grid.psi_max - p.grid.psi_min) * k as f64 / 8.0)
        .collect();
    let contours = [
        ContourSet { label: "B", values: &maps.field, levels: b_levels, color: "#ff8c00" },
        ContourSet { label: "ψ", values: &maps.psi, levels: psi_levels, color: "#00a000" },
    ];
    for (name, title, values) in fields {
        art.field(format!("{name}.csv"), xr, yr, nx, ny, values);
        if name == "field_strength" || name == "flux_function" {
            continue;
        }
        let view = FieldView { x_range: xr, y_range: yr, nx, ny, values };
        let scale = if name == "t_par" { ColorScale::Linear } else { ColorScale::Log };
        art.text(
            &format!("{name}.svg"),
            svg::heatmap(title, "r", "z", &view, &contours, scale),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_names_sort_by_time() {
        assert_eq!(snapshot_name("density", 2.0), "density_t0002.000.csv");
        assert!(snapshot_name("density", 10.0) > snapshot_name("density", 2.0));
    }

    #[test]
    fn geometric_levels_span_range() {
        let lv = geometric_levels(&[1.0, f64::NAN, 100.0], 3);
        assert_eq!(lv.len(), 3);
        assert!(lv[0] > 1.0 && lv[2] < 100.0);
        assert!((lv[1] / lv[0] - lv[2] / lv[1]).abs() < 1e-12);
    }

    #[test]
    fn summary_reports_failures() {
        let r = Report {
            experiment: Experiment::RigidBody,
            out_dir: PathBuf::from("x"),
            checks: vec![
                Check::new("a", true, String::new()),
                Check::new("b", false, String::new()),
            ],
            files: vec![],
        };
        assert_eq!(r.summary_line(), "rigid-body: FAIL (1/2 invariant checks; failed: b)");
    }
}
