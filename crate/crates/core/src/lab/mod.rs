//! Experiment configuration, drivers, persistence, and the acceptance criteria.

pub mod config;
pub mod criteria;
pub mod output;
pub mod runs;

use std::path::Path;

pub use config::{initial_field, perturbation, ExperimentConfig, ExperimentKind, PerturbationShape};
pub use output::{code_version, write_csv, write_summary, ExperimentReport, MEASURED_NOTE, SUMMARY_KEYS};
pub use runs::{
    audit_grid, audit_point, d2_grid, simulate_pair, simulate_single, soliton_table, spectral_audit, AuditPoint, PairRun,
    SingleRun, MONOTONE_HEADER, PAIR_TRAJECTORY_HEADER, SINGLE_TRAJECTORY_HEADER,
};

use crate::error::Result;
use crate::functionals::AUDIT_HEADER;
use crate::numerics::write_snapshot;
use crate::spectral::SPECTRAL_HEADER;

/// Runs the experiment named by `cfg.kind`, writing its files under `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.kind {
        ExperimentKind::Single => run_single_stability(cfg),
        ExperimentKind::Pair => run_pair_stability(cfg),
        ExperimentKind::Monotone => run_monotone(cfg),
        ExperimentKind::SpectralAudit => run_spectral_audit(cfg),
        ExperimentKind::SolitonTable => run_soliton_table(cfg),
    }
}

fn write_single(dir: &Path, run: &SingleRun, suffix: &str, snapshots: bool, report: &mut ExperimentReport) -> Result<()> {
    let track = dir.join(format!("track{suffix}.csv"));
    write_csv(&track, &run.track.csv_header(), &run.track.csv_rows())?;
    let traj = dir.join(format!("trajectory{suffix}.csv"));
    write_csv(&traj, &SINGLE_TRAJECTORY_HEADER, &run.trajectory_rows())?;
    report.files.extend([track, traj]);
    if snapshots {
        for (name, f) in [("initial", &run.initial), ("final", &run.final_state)] {
            let path = dir.join(format!("{name}{suffix}.bin"));
            write_snapshot(&path, f)?;
            report.files.push(path);
        }
    }
    Ok(())
}

/// Perturbed single-wave run, and the `δ/2` companion when `scaling_check` is set.
pub fn run_single_stability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.out_dir.as_path();
    output::ensure_dir(dir)?;
    let run = simulate_single(cfg)?;
    let mut report = ExperimentReport::new(cfg.kind);
    let drift = run.conserved_drift();
    let eps_h1_sup = run.track.eps_h1.iter().fold(0.0, |a: f64, &b| a.max(b));
    report.scalar("sup_orbit_distance", run.sup_distance());
    report.scalar("param_drift", run.param_drift());
    report.scalar("eps_h1_sup", eps_h1_sup);
    report.scalar("mass_drift", drift.mass);
    report.scalar("momentum_drift", drift.momentum);
    report.scalar("energy_drift", drift.energy);
    report.scalar("dt", run.evolve.effective_dt());
    report.scalar("n_points", run.grid.n_points() as f64);
    report.scalar("half_length", run.grid.half_length());
    if cfg.delta > 0.0 {
        report.check("sup_distance_le_10_delta", run.sup_distance() <= 10.0 * cfg.delta);
        report.constant("C_I_eps0_over_delta", run.track.eps_h1[0] / cfg.delta);
        if eps_h1_sup > 0.0 {
            report.constant("K_drift_over_eps_sq", run.param_drift() / (eps_h1_sup * eps_h1_sup));
        }
    } else {
        report.check("sup_distance_below_1e-5", run.sup_distance() < 1e-5);
    }
    write_single(dir, &run, "", cfg.snapshots, &mut report)?;
    if cfg.scaling_check && cfg.delta > 0.0 {
        let half_cfg = ExperimentConfig { delta: cfg.delta / 2.0, ..cfg.clone() };
        let half = simulate_single(&half_cfg)?;
        let ratio = run.param_drift() / half.param_drift();
        report.scalar("sup_orbit_distance_half", half.sup_distance());
        report.scalar("param_drift_half", half.param_drift());
        report.scalar("drift_ratio", ratio);
        report.check("drift_ratio_in_3_5", (3.0..=5.0).contains(&ratio));
        write_single(dir, &half, "_half", cfg.snapshots, &mut report)?;
    }
    write_summary(dir, cfg, &mut report)?;
    Ok(report)
}

/// Constants a pair run is checked against: frozen ones from `cfg`, else fitted here.
struct PairConstants {
    drift: f64,
    monotone: f64,
    window: f64,
}

fn pair_constants(cfg: &ExperimentConfig, run: &PairRun, report: &mut ExperimentReport) -> Result<PairConstants> {
    let fitted_monotone = run.monotone_series()?.fitted_constant();
    report.constant("monotone_C_fitted", fitted_monotone);
    report.constant("drift_K_fitted", run.fitted_drift_constant());
    report.constant("window_K_fitted", run.fitted_window_constant());
    let c = PairConstants {
        drift: cfg.drift_constant.unwrap_or_else(|| run.fitted_drift_constant()),
        monotone: cfg.monotone_constant.unwrap_or(fitted_monotone),
        window: cfg.window_constant.unwrap_or_else(|| run.fitted_window_constant()),
    };
    report.constant("drift_K_used", c.drift);
    report.constant("monotone_C_used", c.monotone);
    report.constant("window_K_used", c.window);
    Ok(c)
}

fn monotone_checks(run: &PairRun, k: &PairConstants, report: &mut ExperimentReport) -> Result<()> {
    let series = run.monotone_series()?;
    report.scalar("monotone_max_excursion", series.max_excursion());
    report.scalar("exchange_error", run.exchange_error());
    report.check("monotone_bound_holds", series.holds(k.monotone));
    report.check("exchange_identity_1e-9", run.exchange_error() <= 1e-9);
    report.check("local_mass_window_bound", run.window_holds(k.window));
    if run.delta == 0.0 {
        report.check("unperturbed_excursion_below_1e-6", series.max_excursion() < 1e-6);
    }
    Ok(())
}

fn write_pair(dir: &Path, run: &PairRun, constant: f64, report: &mut ExperimentReport) -> Result<()> {
    let track = dir.join("track.csv");
    write_csv(&track, &run.track.csv_header(), &run.track.csv_rows())?;
    let traj = dir.join("trajectory.csv");
    write_csv(&traj, &PAIR_TRAJECTORY_HEADER, &run.trajectory_rows())?;
    let mono = dir.join("monotone.csv");
    write_csv(&mono, &MONOTONE_HEADER, &run.monotone_rows(constant)?)?;
    report.files.extend([track, traj, mono]);
    Ok(())
}

/// Perturbed two-wave run with distance, separation, drift and monotonicity checks.
pub fn run_pair_stability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.out_dir.as_path();
    output::ensure_dir(dir)?;
    let run = simulate_pair(cfg)?;
    let mut report = ExperimentReport::new(cfg.kind);
    let th = run.speeds.thresholds;
    let (dm, dp) = run.mp_drift();
    report.scalar("separation", run.separation());
    report.scalar("sigma", run.speeds.speeds.sigma);
    report.scalar("theta0", th.theta0);
    report.scalar("theta1", th.theta1);
    report.scalar("theta2", th.theta2);
    report.scalar("theta3", th.theta3);
    report.scalar("sup_family_distance", run.sup_family_distance());
    report.scalar("distance_bound", run.distance_bound());
    report.scalar("separation_slope", run.separation_slope(1.0));
    report.scalar("eps_sq_sup", run.eps_sq_sup());
    report.scalar("soliton_mass_drift", dm);
    report.scalar("soliton_momentum_drift", dp);
    report.scalar("drift_driver", run.drift_driver());
    let k = pair_constants(cfg, &run, &mut report)?;
    report.check("speed_conditions", run.speeds.all_pass());
    report.check("distance_within_bound", run.sup_family_distance() <= run.distance_bound());
    report.check("separation_slope_ge_theta0", run.separation_slope(1.0) >= th.theta0);
    report.check("soliton_drift_bound", run.drift_holds(k.drift));
    monotone_checks(&run, &k, &mut report)?;
    write_pair(dir, &run, k.monotone, &mut report)?;
    write_summary(dir, cfg, &mut report)?;
    Ok(report)
}

/// Pair run reporting only the localized functionals.
pub fn run_monotone(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.out_dir.as_path();
    output::ensure_dir(dir)?;
    let run = simulate_pair(cfg)?;
    let mut report = ExperimentReport::new(cfg.kind);
    let k = pair_constants(cfg, &run, &mut report)?;
    monotone_checks(&run, &k, &mut report)?;
    let mono = dir.join("monotone.csv");
    write_csv(&mono, &MONOTONE_HEADER, &run.monotone_rows(k.monotone)?)?;
    report.files.push(mono);
    write_summary(dir, cfg, &mut report)?;
    Ok(report)
}

fn status(pass: bool, error: &Option<String>) -> String {
    match error {
        Some(e) => e.clone(),
        None if pass => "pass".into(),
        None => "fail".into(),
    }
}

/// Spectral report per audit point; failing points are flagged and the audit continues.
pub fn run_spectral_audit(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.out_dir.as_path();
    output::ensure_dir(dir)?;
    let points = spectral_audit(cfg);
    let mut report = ExperimentReport::new(cfg.kind);
    let mut header: Vec<&str> = SPECTRAL_HEADER.to_vec();
    header.extend(["det_d2", "n_points", "status"]);
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut row: Vec<String> = match &p.report {
                Some(r) => r.csv_row().iter().map(f64::to_string).collect(),
                None => {
                    let mut v = vec![p.omega.to_string(), p.c.to_string()];
                    v.resize(SPECTRAL_HEADER.len(), "NaN".into());
                    v
                }
            };
            row.push(p.det_d2.map_or("NaN".into(), |d| d.to_string()));
            row.push(p.n_points.map_or("NaN".into(), |n| n.to_string()));
            row.push(status(p.passes(), &p.error));
            row
        })
        .collect();
    for p in &points {
        report.check(&format!("point_omega={}_c={}", p.omega, p.c), p.passes());
    }
    report.scalar("points", points.len() as f64);
    report.scalar("points_passing", points.iter().filter(|p| p.passes()).count() as f64);
    let path = dir.join("spectral.csv");
    output::write_text_csv(&path, &header, &rows)?;
    report.files.push(path);
    write_summary(dir, cfg, &mut report)?;
    Ok(report)
}

/// `M, P, E, J, K` and `d''` per audit point.
pub fn run_soliton_table(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let dir = cfg.out_dir.as_path();
    output::ensure_dir(dir)?;
    let mut report = ExperimentReport::new(cfg.kind);
    let mut header: Vec<&str> = AUDIT_HEADER.to_vec();
    header.push("status");
    let rows: Vec<Vec<String>> = soliton_table(cfg)
        .into_iter()
        .map(|row| match row {
            Ok(r) => {
                report.check(&format!("det_negative_omega={}_c={}", r.omega, r.c), r.det < 0.0);
                let mut v: Vec<String> = r.values().iter().map(f64::to_string).collect();
                v.push("ok".into());
                v
            }
            Err((w, c, e)) => {
                report.check(&format!("det_negative_omega={w}_c={c}"), false);
                let mut v = vec![w.to_string(), c.to_string()];
                v.resize(AUDIT_HEADER.len(), "NaN".into());
                v.push(e);
                v
            }
        })
        .collect();
    let path = dir.join("soliton_table.csv");
    output::write_text_csv(&path, &header, &rows)?;
    report.files.push(path);
    write_summary(dir, cfg, &mut report)?;
    Ok(report)
}
