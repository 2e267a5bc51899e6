//! The three file-producing subcommands. Each writes its outputs plus a
//! run manifest; everything except the manifest's duration field is
//! byte-deterministic for identical inputs.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pose_tls::covariance::covariance_report;
use pose_tls::geometry::{euler_zyx, Mat3};
use pose_tls::simulate::{
    reference_scenario, run_monte_carlo, sample_observations, stream_rng, MonteCarloReport,
    Scenario, TrialRecord,
};
use pose_tls::solver::solve_pose;

use crate::formats::{
    csv_number, read_json, vec3_to_array, write_csv, write_json, ContainmentFile,
    CovarianceReportFile, DiagnosticsFile, EmpiricalFile, EmpiricalObservationFile, EstimateReport,
    MeasurementFile, MonteCarloSummary, ObservationContainmentFile, RunManifest, ScenarioFile,
    SolverConfigFile,
};
use crate::{CliError, Result};

const RAD_TO_DEG: f64 = 180.0 / PI;

/// Scenario argument: a file path, or the name of a built-in scenario.
pub enum ScenarioSource {
    Builtin,
    File(PathBuf),
}

impl ScenarioSource {
    pub fn parse(arg: &str) -> Self {
        if arg == "paper" {
            ScenarioSource::Builtin
        } else {
            ScenarioSource::File(PathBuf::from(arg))
        }
    }

    /// Loads the scenario and returns it with its manifest input label.
    pub fn load(&self) -> Result<(Scenario, String)> {
        match self {
            ScenarioSource::Builtin => Ok((reference_scenario(), "builtin:paper".to_string())),
            ScenarioSource::File(path) => {
                let file: ScenarioFile = read_json(path)?;
                Ok((file.into_scenario()?, path.display().to_string()))
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<(SolverConfigFile, Option<String>)> {
    match path {
        None => Ok((SolverConfigFile::default(), None)),
        Some(p) => Ok((read_json(p)?, Some(p.display().to_string()))),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Draws one noisy measurement set from the scenario and writes it.
pub fn cmd_simulate(scenario_arg: &str, seed: u64, out: &Path) -> Result<()> {
    let start = Instant::now();
    let (scenario, input) = ScenarioSource::parse(scenario_arg).load()?;
    let mut rng = stream_rng(seed, 0);
    let observations = sample_observations(&scenario, &mut rng)?;
    let file = MeasurementFile::from_observations(&scenario.name, &observations);
    ensure_parent(out)?;
    write_json(out, &file)?;
    write_json(
        &manifest_path(out),
        &RunManifest {
            command: "simulate".to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: vec![input],
            scenario: Some(scenario.name),
            seed: Some(seed),
            trials: None,
            solver_config: SolverConfigFile::default(),
            duration_seconds: start.elapsed().as_secs_f64(),
            outputs: vec![file_name(out)],
        },
    )
}

/// Estimates the pose from a measurement file and writes the full report.
pub fn cmd_estimate(measurements: &Path, config_path: Option<&Path>, out: &Path) -> Result<()> {
    let start = Instant::now();
    let file: MeasurementFile = read_json(measurements)?;
    let name = file.name.clone();
    let observations = file.into_observations()?;
    let (config_file, config_input) = load_config(config_path)?;
    let (pose, diagnostics) = solve_pose(&observations, &config_file.to_config())?;
    let report = covariance_report(&pose, &observations)?;

    let (roll, pitch, yaw) = euler_zyx(&pose.attitude);
    let sigma3 = |m: &Mat3, k: usize| 3.0 * m[(k, k)].sqrt();
    let estimate = EstimateReport {
        attitude: crate::formats::mat3_row_major(pose.attitude.matrix()),
        rpy_deg: [roll * RAD_TO_DEG, pitch * RAD_TO_DEG, yaw * RAD_TO_DEG],
        translation_p: vec3_to_array(&pose.p),
        translation_t: vec3_to_array(&pose.t()),
        attitude_3sigma_deg: [
            sigma3(&report.p_delta_alpha, 0) * RAD_TO_DEG,
            sigma3(&report.p_delta_alpha, 1) * RAD_TO_DEG,
            sigma3(&report.p_delta_alpha, 2) * RAD_TO_DEG,
        ],
        translation_3sigma_m: [
            sigma3(&report.cov_p, 0),
            sigma3(&report.cov_p, 1),
            sigma3(&report.cov_p, 2),
        ],
        covariance: CovarianceReportFile::from_report(&report),
        diagnostics: DiagnosticsFile::from_diagnostics(&diagnostics),
    };
    ensure_parent(out)?;
    write_json(out, &estimate)?;

    let mut inputs = vec![measurements.display().to_string()];
    inputs.extend(config_input);
    write_json(
        &manifest_path(out),
        &RunManifest {
            command: "estimate".to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            scenario: Some(name),
            seed: None,
            trials: None,
            solver_config: config_file,
            duration_seconds: start.elapsed().as_secs_f64(),
            outputs: vec![file_name(out)],
        },
    )
}

fn push_vec3(row: &mut Vec<String>, v: &pose_tls::Vec3) {
    row.push(csv_number(v.x));
    row.push(csv_number(v.y));
    row.push(csv_number(v.z));
}

fn trials_csv_header(n: usize) -> Vec<String> {
    let mut header = vec![
        "trial".to_string(),
        "droll_deg".to_string(),
        "dpitch_deg".to_string(),
        "dyaw_deg".to_string(),
        "dpx_m".to_string(),
        "dpy_m".to_string(),
        "dpz_m".to_string(),
    ];
    for i in 1..=n {
        for (kind, axes) in [
            ("b_est", "m"),
            ("b_res", "m"),
            ("r_est", "m"),
            ("r_res", "m"),
        ] {
            for axis in ["x", "y", "z"] {
                header.push(format!("obs{i}_{kind}_{axis}_{axes}"));
            }
        }
    }
    header
}

fn trials_csv_row(record: &TrialRecord) -> Vec<String> {
    let mut row = vec![record.trial.to_string()];
    push_vec3(&mut row, &record.delta_rpy_deg);
    push_vec3(&mut row, &record.delta_p);
    for i in 0..record.b_estimate_errors.len() {
        push_vec3(&mut row, &record.b_estimate_errors[i]);
        push_vec3(&mut row, &record.b_residuals[i]);
        push_vec3(&mut row, &record.r_estimate_errors[i]);
        push_vec3(&mut row, &record.r_residuals[i]);
    }
    row
}

/// One error-trace figure table: the per-trial error components next to
/// the constant analytic 3-sigma bound for each component.
fn figure_csv(
    path: &Path,
    component_names: [&str; 3],
    sigma_names: [&str; 3],
    errors: impl Iterator<Item = (u64, pose_tls::Vec3)>,
    analytic: &Mat3,
) -> Result<()> {
    let mut header = vec!["trial".to_string()];
    header.extend(component_names.iter().map(|s| s.to_string()));
    header.extend(sigma_names.iter().map(|s| s.to_string()));
    let sigma3: Vec<String> = (0..3)
        .map(|k| csv_number(3.0 * analytic[(k, k)].sqrt()))
        .collect();
    let rows: Vec<Vec<String>> = errors
        .map(|(trial, e)| {
            let mut row = vec![trial.to_string()];
            push_vec3(&mut row, &e);
            row.extend(sigma3.iter().cloned());
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

fn summary_from_report(scenario_name: &str, report: &MonteCarloReport) -> MonteCarloSummary {
    use crate::formats::mat3_row_major;
    MonteCarloSummary {
        scenario: scenario_name.to_string(),
        trials: report.trials,
        seed: report.seed,
        divergence_count: report.divergence_count,
        containment: ContainmentFile {
            delta_alpha: report.containment.delta_alpha,
            delta_p: report.containment.delta_p,
            per_observation: report
                .containment
                .per_observation
                .iter()
                .map(|o| ObservationContainmentFile {
                    b_estimate: o.b_estimate,
                    b_residual: o.b_residual,
                    r_estimate: o.r_estimate,
                    r_residual: o.r_residual,
                })
                .collect(),
        },
        empirical: EmpiricalFile {
            delta_alpha: mat3_row_major(&report.empirical.delta_alpha),
            delta_p: mat3_row_major(&report.empirical.delta_p),
            per_observation: report
                .empirical
                .per_observation
                .iter()
                .map(|o| EmpiricalObservationFile {
                    b_estimate: mat3_row_major(&o.b_estimate),
                    b_residual: mat3_row_major(&o.b_residual),
                    r_estimate: mat3_row_major(&o.r_estimate),
                    r_residual: mat3_row_major(&o.r_residual),
                })
                .collect(),
        },
        analytic_at_truth: CovarianceReportFile::from_report(&report.analytic_at_truth),
        analytic_at_estimate: CovarianceReportFile::from_report(&report.analytic_at_estimate),
    }
}

/// Runs the Monte-Carlo study and writes the per-trial table, the summary,
/// the per-figure error-trace tables, and the manifest into `out_dir`
/// (created if missing).
pub fn cmd_montecarlo(
    scenario_arg: &str,
    trials: u64,
    seed: u64,
    config_path: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let start = Instant::now();
    let (scenario, input) = ScenarioSource::parse(scenario_arg).load()?;
    let (config_file, config_input) = load_config(config_path)?;
    let report = run_monte_carlo(&scenario, trials, seed, &config_file.to_config())?;

    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str| -> PathBuf {
        outputs.push(name.to_string());
        out_dir.join(name)
    };

    let rows: Vec<Vec<String>> = report.records.iter().map(trials_csv_row).collect();
    write_csv(&emit("trials.csv"), &trials_csv_header(scenario.n()), &rows)?;

    let at = &report.analytic_at_truth;
    figure_csv(
        &emit("attitude_errors.csv"),
        ["droll_deg", "dpitch_deg", "dyaw_deg"],
        ["sigma3_roll_deg", "sigma3_pitch_deg", "sigma3_yaw_deg"],
        report.records.iter().map(|r| (r.trial, r.delta_rpy_deg)),
        &(at.p_delta_alpha * RAD_TO_DEG * RAD_TO_DEG),
    )?;
    figure_csv(
        &emit("translation_errors.csv"),
        ["dpx_m", "dpy_m", "dpz_m"],
        ["sigma3_px_m", "sigma3_py_m", "sigma3_pz_m"],
        report.records.iter().map(|r| (r.trial, r.delta_p)),
        &at.cov_p,
    )?;
    for i in 0..scenario.n() {
        let obs = &at.per_observation[i];
        let comp = ["dx_m", "dy_m", "dz_m"];
        let sig = ["sigma3_x_m", "sigma3_y_m", "sigma3_z_m"];
        figure_csv(
            &emit(&format!("obs{}_b_estimate_errors.csv", i + 1)),
            comp,
            sig,
            report
                .records
                .iter()
                .map(|r| (r.trial, r.b_estimate_errors[i])),
            &obs.p_b,
        )?;
        figure_csv(
            &emit(&format!("obs{}_b_residual_errors.csv", i + 1)),
            comp,
            sig,
            report.records.iter().map(|r| (r.trial, r.b_residuals[i])),
            &obs.cov_resid_b,
        )?;
        figure_csv(
            &emit(&format!("obs{}_r_estimate_errors.csv", i + 1)),
            comp,
            sig,
            report
                .records
                .iter()
                .map(|r| (r.trial, r.r_estimate_errors[i])),
            &obs.p_r,
        )?;
        figure_csv(
            &emit(&format!("obs{}_r_residual_errors.csv", i + 1)),
            comp,
            sig,
            report.records.iter().map(|r| (r.trial, r.r_residuals[i])),
            &obs.cov_resid_r,
        )?;
    }

    write_json(
        &emit("summary.json"),
        &summary_from_report(&scenario.name, &report),
    )?;

    let mut inputs = vec![input];
    inputs.extend(config_input);
    outputs.push("manifest.json".to_string());
    outputs.sort();
    write_json(
        &out_dir.join("manifest.json"),
        &RunManifest {
            command: "montecarlo".to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            scenario: Some(scenario.name),
            seed: Some(seed),
            trials: Some(trials),
            solver_config: config_file,
            duration_seconds: start.elapsed().as_secs_f64(),
            outputs,
        },
    )
}
