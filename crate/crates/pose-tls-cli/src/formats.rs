//! On-disk formats: scenario and measurement files, solution reports,
//! Monte-Carlo summaries, run manifests, and the CSV writer.
//!
//! Everything structured is JSON (schemas under `schema/` at the crate
//! root). Matrices are flat row-major lists; 6x6 joint covariances order
//! the errors as `[delta_r; delta_b]`. CSV numbers use the shortest
//! decimal text that parses back to the identical binary64 value, with a
//! '.' separator and '\n' line endings.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pose_tls::geometry::{Mat3, Mat6, Vec3};
use pose_tls::simulate::{derive_counterpart, GivenSide, Scenario};
use pose_tls::solver::SolverDiagnostics;
use pose_tls::{CovarianceReport, NoiseModel, ObservationPair, Pose, Rotation, SolverConfig};

use crate::{CliError, Result};

pub fn vec3_to_array(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn vec3_from_array(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

pub fn mat3_row_major(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

pub fn mat3_from_row_major(a: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(a)
}

pub fn mat6_row_major(m: &Mat6) -> Vec<f64> {
    let mut out = Vec::with_capacity(36);
    for r in 0..6 {
        for c in 0..6 {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn mat6_from_row_major(a: &[f64]) -> Mat6 {
    Mat6::from_row_slice(a)
}

/// Reads and parses one JSON file; parse errors carry the path and the
/// offending line/column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

/// Writes one value as pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Shortest round-trip decimal text for one binary64 value: plain notation
/// at everyday magnitudes, scientific elsewhere. Both branches print the
/// fewest digits that parse back to the identical value.
pub fn csv_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-4..1e7).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes a comma-separated table with a header row and '\n' endings.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Scenario file: ground truth plus per-landmark noise models. Each
/// landmark gives exactly one side of the constraint `b = A r - p`; the
/// other side is derived. `covariances[i]` is the 36-value row-major 6x6
/// joint covariance of `[delta_r_i; delta_b_i]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub attitude: [f64; 9],
    pub translation_p: [f64; 3],
    pub landmarks: Vec<LandmarkEntry>,
    pub covariances: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_true: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_true: Option<[f64; 3]>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let attitude = Rotation::new(mat3_from_row_major(&self.attitude))
            .map_err(|e| CliError::Schema(format!("attitude: {e}")))?;
        let truth = Pose::new(attitude, vec3_from_array(&self.translation_p));
        if self.landmarks.len() < 3 {
            return Err(CliError::Schema(format!(
                "landmarks: a scenario needs at least three observation pairs, got {}",
                self.landmarks.len()
            )));
        }
        if self.covariances.len() != self.landmarks.len() {
            return Err(CliError::Schema(format!(
                "covariances: expected one entry per landmark ({}), got {}",
                self.landmarks.len(),
                self.covariances.len()
            )));
        }
        let mut b_true = Vec::with_capacity(self.landmarks.len());
        let mut r_true = Vec::with_capacity(self.landmarks.len());
        for (i, lm) in self.landmarks.iter().enumerate() {
            match (lm.b_true, lm.r_true) {
                (Some(b), None) => {
                    let b = vec3_from_array(&b);
                    r_true.push(derive_counterpart(&truth, b, GivenSide::BTrue));
                    b_true.push(b);
                }
                (None, Some(r)) => {
                    let r = vec3_from_array(&r);
                    b_true.push(derive_counterpart(&truth, r, GivenSide::RTrue));
                    r_true.push(r);
                }
                _ => {
                    return Err(CliError::Schema(format!(
                        "landmarks[{i}]: give exactly one of b_true or r_true"
                    )));
                }
            }
        }
        let mut noise = Vec::with_capacity(self.covariances.len());
        for (i, c) in self.covariances.iter().enumerate() {
            if c.len() != 36 {
                return Err(CliError::Schema(format!(
                    "covariances[{i}]: expected 36 row-major entries, got {}",
                    c.len()
                )));
            }
            noise.push(
                NoiseModel::from_joint(mat6_from_row_major(c))
                    .map_err(|e| CliError::Schema(format!("covariances[{i}]: {e}")))?,
            );
        }
        Ok(Scenario {
            name: self.name,
            truth,
            b_true,
            r_true,
            noise,
        })
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        ScenarioFile {
            name: scenario.name.clone(),
            attitude: mat3_row_major(scenario.truth.attitude.matrix()),
            translation_p: vec3_to_array(&scenario.truth.p),
            landmarks: scenario
                .b_true
                .iter()
                .map(|b| LandmarkEntry {
                    b_true: Some(vec3_to_array(b)),
                    r_true: None,
                })
                .collect(),
            covariances: scenario
                .noise
                .iter()
                .map(|n| mat6_row_major(&n.joint()))
                .collect(),
        }
    }
}

/// Measurement file: one noisy observation set, ready for estimation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFile {
    pub name: String,
    pub observations: Vec<MeasurementEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementEntry {
    pub r_tilde: [f64; 3],
    pub b_tilde: [f64; 3],
    pub covariance: Vec<f64>,
}

impl MeasurementFile {
    pub fn from_observations(name: &str, observations: &[ObservationPair]) -> Self {
        MeasurementFile {
            name: name.to_string(),
            observations: observations
                .iter()
                .map(|o| MeasurementEntry {
                    r_tilde: vec3_to_array(&o.r_tilde),
                    b_tilde: vec3_to_array(&o.b_tilde),
                    covariance: mat6_row_major(&o.noise.joint()),
                })
                .collect(),
        }
    }

    pub fn into_observations(self) -> Result<Vec<ObservationPair>> {
        if self.observations.len() < 3 {
            return Err(CliError::Schema(format!(
                "observations: estimation needs at least three pairs, got {}",
                self.observations.len()
            )));
        }
        let mut out = Vec::with_capacity(self.observations.len());
        for (i, entry) in self.observations.iter().enumerate() {
            if entry.covariance.len() != 36 {
                return Err(CliError::Schema(format!(
                    "observations[{i}].covariance: expected 36 row-major entries, got {}",
                    entry.covariance.len()
                )));
            }
            let noise = NoiseModel::from_joint(mat6_from_row_major(&entry.covariance))
                .map_err(|e| CliError::Schema(format!("observations[{i}].covariance: {e}")))?;
            out.push(
                ObservationPair::new(
                    vec3_from_array(&entry.r_tilde),
                    vec3_from_array(&entry.b_tilde),
                    noise,
                )
                .map_err(|e| CliError::Schema(format!("observations[{i}]: {e}")))?,
            );
        }
        Ok(out)
    }
}

/// Solver configuration file; omitted fields take the library defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfigFile {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub cost_decrease_required: bool,
    pub damping_halvings_max: usize,
}

impl Default for SolverConfigFile {
    fn default() -> Self {
        Self::from_config(&SolverConfig::default())
    }
}

impl SolverConfigFile {
    pub fn from_config(config: &SolverConfig) -> Self {
        SolverConfigFile {
            max_iterations: config.max_iterations,
            step_tolerance: config.step_tolerance,
            cost_decrease_required: config.cost_decrease_required,
            damping_halvings_max: config.damping_halvings_max,
        }
    }

    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            max_iterations: self.max_iterations,
            step_tolerance: self.step_tolerance,
            cost_decrease_required: self.cost_decrease_required,
            damping_halvings_max: self.damping_halvings_max,
        }
    }
}

/// Full covariance report in file form (all matrices row-major).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceReportFile {
    pub p_delta_alpha: [f64; 9],
    pub cov_p: [f64; 9],
    pub p_f: Vec<f64>,
    pub a_bar: [f64; 9],
    pub s_lambda: [f64; 9],
    pub per_observation: Vec<ObservationCovariancesFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservationCovariancesFile {
    pub b_hat: [f64; 3],
    pub r_hat: [f64; 3],
    pub cov_resid_b: [f64; 9],
    pub cov_resid_r: [f64; 9],
    pub p_b: [f64; 9],
    pub p_r: [f64; 9],
}

impl CovarianceReportFile {
    pub fn from_report(report: &CovarianceReport) -> Self {
        CovarianceReportFile {
            p_delta_alpha: mat3_row_major(&report.p_delta_alpha),
            cov_p: mat3_row_major(&report.cov_p),
            p_f: mat6_row_major(&report.p_f),
            a_bar: mat3_row_major(&report.a_bar),
            s_lambda: mat3_row_major(&report.s_lambda),
            per_observation: report
                .per_observation
                .iter()
                .map(|o| ObservationCovariancesFile {
                    b_hat: vec3_to_array(&o.b_hat),
                    r_hat: vec3_to_array(&o.r_hat),
                    cov_resid_b: mat3_row_major(&o.cov_resid_b),
                    cov_resid_r: mat3_row_major(&o.cov_resid_r),
                    p_b: mat3_row_major(&o.p_b),
                    p_r: mat3_row_major(&o.p_r),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub final_gradient_norm: f64,
    pub step_history: Vec<f64>,
    pub cost_history: Vec<f64>,
}

impl DiagnosticsFile {
    pub fn from_diagnostics(d: &SolverDiagnostics) -> Self {
        DiagnosticsFile {
            iterations: d.iterations,
            converged: d.converged,
            final_cost: d.final_cost,
            final_gradient_norm: d.final_gradient_norm,
            step_history: d.step_history.clone(),
            cost_history: d.cost_history.clone(),
        }
    }
}

/// Estimation report: the pose in every conventional reading plus the full
/// covariance report and solver diagnostics. `translation_p` satisfies
/// `b = A r - p`; `translation_t = -p` is the transform convention
/// `b = A r + t`. The 3-sigma entries are `3 * sqrt(diag)` of the attitude
/// (degrees) and translation (m) covariances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub attitude: [f64; 9],
    pub rpy_deg: [f64; 3],
    pub translation_p: [f64; 3],
    pub translation_t: [f64; 3],
    pub attitude_3sigma_deg: [f64; 3],
    pub translation_3sigma_m: [f64; 3],
    pub covariance: CovarianceReportFile,
    pub diagnostics: DiagnosticsFile,
}

/// Monte-Carlo summary: counts, empirical vs analytic covariances, and
/// per-component 3-sigma containment fractions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub scenario: String,
    pub trials: u64,
    pub seed: u64,
    pub divergence_count: u64,
    pub containment: ContainmentFile,
    pub empirical: EmpiricalFile,
    pub analytic_at_truth: CovarianceReportFile,
    pub analytic_at_estimate: CovarianceReportFile,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContainmentFile {
    pub delta_alpha: [f64; 3],
    pub delta_p: [f64; 3],
    pub per_observation: Vec<ObservationContainmentFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservationContainmentFile {
    pub b_estimate: [f64; 3],
    pub b_residual: [f64; 3],
    pub r_estimate: [f64; 3],
    pub r_residual: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalFile {
    pub delta_alpha: [f64; 9],
    pub delta_p: [f64; 9],
    pub per_observation: Vec<EmpiricalObservationFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalObservationFile {
    pub b_estimate: [f64; 9],
    pub b_residual: [f64; 9],
    pub r_estimate: [f64; 9],
    pub r_residual: [f64; 9],
}

/// Written alongside every output set: what ran, on which inputs, with
/// which seed/trials/configuration, producing which files. Everything but
/// `duration_seconds` is deterministic for identical inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub inputs: Vec<String>,
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub solver_config: SolverConfigFile,
    pub duration_seconds: f64,
    pub outputs: Vec<String>,
}
