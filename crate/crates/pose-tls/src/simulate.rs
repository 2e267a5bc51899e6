//! Scenario construction, correlated noise sampling, and the Monte-Carlo
//! engine that validates the analytic covariances against empirical ones.

use nalgebra::{Cholesky, Quaternion, UnitQuaternion};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::covariance::{covariance_report, estimate_observations, CovarianceReport};
use crate::geometry::{euler_zyx, project_to_rotation, so3_log, Mat3, Mat6, Rotation, Vec3, Vec6};
use crate::model::{NoiseModel, ObservationPair, Pose};
use crate::solver::{solve_pose, SolverConfig};
use crate::{Error, Result};

/// Ground truth for simulation: a pose, true landmark vectors in both
/// frames, and one noise model per pair.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub truth: Pose,
    pub b_true: Vec<Vec3>,
    pub r_true: Vec<Vec3>,
    pub noise: Vec<NoiseModel>,
}

/// Which side of the sensor constraint a landmark list specifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GivenSide {
    BTrue,
    RTrue,
}

/// Completes one landmark through the constraint `b = A r - p`: given `b`
/// returns `r = A^T (b + p)`, given `r` returns `b = A r - p`.
pub fn derive_counterpart(truth: &Pose, v: Vec3, which: GivenSide) -> Vec3 {
    match which {
        GivenSide::BTrue => truth.attitude.transpose() * (v + truth.p),
        GivenSide::RTrue => truth.attitude * v - truth.p,
    }
}

impl Scenario {
    /// Builds a scenario from body-frame landmarks; reference-frame vectors
    /// are derived through the constraint.
    pub fn from_b_landmarks(
        name: impl Into<String>,
        truth: Pose,
        b_true: Vec<Vec3>,
        noise: Vec<NoiseModel>,
    ) -> Result<Self> {
        let r_true = b_true
            .iter()
            .map(|b| derive_counterpart(&truth, *b, GivenSide::BTrue))
            .collect();
        Self::validated(name.into(), truth, b_true, r_true, noise)
    }

    /// Builds a scenario from reference-frame landmarks; body-frame vectors
    /// are derived through the constraint.
    pub fn from_r_landmarks(
        name: impl Into<String>,
        truth: Pose,
        r_true: Vec<Vec3>,
        noise: Vec<NoiseModel>,
    ) -> Result<Self> {
        let b_true = r_true
            .iter()
            .map(|r| derive_counterpart(&truth, *r, GivenSide::RTrue))
            .collect();
        Self::validated(name.into(), truth, b_true, r_true, noise)
    }

    fn validated(
        name: String,
        truth: Pose,
        b_true: Vec<Vec3>,
        r_true: Vec<Vec3>,
        noise: Vec<NoiseModel>,
    ) -> Result<Self> {
        if b_true.len() < 3 {
            return Err(Error::InvalidInput(
                "a scenario needs at least three observation pairs".into(),
            ));
        }
        if b_true.len() != noise.len() {
            return Err(Error::InvalidInput(
                "landmark and noise lists differ in length".into(),
            ));
        }
        Ok(Self {
            name,
            truth,
            b_true,
            r_true,
            noise,
        })
    }

    pub fn n(&self) -> usize {
        self.b_true.len()
    }

    /// The noise-free observation set (measured = true).
    pub fn observations_noiseless(&self) -> Vec<ObservationPair> {
        self.r_true
            .iter()
            .zip(&self.b_true)
            .zip(&self.noise)
            .map(|((r, b), noise)| ObservationPair {
                r_tilde: *r,
                b_tilde: *b,
                noise: noise.clone(),
            })
            .collect()
    }
}

fn splitmix_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn splitmix(x: u64) -> u64 {
    splitmix_mix(x.wrapping_add(0x9E37_79B9_7F4A_7C15))
}

/// Deterministic substream generator: mixes `(seed, stream)` into a
/// 256-bit ChaCha key with a splitmix64 chain. The scheme is fixed here so
/// identical inputs give identical draws on every platform and release;
/// distinct trials get statistically independent streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut state = splitmix(seed) ^ splitmix(stream ^ 0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        chunk.copy_from_slice(&splitmix_mix(state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Draws one correlated error pair `(delta_r, delta_b)`: `z ~ N(0, I_6)`
/// colored by the lower Cholesky factor of the joint covariance.
pub fn sample_noise<R: Rng>(noise: &NoiseModel, rng: &mut R) -> Result<(Vec3, Vec3)> {
    let chol = Cholesky::new(noise.joint()).ok_or_else(|| {
        Error::InvalidNoiseModel("joint covariance is not positive definite".into())
    })?;
    let mut z = Vec6::zeros();
    for i in 0..6 {
        z[i] = rng.sample(StandardNormal);
    }
    let s = chol.l() * z;
    Ok((Vec3::new(s[0], s[1], s[2]), Vec3::new(s[3], s[4], s[5])))
}

/// Draws a full measured observation set for the scenario.
pub fn sample_observations<R: Rng>(
    scenario: &Scenario,
    rng: &mut R,
) -> Result<Vec<ObservationPair>> {
    let mut out = Vec::with_capacity(scenario.n());
    for ((r, b), noise) in scenario
        .r_true
        .iter()
        .zip(&scenario.b_true)
        .zip(&scenario.noise)
    {
        let (dr, db) = sample_noise(noise, rng)?;
        out.push(ObservationPair {
            r_tilde: r + dr,
            b_tilde: b + db,
            noise: noise.clone(),
        });
    }
    Ok(out)
}

/// One Monte-Carlo trial's error record. Errors compare against truth,
/// residuals against the measured values; both are zeroed when the trial
/// diverged (`converged = false`) and excluded from all statistics.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub trial: u64,
    pub converged: bool,
    /// Attitude error in the tangent chart: `delta_alpha = -log(A_hat A^T)`.
    pub delta_alpha: Vec3,
    /// The same attitude error as roll/pitch/yaw of the error rotation, degrees.
    pub delta_rpy_deg: Vec3,
    /// Translation error `p_hat - p` (m).
    pub delta_p: Vec3,
    /// Per observation: `b_hat - b_true`.
    pub b_estimate_errors: Vec<Vec3>,
    /// Per observation: `b_hat - b_tilde`.
    pub b_residuals: Vec<Vec3>,
    /// Per observation: `r_hat - r_true`.
    pub r_estimate_errors: Vec<Vec3>,
    /// Per observation: `r_hat - r_tilde`.
    pub r_residuals: Vec<Vec3>,
}

/// Empirical covariances of one observation's reconstruction errors.
#[derive(Clone, Copy, Debug)]
pub struct EmpiricalObservation {
    pub b_estimate: Mat3,
    pub b_residual: Mat3,
    pub r_estimate: Mat3,
    pub r_residual: Mat3,
}

/// Sample covariances over the convergent trials.
#[derive(Clone, Debug)]
pub struct EmpiricalCovariances {
    pub delta_alpha: Mat3,
    pub delta_p: Mat3,
    pub per_observation: Vec<EmpiricalObservation>,
}

/// 3-sigma containment fractions per scalar component, against the
/// truth-evaluated analytic diagonals.
#[derive(Clone, Debug)]
pub struct ContainmentFractions {
    pub delta_alpha: [f64; 3],
    pub delta_p: [f64; 3],
    pub per_observation: Vec<ObservationContainment>,
}

#[derive(Clone, Copy, Debug)]
pub struct ObservationContainment {
    pub b_estimate: [f64; 3],
    pub b_residual: [f64; 3],
    pub r_estimate: [f64; 3],
    pub r_residual: [f64; 3],
}

/// Full Monte-Carlo result: per-trial records, empirical covariances,
/// analytic covariances at truth and at the mean estimate, containment.
#[derive(Clone, Debug)]
pub struct MonteCarloReport {
    pub trials: u64,
    pub seed: u64,
    pub divergence_count: u64,
    pub records: Vec<TrialRecord>,
    pub empirical: EmpiricalCovariances,
    pub analytic_at_truth: CovarianceReport,
    pub analytic_at_estimate: CovarianceReport,
    pub containment: ContainmentFractions,
}

/// Mean-subtracted sample covariance with the N-1 denominator.
fn sample_covariance(samples: &[Vec3]) -> Mat3 {
    if samples.len() < 2 {
        return Mat3::zeros();
    }
    let mean: Vec3 = samples.iter().sum::<Vec3>() / samples.len() as f64;
    let mut cov = Mat3::zeros();
    for s in samples {
        let d = s - mean;
        cov += d * d.transpose();
    }
    cov / (samples.len() as f64 - 1.0)
}

/// Per-component containment: the fraction of samples with
/// `|x_k| <= 3 sqrt(cov_kk)`, counted separately for k = 0, 1, 2.
fn containment3(samples: &[Vec3], cov: &Mat3) -> [f64; 3] {
    let n = samples.len().max(1) as f64;
    let mut frac = [0.0; 3];
    for k in 0..3 {
        let bound = 3.0 * cov[(k, k)].max(0.0).sqrt();
        let inside = samples.iter().filter(|s| s[k].abs() <= bound).count();
        frac[k] = inside as f64 / n;
    }
    frac
}

/// Runs `trials` independent noise draws through the solver and compares
/// empirical error statistics with the analytic covariances. Trial `t`
/// draws from `stream_rng(seed, t)`, so the report is deterministic for a
/// fixed `(scenario, trials, seed, config)` regardless of scheduling.
/// Divergent trials (solver failure or no convergence) are counted and
/// excluded from the statistics, never silently dropped; a run with no
/// convergent trial at all is an error. With a single convergent trial the
/// records and containment are still meaningful, but the sample
/// covariances stay zero (they need two samples).
pub fn run_monte_carlo(
    scenario: &Scenario,
    trials: u64,
    seed: u64,
    config: &SolverConfig,
) -> Result<MonteCarloReport> {
    let n = scenario.n();
    let noiseless = scenario.observations_noiseless();
    let analytic_at_truth = covariance_report(&scenario.truth, &noiseless)?;

    let mut records = Vec::with_capacity(trials as usize);
    let mut divergence_count = 0u64;
    let mut attitude_sum = Mat3::zeros();
    let mut p_sum = Vec3::zeros();

    for trial in 0..trials {
        let mut rng = stream_rng(seed, trial);
        let observations = sample_observations(scenario, &mut rng)?;
        let solved = solve_pose(&observations, config);
        let record = match solved {
            Ok((pose, diag)) if diag.converged => {
                let error_rotation = pose.attitude * scenario.truth.attitude.transpose();
                let delta_alpha = -so3_log(&error_rotation);
                let (roll, pitch, yaw) = euler_zyx(&error_rotation);
                let delta_rpy_deg =
                    Vec3::new(roll.to_degrees(), pitch.to_degrees(), yaw.to_degrees());
                let estimates = estimate_observations(&pose, &observations)?;
                let mut b_estimate_errors = Vec::with_capacity(n);
                let mut b_residuals = Vec::with_capacity(n);
                let mut r_estimate_errors = Vec::with_capacity(n);
                let mut r_residuals = Vec::with_capacity(n);
                for (i, (b_hat, r_hat)) in estimates.iter().enumerate() {
                    b_estimate_errors.push(b_hat - scenario.b_true[i]);
                    b_residuals.push(b_hat - observations[i].b_tilde);
                    r_estimate_errors.push(r_hat - scenario.r_true[i]);
                    r_residuals.push(r_hat - observations[i].r_tilde);
                }
                attitude_sum += pose.attitude.matrix();
                p_sum += pose.p;
                TrialRecord {
                    trial,
                    converged: true,
                    delta_alpha,
                    delta_rpy_deg,
                    delta_p: pose.p - scenario.truth.p,
                    b_estimate_errors,
                    b_residuals,
                    r_estimate_errors,
                    r_residuals,
                }
            }
            _ => {
                divergence_count += 1;
                TrialRecord {
                    trial,
                    converged: false,
                    delta_alpha: Vec3::zeros(),
                    delta_rpy_deg: Vec3::zeros(),
                    delta_p: Vec3::zeros(),
                    b_estimate_errors: vec![Vec3::zeros(); n],
                    b_residuals: vec![Vec3::zeros(); n],
                    r_estimate_errors: vec![Vec3::zeros(); n],
                    r_residuals: vec![Vec3::zeros(); n],
                }
            }
        };
        records.push(record);
    }

    let convergent: Vec<&TrialRecord> = records.iter().filter(|r| r.converged).collect();
    if convergent.is_empty() {
        return Err(Error::DegenerateGeometry(
            "no convergent trials; nothing to report".into(),
        ));
    }

    // Analytic covariances at the mean estimate (chordal mean attitude
    // projected back to SO(3), arithmetic mean translation), with the true
    // landmark vectors: this isolates evaluation-point sensitivity from
    // measurement-replacement effects.
    let count = convergent.len() as f64;
    let mean_attitude = project_to_rotation(&(attitude_sum / count))?;
    let mean_pose = Pose {
        attitude: mean_attitude,
        p: p_sum / count,
    };
    let analytic_at_estimate = covariance_report(&mean_pose, &noiseless)?;

    let collect = |f: &dyn Fn(&TrialRecord) -> Vec3| -> Vec<Vec3> {
        convergent.iter().map(|r| f(r)).collect()
    };
    let alphas = collect(&|r| r.delta_alpha);
    let dps = collect(&|r| r.delta_p);

    let mut per_observation = Vec::with_capacity(n);
    let mut containment_obs = Vec::with_capacity(n);
    for i in 0..n {
        let be = collect(&|r| r.b_estimate_errors[i]);
        let br = collect(&|r| r.b_residuals[i]);
        let re = collect(&|r| r.r_estimate_errors[i]);
        let rr = collect(&|r| r.r_residuals[i]);
        let a = &analytic_at_truth.per_observation[i];
        containment_obs.push(ObservationContainment {
            b_estimate: containment3(&be, &a.p_b),
            b_residual: containment3(&br, &a.cov_resid_b),
            r_estimate: containment3(&re, &a.p_r),
            r_residual: containment3(&rr, &a.cov_resid_r),
        });
        per_observation.push(EmpiricalObservation {
            b_estimate: sample_covariance(&be),
            b_residual: sample_covariance(&br),
            r_estimate: sample_covariance(&re),
            r_residual: sample_covariance(&rr),
        });
    }

    let containment = ContainmentFractions {
        delta_alpha: containment3(&alphas, &analytic_at_truth.p_delta_alpha),
        delta_p: containment3(&dps, &analytic_at_truth.cov_p),
        per_observation: containment_obs,
    };
    let empirical = EmpiricalCovariances {
        delta_alpha: sample_covariance(&alphas),
        delta_p: sample_covariance(&dps),
        per_observation,
    };

    Ok(MonteCarloReport {
        trials,
        seed,
        divergence_count,
        records,
        empirical,
        analytic_at_truth,
        analytic_at_estimate,
        containment,
    })
}

/// Uniform random rotation from a normalized 4-normal quaternion.
fn random_rotation<R: Rng>(rng: &mut R) -> Rotation {
    let w: f64 = rng.sample(StandardNormal);
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
    Rotation::from_matrix_unchecked(*q.to_rotation_matrix().matrix())
}

/// Randomized test scenario: uniform attitude, `p` uniform in [-1, 1]^3,
/// `n` body-frame landmarks uniform in [-1, 1]^3, and per-pair random
/// fully-populated covariances with unit-free shape `M M^T + eps I`
/// normalized to unit diagonal, scaled so the per-axis noise level is
/// `snr * |b|` (floored at `snr * 1e-3`).
pub fn random_scenario(n: usize, snr: f64, seed: u64) -> Scenario {
    let rng = &mut stream_rng(seed, 0);
    let attitude = random_rotation(rng);
    let p = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let truth = Pose { attitude, p };
    let mut b_true = Vec::with_capacity(n);
    for _ in 0..n {
        b_true.push(Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
    }
    let mut noise = Vec::with_capacity(n);
    for b in &b_true {
        let mut m = Mat6::zeros();
        for i in 0..6 {
            for j in 0..6 {
                m[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let mut c = m * m.transpose();
        c += Mat6::identity() * (1e-2 * c.trace() / 6.0);
        let d = Vec6::from_fn(|i, _| 1.0 / c[(i, i)].sqrt());
        for i in 0..6 {
            for j in 0..6 {
                c[(i, j)] *= d[i] * d[j];
            }
        }
        let scale = (snr * b.norm().max(1e-3)).powi(2);
        noise.push(
            NoiseModel::from_joint(c * scale)
                .expect("unit-diagonal normalized M M^T + eps I is positive definite"),
        );
    }
    Scenario::from_b_landmarks(format!("random-{seed}"), truth, b_true, noise)
        .expect("constructed with n >= 3 and matching lengths")
}

/// The built-in reference scenario (`--scenario paper` on the command
/// line): identity attitude, `p = (0.3, -0.4, 0.5)` m, three body-frame
/// landmarks, and three fully-populated 6x6 covariances at the 1e-6 m^2
/// scale (~1e-4 signal-to-noise).
pub fn reference_scenario() -> Scenario {
    let truth = Pose {
        attitude: Rotation::identity(),
        p: Vec3::new(0.3, -0.4, 0.5),
    };
    let b_true = vec![
        Vec3::new(0.0, 9.7590e-2, -1.4833e-1),
        Vec3::new(0.0, 1.9518e-1, -1.2855e-2),
        Vec3::new(1.0, 9.7590e-1, 9.8885e-1),
    ];
    #[rustfmt::skip]
    let r1 = Mat6::new(
         0.1902,  0.0228, -0.0190, -0.0345, -0.0079,  0.0225,
         0.0228,  0.2288, -0.0003,  0.0145,  0.0483, -0.0161,
        -0.0190, -0.0003,  0.3554,  0.0765, -0.0180,  0.1386,
        -0.0345,  0.0145,  0.0765,  0.2566, -0.0201,  0.0408,
        -0.0079,  0.0483, -0.0180, -0.0201,  0.2621, -0.0800,
         0.0225, -0.0161,  0.1386,  0.0408, -0.0800,  0.3349,
    );
    #[rustfmt::skip]
    let r2 = Mat6::new(
         0.1981,  0.0213,  0.0021, -0.0519, -0.0218, -0.0231,
         0.0213,  0.1980, -0.0264,  0.0023, -0.0116,  0.0030,
         0.0021, -0.0264,  0.2040, -0.0456,  0.0273, -0.0152,
        -0.0519,  0.0023, -0.0456,  0.2481,  0.0025,  0.0258,
        -0.0218, -0.0116,  0.0273,  0.0025,  0.1933,  0.0069,
        -0.0231,  0.0030, -0.0152,  0.0258,  0.0069,  0.1851,
    );
    #[rustfmt::skip]
    let r3 = Mat6::new(
         0.1705, -0.0071, -0.0154, -0.0247,  0.0081,  0.0049,
        -0.0071,  0.2036,  0.0038,  0.0259, -0.0311,  0.0064,
        -0.0154,  0.0038,  0.1910,  0.0376,  0.0085,  0.0166,
        -0.0247,  0.0259,  0.0376,  0.2738, -0.0153,  0.0170,
         0.0081, -0.0311,  0.0085, -0.0153,  0.1850, -0.0114,
         0.0049,  0.0064,  0.0166,  0.0170, -0.0114,  0.2049,
    );
    let noise = [r1, r2, r3]
        .into_iter()
        .map(|r| NoiseModel::from_joint(r * 1e-6).expect("reference covariances are PD"))
        .collect();
    Scenario::from_b_landmarks("paper", truth, b_true, noise)
        .expect("reference scenario is well-formed")
}
