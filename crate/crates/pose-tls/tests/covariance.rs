use nalgebra::Cholesky;
use pose_tls::covariance::{
    attitude_covariance, attitude_observation_cross_covariances, covariance_report,
    estimate_observations, fim, joint_covariance, observation_estimate_covariances,
    residual_covariances, translation_covariance,
};
use pose_tls::geometry::{cross_matrix, so3_log, Mat3, Mat6, Vec3};
use pose_tls::model::q_lambda;
use pose_tls::simulate::{
    random_scenario, reference_scenario, sample_observations, stream_rng, Scenario,
};
use pose_tls::solver::solve_pose;
use pose_tls::{NoiseModel, ObservationPair, SolverConfig};
use rand::Rng;

fn noisy_draw(scenario: &Scenario, stream: u64) -> Vec<ObservationPair> {
    let mut rng = stream_rng(2027, stream);
    sample_observations(scenario, &mut rng).unwrap()
}

/// Mixed-size, mixed-noise geometries matching the randomized identity sweep.
fn sweep_scenario(seed: u64) -> Scenario {
    let mut rng = stream_rng(seed, 2);
    let n = 3 + rng.random_range(0..5u32) as usize;
    let snr = 10f64.powf(rng.random_range(-6.0..-2.0));
    random_scenario(n, snr, seed)
}

fn assert_symmetric_psd(m: &Mat3, label: &str) {
    let scale = m.norm().max(1e-300);
    assert!(
        (m - m.transpose()).norm() <= 1e-10 * scale,
        "{label} is not symmetric"
    );
    let min_eig = m.symmetric_eigen().eigenvalues.min();
    assert!(
        min_eig >= -1e-10 * scale,
        "{label} has eigenvalue {min_eig:.3e}"
    );
}

fn assert_symmetric_psd6(m: &Mat6, label: &str) {
    let scale = m.norm().max(1e-300);
    assert!(
        (m - m.transpose()).norm() <= 1e-10 * scale,
        "{label} is not symmetric"
    );
    let min_eig = m.symmetric_eigen().eigenvalues.min();
    assert!(
        min_eig >= -1e-10 * scale,
        "{label} has eigenvalue {min_eig:.3e}"
    );
}

#[test]
fn every_reported_covariance_is_symmetric_psd() {
    let mut cases = vec![noisy_draw(&reference_scenario(), 0)];
    for seed in 0..5 {
        cases.push(noisy_draw(&sweep_scenario(seed), 1 + seed));
    }
    for observations in &cases {
        let (pose, _) = solve_pose(observations, &SolverConfig::default()).unwrap();
        let report = covariance_report(&pose, observations).unwrap();
        assert_symmetric_psd(&report.p_delta_alpha, "p_delta_alpha");
        assert_symmetric_psd(&report.cov_p, "cov_p");
        assert_symmetric_psd(&report.s_lambda, "s_lambda");
        assert_symmetric_psd6(&report.p_f, "p_f");
        for (i, obs) in report.per_observation.iter().enumerate() {
            assert_symmetric_psd(&obs.cov_resid_b, &format!("cov_resid_b[{i}]"));
            assert_symmetric_psd(&obs.cov_resid_r, &format!("cov_resid_r[{i}]"));
            assert_symmetric_psd(&obs.p_b, &format!("p_b[{i}]"));
            assert_symmetric_psd(&obs.p_r, &format!("p_r[{i}]"));
        }
    }
}

#[test]
fn joint_covariance_inverts_the_information_matrix() {
    for seed in 0..20 {
        let scenario = sweep_scenario(seed);
        let observations = scenario.observations_noiseless();
        let a = scenario.truth.attitude;
        let f = fim(&a, &observations).unwrap();
        let p_f = joint_covariance(&a, &observations).unwrap();
        let residual = (p_f * f.f - Mat6::identity()).norm();
        assert!(residual <= 1e-9, "seed {seed}: |P F - I| = {residual:.3e}");
    }
}

#[test]
fn joint_blocks_match_standalone_covariances() {
    for seed in 0..20 {
        let scenario = sweep_scenario(seed);
        let observations = scenario.observations_noiseless();
        let a = scenario.truth.attitude;
        let p_f = joint_covariance(&a, &observations).unwrap();
        let p_da = attitude_covariance(&a, &observations).unwrap();
        let cov_p = translation_covariance(&a, &observations, &p_da).unwrap();
        let upper = Mat3::from(p_f.fixed_view::<3, 3>(0, 0));
        let lower = Mat3::from(p_f.fixed_view::<3, 3>(3, 3));
        assert!((upper - p_da).norm() <= 1e-9 * p_da.norm());
        assert!((lower - cov_p).norm() <= 1e-9 * cov_p.norm());
    }
}

#[test]
fn block_inverse_path_agrees_with_direct_inverse() {
    // The Schur-complement route to the attitude block and the lever-arm
    // route to the translation block, against the plain 6x6 inverse.
    for seed in 0..20 {
        let scenario = sweep_scenario(seed);
        let observations = scenario.observations_noiseless();
        let a = scenario.truth.attitude;
        let f = fim(&a, &observations).unwrap();
        let p_f = joint_covariance(&a, &observations).unwrap();
        let report = covariance_report(&scenario.truth, &observations).unwrap();

        let f22_chol = Cholesky::new(f.f22).unwrap();
        let schur = f.f11 - f.f12 * f22_chol.solve(&f.f21);
        let p11_schur = Cholesky::new(schur).unwrap().inverse();
        let upper = Mat3::from(p_f.fixed_view::<3, 3>(0, 0));
        assert!((p11_schur - upper).norm() <= 1e-9 * upper.norm());

        let p22_lever =
            report.s_lambda + report.a_bar * report.p_delta_alpha * report.a_bar.transpose();
        let lower = Mat3::from(p_f.fixed_view::<3, 3>(3, 3));
        assert!((p22_lever - lower).norm() <= 1e-9 * lower.norm());
    }
}

#[test]
fn fim_blocks_match_their_definitions() {
    let observations = noisy_draw(&reference_scenario(), 10);
    let a = solve_pose(&observations, &SolverConfig::default())
        .unwrap()
        .0
        .attitude;
    let f = fim(&a, &observations).unwrap();

    let mut f11 = Mat3::zeros();
    let mut f21 = Mat3::zeros();
    let mut f22 = Mat3::zeros();
    let mut full = Mat6::zeros();
    for obs in &observations {
        let qinv = q_lambda(&a, &obs.noise).try_inverse().unwrap();
        let ai = cross_matrix(a * obs.r_tilde);
        f11 += ai.transpose() * qinv * ai;
        f21 += -(qinv * ai);
        f22 += qinv;
        let mut gi = nalgebra::Matrix3x6::<f64>::zeros();
        gi.fixed_view_mut::<3, 3>(0, 0).copy_from(&ai);
        gi.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(-Mat3::identity()));
        full += gi.transpose() * qinv * gi;
    }

    assert!((f.f11 - f11).norm() <= 1e-12 * f11.norm());
    assert!((f.f21 - f21).norm() <= 1e-12 * f21.norm());
    assert!((f.f22 - f22).norm() <= 1e-12 * f22.norm());
    assert_eq!(f.f12, f.f21.transpose());
    assert!((f.f - full).norm() <= 1e-12 * full.norm());

    // The translation block is exactly the inverse of S_lambda.
    let report = covariance_report(&pose_tls::Pose::new(a, Vec3::zeros()), &observations).unwrap();
    assert!((f.f22 * report.s_lambda - Mat3::identity()).norm() <= 1e-12);

    // Assembled 6x6 reproduces its own blocks.
    assert_eq!(Mat3::from(f.f.fixed_view::<3, 3>(0, 0)), f.f11);
    assert_eq!(Mat3::from(f.f.fixed_view::<3, 3>(0, 3)), f.f12);
    assert_eq!(Mat3::from(f.f.fixed_view::<3, 3>(3, 0)), f.f21);
    assert_eq!(Mat3::from(f.f.fixed_view::<3, 3>(3, 3)), f.f22);
}

#[test]
fn weight_dominates_the_constrained_spread() {
    // Q_lambda - G P_f G^T is the residual covariance seen through the
    // shaping matrices; it must stay PSD for every observation.
    let mut cases = vec![noisy_draw(&reference_scenario(), 20)];
    for seed in 0..5 {
        cases.push(noisy_draw(&sweep_scenario(seed), 21 + seed));
    }
    for observations in &cases {
        let (pose, _) = solve_pose(observations, &SolverConfig::default()).unwrap();
        let a = pose.attitude;
        let p_f = joint_covariance(&a, observations).unwrap();
        for obs in observations {
            let ai = cross_matrix(a * obs.r_tilde);
            let p11 = Mat3::from(p_f.fixed_view::<3, 3>(0, 0));
            let p12 = Mat3::from(p_f.fixed_view::<3, 3>(0, 3));
            let p21 = Mat3::from(p_f.fixed_view::<3, 3>(3, 0));
            let p22 = Mat3::from(p_f.fixed_view::<3, 3>(3, 3));
            let gpg = ai * p11 * ai.transpose() - ai * p12 - p21 * ai.transpose() + p22;
            let m = q_lambda(&a, &obs.noise) - gpg;
            let min_eig = m.symmetric_eigen().eigenvalues.min();
            assert!(min_eig >= -1e-10, "min eigenvalue {min_eig:.3e}");
        }
    }
}

#[test]
fn reconstructed_pairs_satisfy_the_constraint() {
    for stream in 0..5 {
        let observations = noisy_draw(&reference_scenario(), 30 + stream);
        let (pose, _) = solve_pose(&observations, &SolverConfig::default()).unwrap();
        for (b_hat, r_hat) in estimate_observations(&pose, &observations).unwrap() {
            let gap = (b_hat - (pose.attitude * r_hat - pose.p)).norm();
            assert!(gap <= 1e-9, "constraint gap {gap:.3e}");
        }
    }
}

#[test]
fn zero_residual_leaves_observations_unchanged() {
    let scenario = reference_scenario();
    let observations = scenario.observations_noiseless();
    let estimates = estimate_observations(&scenario.truth, &observations).unwrap();
    for ((b_hat, r_hat), obs) in estimates.iter().zip(&observations) {
        assert!((b_hat - obs.b_tilde).norm() <= 1e-12);
        assert!((r_hat - obs.r_tilde).norm() <= 1e-12);
    }
}

#[test]
fn perfect_body_sensor_leaves_b_pinned() {
    // All noise in the reference frame: the b-side shaping matrix is exactly
    // zero, so b_hat = b_tilde and its residual covariance vanishes.
    let scenario = reference_scenario();
    let noise = NoiseModel {
        r_r: Mat3::identity() * 1e-6,
        r_b: Mat3::zeros(),
        r_rb: Mat3::zeros(),
    };
    let observations: Vec<ObservationPair> = scenario
        .observations_noiseless()
        .iter()
        .map(|o| ObservationPair {
            r_tilde: o.r_tilde,
            b_tilde: o.b_tilde,
            noise,
        })
        .collect();
    let a = scenario.truth.attitude;
    let estimates = estimate_observations(&scenario.truth, &observations).unwrap();
    for ((b_hat, _), obs) in estimates.iter().zip(&observations) {
        assert_eq!(*b_hat, obs.b_tilde);
    }
    let p_f = joint_covariance(&a, &observations).unwrap();
    for (cov_b, _) in residual_covariances(&a, &observations, &p_f).unwrap() {
        assert_eq!(cov_b, Mat3::zeros());
    }
}

#[test]
fn estimate_covariances_match_term_by_term_reconstruction() {
    let observations = noisy_draw(&reference_scenario(), 40);
    let (pose, _) = solve_pose(&observations, &SolverConfig::default()).unwrap();
    let a = pose.attitude;
    let am = *a.matrix();
    let p_f = joint_covariance(&a, &observations).unwrap();
    let resid = residual_covariances(&a, &observations, &p_f).unwrap();
    let est = observation_estimate_covariances(&a, &observations, &p_f).unwrap();

    for (obs, ((cov_b, cov_r), (p_b, p_r))) in observations.iter().zip(resid.iter().zip(&est)) {
        let q = q_lambda(&a, &obs.noise);
        let qinv = q.try_inverse().unwrap();
        let c = (obs.noise.r_rb.transpose() * am.transpose() - obs.noise.r_b) * qinv;
        let d = (obs.noise.r_r * am.transpose() - obs.noise.r_rb) * qinv;
        let ai = cross_matrix(a * obs.r_tilde);
        let p11 = Mat3::from(p_f.fixed_view::<3, 3>(0, 0));
        let p12 = Mat3::from(p_f.fixed_view::<3, 3>(0, 3));
        let p21 = Mat3::from(p_f.fixed_view::<3, 3>(3, 0));
        let p22 = Mat3::from(p_f.fixed_view::<3, 3>(3, 3));
        let gpg = ai * p11 * ai.transpose() - ai * p12 - p21 * ai.transpose() + p22;
        let m = q - gpg;

        let cov_b_direct = c * m * c.transpose();
        let cov_r_direct = d * m * d.transpose();
        assert!((cov_b - cov_b_direct).norm() <= 1e-9 * cov_b_direct.norm());
        assert!((cov_r - cov_r_direct).norm() <= 1e-9 * cov_r_direct.norm());

        // Cross term through the combined error delta_b - A delta_r, whose
        // covariance with delta_b is R_b - A R_rb and with delta_r is
        // R_rb^T - A R_r.
        let kb = obs.noise.r_b - am * obs.noise.r_rb;
        let kr = obs.noise.r_rb.transpose() - am * obs.noise.r_r;
        let tb = c * kb - c * gpg * qinv * kb;
        let tr = d * kr - d * gpg * qinv * kr;
        let p_b_direct = obs.noise.r_b + cov_b_direct + tb + tb.transpose();
        let p_r_direct = obs.noise.r_r + cov_r_direct + tr + tr.transpose();
        assert!((p_b - p_b_direct).norm() <= 1e-9 * p_b_direct.norm());
        assert!((p_r - p_r_direct).norm() <= 1e-9 * p_r_direct.norm());
    }
}

#[test]
fn estimation_only_removes_uncertainty() {
    // Algebraic consequence of the cross-term structure: the estimate
    // covariance is the measurement covariance minus the residual
    // covariance, so estimates are never worse than raw measurements.
    let mut cases = vec![noisy_draw(&reference_scenario(), 50)];
    for seed in 0..5 {
        cases.push(noisy_draw(&sweep_scenario(seed), 51 + seed));
    }
    for observations in &cases {
        let (pose, _) = solve_pose(observations, &SolverConfig::default()).unwrap();
        let report = covariance_report(&pose, observations).unwrap();
        for (obs, per) in observations.iter().zip(&report.per_observation) {
            let scale = obs.noise.r_b.norm();
            assert!((per.p_b - (obs.noise.r_b - per.cov_resid_b)).norm() <= 1e-10 * scale);
            let scale = obs.noise.r_r.norm();
            assert!((per.p_r - (obs.noise.r_r - per.cov_resid_r)).norm() <= 1e-10 * scale);
        }
    }
}

#[test]
fn attitude_covariance_is_homogeneous_in_the_noise() {
    let scenario = reference_scenario();
    let observations = scenario.observations_noiseless();
    let a = scenario.truth.attitude;
    let c = 4.0;
    let scaled: Vec<ObservationPair> = observations
        .iter()
        .map(|o| ObservationPair {
            r_tilde: o.r_tilde,
            b_tilde: o.b_tilde,
            noise: NoiseModel::new(c * o.noise.r_r, c * o.noise.r_b, c * o.noise.r_rb).unwrap(),
        })
        .collect();
    let p = attitude_covariance(&a, &observations).unwrap();
    let p_scaled = attitude_covariance(&a, &scaled).unwrap();
    assert!((p_scaled - c * p).norm() <= 1e-12 * (c * p).norm());
}

#[test]
fn zero_lever_arm_reduces_translation_covariance_to_the_weight() {
    // A single observation at the origin: A_bar = 0 and the translation
    // covariance degenerates to S_lambda = Q_lambda, independent of the
    // (here unobservable) attitude block.
    let noise = NoiseModel::isotropic(2e-3, 1e-3);
    let a = pose_tls::geometry::so3_exp(Vec3::new(0.3, -0.2, 0.1));
    let observations =
        vec![ObservationPair::new(Vec3::zeros(), Vec3::new(0.1, 0.2, 0.3), noise).unwrap()];
    let cov_p = translation_covariance(&a, &observations, &Mat3::identity()).unwrap();
    let q = q_lambda(&a, &noise);
    assert!((cov_p - q).norm() <= 1e-12 * q.norm());
}

#[test]
fn joint_covariance_is_permutation_invariant() {
    let observations = noisy_draw(&sweep_scenario(3), 60);
    let a = solve_pose(&observations, &SolverConfig::default())
        .unwrap()
        .0
        .attitude;
    let p_f = joint_covariance(&a, &observations).unwrap();
    let mut permuted = observations.clone();
    permuted.rotate_left(2);
    permuted.swap(0, 1);
    let p_f_perm = joint_covariance(&a, &permuted).unwrap();
    assert!((p_f - p_f_perm).norm() <= 1e-10 * p_f.norm());
}

#[test]
fn cross_covariances_match_simulation() {
    // Sample estimate of E{delta_alpha delta_a_i^T} over 1e5 seeded trials
    // against the analytic per-observation cross-covariance, entry-wise
    // within 5 standard errors.
    let scenario = reference_scenario();
    let config = SolverConfig::default();
    let noiseless = scenario.observations_noiseless();
    let truth_a = scenario.truth.attitude;
    let analytic = attitude_observation_cross_covariances(&truth_a, &noiseless).unwrap();
    let n = scenario.n();
    let trials = 100_000u64;
    let seed = 777u64;

    let mut sums = vec![Mat3::zeros(); n];
    let mut sums_sq = vec![Mat3::zeros(); n];
    for trial in 0..trials {
        let mut rng = stream_rng(seed, trial);
        let observations = sample_observations(&scenario, &mut rng).unwrap();
        let (pose, diagnostics) = solve_pose(&observations, &config).unwrap();
        assert!(diagnostics.converged);
        let delta_alpha = -so3_log(&(pose.attitude * truth_a.transpose()));
        for i in 0..n {
            let delta_b = observations[i].b_tilde - scenario.b_true[i];
            let delta_r = observations[i].r_tilde - scenario.r_true[i];
            let delta_a = delta_b - truth_a * delta_r;
            let product = delta_alpha * delta_a.transpose();
            sums[i] += product;
            sums_sq[i] += product.component_mul(&product);
        }
    }

    let nf = trials as f64;
    for i in 0..n {
        let mean = sums[i] / nf;
        for r in 0..3 {
            for c in 0..3 {
                let var = (sums_sq[i][(r, c)] / nf - mean[(r, c)] * mean[(r, c)]).max(0.0);
                let std_err = (var / nf).sqrt();
                let dev = (mean[(r, c)] - analytic[i][(r, c)]).abs();
                assert!(
                    dev <= 5.0 * std_err,
                    "obs {i} entry ({r},{c}): deviation {:.2} standard errors",
                    dev / std_err
                );
            }
        }
    }
}
