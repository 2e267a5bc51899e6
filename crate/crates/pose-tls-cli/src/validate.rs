//! Self-checks behind the `validate` subcommand. Each check sweeps
//! randomized geometries, measures the worst deviation from an independent
//! reference (finite differences, matrix-identity residuals, a closed-form
//! special case), and compares it against a fixed tolerance. `seed` offsets
//! every internal scenario seed so sweeps explore fresh geometries.

use nalgebra::{Matrix3, Matrix6, Vector3};
use rand::Rng;

use pose_tls::covariance::{
    attitude_covariance, covariance_report, fim, joint_covariance, translation_covariance,
};
use pose_tls::geometry::project_to_rotation;
use pose_tls::isotropic::{
    isotropic_cost, isotropic_covariances, isotropic_hessian, IsotropicNoise,
};
use pose_tls::model::{attitude_only_cost, Pose};
use pose_tls::simulate::{random_scenario, sample_observations, stream_rng, Scenario};
use pose_tls::solver::{gn_step, solve_pose, SolverConfig};

use crate::{CliError, Result};

pub struct CheckResult {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst.is_finite() && self.worst <= self.tolerance
    }
}

/// Central finite differences of the attitude-only cost against the
/// analytic gradient and Hessian, at the truth attitude of low-noise
/// random scenarios.
pub fn finite_difference_checks(seed: u64, scenarios: u64) -> Vec<CheckResult> {
    let mut worst_g = 0.0f64;
    let mut worst_h = 0.0f64;
    for s in 0..scenarios {
        let scenario = random_scenario(4, 1e-6, seed + s);
        let mut rng = stream_rng(seed + s, 1);
        let obs = sample_observations(&scenario, &mut rng).expect("scenario noise is valid");
        let a = scenario.truth.attitude;
        let h = 1e-6;
        let (_, _, g, hess) = gn_step(&a, &obs).expect("well-conditioned geometry");
        let cost_at = |d: Vector3<f64>| {
            attitude_only_cost(&pose_tls::geometry::apply_error(d, &a), &obs)
                .expect("cost evaluates near the truth")
        };
        let j0 = attitude_only_cost(&a, &obs).expect("cost evaluates at the truth");
        let mut gfd = Vector3::<f64>::zeros();
        let mut hfd = Matrix3::<f64>::zeros();
        for k in 0..3 {
            let mut ek = Vector3::<f64>::zeros();
            ek[k] = h;
            gfd[k] = (cost_at(ek) - cost_at(-ek)) / (2.0 * h);
        }
        for k in 0..3 {
            for l in 0..3 {
                let mut ek = Vector3::<f64>::zeros();
                ek[k] = h;
                let mut el = Vector3::<f64>::zeros();
                el[l] = h;
                if k == l {
                    hfd[(k, k)] = (cost_at(ek) - 2.0 * j0 + cost_at(-ek)) / (h * h);
                } else {
                    hfd[(k, l)] = (cost_at(ek + el) - cost_at(ek - el) - cost_at(-ek + el)
                        + cost_at(-ek - el))
                        / (4.0 * h * h);
                }
            }
        }
        worst_g = worst_g.max((gfd - g).norm() / g.norm());
        worst_h = worst_h.max((hfd - hess).norm() / hess.norm());
    }
    vec![
        CheckResult {
            name: "finite-difference-gradient",
            worst: worst_g,
            tolerance: 1e-5,
        },
        CheckResult {
            name: "finite-difference-hessian",
            worst: worst_h,
            tolerance: 1e-4,
        },
    ]
}

/// Fisher-information identities at the truth of noiseless random
/// geometries: the 6x6 inverse matches the FIM, its diagonal blocks match
/// the standalone attitude/translation covariances, the translation block
/// of the FIM inverts to the weight sum, and the Schur-complement inverse
/// reproduces both blocks. `flip_f12_sign` negates the off-diagonal FIM
/// blocks before checking, to prove the check catches a sign error there.
pub fn fim_identities_check(seed: u64, geometries: u64, flip_f12_sign: bool) -> CheckResult {
    let mut worst = 0.0f64;
    for s in 0..geometries {
        let mut rng = stream_rng(seed + s, 2);
        let n = 3 + (rng.random_range(0..5u32) as usize);
        let snr = 10f64.powf(rng.random_range(-6.0..-2.0));
        let scenario = random_scenario(n, snr, seed + s);
        let obs = scenario.observations_noiseless();
        let a = scenario.truth.attitude;
        let mut f = fim(&a, &obs).expect("noiseless observations are valid");
        if flip_f12_sign {
            f.f12 = -f.f12;
            f.f21 = -f.f21;
            f.f.fixed_view_mut::<3, 3>(0, 3).copy_from(&f.f12);
            f.f.fixed_view_mut::<3, 3>(3, 0).copy_from(&f.f21);
        }
        let pf = joint_covariance(&a, &obs).expect("joint covariance exists");
        let pda = attitude_covariance(&a, &obs).expect("attitude covariance exists");
        let covp = translation_covariance(&a, &obs, &pda).expect("translation covariance exists");
        let report = covariance_report(&scenario.truth, &obs).expect("report exists");
        let r1 = (pf * f.f - Matrix6::identity()).norm();
        let r2 = (pf.fixed_view::<3, 3>(0, 0) - pda).norm() / pda.norm();
        let r3 = (pf.fixed_view::<3, 3>(3, 3) - covp).norm() / covp.norm();
        let r4 = (f.f22 * report.s_lambda - Matrix3::identity()).norm();
        let f22c = nalgebra::Cholesky::new(f.f22).expect("F22 is positive definite");
        let schur = f.f11 - f.f12 * f22c.solve(&f.f21);
        let smw11 = match nalgebra::Cholesky::new(schur) {
            Some(c) => c.inverse(),
            // A tampered FIM can make the Schur complement indefinite;
            // report that as a failure instead of crashing.
            None => Matrix3::from_element(f64::INFINITY),
        };
        let r5 = (smw11 - pda).norm() / pda.norm();
        let smw22 = report.s_lambda + report.a_bar * pda * report.a_bar.transpose();
        let r6 = (smw22 - Matrix3::from(pf.fixed_view::<3, 3>(3, 3))).norm() / covp.norm();
        for r in [r1, r2, r3, r4, r5, r6] {
            worst = worst.max(r);
        }
    }
    CheckResult {
        name: "fim-crlb-identities",
        worst,
        tolerance: 1e-9,
    }
}

/// Isotropic closed forms against the general-covariance path on scenarios
/// whose noise really is isotropic: cost, Hessian, and every covariance in
/// the report must agree, and the estimate must match the weighted-Kabsch
/// attitude computed from the sigma-weighted centered dispersion.
pub fn isotropic_checks(seed: u64, seeds: u64) -> Vec<CheckResult> {
    let config = SolverConfig::default();
    let mut worst_cost = 0.0f64;
    let mut worst_h = 0.0f64;
    let mut worst_cov = 0.0f64;
    let mut worst_kabsch = 0.0f64;
    for s in 0..seeds {
        let mut rng = stream_rng(seed + s, 9);
        let scenario = random_scenario(5, 1e-3, seed + s);
        let iso: Vec<IsotropicNoise> = (0..5)
            .map(|_| {
                IsotropicNoise::new(
                    10f64.powf(-4.0 + rng.random_range(0.0..1.0)),
                    10f64.powf(-4.0 + rng.random_range(0.0..1.0)),
                )
                .expect("positive sigmas")
            })
            .collect();
        let iso_scenario = Scenario::from_b_landmarks(
            "isotropic",
            Pose::new(scenario.truth.attitude, scenario.truth.p),
            scenario.b_true.clone(),
            iso.iter().map(|n| n.to_noise_model()).collect(),
        )
        .expect("scenario stays valid with isotropic noise");
        let mut noisy =
            sample_observations(&iso_scenario, &mut rng).expect("isotropic noise samples");
        // Re-stamp the sampled observations with the exact isotropic models
        // so both evaluation paths see bitwise-identical covariances.
        for (o, n) in noisy.iter_mut().zip(&iso) {
            o.noise = n.to_noise_model();
        }
        let (pose, _) = solve_pose(&noisy, &config).expect("solvable geometry");
        let a = pose.attitude;

        let jg = attitude_only_cost(&a, &noisy).expect("cost evaluates");
        let ji = isotropic_cost(&a, &noisy, &iso).expect("isotropic cost evaluates");
        worst_cost = worst_cost.max((ji - jg).abs() / jg.abs().max(1e-300));

        let hi = isotropic_hessian(&a, &noisy, &iso).expect("isotropic Hessian evaluates");
        let (_, _, _, hg) = gn_step(&a, &noisy).expect("well-conditioned geometry");
        worst_h = worst_h.max((hi - hg).amax() / hg.amax());

        let ri = isotropic_covariances(&a, &noisy, &iso).expect("isotropic report evaluates");
        let rg = covariance_report(&pose, &noisy).expect("general report evaluates");
        let mut cmp = |x: &Matrix3<f64>, y: &Matrix3<f64>| {
            worst_cov = worst_cov.max((x - y).amax() / y.amax().max(1e-300));
        };
        cmp(&ri.p_delta_alpha, &rg.p_delta_alpha);
        cmp(&ri.cov_p, &rg.cov_p);
        cmp(&ri.a_bar, &rg.a_bar);
        cmp(&ri.s_lambda, &rg.s_lambda);
        for (oi, og) in ri.per_observation.iter().zip(&rg.per_observation) {
            cmp(&oi.cov_resid_b, &og.cov_resid_b);
            cmp(&oi.cov_resid_r, &og.cov_resid_r);
            cmp(&oi.p_b, &og.p_b);
            cmp(&oi.p_r, &og.p_r);
        }
        drop(cmp);
        worst_cov = worst_cov.max((ri.p_f - rg.p_f).amax() / rg.p_f.amax());
        for (oi, og) in ri.per_observation.iter().zip(&rg.per_observation) {
            worst_cov = worst_cov
                .max((oi.b_hat - og.b_hat).amax())
                .max((oi.r_hat - og.r_hat).amax());
        }

        let wts: Vec<f64> = iso.iter().map(|n| 1.0 / (n.sigma() * n.sigma())).collect();
        let wsum: f64 = wts.iter().sum();
        let bbar: Vector3<f64> = noisy
            .iter()
            .zip(&wts)
            .map(|(o, w)| *w * o.b_tilde)
            .sum::<Vector3<f64>>()
            / wsum;
        let rbar: Vector3<f64> = noisy
            .iter()
            .zip(&wts)
            .map(|(o, w)| *w * o.r_tilde)
            .sum::<Vector3<f64>>()
            / wsum;
        let mut disp = Matrix3::<f64>::zeros();
        for (o, w) in noisy.iter().zip(&wts) {
            disp += *w * (o.b_tilde - bbar) * (o.r_tilde - rbar).transpose();
        }
        let svd = disp.svd(true, true);
        let u = svd.u.expect("svd with vectors");
        let vt = svd.v_t.expect("svd with vectors");
        let sign = (u.determinant() * vt.determinant()).signum();
        let m = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * vt;
        let kabsch = project_to_rotation(&m).expect("proper rotation");
        worst_kabsch = worst_kabsch.max(a.angle_to(&kabsch));
    }
    vec![
        CheckResult {
            name: "isotropic-cost",
            worst: worst_cost,
            tolerance: 1e-12,
        },
        CheckResult {
            name: "isotropic-hessian",
            worst: worst_h,
            tolerance: 1e-10,
        },
        CheckResult {
            name: "isotropic-covariance",
            worst: worst_cov,
            tolerance: 1e-10,
        },
        CheckResult {
            name: "weighted-kabsch",
            worst: worst_kabsch,
            tolerance: 1e-9,
        },
    ]
}

/// Noiseless observations must reproduce the truth pose to solver
/// precision, across small and large observation counts.
pub fn noiseless_recovery_check(seed: u64) -> CheckResult {
    let config = SolverConfig::default();
    let mut worst = 0.0f64;
    for n in [3usize, 5, 50] {
        let scenario = random_scenario(n, 1e-4, seed + n as u64);
        let obs = scenario.observations_noiseless();
        let (pose, _) = solve_pose(&obs, &config).expect("solvable geometry");
        worst = worst
            .max(pose.attitude.angle_to(&scenario.truth.attitude))
            .max((pose.p - scenario.truth.p).amax());
    }
    CheckResult {
        name: "noiseless-recovery",
        worst,
        tolerance: 1e-10,
    }
}

pub fn run_all(seed: u64, inject_fim_sign_error: bool) -> Vec<CheckResult> {
    let mut results = finite_difference_checks(seed, 20);
    results.push(fim_identities_check(seed, 100, inject_fim_sign_error));
    results.extend(isotropic_checks(seed, 100));
    results.push(noiseless_recovery_check(seed));
    results
}

/// Runs every check, prints one line per check with its worst deviation
/// and tolerance, and fails (exit code 4) if any check is out of tolerance.
pub fn cmd_validate(seed: u64, inject_fim_sign_error: bool) -> Result<()> {
    let results = run_all(seed, inject_fim_sign_error);
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut failed = Vec::new();
    for r in &results {
        println!(
            "{:<width$}  worst {:>9.3e}  tol {:>5.0e}  {}",
            r.name,
            r.worst,
            r.tolerance,
            if r.passed() { "pass" } else { "FAIL" },
        );
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        println!("all checks passed");
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "checks failed: {}",
            failed.join(", ")
        )))
    }
}
