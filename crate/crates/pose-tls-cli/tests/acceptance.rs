//! End-to-end acceptance criteria. Each test checks one criterion and
//! prints a single PASS line with its measured margins (visible under
//! `cargo test -- --nocapture`).

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pose_tls::simulate::{reference_scenario, run_monte_carlo, MonteCarloReport};
use pose_tls::SolverConfig;
use pose_tls_cli::validate::{
    fim_identities_check, finite_difference_checks, isotropic_checks, noiseless_recovery_check,
};

/// Worst relative deviation of every empirical covariance diagonal from
/// the analytic value at the truth, over all tracked quantities.
fn worst_diagonal_deviation(report: &MonteCarloReport) -> f64 {
    let mut worst = 0.0f64;
    let mut check = |emp: &pose_tls::Mat3, ana: &pose_tls::Mat3| {
        for k in 0..3 {
            worst = worst.max((emp[(k, k)] / ana[(k, k)] - 1.0).abs());
        }
    };
    let at = &report.analytic_at_truth;
    check(&report.empirical.delta_alpha, &at.p_delta_alpha);
    check(&report.empirical.delta_p, &at.cov_p);
    for (emp, ana) in report
        .empirical
        .per_observation
        .iter()
        .zip(&at.per_observation)
    {
        check(&emp.b_estimate, &ana.p_b);
        check(&emp.b_residual, &ana.cov_resid_b);
        check(&emp.r_estimate, &ana.p_r);
        check(&emp.r_residual, &ana.cov_resid_r);
    }
    worst
}

fn worst_containment(report: &MonteCarloReport) -> f64 {
    let mut worst = 1.0f64;
    let mut low = |f: &[f64; 3]| {
        for v in f {
            worst = worst.min(*v);
        }
    };
    low(&report.containment.delta_alpha);
    low(&report.containment.delta_p);
    for oc in &report.containment.per_observation {
        low(&oc.b_estimate);
        low(&oc.b_residual);
        low(&oc.r_estimate);
        low(&oc.r_residual);
    }
    worst
}

#[test]
fn criterion_1_monte_carlo_matches_the_analytic_covariances() {
    let t0 = Instant::now();
    let report = run_monte_carlo(&reference_scenario(), 10_000, 42, &SolverConfig::default())
        .expect("reference scenario runs");
    let elapsed = t0.elapsed().as_secs_f64();

    assert_eq!(report.divergence_count, 0, "no trial may diverge");
    let worst_dev = worst_diagonal_deviation(&report);
    assert!(
        worst_dev <= 0.06,
        "worst covariance diagonal deviation {worst_dev:.4} exceeds 6%"
    );
    let worst_contain = worst_containment(&report);
    assert!(
        (0.995..=1.0).contains(&worst_contain),
        "worst 3-sigma containment {worst_contain:.4} outside [0.995, 1.0]"
    );
    assert!(elapsed < 30.0, "took {elapsed:.1}s, budget 30s");
    println!(
        "criterion 1: PASS (10000 trials, divergent=0, worst diag dev={worst_dev:.4}, \
         worst containment={worst_contain:.4}, {elapsed:.2}s)"
    );
}

#[test]
fn criterion_2_finite_differences_confirm_gradient_and_hessian() {
    let t0 = Instant::now();
    let results = finite_difference_checks(0, 20);
    let elapsed = t0.elapsed().as_secs_f64();
    for r in &results {
        assert!(
            r.passed(),
            "{} worst {:.3e} exceeds {:.0e}",
            r.name,
            r.worst,
            r.tolerance
        );
    }
    assert!(elapsed < 5.0, "took {elapsed:.1}s, budget 5s");
    println!(
        "criterion 2: PASS (20 scenarios, grad rel={:.3e} ≤ 1e-5, hess rel={:.3e} ≤ 1e-4, {elapsed:.2}s)",
        results[0].worst, results[1].worst
    );
}

#[test]
fn criterion_3_fim_and_crlb_identities_hold() {
    let t0 = Instant::now();
    let result = fim_identities_check(0, 100, false);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        result.passed(),
        "worst identity residual {:.3e} exceeds 1e-9",
        result.worst
    );
    assert!(elapsed < 5.0, "took {elapsed:.1}s, budget 5s");
    println!(
        "criterion 3: PASS (100 geometries, worst identity residual={:.3e} ≤ 1e-9, {elapsed:.2}s)",
        result.worst
    );
}

#[test]
fn criterion_4_isotropic_closed_forms_match_the_general_path() {
    let t0 = Instant::now();
    let results = isotropic_checks(0, 100);
    let elapsed = t0.elapsed().as_secs_f64();
    for r in &results {
        assert!(
            r.passed(),
            "{} worst {:.3e} exceeds {:.0e}",
            r.name,
            r.worst,
            r.tolerance
        );
    }
    assert!(elapsed < 10.0, "took {elapsed:.1}s, budget 10s");
    let line: Vec<String> = results
        .iter()
        .map(|r| format!("{}={:.3e}", r.name, r.worst))
        .collect();
    println!(
        "criterion 4: PASS (100 seeds, {}, {elapsed:.2}s)",
        line.join(", ")
    );
}

#[test]
fn criterion_5_noiseless_observations_recover_the_exact_pose() {
    let t0 = Instant::now();
    let result = noiseless_recovery_check(0);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        result.passed(),
        "worst recovery error {:.3e} exceeds 1e-10",
        result.worst
    );
    assert!(elapsed < 1.0, "took {elapsed:.1}s, budget 1s");
    println!(
        "criterion 5: PASS (n in {{3, 5, 50}}, worst recovery error={:.3e} ≤ 1e-10, {elapsed:.2}s)",
        result.worst
    );
}

/// Byte-compare two Monte-Carlo output directories; manifests are compared
/// with the wall-clock duration masked out.
fn assert_runs_identical(dir1: &Path, dir2: &Path) {
    let mut names: Vec<String> = fs::read_dir(dir1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"trials.csv".to_string()));
    assert!(names.contains(&"summary.json".to_string()));
    for name in &names {
        let b1 = fs::read(dir1.join(name)).unwrap();
        let b2 = fs::read(dir2.join(name)).unwrap();
        if name == "manifest.json" {
            let mask = |bytes: &[u8]| -> String {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                v["duration_seconds"] = serde_json::Value::from(0.0);
                v.to_string()
            };
            assert_eq!(mask(&b1), mask(&b2), "{name} differs beyond duration");
        } else {
            assert_eq!(b1, b2, "{name} differs between identical runs");
        }
    }
}

#[test]
fn criterion_6_identical_runs_produce_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir1 = tmp.path().join("run1");
    let dir2 = tmp.path().join("run2");
    for dir in [&dir1, &dir2] {
        let status = Command::new(env!("CARGO_BIN_EXE_pose-tls"))
            .args([
                "montecarlo",
                "--scenario",
                "paper",
                "--trials",
                "2000",
                "--seed",
                "7",
            ])
            .arg("--out")
            .arg(dir)
            .status()
            .expect("binary runs");
        assert!(status.success());
    }
    assert_runs_identical(&dir1, &dir2);
    let files = fs::read_dir(&dir1).unwrap().count();
    println!("criterion 6: PASS (two 2000-trial runs, {files} files byte-identical, duration masked in manifest)");
}
