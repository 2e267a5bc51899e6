//! First-order error covariances of the total-least-squares pose estimate:
//! attitude, translation, their 6x6 joint, reconstructed observations with
//! residual and estimate covariances, and the Fisher information matrix.

use nalgebra::Cholesky;

use crate::geometry::{cross_matrix, Mat3, Mat6, Rotation, Vec3};
use crate::model::{q_lambda, residual, weights, NoiseModel, ObservationPair, Pose, Weights};
use crate::{Error, Result};

/// Covariances attached to one reconstructed observation pair.
#[derive(Clone, Copy, Debug)]
pub struct ObservationCovariances {
    /// Reconstructed body-frame observation.
    pub b_hat: Vec3,
    /// Reconstructed reference-frame observation.
    pub r_hat: Vec3,
    /// Covariance of the residual `b_hat - b_tilde`.
    pub cov_resid_b: Mat3,
    /// Covariance of the residual `r_hat - r_tilde`.
    pub cov_resid_r: Mat3,
    /// Covariance of the estimate error `b_hat - b_true`.
    pub p_b: Mat3,
    /// Covariance of the estimate error `r_hat - r_true`.
    pub p_r: Mat3,
}

/// Every analytic covariance of one solved pose.
#[derive(Clone, Debug)]
pub struct CovarianceReport {
    /// Attitude-error covariance (rad^2): the inverse attitude Hessian.
    pub p_delta_alpha: Mat3,
    /// Translation-error covariance (m^2).
    pub cov_p: Mat3,
    /// Joint `[delta_alpha; delta_p]` covariance.
    pub p_f: Mat6,
    /// Information-weighted mean lever arm `S_lambda * sum_i Q_i^-1 A_i`.
    pub a_bar: Mat3,
    /// Inverse sum of weight inverses `(sum_i Q_i^-1)^-1`.
    pub s_lambda: Mat3,
    pub per_observation: Vec<ObservationCovariances>,
}

/// Fisher information of the joint `[delta_alpha; delta_p]` parameter.
#[derive(Clone, Copy, Debug)]
pub struct Fim {
    pub f: Mat6,
    pub f11: Mat3,
    pub f12: Mat3,
    pub f21: Mat3,
    pub f22: Mat3,
}

/// Shared per-geometry quantities for the covariance expressions.
struct Analysis {
    w: Weights,
    ais: Vec<Mat3>,
    sum_atqa: Mat3,
    sum_qa: Mat3,
    p_delta_alpha: Mat3,
    a_bar: Mat3,
}

fn analysis(a: &Rotation, observations: &[ObservationPair]) -> Result<Analysis> {
    let w = weights(a, observations)?;
    let mut ais = Vec::with_capacity(observations.len());
    let mut sum_atqa = Mat3::zeros();
    let mut sum_qa = Mat3::zeros();
    for (obs, qinv) in observations.iter().zip(&w.qinv) {
        let ai = cross_matrix(*a * obs.r_tilde);
        sum_atqa += ai.transpose() * qinv * ai;
        sum_qa += qinv * ai;
        ais.push(ai);
    }
    let hessian = sum_atqa - sum_qa.transpose() * w.s_lambda * sum_qa;
    let p_delta_alpha = Cholesky::new(hessian)
        .ok_or_else(|| {
            Error::DegenerateGeometry("attitude Hessian is not positive definite".into())
        })?
        .inverse();
    let a_bar = w.s_lambda * sum_qa;
    Ok(Analysis {
        w,
        ais,
        sum_atqa,
        sum_qa,
        p_delta_alpha,
        a_bar,
    })
}

/// Attitude-error covariance: the inverse of the attitude-only cost's
/// Hessian at `a`.
pub fn attitude_covariance(a: &Rotation, observations: &[ObservationPair]) -> Result<Mat3> {
    Ok(analysis(a, observations)?.p_delta_alpha)
}

/// Translation-error covariance `S_lambda + A_bar P_delta_alpha A_bar^T`.
///
/// `p_delta_alpha` is taken as an input (normally from
/// [`attitude_covariance`]) rather than recomputed, so the expression stays
/// evaluable when the lever arm is zero and the attitude block itself is
/// unobservable — e.g. a single observation at the origin, where the result
/// degenerates to `S_lambda = Q_lambda`.
pub fn translation_covariance(
    a: &Rotation,
    observations: &[ObservationPair],
    p_delta_alpha: &Mat3,
) -> Result<Mat3> {
    let w = weights(a, observations)?;
    let mut sum_qa = Mat3::zeros();
    for (obs, qinv) in observations.iter().zip(&w.qinv) {
        sum_qa += qinv * cross_matrix(*a * obs.r_tilde);
    }
    let a_bar = w.s_lambda * sum_qa;
    Ok(w.s_lambda + a_bar * p_delta_alpha * a_bar.transpose())
}

/// Joint `[delta_alpha; delta_p]` covariance: the inverse of
/// `sum_i G_i^T Q_i^-1 G_i` with `G_i = [A_i  -I]`, realized as the
/// Cholesky inverse of the Fisher information matrix.
pub fn joint_covariance(a: &Rotation, observations: &[ObservationPair]) -> Result<Mat6> {
    let f = fim(a, observations)?;
    Ok(Cholesky::new(f.f)
        .ok_or_else(|| {
            Error::DegenerateGeometry("joint information matrix is not positive definite".into())
        })?
        .inverse())
}

/// Fisher information matrix of the joint parameter, by blocks:
/// `F11 = sum A_i^T Q_i^-1 A_i`, `F12 = -sum A_i^T Q_i^-1 = F21^T`,
/// `F22 = sum Q_i^-1`.
pub fn fim(a: &Rotation, observations: &[ObservationPair]) -> Result<Fim> {
    let an = analysis(a, observations)?;
    let f11 = an.sum_atqa;
    let f21 = -an.sum_qa;
    let f12 = f21.transpose();
    let f22 = an.w.sum_qinv;
    let mut f = Mat6::zeros();
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(&f11);
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&f12);
    f.fixed_view_mut::<3, 3>(3, 0).copy_from(&f21);
    f.fixed_view_mut::<3, 3>(3, 3).copy_from(&f22);
    Ok(Fim {
        f,
        f11,
        f12,
        f21,
        f22,
    })
}

/// Reconstructed observation vectors `(b_hat, r_hat)` per pair:
/// `b_hat = b_tilde + (R_rb^T A^T - R_b) Q^-1 e` and
/// `r_hat = r_tilde + (R_r A^T - R_rb) Q^-1 e` with `e` the residual.
pub fn estimate_observations(
    pose: &Pose,
    observations: &[ObservationPair],
) -> Result<Vec<(Vec3, Vec3)>> {
    let w = weights(&pose.attitude, observations)?;
    let a = pose.attitude.matrix();
    let mut out = Vec::with_capacity(observations.len());
    for (obs, qinv) in observations.iter().zip(&w.qinv) {
        let qe = qinv * residual(pose, obs);
        let b_hat = obs.b_tilde + (obs.noise.r_rb.transpose() * a.transpose() - obs.noise.r_b) * qe;
        let r_hat = obs.r_tilde + (obs.noise.r_r * a.transpose() - obs.noise.r_rb) * qe;
        out.push((b_hat, r_hat));
    }
    Ok(out)
}

/// The residual-shaping matrices `C = (R_rb^T A^T - R_b) Q^-1` and
/// `D = (R_r A^T - R_rb) Q^-1` of one observation.
fn shaping(a: &Mat3, noise: &NoiseModel, qinv: &Mat3) -> (Mat3, Mat3) {
    let c = (noise.r_rb.transpose() * a.transpose() - noise.r_b) * qinv;
    let d = (noise.r_r * a.transpose() - noise.r_rb) * qinv;
    (c, d)
}

/// `G_i P_f G_i^T` with `G_i = [A_i  -I]`.
fn g_pf_gt(ai: &Mat3, p_f: &Mat6) -> Mat3 {
    let p11 = p_f.fixed_view::<3, 3>(0, 0);
    let p12 = p_f.fixed_view::<3, 3>(0, 3);
    let p21 = p_f.fixed_view::<3, 3>(3, 0);
    let p22 = p_f.fixed_view::<3, 3>(3, 3);
    ai * p11 * ai.transpose() - ai * p12 - p21 * ai.transpose() + p22
}

/// Residual covariances per pair: `cov(b_hat - b_tilde) = C (Q - G P_f G^T) C^T`
/// and `cov(r_hat - r_tilde) = D (Q - G P_f G^T) D^T`.
pub fn residual_covariances(
    a: &Rotation,
    observations: &[ObservationPair],
    p_f: &Mat6,
) -> Result<Vec<(Mat3, Mat3)>> {
    let an = analysis(a, observations)?;
    let mut out = Vec::with_capacity(observations.len());
    for ((obs, qinv), ai) in observations.iter().zip(&an.w.qinv).zip(&an.ais) {
        let (c, d) = shaping(a.matrix(), &obs.noise, qinv);
        let m = q_lambda(a, &obs.noise) - g_pf_gt(ai, p_f);
        out.push((c * m * c.transpose(), d * m * d.transpose()));
    }
    Ok(out)
}

/// Estimate-error covariances per pair, `cov(b_hat - b_true)` and
/// `cov(r_hat - r_true)`.
///
/// Each is the measurement covariance plus the residual covariance plus a
/// symmetrized cross term between the residual and the measurement error.
/// The cross term couples through the combined error `delta_b - A delta_r`,
/// whose covariance with `delta_b` is `R_b - A R_rb` and with `delta_r` is
/// `R_rb^T - A R_r`; the correlation blocks `R_rb` matter here and only
/// drop out for cross-covariance-free sensors.
pub fn observation_estimate_covariances(
    a: &Rotation,
    observations: &[ObservationPair],
    p_f: &Mat6,
) -> Result<Vec<(Mat3, Mat3)>> {
    let an = analysis(a, observations)?;
    let am = a.matrix();
    let mut out = Vec::with_capacity(observations.len());
    for ((obs, qinv), ai) in observations.iter().zip(&an.w.qinv).zip(&an.ais) {
        let (c, d) = shaping(am, &obs.noise, qinv);
        let gpg = g_pf_gt(ai, p_f);
        let m = q_lambda(a, &obs.noise) - gpg;
        let cov_resid_b = c * m * c.transpose();
        let cov_resid_r = d * m * d.transpose();
        // cov(delta_b - A delta_r, delta_b) and cov(delta_b - A delta_r, delta_r)
        let kb = obs.noise.r_b - am * obs.noise.r_rb;
        let kr = obs.noise.r_rb.transpose() - am * obs.noise.r_r;
        let tb = c * kb - c * gpg * qinv * kb;
        let tr = d * kr - d * gpg * qinv * kr;
        let p_b = obs.noise.r_b + cov_resid_b + tb + tb.transpose();
        let p_r = obs.noise.r_r + cov_resid_r + tr + tr.transpose();
        out.push((p_b, p_r));
    }
    Ok(out)
}

/// Cross-covariance between the attitude-error estimate and observation
/// `i`'s combined measurement error `delta_b_i - A delta_r_i`:
/// `E{delta_alpha (delta_a_i)^T} = H^-1 (A_i - A_bar)^T` per pair.
pub fn attitude_observation_cross_covariances(
    a: &Rotation,
    observations: &[ObservationPair],
) -> Result<Vec<Mat3>> {
    let an = analysis(a, observations)?;
    Ok(an
        .ais
        .iter()
        .map(|ai| an.p_delta_alpha * (ai - an.a_bar).transpose())
        .collect())
}

/// Assembles the complete covariance report at `pose`.
pub fn covariance_report(
    pose: &Pose,
    observations: &[ObservationPair],
) -> Result<CovarianceReport> {
    let a = &pose.attitude;
    let an = analysis(a, observations)?;
    let p_f = joint_covariance(a, observations)?;
    let cov_p = an.w.s_lambda + an.a_bar * an.p_delta_alpha * an.a_bar.transpose();
    let estimates = estimate_observations(pose, observations)?;
    let resid_covs = residual_covariances(a, observations, &p_f)?;
    let est_covs = observation_estimate_covariances(a, observations, &p_f)?;
    let per_observation = estimates
        .into_iter()
        .zip(resid_covs)
        .zip(est_covs)
        .map(
            |(((b_hat, r_hat), (cov_resid_b, cov_resid_r)), (p_b, p_r))| ObservationCovariances {
                b_hat,
                r_hat,
                cov_resid_b,
                cov_resid_r,
                p_b,
                p_r,
            },
        )
        .collect();
    Ok(CovarianceReport {
        p_delta_alpha: an.p_delta_alpha,
        cov_p,
        p_f,
        a_bar: an.a_bar,
        s_lambda: an.w.s_lambda,
        per_observation,
    })
}
