//! Closed-form specialization for isotropic noise, `R_r = sigma_r^2 I`,
//! `R_b = sigma_b^2 I`, `R_rb = 0`. Under isotropy every weight matrix
//! collapses to a scalar `sigma_i^2 = sigma_r^2 + sigma_b^2` per pair, the
//! weights lose their attitude dependence, and each covariance of the
//! general path has a short closed form. The module serves as an
//! independent oracle: on isotropic inputs its results must match the
//! general path, and that equality pins down how the reduced formulas are
//! to be read wherever scalar-weight notation is ambiguous.

use nalgebra::Cholesky;

use crate::covariance::{CovarianceReport, ObservationCovariances};
use crate::geometry::{cross_matrix, Mat3, Mat6, Rotation, Vec3};
use crate::model::{NoiseModel, ObservationPair};
use crate::{Error, Result};

/// Per-observation isotropic noise levels (standard deviations, m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsotropicNoise {
    pub sigma_r: f64,
    pub sigma_b: f64,
}

impl IsotropicNoise {
    pub fn new(sigma_r: f64, sigma_b: f64) -> Result<Self> {
        if !(sigma_r.is_finite() && sigma_r > 0.0 && sigma_b.is_finite() && sigma_b > 0.0) {
            return Err(Error::InvalidNoiseModel(
                "isotropic noise levels must be positive and finite".into(),
            ));
        }
        Ok(Self { sigma_r, sigma_b })
    }

    /// Combined per-pair level `sigma_i = sqrt(sigma_r^2 + sigma_b^2)`, the
    /// scalar the weight matrix collapses to: `Q_i = sigma_i^2 I`.
    pub fn sigma(&self) -> f64 {
        self.sigma_r.hypot(self.sigma_b)
    }

    /// The equivalent fully-populated noise model.
    pub fn to_noise_model(&self) -> NoiseModel {
        NoiseModel::isotropic(self.sigma_r, self.sigma_b)
    }
}

/// Combined level of the whole set: `sigma_bar = (sum_i sigma_i^-2)^(-1/2)`,
/// so that `sigma_bar^2` is the variance of the information-weighted mean.
pub fn sigma_bar(noise: &[IsotropicNoise]) -> f64 {
    1.0 / inverse_variance_sum(noise).sqrt()
}

/// `sum_i sigma_i^-2`, the total information weight.
fn inverse_variance_sum(noise: &[IsotropicNoise]) -> f64 {
    noise.iter().map(|n| 1.0 / (n.sigma() * n.sigma())).sum()
}

fn check_lengths(observations: &[ObservationPair], noise: &[IsotropicNoise]) -> Result<()> {
    if observations.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    if observations.len() != noise.len() {
        return Err(Error::InvalidInput(
            "observation and noise lists differ in length".into(),
        ));
    }
    Ok(())
}

/// Weighted means and summed weight shared by the closed forms.
struct Centers {
    weights: Vec<f64>,
    weight_sum: f64,
    b_mean: Vec3,
    r_mean: Vec3,
}

fn centers(observations: &[ObservationPair], noise: &[IsotropicNoise]) -> Centers {
    let weights: Vec<f64> = noise
        .iter()
        .map(|n| 1.0 / (n.sigma() * n.sigma()))
        .collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut b_mean = Vec3::zeros();
    let mut r_mean = Vec3::zeros();
    for (obs, w) in observations.iter().zip(&weights) {
        b_mean += *w * obs.b_tilde;
        r_mean += *w * obs.r_tilde;
    }
    Centers {
        weights,
        weight_sum,
        b_mean: b_mean / weight_sum,
        r_mean: r_mean / weight_sum,
    }
}

/// Attitude-only cost under isotropic noise:
/// `1/2 sum_i sigma_i^-2 |b_i - A r_i|^2  -  1/2 (sum_i sigma_i^-2) |b_mean - A r_mean|^2`
/// with information-weighted means.
///
/// Evaluated in the algebraically identical centered form
/// `1/2 sum_i sigma_i^-2 |(b_i - b_mean) - A (r_i - r_mean)|^2`: the
/// two-term difference subtracts numbers ~|p|^2/sigma^2 above the result
/// and loses most significant digits at realistic noise levels, exactly as
/// the general cost would if it were not evaluated jointly at the optimal
/// translation.
pub fn isotropic_cost(
    a: &Rotation,
    observations: &[ObservationPair],
    noise: &[IsotropicNoise],
) -> Result<f64> {
    check_lengths(observations, noise)?;
    let c = centers(observations, noise);
    let mut cost = 0.0;
    for (obs, w) in observations.iter().zip(&c.weights) {
        let centered = (obs.b_tilde - c.b_mean) - *a * (obs.r_tilde - c.r_mean);
        cost += 0.5 * w * centered.norm_squared();
    }
    Ok(cost)
}

/// Attitude Hessian under isotropic noise:
/// `-sum_i sigma_i^-2 A_i^2 + (sum_i sigma_i^-2) A_bar^2` with the
/// weighted-mean lever arm `A_bar = (sum_i sigma_i^-2 A_i) / (sum_i sigma_i^-2)`.
/// Singular (rank <= 2) for a single observation or collinear geometry.
pub fn isotropic_hessian(
    a: &Rotation,
    observations: &[ObservationPair],
    noise: &[IsotropicNoise],
) -> Result<Mat3> {
    check_lengths(observations, noise)?;
    let c = centers(observations, noise);
    let (h, _) = hessian_and_a_bar(a, observations, &c);
    Ok(h)
}

fn hessian_and_a_bar(a: &Rotation, observations: &[ObservationPair], c: &Centers) -> (Mat3, Mat3) {
    let mut sum_wa2 = Mat3::zeros();
    let mut a_bar = Mat3::zeros();
    for (obs, w) in observations.iter().zip(&c.weights) {
        let ai = cross_matrix(*a * obs.r_tilde);
        sum_wa2 += *w * ai * ai;
        a_bar += *w * ai;
    }
    a_bar /= c.weight_sum;
    (-sum_wa2 + c.weight_sum * a_bar * a_bar, a_bar)
}

/// Every covariance of the general path, filled from the isotropic closed
/// forms alone. Observation estimates are taken at the optimal translation
/// for `a`, `p_hat = -(weighted mean of b_i - A r_i)`, matching what the
/// general path reports at the solved pose.
pub fn isotropic_covariances(
    a: &Rotation,
    observations: &[ObservationPair],
    noise: &[IsotropicNoise],
) -> Result<CovarianceReport> {
    check_lengths(observations, noise)?;
    let c = centers(observations, noise);
    let (h, a_bar) = hessian_and_a_bar(a, observations, &c);
    let p_delta_alpha = Cholesky::new(h)
        .ok_or_else(|| {
            Error::DegenerateGeometry("attitude Hessian is not positive definite".into())
        })?
        .inverse();
    let s_lambda = Mat3::identity() / c.weight_sum;
    let cov_p = s_lambda + a_bar * p_delta_alpha * a_bar.transpose();

    // Joint covariance by blocks: [[P, P A_bar^T], [A_bar P, S + A_bar P A_bar^T]].
    let mut p_f = Mat6::zeros();
    p_f.fixed_view_mut::<3, 3>(0, 0).copy_from(&p_delta_alpha);
    p_f.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(p_delta_alpha * a_bar.transpose()));
    p_f.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(a_bar * p_delta_alpha));
    p_f.fixed_view_mut::<3, 3>(3, 3).copy_from(&cov_p);

    let p_hat = *a * c.r_mean - c.b_mean;

    let mut per_observation = Vec::with_capacity(observations.len());
    for (obs, iso) in observations.iter().zip(noise) {
        let sigma2 = iso.sigma() * iso.sigma();
        let wb = iso.sigma_b * iso.sigma_b / sigma2;
        let wr = iso.sigma_r * iso.sigma_r / sigma2;
        let e = obs.b_tilde - *a * obs.r_tilde + p_hat;
        let b_hat = obs.b_tilde - wb * e;
        let r_hat = obs.r_tilde + wr * (a.transpose() * e);

        let ai = cross_matrix(*a * obs.r_tilde);
        let p11 = p_f.fixed_view::<3, 3>(0, 0);
        let p12 = p_f.fixed_view::<3, 3>(0, 3);
        let p21 = p_f.fixed_view::<3, 3>(3, 0);
        let p22 = p_f.fixed_view::<3, 3>(3, 3);
        let gpg = ai * p11 * ai.transpose() - ai * p12 - p21 * ai.transpose() + p22;
        // Q_i - G_i P_f G_i^T with Q_i = sigma_i^2 I
        let m = Mat3::identity() * sigma2 - gpg;
        let cov_resid_b = wb * wb * m;
        let cov_resid_r = wr * wr * (a.matrix().transpose() * m * a.matrix());
        let p_b = Mat3::identity() * (iso.sigma_b * iso.sigma_b) - cov_resid_b;
        let p_r = Mat3::identity() * (iso.sigma_r * iso.sigma_r) - cov_resid_r;
        per_observation.push(ObservationCovariances {
            b_hat,
            r_hat,
            cov_resid_b,
            cov_resid_r,
            p_b,
            p_r,
        });
    }

    Ok(CovarianceReport {
        p_delta_alpha,
        cov_p,
        p_f,
        a_bar,
        s_lambda,
        per_observation,
    })
}
