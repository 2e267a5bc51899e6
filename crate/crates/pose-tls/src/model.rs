//! Observation data model: measurement pairs with joint 6x6 noise, the
//! per-observation residual weight `Q_lambda`, and the joint and
//! attitude-only total-least-squares costs.

use nalgebra::{Cholesky, Const};

use crate::geometry::{Mat3, Mat6, Rotation, Vec3};
use crate::{Error, Result};

type Chol3 = Cholesky<f64, Const<3>>;

/// Relative tolerance for the symmetry check on joint covariances.
const SYMMETRY_TOL: f64 = 1e-12;

/// Blocks of one pair's joint 6x6 measurement covariance, ordered
/// `[delta_r; delta_b]`: `r_r = cov(delta_r)`, `r_b = cov(delta_b)`,
/// `r_rb = cov(delta_r, delta_b)`.
#[derive(Clone, Copy, Debug)]
pub struct NoiseModel {
    pub r_r: Mat3,
    pub r_b: Mat3,
    pub r_rb: Mat3,
}

impl NoiseModel {
    /// Builds from blocks, validating that the joint matrix is symmetric
    /// (to [`SYMMETRY_TOL`] relative) and positive definite.
    pub fn new(r_r: Mat3, r_b: Mat3, r_rb: Mat3) -> Result<Self> {
        let mut joint = Mat6::zeros();
        joint.fixed_view_mut::<3, 3>(0, 0).copy_from(&r_r);
        joint.fixed_view_mut::<3, 3>(0, 3).copy_from(&r_rb);
        joint
            .fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&r_rb.transpose());
        joint.fixed_view_mut::<3, 3>(3, 3).copy_from(&r_b);
        Self::from_joint(joint)
    }

    /// Builds from a full joint covariance in `[delta_r; delta_b]` order.
    pub fn from_joint(joint: Mat6) -> Result<Self> {
        let asym = (joint - joint.transpose()).norm();
        if !joint.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidNoiseModel(
                "joint covariance has non-finite entries".into(),
            ));
        }
        if asym > SYMMETRY_TOL * joint.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidNoiseModel(format!(
                "joint covariance is not symmetric (|R - R^T| = {asym:.3e})"
            )));
        }
        if Cholesky::new(joint).is_none() {
            return Err(Error::InvalidNoiseModel(
                "joint covariance is not positive definite".into(),
            ));
        }
        Ok(NoiseModel {
            r_r: joint.fixed_view::<3, 3>(0, 0).into_owned(),
            r_b: joint.fixed_view::<3, 3>(3, 3).into_owned(),
            r_rb: joint.fixed_view::<3, 3>(0, 3).into_owned(),
        })
    }

    /// Isotropic, cross-covariance-free model with the given standard
    /// deviations per axis.
    pub fn isotropic(sigma_r: f64, sigma_b: f64) -> Self {
        NoiseModel {
            r_r: Mat3::identity() * sigma_r * sigma_r,
            r_b: Mat3::identity() * sigma_b * sigma_b,
            r_rb: Mat3::zeros(),
        }
    }

    /// The joint 6x6 covariance in `[delta_r; delta_b]` order.
    pub fn joint(&self) -> Mat6 {
        let mut joint = Mat6::zeros();
        joint.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r_r);
        joint.fixed_view_mut::<3, 3>(0, 3).copy_from(&self.r_rb);
        joint
            .fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&self.r_rb.transpose());
        joint.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.r_b);
        joint
    }
}

/// One measured landmark: its reference-frame and body-frame coordinates
/// plus their joint noise covariance.
#[derive(Clone, Copy, Debug)]
pub struct ObservationPair {
    pub r_tilde: Vec3,
    pub b_tilde: Vec3,
    pub noise: NoiseModel,
}

impl ObservationPair {
    pub fn new(r_tilde: Vec3, b_tilde: Vec3, noise: NoiseModel) -> Result<Self> {
        if !(r_tilde.iter().all(|x| x.is_finite()) && b_tilde.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidInput(
                "observation vectors must be finite".into(),
            ));
        }
        Ok(ObservationPair {
            r_tilde,
            b_tilde,
            noise,
        })
    }
}

/// A rigid pose under the convention `b = A r - p`.
#[derive(Clone, Copy, Debug)]
pub struct Pose {
    pub attitude: Rotation,
    pub p: Vec3,
}

impl Pose {
    pub fn new(attitude: Rotation, p: Vec3) -> Self {
        Pose { attitude, p }
    }

    /// The translation of the conventional transform `b = A r + t`.
    pub fn t(&self) -> Vec3 {
        -self.p
    }
}

/// The residual weight matrix `A R_r A^T - A R_rb - R_rb^T A^T + R_b`:
/// the covariance of the combined error `delta_b - A delta_r`.
pub fn q_lambda(a: &Rotation, noise: &NoiseModel) -> Mat3 {
    let m = a.matrix();
    m * noise.r_r * m.transpose() - m * noise.r_rb - noise.r_rb.transpose() * m.transpose()
        + noise.r_b
}

/// The measurement residual `b_tilde - A r_tilde + p`.
pub fn residual(pose: &Pose, obs: &ObservationPair) -> Vec3 {
    obs.b_tilde - pose.attitude * obs.r_tilde + pose.p
}

/// Per-observation weight inverses at a fixed attitude, with their sum and
/// its inverse `S_lambda`. All inverses are realized through Cholesky
/// factorizations (the weights are symmetric positive definite by contract).
pub(crate) struct Weights {
    pub qinv: Vec<Mat3>,
    pub sum_qinv: Mat3,
    pub s_lambda: Mat3,
}

pub(crate) fn weights(a: &Rotation, observations: &[ObservationPair]) -> Result<Weights> {
    if observations.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    let mut qinv = Vec::with_capacity(observations.len());
    let mut sum_qinv = Mat3::zeros();
    for (index, obs) in observations.iter().enumerate() {
        let chol: Chol3 =
            Cholesky::new(q_lambda(a, &obs.noise)).ok_or(Error::SingularWeight { index })?;
        let inv = chol.inverse();
        sum_qinv += inv;
        qinv.push(inv);
    }
    let s_lambda = Cholesky::new(sum_qinv)
        .ok_or_else(|| {
            Error::DegenerateGeometry("sum of weight inverses is not invertible".into())
        })?
        .inverse();
    Ok(Weights {
        qinv,
        sum_qinv,
        s_lambda,
    })
}

/// The translation minimizing the joint cost at attitude `a`:
/// `p = -S_lambda * sum_i Q_i^-1 (b_i - A r_i)` with
/// `S_lambda = (sum_i Q_i^-1)^-1`. Returns `(p, S_lambda)`.
pub fn optimal_translation(a: &Rotation, observations: &[ObservationPair]) -> Result<(Vec3, Mat3)> {
    let w = weights(a, observations)?;
    Ok((optimal_translation_with(a, observations, &w), w.s_lambda))
}

pub(crate) fn optimal_translation_with(
    a: &Rotation,
    observations: &[ObservationPair],
    w: &Weights,
) -> Vec3 {
    let mut x = Vec3::zeros();
    for (obs, qinv) in observations.iter().zip(&w.qinv) {
        x += qinv * (obs.b_tilde - *a * obs.r_tilde);
    }
    -w.s_lambda * x
}

/// The joint cost `1/2 sum_i e_i^T Q_i^-1 e_i` with residuals and weights
/// taken at `pose`.
pub fn cost(pose: &Pose, observations: &[ObservationPair]) -> Result<f64> {
    let w = weights(&pose.attitude, observations)?;
    Ok(cost_with(pose, observations, &w))
}

pub(crate) fn cost_with(pose: &Pose, observations: &[ObservationPair], w: &Weights) -> f64 {
    let mut j = 0.0;
    for (obs, qinv) in observations.iter().zip(&w.qinv) {
        let e = residual(pose, obs);
        j += 0.5 * e.dot(&(qinv * e));
    }
    j
}

/// The attitude-only cost: the joint cost evaluated at the optimal
/// translation for `a`.
///
/// This substituted form is evaluated directly — residuals first, then the
/// quadratic form — rather than as the difference of two large quadratic
/// terms, which cancels catastrophically at realistic noise levels.
pub fn attitude_only_cost(a: &Rotation, observations: &[ObservationPair]) -> Result<f64> {
    let w = weights(a, observations)?;
    let p = optimal_translation_with(a, observations, &w);
    Ok(cost_with(&Pose::new(*a, p), observations, &w))
}
