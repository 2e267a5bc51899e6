//! SO(3) primitives: cross-product matrices, exponential and logarithm
//! maps, small-rotation error application, and projection onto rotations.

use crate::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Vec6 = nalgebra::Vector6<f64>;
pub type Mat6 = nalgebra::Matrix6<f64>;

/// Largest Frobenius-norm departure from `R^T R = I` (and of `det R` from 1)
/// accepted by [`Rotation::new`].
pub const ROTATION_TOL: f64 = 1e-12;

/// Rotation angle below which series expansions replace the closed-form
/// Rodrigues/logarithm coefficients to avoid 0/0.
const SMALL_ANGLE: f64 = 1e-8;

/// Relative singular-value cutoff under which a matrix is treated as
/// rank-deficient by [`project_to_rotation`].
const RANK_TOL: f64 = 1e-12;

/// A proper rotation matrix: orthonormal with determinant +1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    /// Validates orthonormality and determinant to [`ROTATION_TOL`].
    pub fn new(m: Mat3) -> Result<Self> {
        let ortho = (m.transpose() * m - Mat3::identity()).norm();
        let det = m.determinant();
        if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidInput(format!(
                "not a rotation matrix: |R^T R - I| = {ortho:.3e}, det = {det}"
            )));
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix known to be a rotation by construction.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        debug_assert!((m.transpose() * m - Mat3::identity()).norm() <= 1e-9);
        Rotation(m)
    }

    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// Geodesic distance to `other` in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        so3_log(&Rotation(self.0 * other.0.transpose())).norm()
    }
}

impl std::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        self.0 * v
    }
}

impl std::ops::Mul<Rotation> for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// The skew-symmetric matrix `[a×]` with `[a×] v = a × v`.
pub fn cross_matrix(a: Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Exponential map: the rotation by angle `|omega|` about `omega`.
///
/// Closed-form Rodrigues formula, with second-order series coefficients
/// below [`SMALL_ANGLE`].
pub fn so3_exp(omega: Vec3) -> Rotation {
    let theta2 = omega.norm_squared();
    let k = cross_matrix(omega);
    let (a, b) = if theta2.sqrt() < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation::from_matrix_unchecked(Mat3::identity() + a * k + b * (k * k))
}

/// Logarithm map: the vector `omega` with `so3_exp(omega) = r`.
///
/// Uses the skew part of `R` directly below [`SMALL_ANGLE`]; accurate for
/// angles away from pi (error rotations here are always small).
pub fn so3_log(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let cos_theta = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let w = m - m.transpose();
    let vee = Vec3::new(w[(2, 1)], w[(0, 2)], w[(1, 0)]);
    if theta < SMALL_ANGLE {
        0.5 * vee
    } else {
        theta / (2.0 * theta.sin()) * vee
    }
}

/// Applies an attitude-error vector: returns `exp(-[delta_alpha×]) * a`.
pub fn apply_error(delta_alpha: Vec3, a: &Rotation) -> Rotation {
    so3_exp(-delta_alpha) * *a
}

/// Nearest rotation to `m` in Frobenius norm, via SVD with determinant
/// correction. Errors when `m` is rank-deficient.
pub fn project_to_rotation(m: &Mat3) -> Result<Rotation> {
    let svd = m.svd(true, true);
    let sv = svd.singular_values;
    if sv[0] <= 0.0 || sv[2] <= RANK_TOL * sv[0] {
        return Err(Error::DegenerateGeometry(format!(
            "projection target is rank-deficient (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("SVD with u requested");
    let v_t = svd.v_t.expect("SVD with v_t requested");
    let sign = (u.determinant() * v_t.determinant()).signum();
    let r = u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, sign)) * v_t;
    Ok(Rotation::from_matrix_unchecked(r))
}

/// Intrinsic z-y-x Euler angles `(roll, pitch, yaw)` in radians, with
/// `r = Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn euler_zyx(r: &Rotation) -> (f64, f64, f64) {
    let m = r.matrix();
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    (roll, pitch, yaw)
}
