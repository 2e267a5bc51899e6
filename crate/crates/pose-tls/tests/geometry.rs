use nalgebra::Matrix3;
use pose_tls::geometry::{
    apply_error, cross_matrix, euler_zyx, project_to_rotation, so3_exp, so3_log, Mat3, Rotation,
    Vec3,
};
use pose_tls::Error;

fn frob(m: &Mat3) -> f64 {
    m.norm()
}

#[test]
fn cross_matrix_of_zero_is_zero() {
    assert_eq!(cross_matrix(Vec3::zeros()), Mat3::zeros());
}

#[test]
fn cross_matrix_follows_right_hand_rule() {
    let e1 = Vec3::x();
    let e2 = Vec3::y();
    let e3 = Vec3::z();
    assert_eq!(cross_matrix(e1) * e2, e3);
    assert_eq!(cross_matrix(e2) * e3, e1);
    assert_eq!(cross_matrix(e3) * e1, e2);
}

#[test]
fn cross_matrix_is_exactly_skew_symmetric() {
    let m = cross_matrix(Vec3::new(0.3, -1.7, 2.9));
    assert_eq!(m.transpose(), -m);
}

#[test]
fn cross_matrix_antisymmetry_of_arguments() {
    let a = Vec3::new(0.12, -0.85, 0.44);
    let b = Vec3::new(-1.3, 0.02, 0.77);
    let lhs = cross_matrix(a) * b;
    let rhs = -(cross_matrix(b) * a);
    assert!((lhs - rhs).amax() <= 1e-15);
    assert!((lhs - a.cross(&b)).amax() <= 1e-15);
}

#[test]
fn exp_of_zero_is_identity() {
    assert_eq!(
        so3_exp(Vec3::zeros()).matrix(),
        Rotation::identity().matrix()
    );
}

#[test]
fn exp_quarter_turn_about_x_maps_e2_to_e3() {
    let r = so3_exp(Vec3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
    assert!((r * Vec3::y() - Vec3::z()).amax() <= 1e-15);
}

#[test]
fn exp_small_angle_matches_first_order() {
    let omega = Vec3::new(0.6e-3, -0.5e-3, 0.62e-3); // |omega| = 1e-3
    let r = so3_exp(omega);
    let first_order = Mat3::identity() + cross_matrix(omega);
    assert!(frob(&(r.matrix() - first_order)) <= 1e-6);
}

#[test]
fn exp_inverse_pairs_multiply_to_identity() {
    for k in 0..20 {
        let t = k as f64 / 19.0;
        let omega = t * std::f64::consts::PI * Vec3::new(0.48, -0.6, 0.64).normalize();
        let r = so3_exp(omega) * so3_exp(-omega);
        assert!(frob(&(r.matrix() - Mat3::identity())) <= 1e-12);
    }
}

#[test]
fn exp_has_unit_determinant() {
    for k in 0..20 {
        let omega = Vec3::new(1.1, -2.2, 0.5) * (k as f64 / 19.0);
        assert!((so3_exp(omega).matrix().determinant() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn exp_log_roundtrip() {
    for k in 1..30 {
        let omega = (k as f64 / 30.0) * 3.1 * Vec3::new(0.2, 0.5, -0.3).normalize();
        let back = so3_log(&so3_exp(omega));
        assert!((back - omega).amax() <= 1e-9 * omega.norm().max(1.0));
    }
}

#[test]
fn rotation_new_accepts_rotations_and_rejects_others() {
    let r = so3_exp(Vec3::new(0.1, 0.2, 0.3));
    assert!(Rotation::new(*r.matrix()).is_ok());

    let scaled = r.matrix() * 1.0001;
    assert!(matches!(Rotation::new(scaled), Err(Error::InvalidInput(_))));

    let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
    assert!(matches!(
        Rotation::new(reflection),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn apply_error_with_zero_is_identity_operation() {
    let a = so3_exp(Vec3::new(0.4, -0.2, 0.9));
    assert_eq!(apply_error(Vec3::zeros(), &a).matrix(), a.matrix());
}

#[test]
fn apply_error_inverse_pair_restores_attitude() {
    let a = so3_exp(Vec3::new(0.4, -0.2, 0.9));
    let d = Vec3::new(0.03, -0.01, 0.02);
    let restored = apply_error(d, &apply_error(-d, &a));
    assert!(frob(&(restored.matrix() - a.matrix())) <= 1e-12);
}

#[test]
fn apply_error_matches_first_order_form() {
    let a = so3_exp(Vec3::new(-0.7, 0.25, 0.51));
    for scale in [1e-3, 1e-4, 1e-5] {
        let d = scale * Vec3::new(0.59, -0.39, 0.7);
        let exact = apply_error(d, &a);
        let first_order = (Mat3::identity() - cross_matrix(d)) * a.matrix();
        assert!(frob(&(exact.matrix() - first_order)) <= d.norm_squared());
    }
}

#[test]
fn projection_is_idempotent_on_rotations() {
    let r = so3_exp(Vec3::new(1.0, -0.4, 2.2));
    let projected = project_to_rotation(r.matrix()).unwrap();
    assert!(frob(&(projected.matrix() - r.matrix())) <= 1e-12);
}

#[test]
fn projection_removes_uniform_scale() {
    let m: Matrix3<f64> = Mat3::identity() * 1.0001;
    let projected = project_to_rotation(&m).unwrap();
    assert!(frob(&(projected.matrix() - Mat3::identity())) <= 1e-12);
}

#[test]
fn projection_flips_reflections_to_proper_rotations() {
    let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
    let projected = project_to_rotation(&reflection).unwrap();
    assert!((projected.matrix().determinant() - 1.0).abs() <= 1e-12);
}

#[test]
fn projection_rejects_singular_input() {
    let mut m = Mat3::zeros();
    m[(0, 0)] = 1.0;
    m[(1, 1)] = 1.0; // rank 2
    assert!(matches!(
        project_to_rotation(&m),
        Err(Error::DegenerateGeometry(_))
    ));
}

#[test]
fn euler_angles_recover_generating_rotations() {
    let (roll, pitch, yaw) = (0.21, -0.56, 1.34);
    let rot = so3_exp(Vec3::new(0.0, 0.0, yaw))
        * so3_exp(Vec3::new(0.0, pitch, 0.0))
        * so3_exp(Vec3::new(roll, 0.0, 0.0));
    let (r, p, y) = euler_zyx(&rot);
    assert!((r - roll).abs() <= 1e-12);
    assert!((p - pitch).abs() <= 1e-12);
    assert!((y - yaw).abs() <= 1e-12);
}

#[test]
fn angle_to_measures_geodesic_distance() {
    let a = so3_exp(Vec3::new(0.3, 0.1, -0.2));
    let d = 0.017;
    let b = so3_exp(d * Vec3::new(1.0, 0.0, 0.0)) * a;
    assert!((a.angle_to(&b) - d).abs() <= 1e-12);
    assert!(a.angle_to(&a) <= 1e-12);
}
