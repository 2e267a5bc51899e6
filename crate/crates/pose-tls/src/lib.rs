//! Rigid pose estimation from matched vector observations.
//!
//! Given pairs of the same landmarks expressed in a reference frame (`r`)
//! and a body frame (`b`), related by `b = A r - p` with `A` a rotation and
//! `p` a translation, this crate estimates the pose by total least squares:
//! both sides of every pair are treated as noisy, with a fully populated
//! 6x6 covariance per pair. Alongside the estimate it evaluates the
//! first-order error covariances of everything the solver produces —
//! attitude, translation, reconstructed observations and their residuals —
//! plus the Fisher information matrix, and ships a seeded Monte-Carlo
//! engine to verify the analytic covariances empirically.
//!
//! Note the sign convention: the stored translation `p` satisfies
//! `b = A r - p`. The conventional transform `b = A r + t` uses `t = -p`;
//! conversion belongs in report layers, every formula here uses `p`.

pub mod covariance;
mod dd;
pub mod geometry;
pub mod isotropic;
pub mod model;
pub mod simulate;
pub mod solver;

pub use covariance::{CovarianceReport, Fim, ObservationCovariances};
pub use geometry::{Mat3, Mat6, Rotation, Vec3, Vec6};
pub use model::{NoiseModel, ObservationPair, Pose};
pub use simulate::{MonteCarloReport, Scenario};
pub use solver::{SolverConfig, SolverDiagnostics};

/// Errors surfaced by estimation and simulation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A per-observation weight matrix failed its Cholesky factorization.
    #[error("weight matrix for observation {index} is not positive definite")]
    SingularWeight { index: usize },
    /// The observation geometry does not determine the pose.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    /// A joint 6x6 measurement covariance is not symmetric positive definite.
    #[error("invalid noise model: {0}")]
    InvalidNoiseModel(String),
    /// Structurally invalid input (wrong count, non-finite value, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
