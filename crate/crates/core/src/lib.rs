//! Residual selection for LiDAR pose estimation driven by per-residual
//! sensitivity and measurement uncertainty.
//!
//! The crate is organised bottom-up:
//!
//! - [`so3`]: rotation algebra, the Riemannian distance on SO(3) and the
//!   rotation-disturbance expansion with its Monte-Carlo oracles.
//! - [`registration`]: closed-form SVD point-set registration.
//! - [`residual`]: point-to-plane / point-to-line residuals, Jacobians and
//!   six-axis sensitivities.
//! - [`uncertainty`]: laser beam covariance, sigma-point pattern fusion and the
//!   scalar residual uncertainty.
//! - [`selection`]: scores, prefilter and the per-dimension top-k selection.
//! - [`simulator`]: the two-frame registration experiment comparing selection
//!   against random sampling.
//! - [`verify`]: runtime self-check suites used by the `resel verify` command.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod registration;
pub mod residual;
pub mod selection;
pub mod simulator;
pub mod so3;
pub mod uncertainty;
pub mod verify;

pub use error::{Error, Result};
pub use registration::{PointPairSet, RigidPose};
pub use residual::{LineResidual, PlaneResidual, Residual, ResidualKind, SensitivityVector};
pub use selection::{ScoredResidual, SelectionParams};
pub use so3::{DistTerms, DiskDisturbance, RotVec, Rotation};
pub use uncertainty::{BeamModel, Ellipsoid3, LaserSample};

/// Fixed-size aliases shared across modules.
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Vec6 = nalgebra::Vector6<f64>;
