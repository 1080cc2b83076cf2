//! Planar-target calibration: homographies, closed-form initialization,
//! nonlinear refinement and parameter uncertainty.

mod closed_form;
mod covariance;
mod estimate;
mod extrinsics;
mod frame;
mod homography;
mod jacobian;
mod normal;
mod pipeline;
mod refine;

pub use closed_form::{closed_form_intrinsics, closed_form_intrinsics_zero_skew, restricted_intrinsics};
pub use covariance::{parameter_variances, parameter_variances_masked};
pub use estimate::{CalibrationEstimate, ParamMask};
pub use extrinsics::{extrinsics_from_homography, nearest_rotation};
pub use frame::{DetectedFrame, Observation, MIN_CORNERS};
pub use homography::{estimate_homography, homography_from_points, Homography};
pub use jacobian::{
    project_with_derivatives, project_with_finite_differences, CameraJacobian, JacobianMode, PoseFrame, PoseJacobian,
    ProjectionDerivatives,
};
pub use pipeline::{calibrate, calibrate_from, calibrate_two_view, estimate_pose, linear_distortion, poses_from_homographies, CalibrationConfig, ModelKind};
pub use refine::{refine, refine_parameters, RefineOptions, RefineReport, Refinement};
