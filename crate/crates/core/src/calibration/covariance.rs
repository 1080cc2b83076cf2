//! Gauss-Newton parameter covariance with the pose block eliminated.

use nalgebra::SymmetricEigen;

use super::estimate::{CalibrationEstimate, ParamMask};
use super::frame::DetectedFrame;
use super::jacobian::JacobianMode;
use super::normal::{build, camera_information};
use crate::error::{Error, Result};

/// Smallest accepted eigenvalue ratio of the scale-normalized information
/// matrix.
const CONDITION_LIMIT: f64 = 1e-12;

/// Variances of all nine camera parameters.
pub fn parameter_variances(frames: &[DetectedFrame], estimate: &CalibrationEstimate) -> Result<[f64; 9]> {
    parameter_variances_masked(frames, estimate, ParamMask::ALL_FREE, JacobianMode::Analytic)
}

/// Variances with `mask` parameters treated as known (variance zero).
///
/// `sigma^2 = s^2 diag(S^-1)` where `S` is the Schur complement of the camera
/// block of `J^T J` and `s^2 = SSE / (2N - d)`.
pub fn parameter_variances_masked(
    frames: &[DetectedFrame],
    estimate: &CalibrationEstimate,
    mask: ParamMask,
    mode: JacobianMode,
) -> Result<[f64; 9]> {
    if frames.len() != estimate.extrinsics.len() {
        return Err(Error::InvalidInput("frame and pose counts differ".into()));
    }
    let b = build(frames, &estimate.model(), &estimate.extrinsics, mode)?;
    let d = mask.free_count() + 6 * frames.len();
    let dof = 2 * b.n_obs;
    if dof <= d {
        return Err(Error::Unobservable(format!("{dof} residuals for {d} unknowns")));
    }
    let s2 = b.sse / (dof - d) as f64;

    let s = camera_information(&b, &mask)?;
    let fixed = mask.solver_fixed();
    let diag = s.diagonal();
    if diag.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Unobservable("a camera parameter has no influence on the residuals".into()));
    }
    let scale = diag.map(|v| 1.0 / v.sqrt());
    let normalized = s.component_mul(&(scale * scale.transpose()));
    let eig = SymmetricEigen::new(normalized).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > CONDITION_LIMIT * hi) {
        return Err(Error::Unobservable(format!("information matrix condition {:.3e}", lo / hi)));
    }
    let inv = normalized
        .cholesky()
        .ok_or_else(|| Error::Unobservable("information matrix is not positive definite".into()))?
        .inverse();
    let mut var: [f64; 9] = std::array::from_fn(|i| {
        if fixed[i] {
            0.0
        } else {
            (s2 * inv[(i, i)] * scale[i] * scale[i]).max(0.0)
        }
    });
    if mask.tied_focal() {
        var[1] = var[0];
    }
    Ok(var)
}
