//! Levenberg-Marquardt minimization of the total squared reprojection error
//! over the free camera parameters and all frame poses.

use super::estimate::{CalibrationEstimate, ParamMask};
use super::frame::DetectedFrame;
use super::jacobian::JacobianMode;
use super::normal::{build, observation_count, solve_damped, sum_squared_error};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};

/// Residual RMS (px) below which a solution is treated as exact.
const RMS_FLOOR: f64 = 1e-10;
const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
    pub jacobian: JacobianMode,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-3,
            relative_tolerance: 1e-12,
            jacobian: JacobianMode::Analytic,
        }
    }
}

impl RefineOptions {
    /// Capped variant used when scoring candidate poses.
    pub fn fast() -> Self {
        Self {
            max_iterations: 20,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineReport {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// False when the iteration budget ran out first.
    pub converged: bool,
}

/// Output of [`refine_parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub model: CameraModel,
    pub extrinsics: Vec<Pose>,
    pub rms: f64,
    pub report: RefineReport,
}

fn rms_of(sse: f64, n_obs: usize) -> f64 {
    (sse / (2.0 * n_obs as f64)).sqrt()
}

/// Minimizes the reprojection error starting from `model` and `poses`.
/// Parameters fixed in `mask` are never written.
pub fn refine_parameters(
    frames: &[DetectedFrame],
    model: &CameraModel,
    poses: &[Pose],
    mask: ParamMask,
    opts: &RefineOptions,
) -> Result<Refinement> {
    if frames.is_empty() {
        return Err(Error::InsufficientFrames { needed: 1, got: 0 });
    }
    if frames.len() != poses.len() {
        return Err(Error::InvalidInput(format!(
            "{} frames but {} poses",
            frames.len(),
            poses.len()
        )));
    }
    for f in frames {
        f.validate()?;
    }
    let n_obs = observation_count(frames);
    let fixed = mask.as_array();

    let mut model = *model;
    let mut poses = poses.to_vec();
    let mut blocks = build(frames, &model, &poses, opts.jacobian)?;
    let mut cost = blocks.sse;
    if !cost.is_finite() {
        return Err(Error::InvalidInput("initial estimate gives non-finite residuals".into()));
    }
    let mut report = RefineReport {
        iterations: 0,
        accepted_steps: 0,
        initial_cost: cost,
        final_cost: cost,
        converged: false,
    };
    if rms_of(cost, n_obs) < RMS_FLOOR {
        report.converged = true;
        return Ok(Refinement {
            model,
            extrinsics: poses,
            rms: rms_of(cost, n_obs),
            report,
        });
    }

    let mut lambda = opts.initial_damping;
    let mut ever_solved = false;
    while report.iterations < opts.max_iterations {
        report.iterations += 1;
        let Some((dc, dp)) = solve_damped(&blocks, &mask, lambda) else {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                if !ever_solved {
                    return Err(Error::SingularNormalEquations);
                }
                report.converged = true;
                break;
            }
            continue;
        };
        ever_solved = true;

        let mut params = model.params();
        for (i, p) in params.iter_mut().enumerate() {
            if !fixed[i] {
                *p += dc[i];
            }

        }
        let candidate = model.with_params(&params);
        let candidate_poses: Vec<Pose> = poses
            .iter()
            .zip(&dp)
            .map(|(p, d)| {
                let a = p.to_array();
                Pose::from_array(std::array::from_fn(|k| a[k] + d[k]))
            })
            .collect();
        let new_cost = if candidate.intrinsics.is_valid() && candidate.distortion.is_finite() {
            sum_squared_error(frames, &candidate, &candidate_poses).unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };

        if new_cost < cost {
            let relative = (cost - new_cost) / cost;
            model = candidate;
            poses = candidate_poses;
            cost = new_cost;
            report.accepted_steps += 1;
            lambda = (lambda / 10.0).max(1e-15);
            if relative < opts.relative_tolerance || rms_of(cost, n_obs) < RMS_FLOOR {
                report.converged = true;
                break;
            }
            blocks = build(frames, &model, &poses, opts.jacobian)?;
        } else {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                // No descent direction left: a local minimum to working precision.
                report.converged = true;
                break;
            }
        }
    }
    report.final_cost = cost;
    Ok(Refinement {
        model,
        extrinsics: poses,
        rms: rms_of(cost, n_obs),
        report,
    })
}

/// Refines `initial` and recomputes variances. Parameters that the data
/// cannot determine get an infinite variance instead of an error.
pub fn refine(
    frames: &[DetectedFrame],
    initial: &CalibrationEstimate,
    mask: ParamMask,
    opts: &RefineOptions,
) -> Result<(CalibrationEstimate, RefineReport)> {
    let r = refine_parameters(frames, &initial.model(), &initial.extrinsics, mask, opts)?;
    let mut est = CalibrationEstimate {
        intrinsics: r.model.intrinsics,
        distortion: r.model.distortion,
        extrinsics: r.extrinsics,
        param_variance: [0.0; 9],
        rms: r.rms,
    };
    est.param_variance = match super::covariance::parameter_variances_masked(frames, &est, mask, opts.jacobian) {
        Ok(v) => v,
        Err(Error::Unobservable(_)) => {
            std::array::from_fn(|i| if mask.as_array()[i] { 0.0 } else { f64::INFINITY })
        }
        Err(e) => return Err(e),
    };
    Ok((est, r.report))
}
