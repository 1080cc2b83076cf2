//! Homographies, closed-form start, pose recovery, refinement, variances.

use nalgebra::{SMatrix, SVector};

use super::closed_form::{closed_form_intrinsics, restricted_intrinsics};
use super::covariance::parameter_variances_masked;
use super::estimate::{CalibrationEstimate, ParamMask};
use super::extrinsics::extrinsics_from_homography;
use super::frame::DetectedFrame;
use super::homography::{estimate_homography, homography_from_points, Homography};
use super::refine::{refine_parameters, RefineOptions};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Distortion, ImageSize, Intrinsics, Pose};

/// Upper bound on refinement runs when calibrating from scratch.
const SCRATCH_RUNS: usize = 3;

/// Which camera model to fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    /// All nine parameters; needs at least three frames.
    Full,
    /// Focal scales only, principal point at the image center, no
    /// distortion. Works from a single frame.
    Restricted { image: ImageSize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub model: ModelKind,
    pub refine: RefineOptions,
}

impl CalibrationConfig {
    pub fn full() -> Self {
        Self {
            model: ModelKind::Full,
            refine: RefineOptions::default(),
        }
    }

    pub fn restricted(image: ImageSize) -> Self {
        Self {
            model: ModelKind::Restricted { image },
            refine: RefineOptions::default(),
        }
    }

}

/// Calibrates from scratch.
pub fn calibrate(frames: &[DetectedFrame], config: &CalibrationConfig) -> Result<CalibrationEstimate> {
    let needed = match config.model {
        ModelKind::Full => 3,
        ModelKind::Restricted { .. } => 1,
    };
    if frames.len() < needed {
        return Err(Error::InsufficientFrames { needed, got: frames.len() });
    }
    let hs = frames.iter().map(estimate_homography).collect::<Result<Vec<_>>>()?;
    match config.model {
        ModelKind::Full => {
            let closed = Intrinsics {
                gamma: 0.0,
                ..closed_form_intrinsics(&hs)?
            };
            // The closed-form principal point is unreliable under strong
            // distortion, so also start from a centered camera.
            let centered = restricted_intrinsics(&hs, observed_center(frames));
            let mut best = calibrate_full_from(frames, &hs, closed, &config.refine);
            if let Ok(k) = centered {
                let other = calibrate_full_from(frames, &hs, k, &config.refine);
                best = match (best, other) {
                    (Ok(a), Ok(b)) => Ok(if b.rms < a.rms { b } else { a }),
                    (Err(_), b) => b,
                    (a, Err(_)) => a,
                };
            }
            best
        }
        ModelKind::Restricted { image } => {
            let k = restricted_intrinsics(&hs, image.center())?;
            let poses = poses_from_homographies(&hs, &k)?;
            let model = CameraModel::new(k, Distortion::ZERO);
            refine_from_scratch(frames, model, poses, ParamMask::FOCAL_ONLY.with_tied_focal(), &config.refine)
        }
    }
}

fn calibrate_full_from(
    frames: &[DetectedFrame],
    hs: &[Homography],
    intrinsics: Intrinsics,
    opts: &RefineOptions,
) -> Result<CalibrationEstimate> {
    let poses = poses_from_homographies(hs, &intrinsics)?;
    let distortion = linear_distortion(frames, &intrinsics, &poses).unwrap_or(Distortion::ZERO);
    refine_from_scratch(frames, CameraModel::new(intrinsics, distortion), poses, ParamMask::ALL_FREE, opts)
}

fn refine_from_scratch(
    frames: &[DetectedFrame],
    mut model: CameraModel,
    mut poses: Vec<Pose>,
    mask: ParamMask,
    opts: &RefineOptions,
) -> Result<CalibrationEstimate> {
    // A start far from the optimum can run out of iterations; restart from
    // where it stopped.
    for _ in 1..SCRATCH_RUNS {
        let r = refine_parameters(frames, &model, &poses, mask, opts)?;
        model = r.model;
        poses = r.extrinsics;
        if r.report.converged {
            break;
        }
    }
    calibrate_from(frames, &model, &poses, mask, opts)
}

/// Midpoint of the bounding box of every observed corner.
fn observed_center(frames: &[DetectedFrame]) -> (f64, f64) {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for o in frames.iter().flat_map(|f| &f.observations) {
        lo = (lo.0.min(o.u), lo.1.min(o.v));
        hi = (hi.0.max(o.u), hi.1.max(o.v));
    }
    ((lo.0 + hi.0) / 2.0, (lo.1 + hi.1) / 2.0)
}

/// Refines from `model` and `poses` and attaches variances. Errors from the
/// variance step are propagated.
pub fn calibrate_from(
    frames: &[DetectedFrame],
    model: &CameraModel,
    poses: &[Pose],
    mask: ParamMask,
    opts: &RefineOptions,
) -> Result<CalibrationEstimate> {
    let r = refine_parameters(frames, model, poses, mask, opts)?;
    let mut est = CalibrationEstimate {
        intrinsics: r.model.intrinsics,
        distortion: r.model.distortion,
        extrinsics: r.extrinsics,
        param_variance: [0.0; 9],
        rms: r.rms,
    };
    est.param_variance = parameter_variances_masked(frames, &est, mask, opts.jacobian)?;
    Ok(est)
}

/// Starting focal lengths of the two-view fit, as multiples of the guess.
const TWO_VIEW_FOCAL_SCALES: [f64; 6] = [0.4, 0.6, 0.8, 1.0, 1.25, 1.6];

/// Fits [`ParamMask::TWO_VIEW`] with the principal point at the image
/// center. The problem has poor local minima when a view is close and
/// steep, so it restarts from several focal lengths around `focal_guess`
/// and keeps the lowest residual.
pub fn calibrate_two_view(frames: &[DetectedFrame], image: ImageSize, focal_guess: f64) -> Result<CalibrationEstimate> {
    if frames.len() < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: frames.len() });
    }
    if !(focal_guess > 0.0 && focal_guess.is_finite()) {
        return Err(Error::InvalidInput(format!("focal guess must be positive, got {focal_guess}")));
    }
    let hs = frames.iter().map(estimate_homography).collect::<Result<Vec<_>>>()?;
    let (cx, cy) = image.center();
    let mut best: Option<CalibrationEstimate> = None;
    let mut last_err = Error::Degenerate("two-view fit did not run".into());
    for scale in TWO_VIEW_FOCAL_SCALES {
        let f = focal_guess * scale;
        let model = CameraModel::new(Intrinsics::new(f, f, cx, cy), Distortion::ZERO);
        let fit = poses_from_homographies(&hs, &model.intrinsics)
            .and_then(|poses| calibrate_from(frames, &model, &poses, ParamMask::TWO_VIEW, &RefineOptions::default()));
        match fit {
            Ok(e) if best.as_ref().map_or(true, |b| e.rms < b.rms) => best = Some(e),
            Ok(_) => {}
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

/// Pose of one frame seen through a known camera. Each start (the
/// homography of the undistorted corners, the raw homography and the
/// `guesses`) is refined with the camera held fixed; the best fit wins.
pub fn estimate_pose(frame: &DetectedFrame, model: &CameraModel, guesses: &[Pose]) -> Result<Pose> {
    let mut starts = guesses.to_vec();
    if let Ok(p) = undistorted_homography(frame, model)
        .and_then(|h| extrinsics_from_homography(&h, &Intrinsics::new(1.0, 1.0, 0.0, 0.0)))
    {
        starts.push(p);
    }
    if let Ok(p) = estimate_homography(frame).and_then(|h| extrinsics_from_homography(&h, &model.intrinsics)) {
        starts.push(p);
    }
    let mut best: Option<(f64, Pose)> = None;
    let mut last_err = Error::Degenerate("no starting pose for the frame".into());
    for start in starts {
        match refine_parameters(std::slice::from_ref(frame), model, &[start], ParamMask::ALL_FIXED, &RefineOptions::default()) {
            Ok(r) if best.map_or(true, |(rms, _)| r.rms < rms) => best = Some((r.rms, r.extrinsics[0])),
            Ok(_) => {}
            Err(e) => last_err = e,
        }
    }
    best.map(|(_, p)| p).ok_or(last_err)
}

/// Homography from the board plane to undistorted normalized coordinates.
/// Corners the model cannot undistort are left out.
fn undistorted_homography(frame: &DetectedFrame, model: &CameraModel) -> Result<Homography> {
    let mut src = Vec::with_capacity(frame.len());
    let mut dst = Vec::with_capacity(frame.len());
    for o in &frame.observations {
        let (xd, yd) = model.intrinsics.to_normalized(o.u, o.v);
        let (Some(q), Ok(x)) = (frame.board.corner_point(o.id), model.distortion.undistort(xd, yd)) else {
            continue;
        };
        src.push((q.x, q.y));
        dst.push(x);
    }
    homography_from_points(&src, &dst)
}

pub fn poses_from_homographies(hs: &[Homography], intrinsics: &Intrinsics) -> Result<Vec<Pose>> {
    hs.iter().map(|h| extrinsics_from_homography(h, intrinsics)).collect()
}

/// Least-squares distortion coefficients with the camera matrix and poses
/// held fixed; the model is linear in the coefficients.
pub fn linear_distortion(frames: &[DetectedFrame], intr: &Intrinsics, poses: &[Pose]) -> Option<Distortion> {
    let mut ata = SMatrix::<f64, 5, 5>::zeros();
    let mut atb = SVector::<f64, 5>::zeros();
    for (frame, pose) in frames.iter().zip(poses) {
        let (r, t) = (pose.rotation(), pose.translation());
        for o in &frame.observations {
            let q = frame.board.corner_point(o.id)?;
            let pc = r * q + t;
            if pc.z <= 0.0 {
                return None;
            }
            let (x, y) = (pc.x / pc.z, pc.y / pc.z);
            let (u, v) = intr.to_pixel(x, y);
            let c = Distortion::coefficient_jacobian(x, y);
            let rows = [
                (
                    SVector::<f64, 5>::from_fn(|k, _| intr.alpha * c[0][k] + intr.gamma * c[1][k]),
                    o.u - u,
                ),
                (SVector::<f64, 5>::from_fn(|k, _| intr.beta * c[1][k]), o.v - v),
            ];
            for (a, b) in rows {
                ata += a * a.transpose();
                atb += a * b;
            }
        }
    }
    let sol = ata.cholesky()?.solve(&atb);
    sol.iter()
        .all(|v| v.is_finite())
        .then(|| Distortion::new(sol[0], sol[1], sol[2], sol[3], sol[4]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoardSpec, CameraTruth};
    use crate::test_support::{frame_at, spread_poses};

    #[test]
    fn recovers_reference_camera_from_ten_views() {
        let truth = CameraTruth::default();
        let frames: Vec<_> = spread_poses()
            .iter()
            .map(|p| frame_at(&BoardSpec::default(), p, &truth.model()))
            .collect();
        let est = calibrate(&frames, &CalibrationConfig::full()).unwrap();
        for (a, b) in est.params().iter().zip(truth.model().params()) {
            let ok = if b.abs() < 0.01 {
                (a - b).abs() < 1e-4
            } else {
                (a - b).abs() < 1e-3 * b.abs()
            };
            assert!(ok, "{a} vs {b}");
        }
        assert_eq!(est.extrinsics.len(), 10);
    }

    #[test]
    fn four_views_through_the_reference_lens() {
        // From the closed-form start this set stalls with u0 near 170.
        let truth = CameraTruth::default();
        let frames: Vec<_> = [
            Pose::from_degrees(30.0, 0.0, 0.0, 0.0, 0.0, 900.0),
            Pose::from_degrees(0.0, 35.0, 10.0, 30.0, 0.0, 1000.0),
            Pose::from_degrees(-25.0, -20.0, -5.0, -20.0, 20.0, 800.0),
            Pose::from_degrees(10.0, -35.0, 20.0, 0.0, -20.0, 1100.0),
        ]
        .iter()
        .map(|p| frame_at(&BoardSpec::default(), p, &truth.model()))
        .collect();
        let est = calibrate(&frames, &CalibrationConfig::full()).unwrap();
        assert!(est.rms < 1e-9, "rms {}", est.rms);
        assert!((est.intrinsics.u0 - 635.0).abs() < 1e-6);
    }

    #[test]
    fn restricted_model_from_one_view() {
        // Without lens distortion the single-view focal solve is accurate.
        let truth = CameraTruth {
            distortion: Distortion::ZERO,
            ..CameraTruth::default()
        };
        let pose = Pose::from_degrees(45.0, 0.0, 0.0, 0.0, 0.0, 1000.0);
        let frame = frame_at(&BoardSpec::default(), &pose, &truth.model());
        let est = calibrate(&[frame], &CalibrationConfig::restricted(truth.image)).unwrap();
        assert_eq!((est.intrinsics.u0, est.intrinsics.v0), (640.0, 360.0));
        assert_eq!(est.distortion, Distortion::ZERO);
        assert!((est.intrinsics.alpha / 1068.0 - 1.0).abs() < 0.05);
        assert!((est.intrinsics.beta / 1073.0 - 1.0).abs() < 0.05);
        assert!((est.extrinsics[0].zt / 1000.0 - 1.0).abs() < 0.05);
        assert_eq!(est.param_variance[2..], [0.0; 7]);
    }

    #[test]
    fn full_model_needs_three_frames() {
        let truth = CameraTruth::default();
        let frames: Vec<_> = spread_poses()[..2]
            .iter()
            .map(|p| frame_at(&BoardSpec::default(), p, &truth.model()))
            .collect();
        assert_eq!(
            calibrate(&frames, &CalibrationConfig::full()),
            Err(Error::InsufficientFrames { needed: 3, got: 2 })
        );
    }

    #[test]
    fn restricted_model_with_reference_lens() {
        // Distortion is not modeled, so only rough agreement is expected.
        let truth = CameraTruth::default();
        let pose = Pose::from_degrees(45.0, 0.0, 0.0, 0.0, 0.0, 1000.0);
        let frame = frame_at(&BoardSpec::default(), &pose, &truth.model());
        let est = calibrate(&[frame], &CalibrationConfig::restricted(truth.image)).unwrap();
        assert!((est.intrinsics.alpha / 1068.0 - 1.0).abs() < 0.05, "{:?}", est.intrinsics);
        assert!((est.intrinsics.beta / 1073.0 - 1.0).abs() < 0.05);
        assert!((est.extrinsics[0].zt / 1000.0 - 1.0).abs() < 0.05);
        assert_eq!(est.intrinsics.alpha, est.intrinsics.beta);
    }

    #[test]
    fn two_view_fit_recovers_a_matching_camera() {
        // A camera inside the two-view model: square pixels, centered
        // principal point and no k3.
        let model = CameraModel::new(
            Intrinsics::new(1070.0, 1070.0, 640.0, 360.0),
            Distortion {
                k3: 0.0,
                ..CameraTruth::default().distortion
            },
        );
        let frames: Vec<_> = spread_poses()[..2]
            .iter()
            .map(|p| frame_at(&BoardSpec::default(), p, &model))
            .collect();
        let est = calibrate_two_view(&frames, ImageSize::new(1280, 720), 800.0).unwrap();
        assert!(est.rms < 1e-6, "rms {}", est.rms);
        for (a, b) in est.params().iter().zip(model.params()) {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!(matches!(
            calibrate_two_view(&frames[..1], ImageSize::new(1280, 720), 800.0),
            Err(Error::InsufficientFrames { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn pose_of_a_steep_view_through_the_reference_lens() {
        let truth = CameraTruth::default();
        let pose = Pose::from_degrees(-20.0, -55.0, 5.0, -150.0, -40.0, 700.0);
        let frame = frame_at(&BoardSpec::default(), &pose, &truth.model());
        let got = estimate_pose(&frame, &truth.model(), &[]).unwrap();
        for (a, b) in got.to_array().iter().zip(pose.to_array()) {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{got:?} vs {pose:?}");
        }
    }
}
