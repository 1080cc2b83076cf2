//! Shared fixtures for unit tests.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::calibration::{DetectedFrame, Observation};
use crate::geometry::{is_board_visible, BoardSpec, CameraModel, CameraTruth, Pose};

/// Noise-free observations of every corner.
pub fn frame_at(board: &BoardSpec, pose: &Pose, model: &CameraModel) -> DetectedFrame {
    noisy_frame_at(board, pose, model, 0.0, &mut rand::rng())
}

pub fn noisy_frame_at<R: Rng>(board: &BoardSpec, pose: &Pose, model: &CameraModel, sigma: f64, rng: &mut R) -> DetectedFrame {
    let noise = Normal::new(0.0, sigma.max(0.0)).unwrap();
    let observations = board
        .corner_points()
        .iter()
        .enumerate()
        .map(|(id, q)| {
            let (u, v) = model.project(q, pose).expect("in front of camera");
            let (du, dv) = if sigma > 0.0 {
                (noise.sample(rng), noise.sample(rng))
            } else {
                (0.0, 0.0)
            };
            Observation { id, u: u + du, v: v + dv }
        })
        .collect();
    DetectedFrame::new(*board, observations).unwrap()
}

/// Ten varied poses, all fully visible in the reference camera.
pub fn spread_poses() -> Vec<Pose> {
    let poses = vec![
        Pose::from_degrees(30.0, 0.0, 0.0, 0.0, 0.0, 600.0),
        Pose::from_degrees(-30.0, 10.0, 20.0, 10.0, -10.0, 650.0),
        Pose::from_degrees(0.0, 35.0, -10.0, -20.0, 0.0, 600.0),
        Pose::from_degrees(10.0, -35.0, 30.0, 20.0, 10.0, 700.0),
        Pose::from_degrees(25.0, 25.0, 45.0, 0.0, 20.0, 750.0),
        Pose::from_degrees(-25.0, -25.0, -30.0, -10.0, -20.0, 700.0),
        Pose::from_degrees(40.0, -15.0, 10.0, 30.0, 0.0, 800.0),
        Pose::from_degrees(-15.0, 40.0, 60.0, -30.0, 10.0, 800.0),
        Pose::from_degrees(5.0, 5.0, 90.0, 0.0, 0.0, 550.0),
        Pose::from_degrees(-40.0, 20.0, -45.0, 20.0, -10.0, 850.0),
    ];
    let truth = CameraTruth::default();
    for p in &poses {
        assert!(is_board_visible(&BoardSpec::default(), p, &truth.model(), truth.image), "{p:?}");
    }
    poses
}
