//! Simulated camera and detector, plus seeded end-to-end experiments that
//! compare pose-selection strategies against ground truth.

mod experiment;
mod output;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use experiment::{
    aggregate, run_experiment, run_session, Aggregate, ExperimentConfig, ExperimentResult, MetricSeries, PoseNoise,
    Strategy, StrategyResult,
};
pub use output::{write_outputs, Comparison, Summary, CSV_HEADER};

use crate::calibration::{DetectedFrame, Observation};
use crate::error::{Error, Result};
use crate::geometry::{project_board_with_margin, BoardSpec, CameraModel, CameraTruth, Pose};
use crate::posegen::random_pose;

/// Zero-mean Gaussian detector noise, `variance` in px² per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub variance: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { variance: 0.1 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if self.variance.is_finite() && self.variance >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("noise variance {} must be finite and >= 0", self.variance)))
        }
    }

    pub fn sigma(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Whether every corner lands inside the image under the true camera.
pub fn truth_visible(pose: &Pose, truth: &CameraTruth, board: &BoardSpec) -> bool {
    project_board_with_margin(board, pose, &truth.model(), truth.image, 0.0).visible
}

/// Projects every corner through the true camera and adds detector noise.
/// Corners pushed outside the image by the noise are dropped.
pub fn simulate_detection<R: Rng>(
    pose: &Pose,
    truth: &CameraTruth,
    board: &BoardSpec,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<DetectedFrame> {
    noise.validate()?;
    let proj = project_board_with_margin(board, pose, &truth.model(), truth.image, 0.0);
    if !proj.visible {
        return Err(Error::InvisiblePose);
    }
    let normal = Normal::new(0.0, noise.sigma()).expect("finite sigma");
    let observations = proj
        .corners
        .iter()
        .filter_map(|c| {
            let (u, v) = (c.u + normal.sample(rng), c.v + normal.sample(rng));
            truth.image.contains(u, v, 0.0).then_some(Observation { id: c.id, u, v })
        })
        .collect();
    DetectedFrame::new(*board, observations)
}

/// Fixed board poses over which projections under an estimate are compared
/// with projections under the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub board: BoardSpec,
    pub poses: Vec<Pose>,
}

impl EvalSet {
    /// `count` random poses, all visible under the truth, with depths in
    /// `depth` (mm).
    pub fn generate(truth: &CameraTruth, board: &BoardSpec, count: usize, depth: (f64, f64), seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poses = (0..count)
            .map(|_| {
                random_pose(
                    &mut rng,
                    &truth.intrinsics,
                    truth.image,
                    depth,
                    |p| truth_visible(p, truth, board),
                    100_000,
                )
                .ok_or(Error::InvisiblePose)
            })
            .collect::<Result<_>>()?;
        Ok(Self { board: *board, poses })
    }

    pub fn point_count(&self) -> usize {
        self.poses.len() * self.board.corner_count()
    }
}

/// RMS pixel distance between projections of the evaluation points under
/// `estimate` and under `truth`. Points the estimate cannot project make
/// the result NaN.
pub fn abs_rms_err(estimate: &CameraModel, truth: &CameraTruth, eval: &EvalSet) -> f64 {
    let truth = truth.model();
    let points = eval.board.corner_points();
    let mut sum = 0.0;
    for pose in &eval.poses {
        for q in &points {
            let a = estimate.project(q, pose).unwrap_or((f64::NAN, f64::NAN));
            let b = truth.project(q, pose).unwrap_or((f64::NAN, f64::NAN));
            sum += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
        }
    }
    (sum / eval.point_count() as f64).sqrt()
}
