//! Simulated-annealing search for the next board pose, scored by a
//! hypothetical calibration that includes a synthetic frame at the
//! candidate pose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_from, CalibrationEstimate, DetectedFrame, Observation, ParamMask, RefineOptions};
use crate::error::{Error, Result};
use crate::geometry::{project_board, BoardSpec, ImageSize, Pose, MAX_ROTATION_DEG};

/// Floor on `|C|` in the index of dispersion.
pub const IOD_VALUE_FLOOR: f64 = 1e-6;

/// Index of dispersion `sigma^2 / |C|` with `|C|` floored at
/// [`IOD_VALUE_FLOOR`].
pub fn iod(variance: f64, value: f64) -> f64 {
    variance / value.abs().max(IOD_VALUE_FLOOR)
}

pub fn iod_vector(estimate: &CalibrationEstimate) -> [f64; 9] {
    let values = estimate.params();
    std::array::from_fn(|i| iod(estimate.param_variance[i], values[i]))
}

pub fn sum_iod(estimate: &CalibrationEstimate) -> f64 {
    iod_vector(estimate).iter().sum()
}

pub fn max_iod(estimate: &CalibrationEstimate) -> f64 {
    iod_vector(estimate).iter().copied().fold(0.0, f64::max)
}

/// What a hypothetical calibration is scored by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    SumIod,
    /// Training reprojection RMS of the hypothetical calibration.
    RmsErr,
    MaxIod,
}

impl Loss {
    pub fn evaluate(self, estimate: &CalibrationEstimate) -> f64 {
        match self {
            Loss::SumIod => sum_iod(estimate),
            Loss::RmsErr => estimate.rms,
            Loss::MaxIod => max_iod(estimate),
        }
    }
}

/// Annealing schedule and neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    pub initial_temperature: f64,
    pub min_temperature: f64,
    pub cooling: f64,
    pub iterations_per_temperature: usize,
    /// Standard deviation of an angle step, degrees.
    pub rotation_sigma_deg: f64,
    /// Standard deviation of a translation step as a fraction of the
    /// working distance.
    pub translation_sigma: f64,
    /// Allowed depth range as fractions of the working distance.
    pub min_depth: f64,
    pub max_depth: f64,
    /// Resampling attempts before a neighbor gives up.
    pub max_neighbor_tries: usize,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            initial_temperature: 1.0,
            min_temperature: 0.1,
            cooling: 0.7,
            iterations_per_temperature: 10,
            rotation_sigma_deg: 10.0,
            translation_sigma: 0.1,
            min_depth: 0.3,
            max_depth: 3.0,
            max_neighbor_tries: 20,
            seed: 0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cooling > 0.0
            && self.cooling < 1.0
            && self.min_temperature > 0.0
            && self.min_temperature < self.initial_temperature
            && self.iterations_per_temperature >= 1
            && self.rotation_sigma_deg >= 0.0
            && self.translation_sigma >= 0.0
            && self.min_depth > 0.0
            && self.min_depth < self.max_depth;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid annealing config {self:?}")))
        }
    }

    /// Temperatures of the rounds, `T0 r^n` while above the minimum.
    pub fn temperatures(&self) -> Vec<f64> {
        (0..)
            .map(|n| self.initial_temperature * self.cooling.powi(n))
            .take_while(|t| *t > self.min_temperature)
            .collect()
    }
}

/// Mask used for a calibration over `n` frames, matching the model the
/// session fits at that frame count.
pub fn mask_for_frame_count(n: usize) -> ParamMask {
    match n {
        0 | 1 => ParamMask::FOCAL_ONLY.with_tied_focal(),
        2 => ParamMask::TWO_VIEW,
        _ => ParamMask::ALL_FREE,
    }
}

/// Captured data a candidate pose is scored against.
#[derive(Debug, Clone, Copy)]
pub struct HypotheticalContext<'a> {
    pub frames: &'a [DetectedFrame],
    /// Current estimate; `extrinsics` line up with `frames`.
    pub estimate: &'a CalibrationEstimate,
    pub board: BoardSpec,
    pub image: ImageSize,
    /// Working distance (mm) that scales translation steps and bounds depth.
    pub distance: f64,
}

impl HypotheticalContext<'_> {
    pub fn is_visible(&self, pose: &Pose) -> bool {
        project_board(&self.board, pose, &self.estimate.model(), self.image).visible
    }

    /// Noise-free detection of the board at `pose` through the current
    /// estimate.
    pub fn synthetic_frame(&self, pose: &Pose) -> Result<DetectedFrame> {
        let proj = project_board(&self.board, pose, &self.estimate.model(), self.image);
        if !proj.visible {
            return Err(Error::InvisiblePose);
        }
        DetectedFrame::new(
            self.board,
            proj.corners
                .iter()
                .map(|c| Observation { id: c.id, u: c.u, v: c.v })
                .collect(),
        )
    }

    /// Warm-started, iteration-capped calibration with a synthetic frame at
    /// `pose` appended.
    pub fn hypothetical_calibration(&self, pose: &Pose) -> Result<CalibrationEstimate> {
        let synthetic = self.synthetic_frame(pose)?;
        let mut frames = Vec::with_capacity(self.frames.len() + 1);
        frames.extend_from_slice(self.frames);
        frames.push(synthetic);
        let mut poses = self.estimate.extrinsics.clone();
        poses.push(*pose);
        calibrate_from(
            &frames,
            &self.estimate.model(),
            &poses,
            mask_for_frame_count(frames.len()),
            &RefineOptions::fast(),
        )
    }
}

/// Loss of adding a frame at `pose`. Invisible poses are an error; a failed
/// or unobservable calibration costs infinity.
pub fn cost(pose: &Pose, ctx: &HypotheticalContext, loss: Loss) -> Result<f64> {
    if !ctx.is_visible(pose) {
        return Err(Error::InvisiblePose);
    }
    Ok(match ctx.hypothetical_calibration(pose) {
        Ok(est) => {
            let v = loss.evaluate(&est);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        }
        Err(_) => f64::INFINITY,
    })
}

/// Neighbor of `pose` changing exactly one component by a Gaussian step.
/// Angles are clamped to the search box and depth to the configured range.
/// Candidates failing `visible` are resampled; after
/// `max_neighbor_tries` failures `pose` is returned with `stuck = true`.
pub fn neighbor<R: Rng, V: Fn(&Pose) -> bool>(
    pose: &Pose,
    config: &SaConfig,
    distance: f64,
    visible: V,
    rng: &mut R,
) -> (Pose, bool) {
    let limit = MAX_ROTATION_DEG.to_radians();
    for _ in 0..config.max_neighbor_tries {
        let mut a = pose.to_array();
        let k = rng.random_range(0..6);
        let step: f64 = rng.sample(StandardNormal);
        match k {
            0..=2 => a[k] = (a[k] + step * config.rotation_sigma_deg.to_radians()).clamp(-limit, limit),
            3 | 4 => a[k] += step * config.translation_sigma * distance,
            _ => {
                a[5] = (a[5] + step * config.translation_sigma * distance)
                    .clamp(config.min_depth * distance, config.max_depth * distance)
            }
        }
        let candidate = Pose::from_array(a);
        if visible(&candidate) {
            return (candidate, false);
        }
    }
    (*pose, true)
}

/// Metropolis rule: always accept an improvement, otherwise accept with
/// probability `exp(-(new - old) / T)`. Infinite costs are never accepted.
pub fn accept<R: Rng>(new: f64, old: f64, temperature: f64, rng: &mut R) -> bool {
    if new < old {
        return true;
    }
    if !new.is_finite() {
        return false;
    }
    let p = (-(new - old) / temperature).exp();
    rng.random::<f64>() < p
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Lowest-cost pose seen, the initial solution included.
    pub pose: Pose,
    pub cost: f64,
    pub initial_cost: f64,
    /// Neighbor evaluations; the initial solution is scored once more on top.
    pub evaluations: usize,
    pub rounds: usize,
    pub accepted: usize,
    pub stuck: usize,
}

/// Annealing over an arbitrary cost. Returns the best pose evaluated.
pub fn anneal<V, C>(initial: &Pose, config: &SaConfig, distance: f64, visible: V, mut cost: C) -> SearchOutcome
where
    V: Fn(&Pose) -> bool,
    C: FnMut(&Pose) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = *initial;
    let mut current_cost = cost(initial);
    let mut out = SearchOutcome {
        pose: current,
        cost: current_cost,
        initial_cost: current_cost,
        evaluations: 0,
        rounds: 0,
        accepted: 0,
        stuck: 0,
    };
    for temperature in config.temperatures() {
        out.rounds += 1;
        for _ in 0..config.iterations_per_temperature {
            let (candidate, stuck) = neighbor(&current, config, distance, &visible, &mut rng);
            out.stuck += usize::from(stuck);
            let c = cost(&candidate);
            out.evaluations += 1;
            if c < out.cost {
                out.pose = candidate;
                out.cost = c;
            }
            if accept(c, current_cost, temperature, &mut rng) {
                current = candidate;
                current_cost = c;
                out.accepted += 1;
            }
        }
    }
    out
}

/// Searches for the pose whose hypothetical calibration has the lowest loss.
pub fn search(initial: &Pose, ctx: &HypotheticalContext, config: &SaConfig, loss: Loss) -> SearchOutcome {
    anneal(
        initial,
        config,
        ctx.distance,
        |p| ctx.is_visible(p),
        |p| cost(p, ctx, loss).unwrap_or(f64::INFINITY),
    )
}
