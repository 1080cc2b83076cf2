//! The interactive calibration session: a startup phase that recovers a
//! rough camera from a tilted board, then rounds of target selection,
//! guidance and capture until every parameter's variance settles.

mod convergence;
mod guidance;
pub mod protocol;
pub mod server;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use convergence::{is_converged, variance_ratio, ConvergenceState};
pub use guidance::{
    format_number, instructions, pose_match, Axis, ComponentMatch, Direction, GuidancePayload, GuidanceStep,
    Instruction, MatchReport, Tolerances,
};

use crate::calibration::{
    calibrate, calibrate_from, calibrate_two_view, estimate_pose, CalibrationConfig,
    CalibrationEstimate, DetectedFrame, ParamMask, RefineOptions, MIN_CORNERS,
};
use crate::error::{Error, Result};
use crate::geometry::{project_board, BoardSpec, CameraModel, ImageSize, Param, ParamGroup, Pose};
use crate::posegen::{
    distortion_map, frontal_grid_size, generate_pose_k, max_distortion_window, next_target_param, pose_for_window,
    pull_into_view, random_pose, TiltSequences,
};
use crate::search::{search, HypotheticalContext, Loss, SaConfig};

/// Frames needed before the full nine-parameter model is fitted.
pub const FULL_MODEL_FRAMES: usize = 3;

/// Tilt about x of the startup target, degrees.
pub const STARTUP_TILT_DEG: f64 = 45.0;

const RANDOM_POSE_TRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionPhase {
    Startup,
    Collecting,
    Converged,
}

impl SessionPhase {
    pub fn name(self) -> &'static str {
        match self {
            SessionPhase::Startup => "STARTUP",
            SessionPhase::Collecting => "COLLECTING",
            SessionPhase::Converged => "CONVERGED",
        }
    }
}

/// Why a session left `COLLECTING`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Every parameter passed the convergence test.
    Converged,
    /// The frame cap was reached first.
    FrameCap,
}

/// Where the annealing starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSolution {
    /// Spread-angle or distortion-window pose for the least certain
    /// parameter.
    #[default]
    Generated,
    /// Uniform random visible pose.
    Random,
}

/// How the next target pose is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetPolicy {
    Search { loss: Loss, init: InitialSolution },
    /// The initial solution is used as the target without searching.
    GeneratedOnly,
}

impl Default for TargetPolicy {
    fn default() -> Self {
        TargetPolicy::Search {
            loss: Loss::SumIod,
            init: InitialSolution::Generated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub board: BoardSpec,
    pub image: ImageSize,
    pub sa: SaConfig,
    pub tolerances: Tolerances,
    /// Convergence threshold on `1 - r`.
    pub convergence_threshold: f64,
    /// Session ends once this many frames (startup frame included) are
    /// captured.
    pub frame_cap: usize,
    /// End the session once every parameter has converged. When off, only
    /// the frame cap ends it.
    pub stop_on_convergence: bool,
    /// Depth (mm) of the startup target.
    pub startup_distance: f64,
    /// Cell size (px) of the distortion map.
    pub distortion_cell: f64,
    pub policy: TargetPolicy,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            board: BoardSpec::default(),
            image: ImageSize::new(1280, 720),
            sa: SaConfig::default(),
            tolerances: Tolerances::default(),
            convergence_threshold: 0.1,
            frame_cap: 20,
            stop_on_convergence: true,
            startup_distance: 1000.0,
            distortion_cell: 16.0,
            policy: TargetPolicy::default(),
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.sa.validate()?;
        if !self.board.is_valid() {
            return Err(Error::InvalidInput(format!("invalid board {:?}", self.board)));
        }
        if self.image.width == 0 || self.image.height == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        let ok = self.convergence_threshold.is_finite()
            && self.convergence_threshold >= 0.0
            && self.frame_cap >= 1
            && self.startup_distance > 0.0
            && self.distortion_cell > 0.0
            && self.tolerances.rotation_deg >= 0.0
            && self.tolerances.translation_fraction >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid session config {self:?}")))
        }
    }
}

/// Result of a capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureOutcome {
    pub frame_count: usize,
    pub rms: f64,
    pub phase: SessionPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub name: String,
    pub value: f64,
    pub variance: f64,
    pub ratio: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateState {
    pub params: Vec<ParamState>,
    pub rms: f64,
}

/// Snapshot of a session for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: SessionPhase,
    pub frame_count: usize,
    pub distance: f64,
    pub estimate: Option<EstimateState>,
    pub convergence_flags: [bool; 9],
    pub stop_reason: Option<StopReason>,
}

/// One calibration session. Not shared: one caller drives it at a time.
#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    phase: SessionPhase,
    frames: Vec<DetectedFrame>,
    estimate: Option<CalibrationEstimate>,
    /// Best startup frame and its restricted estimate.
    candidate: Option<(DetectedFrame, CalibrationEstimate)>,
    distance: f64,
    tilts: TiltSequences,
    convergence: ConvergenceState,
    guidance: Option<GuidancePayload>,
    guidance_computations: usize,
    stop_reason: Option<StopReason>,
    rng: ChaCha8Rng,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            phase: SessionPhase::Startup,
            frames: Vec::new(),
            estimate: None,
            candidate: None,
            distance: config.startup_distance,
            tilts: TiltSequences::default(),
            convergence: ConvergenceState::new(config.convergence_threshold),
            guidance: None,
            guidance_computations: 0,
            stop_reason: None,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn frames(&self) -> &[DetectedFrame] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Current estimate, or the best startup candidate before confirmation.
    pub fn estimate(&self) -> Option<&CalibrationEstimate> {
        self.estimate.as_ref().or(self.candidate.as_ref().map(|c| &c.1))
    }

    /// Working distance (mm): the configured startup depth until a board
    /// has been seen, then the depth recovered from the retained startup
    /// frame. It stays fixed once collecting starts.
    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn convergence(&self) -> &ConvergenceState {
        &self.convergence
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop_reason
    }

    /// Number of times a guidance payload was computed.
    pub fn guidance_computations(&self) -> usize {
        self.guidance_computations
    }

    /// Pose shown during startup: the board tilted about x at the startup
    /// distance.
    pub fn startup_target(&self) -> Pose {
        Pose::from_degrees(STARTUP_TILT_DEG, 0.0, 0.0, 0.0, 0.0, self.config.startup_distance)
    }

    /// Offers a startup frame. Frames without the whole board, or on which
    /// the restricted calibration fails, are skipped. Returns whether the
    /// frame became the retained candidate (lowest reprojection error so
    /// far).
    pub fn offer_startup_frame(&mut self, frame: DetectedFrame) -> Result<bool> {
        self.require(SessionPhase::Startup, "offer a startup frame")?;
        frame.validate()?;
        if frame.board != self.config.board {
            return Err(Error::InvalidInput("frame board differs from the session board".into()));
        }
        if frame.len() < self.config.board.corner_count() {
            debug!("event=startup_skip reason=partial corners={}", frame.len());
            return Ok(false);
        }
        let est = match calibrate(std::slice::from_ref(&frame), &CalibrationConfig::restricted(self.config.image)) {
            Ok(e) => e,
            Err(e) => {
                debug!("event=startup_skip reason=calibration error={e}");
                return Ok(false);
            }
        };
        let better = self.candidate.as_ref().is_none_or(|(_, best)| est.rms < best.rms);
        if better {
            info!(
                "event=startup_candidate rms={} alpha={} beta={} z={}",
                est.rms, est.intrinsics.alpha, est.intrinsics.beta, est.extrinsics[0].zt
            );
            self.distance = est.extrinsics[0].zt;
            self.candidate = Some((frame, est));
        }
        Ok(better)
    }

    /// Accepts the retained startup frame as the first captured frame and
    /// moves to `COLLECTING`.
    pub fn confirm_startup(&mut self) -> Result<()> {
        self.require(SessionPhase::Startup, "confirm startup")?;
        let (frame, est) = self.candidate.take().ok_or(Error::NoVisibleBoard)?;
        self.distance = est.extrinsics[0].zt;
        self.frames = vec![frame];
        self.estimate = Some(est);
        self.phase = SessionPhase::Collecting;
        info!("event=startup_confirmed distance={}", self.distance);
        self.check_cap();
        Ok(())
    }

    /// Guidance for the next target, computed on first request after each
    /// capture and cached until the next one.
    pub fn guidance(&mut self) -> Result<&GuidancePayload> {
        self.require(SessionPhase::Collecting, "request guidance")?;
        if self.guidance.is_none() {
            let payload = self.compute_guidance()?;
            self.guidance_computations += 1;
            self.guidance = Some(payload);
        }
        Ok(self.guidance.as_ref().expect("cached above"))
    }

    /// Target of the cached guidance, if any.
    pub fn current_target(&self) -> Option<Pose> {
        self.guidance.as_ref().map(|g| g.target)
    }

    /// Adds a frame and recalibrates. On failure the frame is dropped and
    /// the session is unchanged.
    pub fn capture_frame(&mut self, frame: DetectedFrame) -> Result<CaptureOutcome> {
        self.require(SessionPhase::Collecting, "capture a frame")?;
        frame.validate()?;
        if frame.board != self.config.board {
            return Err(Error::InvalidInput("frame board differs from the session board".into()));
        }
        if frame.len() < MIN_CORNERS {
            return Err(Error::TooSparse {
                needed: MIN_CORNERS,
                got: frame.len(),
            });
        }
        let previous = self.estimate.clone().expect("collecting sessions have an estimate");
        self.frames.push(frame);
        let est = match self.recalibrate(&previous, self.current_target()) {
            Ok(e) => e,
            Err(e) => {
                self.frames.pop();
                warn!("event=capture_rejected error={e}");
                return Err(e);
            }
        };
        let n = self.frames.len();
        self.convergence
            .update(est.param_variance, n > FULL_MODEL_FRAMES && previous.frame_count() >= FULL_MODEL_FRAMES);
        info!(
            "event=capture frames={n} rms={} converged={}",
            est.rms,
            self.convergence.flags.iter().filter(|f| **f).count()
        );
        self.estimate = Some(est);
        self.guidance = None;
        if self.config.stop_on_convergence && self.convergence.all_converged() {
            self.finish(StopReason::Converged);
        } else {
            self.check_cap();
        }
        Ok(CaptureOutcome {
            frame_count: n,
            rms: self.estimate.as_ref().expect("set above").rms,
            phase: self.phase,
        })
    }

    pub fn state(&self) -> SessionState {
        let estimate = self.estimate().map(|e| {
            let values = e.params();
            EstimateState {
                params: Param::ALL
                    .iter()
                    .map(|p| {
                        let i = p.index();
                        let r = self.convergence.ratios[i];
                        ParamState {
                            name: p.name().to_string(),
                            value: values[i],
                            variance: e.param_variance[i],
                            ratio: r.is_finite().then_some(r),
                            converged: self.convergence.flags[i],
                        }
                    })
                    .collect(),
                rms: e.rms,
            }
        });
        SessionState {
            phase: self.phase,
            frame_count: self.frames.len(),
            distance: self.distance,
            estimate,
            convergence_flags: self.convergence.flags,
            stop_reason: self.stop_reason,
        }
    }

    fn require(&self, phase: SessionPhase, what: &str) -> Result<()> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(Error::WrongPhase {
                phase: self.phase.name().to_string(),
                what: what.to_string(),
            })
        }
    }

    fn finish(&mut self, reason: StopReason) {
        self.phase = SessionPhase::Converged;
        self.stop_reason = Some(reason);
        self.guidance = None;
        info!("event=session_end reason={reason:?} frames={}", self.frames.len());
    }

    fn check_cap(&mut self) {
        if self.frames.len() >= self.config.frame_cap {
            self.finish(StopReason::FrameCap);
        }
    }

    /// Calibration over all frames. One frame supports the restricted model
    /// and two the two-view model. From three frames on, a run warm-started
    /// from the previous estimate competes with one from scratch and the
    /// lower reprojection error wins. The new frame's warm-start pose is
    /// seeded with the guidance target when there is one.
    fn recalibrate(&self, previous: &CalibrationEstimate, target: Option<Pose>) -> Result<CalibrationEstimate> {
        let frames = &self.frames;
        let new_frame = frames.last().expect("frame pushed");
        let model = previous.model();
        let guesses: Vec<Pose> = target.into_iter().collect();
        let warm_poses = || -> Result<Vec<Pose>> {
            let mut poses = previous.extrinsics.clone();
            poses.push(estimate_pose(new_frame, &model, &guesses)?);
            Ok(poses)
        };
        match frames.len() {
            0 | 1 => return calibrate(frames, &CalibrationConfig::restricted(self.config.image)),
            2 => {
                return calibrate_two_view(frames, self.config.image, previous.intrinsics.alpha).or_else(|e| {
                    debug!("event=two_view_fallback error={e}");
                    calibrate_from(
                        frames,
                        &model,
                        &warm_poses()?,
                        ParamMask::FOCAL_ONLY.with_tied_focal(),
                        &RefineOptions::default(),
                    )
                })
            }
            _ => {}
        }
        let warm = warm_poses()
            .and_then(|poses| calibrate_from(frames, &model, &poses, ParamMask::ALL_FREE, &RefineOptions::default()));
        let scratch = calibrate(frames, &CalibrationConfig::full());
        match (warm, scratch) {
            (Ok(a), Ok(b)) => Ok(if b.rms < a.rms { b } else { a }),
            (Ok(a), Err(e)) | (Err(e), Ok(a)) => {
                debug!("event=recalibration_partial error={e}");
                Ok(a)
            }
            (Err(e), Err(_)) => Err(e),
        }
    }

    fn visible(&self, model: &CameraModel) -> impl Fn(&Pose) -> bool + '_ {
        let (board, image, model) = (self.config.board, self.config.image, *model);
        move |p: &Pose| project_board(&board, p, &model, image).visible
    }

    fn random_pose(&mut self, model: &CameraModel) -> Result<Pose> {
        let depth = (self.config.sa.min_depth * self.distance, self.config.sa.max_depth * self.distance);
        let (board, image, m) = (self.config.board, self.config.image, *model);
        random_pose(
            &mut self.rng,
            &model.intrinsics,
            image,
            depth,
            |p| project_board(&board, p, &m, image).visible,
            RANDOM_POSE_TRIES,
        )
        .ok_or(Error::InvisiblePose)
    }

    /// Starting pose for the parameter `target`.
    fn generated_pose(&mut self, target: Param, est: &CalibrationEstimate) -> Result<Pose> {
        match target.group() {
            ParamGroup::Projection => generate_pose_k(target, &mut self.tilts, self.distance),
            ParamGroup::Distortion => {
                let map = distortion_map(&est.model(), self.config.image, self.config.distortion_cell);
                let size = frontal_grid_size(&est.intrinsics, &self.config.board, self.distance);
                let rect = max_distortion_window(&map, size, self.config.image);
                pose_for_window(&rect, &est.intrinsics, &self.config.board)
            }
        }
    }

    fn search_seed(&self) -> u64 {
        self.config
            .sa
            .seed
            .wrapping_add(self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(self.frames.len() as u64)
    }

    fn compute_guidance(&mut self) -> Result<GuidancePayload> {
        let est = self.estimate.clone().expect("collecting sessions have an estimate");
        let model = est.model();
        let target_param = next_target_param(&est);
        let random_init = matches!(
            self.config.policy,
            TargetPolicy::Search {
                init: InitialSolution::Random,
                ..
            }
        );
        let mut initial = if random_init {
            self.random_pose(&model)?
        } else {
            self.generated_pose(target_param, &est).or_else(|e| {
                debug!("event=generated_pose_failed param={} error={e}", target_param.name());
                self.random_pose(&model)
            })?
        };
        if !self.visible(&model)(&initial) {
            initial = match pull_into_view(&initial, self.visible(&model)) {
                Some(p) => p,
                None => self.random_pose(&model)?,
            };
        }
        let target = match self.config.policy {
            TargetPolicy::GeneratedOnly => initial,
            TargetPolicy::Search { loss, .. } => {
                let ctx = HypotheticalContext {
                    frames: &self.frames,
                    estimate: &est,
                    board: self.config.board,
                    image: self.config.image,
                    distance: self.distance,
                };
                let sa = SaConfig {
                    seed: self.search_seed(),
                    ..self.config.sa
                };
                let out = search(&initial, &ctx, &sa, loss);
                debug!(
                    "event=search param={} initial_cost={} cost={} accepted={} stuck={}",
                    target_param.name(),
                    out.initial_cost,
                    out.cost,
                    out.accepted,
                    out.stuck
                );
                if out.cost.is_finite() {
                    out.pose
                } else {
                    warn!("event=search_failed param={} fallback=initial", target_param.name());
                    initial
                }
            }
        };
        Ok(GuidancePayload::build(
            target,
            target_param,
            &self.config.board,
            &model,
            self.config.image,
        ))
    }
}
