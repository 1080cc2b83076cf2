use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{abs_rms_err, simulate_detection, truth_visible, EvalSet, NoiseModel};
use crate::error::{Error, Result};
use crate::geometry::{BoardSpec, CameraTruth, Pose};
use crate::posegen::{pull_into_view, random_pose};
use crate::search::{sum_iod, Loss, SaConfig};
use crate::session::{InitialSolution, Session, SessionConfig, SessionPhase, StopReason, TargetPolicy};

/// Startup frames offered before confirming.
const STARTUP_FRAMES: usize = 4;
/// Depth growth per step while backing the board away.
const BACKOFF: f64 = 1.1;
const RANDOM_POSE_TRIES: usize = 100_000;
/// Failed captures tolerated per session.
const MAX_CAPTURE_FAILURES: usize = 10;
/// Offset separating the evaluation-set stream from repetition seeds.
const EVAL_SEED_OFFSET: u64 = 0x5EED_0E7A_15E7;

/// How the simulated operator picks each next pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Uniform random pose visible under the current estimate and the truth.
    Random,
    /// Generated initial solutions used directly.
    GeneratedOnly,
    Search { loss: Loss, init: InitialSolution },
}

impl Strategy {
    pub const DEFAULTS: [Strategy; 4] = [
        Strategy::Random,
        Strategy::GeneratedOnly,
        Strategy::Search {
            loss: Loss::SumIod,
            init: InitialSolution::Generated,
        },
        Strategy::Search {
            loss: Loss::RmsErr,
            init: InitialSolution::Generated,
        },
    ];

    pub fn search(loss: Loss) -> Self {
        Strategy::Search {
            loss,
            init: InitialSolution::Generated,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Strategy::Random => "random".into(),
            Strategy::GeneratedOnly => "generated_only".into(),
            Strategy::Search { loss, init } => {
                let loss = match loss {
                    Loss::SumIod => "sum_iod",
                    Loss::RmsErr => "rms_err",
                    Loss::MaxIod => "max_iod",
                };
                match init {
                    InitialSolution::Generated => format!("search_{loss}"),
                    InitialSolution::Random => format!("search_{loss}_random_init"),
                }
            }
        }
    }

    fn policy(&self) -> TargetPolicy {
        match *self {
            Strategy::Random | Strategy::GeneratedOnly => TargetPolicy::GeneratedOnly,
            Strategy::Search { loss, init } => TargetPolicy::Search { loss, init },
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, init) = match s.strip_suffix("_random_init") {
            Some(b) => (b, InitialSolution::Random),
            None => (s, InitialSolution::Generated),
        };
        let loss = match base {
            "random" if init == InitialSolution::Generated => return Ok(Strategy::Random),
            "generated_only" if init == InitialSolution::Generated => return Ok(Strategy::GeneratedOnly),
            "search_sum_iod" => Loss::SumIod,
            "search_rms_err" => Loss::RmsErr,
            "search_max_iod" => Loss::MaxIod,
            _ => return Err(Error::InvalidInput(format!("unknown strategy {s:?}"))),
        };
        Ok(Strategy::Search { loss, init })
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Gaussian error on the pose the simulated operator realizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseNoise {
    pub rotation_deg: f64,
    pub translation_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub truth: CameraTruth,
    pub board: BoardSpec,
    pub noise: NoiseModel,
    pub strategies: Vec<Strategy>,
    pub frame_cap: usize,
    pub repetitions: usize,
    /// Repetition `r` uses seed `seed + r` under every strategy.
    pub seed: u64,
    pub sa: SaConfig,
    pub convergence_threshold: f64,
    /// End a session when every parameter has converged; otherwise run to
    /// the frame cap.
    pub stop_on_convergence: bool,
    pub startup_distance: f64,
    pub eval_poses: usize,
    pub pose_noise: Option<PoseNoise>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            truth: CameraTruth::default(),
            board: BoardSpec::default(),
            noise: NoiseModel::default(),
            strategies: Strategy::DEFAULTS.to_vec(),
            frame_cap: 20,
            repetitions: 20,
            seed: 0,
            sa: SaConfig::default(),
            convergence_threshold: 0.1,
            stop_on_convergence: true,
            startup_distance: 1000.0,
            eval_poses: 100,
            pose_noise: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.session_config(Strategy::Random, 0).validate()?;
        if self.repetitions == 0 {
            return Err(Error::InvalidInput("repetitions must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidInput("at least one strategy is required".into()));
        }
        if self.eval_poses == 0 {
            return Err(Error::InvalidInput("eval_poses must be at least 1".into()));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return Err(Error::InvalidInput(format!("strategy {s} listed twice")));
            }
        }
        if let Some(n) = self.pose_noise {
            if !(n.rotation_deg >= 0.0 && n.translation_mm >= 0.0) {
                return Err(Error::InvalidInput(format!("invalid pose noise {n:?}")));
            }
        }
        Ok(())
    }

    pub fn session_config(&self, strategy: Strategy, seed: u64) -> SessionConfig {
        SessionConfig {
            board: self.board,
            image: self.truth.image,
            sa: self.sa,
            convergence_threshold: self.convergence_threshold,
            stop_on_convergence: self.stop_on_convergence,
            frame_cap: self.frame_cap,
            startup_distance: self.startup_distance,
            policy: strategy.policy(),
            seed,
            ..SessionConfig::default()
        }
    }

    /// The evaluation set shared by all strategies and repetitions.
    pub fn eval_set(&self) -> Result<EvalSet> {
        let z = self.startup_distance;
        EvalSet::generate(
            &self.truth,
            &self.board,
            self.eval_poses,
            (self.sa.min_depth * z, self.sa.max_depth * z),
            self.seed.wrapping_add(EVAL_SEED_OFFSET),
        )
    }
}

/// Metrics after each captured frame; entry `i` is for `i + 1` frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub sum_iod: Vec<f64>,
    pub abs_rms: Vec<f64>,
    pub stop_reason: Option<StopReason>,
    /// Targets the simulated operator could not realize exactly.
    pub adjusted_targets: usize,
    pub failed_captures: usize,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.sum_iod.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum_iod.is_empty()
    }
}

/// Runs one simulated session end to end.
pub fn run_session(config: &ExperimentConfig, strategy: Strategy, seed: u64, eval: &EvalSet) -> Result<MetricSeries> {
    run_session_inner(config, strategy, seed, eval).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("strategy {strategy} seed {seed}: {m}")),
        Error::Degenerate(m) => Error::Degenerate(format!("strategy {strategy} seed {seed}: {m}")),
        Error::Unobservable(m) => Error::Unobservable(format!("strategy {strategy} seed {seed}: {m}")),
        other => other,
    })
}

fn run_session_inner(config: &ExperimentConfig, strategy: Strategy, seed: u64, eval: &EvalSet) -> Result<MetricSeries> {
    let truth = &config.truth;
    let board = &config.board;
    let mut session = Session::new(config.session_config(strategy, seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut series = MetricSeries {
        sum_iod: Vec::new(),
        abs_rms: Vec::new(),
        stop_reason: None,
        adjusted_targets: 0,
        failed_captures: 0,
    };

    // Startup: the operator starts close with the tilted board and backs
    // away until it is fully in view, offering a frame at each step.
    let mut pose = session.startup_target();
    pose.zt *= 0.5;
    let mut offered = 0;
    for _ in 0..100 {
        if truth_visible(&pose, truth, board) {
            let frame = simulate_detection(&pose, truth, board, &config.noise, &mut rng)?;
            session.offer_startup_frame(frame)?;
            offered += 1;
            if offered == STARTUP_FRAMES {
                break;
            }
        }
        pose.zt *= BACKOFF;
    }
    session.confirm_startup()?;
    record(&mut series, &session, truth, eval);

    while session.phase() == SessionPhase::Collecting {
        let target = match strategy {
            Strategy::Random => random_target(&session, truth, board, &mut rng)?,
            _ => session.guidance()?.target,
        };
        let realized = realize(&target, truth, board, config.startup_distance, config.sa, &mut rng)?;
        if realized != target {
            series.adjusted_targets += 1;
            debug!("event=target_adjusted strategy={strategy} seed={seed}");
        }
        let realized = perturb(&realized, config.pose_noise, truth, board, &mut rng);
        let frame = simulate_detection(&realized, truth, board, &config.noise, &mut rng)?;
        match session.capture_frame(frame) {
            Ok(_) => record(&mut series, &session, truth, eval),
            Err(e) => {
                series.failed_captures += 1;
                debug!("event=capture_failed strategy={strategy} seed={seed} error={e}");
                if series.failed_captures > MAX_CAPTURE_FAILURES {
                    return Err(e);
                }
            }
        }
    }
    series.stop_reason = session.stop_reason();
    Ok(series)
}

fn record(series: &mut MetricSeries, session: &Session, truth: &CameraTruth, eval: &EvalSet) {
    let est = session.estimate().expect("estimate after startup");
    series.sum_iod.push(sum_iod(est));
    series.abs_rms.push(abs_rms_err(&est.model(), truth, eval));
}

fn random_target<R: Rng>(session: &Session, truth: &CameraTruth, board: &BoardSpec, rng: &mut R) -> Result<Pose> {
    let est = session.estimate().expect("estimate after startup");
    let model = est.model();
    let cfg = session.config();
    let z = session.distance();
    random_pose(
        rng,
        &est.intrinsics,
        cfg.image,
        (cfg.sa.min_depth * z, cfg.sa.max_depth * z),
        |p| crate::geometry::is_board_visible(board, p, &model, cfg.image) && truth_visible(p, truth, board),
        RANDOM_POSE_TRIES,
    )
    .ok_or(Error::InvisiblePose)
}

/// The pose the operator actually holds: the target when the true camera
/// sees the whole board there, otherwise the nearest pose found by backing
/// away, otherwise a random visible one.
fn realize<R: Rng>(
    target: &Pose,
    truth: &CameraTruth,
    board: &BoardSpec,
    distance: f64,
    sa: SaConfig,
    rng: &mut R,
) -> Result<Pose> {
    let visible = |p: &Pose| truth_visible(p, truth, board);
    if let Some(p) = pull_into_view(target, visible) {
        return Ok(p);
    }
    random_pose(
        rng,
        &truth.intrinsics,
        truth.image,
        (sa.min_depth * distance, sa.max_depth * distance),
        visible,
        RANDOM_POSE_TRIES,
    )
    .ok_or(Error::InvisiblePose)
}

fn perturb<R: Rng>(pose: &Pose, noise: Option<PoseNoise>, truth: &CameraTruth, board: &BoardSpec, rng: &mut R) -> Pose {
    let Some(n) = noise else { return *pose };
    let rot = Normal::new(0.0, n.rotation_deg.to_radians()).expect("valid sigma");
    let tr = Normal::new(0.0, n.translation_mm).expect("valid sigma");
    let p = Pose::new(
        pose.xr + rot.sample(rng),
        pose.yr + rot.sample(rng),
        pose.zr + rot.sample(rng),
        pose.xt + tr.sample(rng),
        pose.yt + tr.sample(rng),
        pose.zt + tr.sample(rng),
    );
    if truth_visible(&p, truth, board) {
        p
    } else {
        *pose
    }
}

/// Per-frame-count statistics over repetitions. Runs that stopped early
/// contribute their last value to later frame counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub frames: Vec<usize>,
    pub mean_sum_iod: Vec<f64>,
    pub mean_abs_rms: Vec<f64>,
    /// Sample standard deviation; zero for a single repetition.
    pub std_abs_rms: Vec<f64>,
}

impl Aggregate {
    pub fn ln_sum_iod(&self) -> Vec<f64> {
        self.mean_sum_iod.iter().map(|v| ln_positive(*v)).collect()
    }

    pub fn ln_abs_rms(&self) -> Vec<f64> {
        self.mean_abs_rms.iter().map(|v| ln_positive(*v)).collect()
    }

    pub fn last(&self) -> Option<(f64, f64, f64)> {
        let i = self.frames.len().checked_sub(1)?;
        Some((self.mean_sum_iod[i], self.mean_abs_rms[i], self.std_abs_rms[i]))
    }
}

/// Natural log for positive values, NaN otherwise.
pub(crate) fn ln_positive(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NAN
    }
}

pub fn aggregate(runs: &[MetricSeries], frame_cap: usize) -> Aggregate {
    let len = runs.iter().map(MetricSeries::len).max().unwrap_or(0).min(frame_cap);
    let at = |v: &[f64], i: usize| v.get(i).or(v.last()).copied().unwrap_or(f64::NAN);
    let n = runs.len() as f64;
    let mut out = Aggregate {
        frames: (1..=len).collect(),
        mean_sum_iod: Vec::with_capacity(len),
        mean_abs_rms: Vec::with_capacity(len),
        std_abs_rms: Vec::with_capacity(len),
    };
    for i in 0..len {
        let mean_iod = runs.iter().map(|r| at(&r.sum_iod, i)).sum::<f64>() / n;
        let rms: Vec<f64> = runs.iter().map(|r| at(&r.abs_rms, i)).collect();
        let mean_rms = rms.iter().sum::<f64>() / n;
        let std = if runs.len() > 1 {
            (rms.iter().map(|v| (v - mean_rms).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.mean_sum_iod.push(mean_iod);
        out.mean_abs_rms.push(mean_rms);
        out.std_abs_rms.push(std);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub runs: Vec<MetricSeries>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub strategies: Vec<StrategyResult>,
}

impl ExperimentResult {
    pub fn get(&self, strategy: Strategy) -> Option<&StrategyResult> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }
}

/// Runs every strategy for every repetition on up to `jobs` threads.
/// Results do not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    config.validate()?;
    let eval = config.eval_set()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let tasks: Vec<(usize, u64)> = (0..config.strategies.len())
        .flat_map(|s| (0..config.repetitions as u64).map(move |r| (s, r)))
        .collect();
    let runs: Vec<Result<MetricSeries>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, r)| {
                let strategy = config.strategies[s];
                let seed = config.seed.wrapping_add(r);
                let out = run_session(config, strategy, seed, &eval);
                if let Ok(m) = &out {
                    info!(
                        "event=run_done strategy={strategy} seed={seed} frames={} abs_rms={}",
                        m.len(),
                        m.abs_rms.last().copied().unwrap_or(f64::NAN)
                    );
                }
                out
            })
            .collect()
    });
    let mut runs = runs.into_iter();
    let strategies = config
        .strategies
        .iter()
        .map(|&strategy| {
            let series = runs.by_ref().take(config.repetitions).collect::<Result<Vec<_>>>()?;
            let aggregate = aggregate(&series, config.frame_cap);
            Ok(StrategyResult {
                strategy,
                runs: series,
                aggregate,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        strategies,
    })
}
