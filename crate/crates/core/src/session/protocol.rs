//! Newline-delimited JSON protocol for driving a session against a
//! simulated camera ("virtual lab").
//!
//! Each request is one JSON object with a `cmd` field; each response is one
//! JSON object with `"ok": true` and a payload, or `"ok": false` and an
//! `error` record `{kind, message}`. A failed request leaves the session as
//! it was.
//!
//! ```text
//! {"cmd":"get_state"}
//! {"cmd":"get_guidance"}
//! {"cmd":"set_virtual_pose","xr":45,"yr":0,"zr":0,"xt":0,"yt":0,"zt":1000}
//! {"cmd":"capture"}
//! {"cmd":"reset"}
//! {"cmd":"configure","seed":3,"tolerances":{"rotation_deg":2}}
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{pose_match, Session, SessionConfig, SessionPhase, Tolerances};
use crate::error::{Error, Result};
use crate::geometry::{CameraTruth, Pose, PoseDegrees};
use crate::search::SaConfig;
use crate::simulator::{simulate_detection, truth_visible, NoiseModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    GetState,
    GetGuidance,
    SetVirtualPose {
        xr: f64,
        yr: f64,
        zr: f64,
        xt: f64,
        yt: f64,
        zt: f64,
    },
    Capture,
    Reset,
    /// Replaces the given settings and restarts the session.
    Configure {
        #[serde(default)]
        sa: Option<SaConfig>,
        #[serde(default)]
        tolerances: Option<Tolerances>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

/// Short machine-readable name of an error.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::BehindCamera { .. } => "behind_camera",
        Error::UndistortNonConvergence { .. } => "undistort_non_convergence",
        Error::Degenerate(_) => "degenerate",
        Error::InsufficientFrames { .. } => "insufficient_frames",
        Error::TooSparse { .. } => "too_sparse",
        Error::SingularNormalEquations => "singular_normal_equations",
        Error::Unobservable(_) => "unobservable",
        Error::InvisiblePose => "invisible_pose",
        Error::NoVisibleBoard => "no_visible_board",
        Error::InvalidInput(_) => "invalid_input",
        Error::WrongPhase { .. } => "wrong_phase",
    }
}

fn error_response(kind: &str, message: &str) -> Value {
    json!({"ok": false, "error": {"kind": kind, "message": message}})
}

/// A session whose frames come from a simulated camera looking at a board
/// held at a client-controlled virtual pose.
#[derive(Debug, Clone)]
pub struct SimulatedLab {
    config: SessionConfig,
    truth: CameraTruth,
    noise: NoiseModel,
    session: Session,
    rng: ChaCha8Rng,
    virtual_pose: Option<Pose>,
}

impl SimulatedLab {
    pub fn new(config: SessionConfig, truth: CameraTruth, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        if truth.image != config.image {
            return Err(Error::InvalidInput("session image size differs from the camera".into()));
        }
        let session = Session::new(config.clone())?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            truth,
            noise,
            session,
            virtual_pose: None,
        })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Handles one request line and returns one response line (no trailing
    /// newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req),
            Err(e) => error_response("bad_request", &e.to_string()),
        };
        response.to_string()
    }

    pub fn handle(&mut self, request: Request) -> Value {
        match self.dispatch(request) {
            Ok(v) => v,
            Err(e) => error_response(error_kind(&e), &e.to_string()),
        }
    }

    fn dispatch(&mut self, request: Request) -> Result<Value> {
        match request {
            Request::GetState => Ok(self.state()),
            Request::GetGuidance => {
                let g = self.session.guidance()?;
                Ok(json!({"ok": true, "guidance": g}))
            }
            Request::SetVirtualPose { xr, yr, zr, xt, yt, zt } => {
                let values = [xr, yr, zr, xt, yt, zt];
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("pose components must be finite".into()));
                }
                self.set_virtual_pose(Pose::from_degrees(xr, yr, zr, xt, yt, zt))
            }
            Request::Capture => self.capture(),
            Request::Reset => {
                self.restart(self.config.clone())?;
                Ok(self.state())
            }
            Request::Configure { sa, tolerances, seed } => {
                let mut cfg = self.config.clone();
                if let Some(sa) = sa {
                    cfg.sa = sa;
                }
                if let Some(t) = tolerances {
                    cfg.tolerances = t;
                }
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                cfg.validate()?;
                self.restart(cfg)?;
                Ok(self.state())
            }
        }
    }

    fn restart(&mut self, config: SessionConfig) -> Result<()> {
        *self = Self::new(config, self.truth, self.noise)?;
        Ok(())
    }

    fn state(&self) -> Value {
        let mut v = json!({"ok": true, "state": self.session.state()});
        if self.session.phase() == SessionPhase::Startup {
            v["startup_target"] = json!(PoseDegrees::from(self.session.startup_target()));
        }
        if let Some(p) = self.virtual_pose {
            v["virtual_pose"] = json!(PoseDegrees::from(p));
        }
        v
    }

    fn set_virtual_pose(&mut self, pose: Pose) -> Result<Value> {
        let visible = truth_visible(&pose, &self.truth, &self.config.board);
        match self.session.phase() {
            SessionPhase::Startup => {
                // Every visible startup pose is offered to the restricted
                // calibration; the best one is kept until capture confirms.
                let retained = if visible {
                    let frame =
                        simulate_detection(&pose, &self.truth, &self.config.board, &self.noise, &mut self.rng)?;
                    self.session.offer_startup_frame(frame)?
                } else {
                    false
                };
                self.virtual_pose = Some(pose);
                let report = pose_match(&pose, &self.session.startup_target(), &self.config.tolerances);
                Ok(json!({"ok": true, "visible": visible, "retained": retained, "match": report}))
            }
            SessionPhase::Collecting => {
                let target = self.session.guidance()?.target;
                self.virtual_pose = Some(pose);
                let report = pose_match(&pose, &target, &self.config.tolerances);
                Ok(json!({"ok": true, "visible": visible, "match": report}))
            }
            SessionPhase::Converged => Err(Error::WrongPhase {
                phase: SessionPhase::Converged.name().into(),
                what: "move the board".into(),
            }),
        }
    }

    fn capture(&mut self) -> Result<Value> {
        match self.session.phase() {
            SessionPhase::Startup => {
                self.session.confirm_startup()?;
                Ok(self.accepted())
            }
            SessionPhase::Collecting => {
                let pose = self
                    .virtual_pose
                    .ok_or_else(|| Error::InvalidInput("no virtual pose has been set".into()))?;
                let target = self.session.guidance()?.target;
                let report = pose_match(&pose, &target, &self.config.tolerances);
                if !report.matched {
                    return Ok(json!({"ok": true, "accepted": false, "reason": "pose_mismatch", "match": report}));
                }
                if !truth_visible(&pose, &self.truth, &self.config.board) {
                    return Ok(json!({"ok": true, "accepted": false, "reason": "board_not_visible", "match": report}));
                }
                let frame = simulate_detection(&pose, &self.truth, &self.config.board, &self.noise, &mut self.rng)?;
                self.session.capture_frame(frame)?;
                Ok(self.accepted())
            }
            SessionPhase::Converged => Err(Error::WrongPhase {
                phase: SessionPhase::Converged.name().into(),
                what: "capture a frame".into(),
            }),
        }
    }

    fn accepted(&self) -> Value {
        let mut v = self.state();
        v["accepted"] = json!(true);
        v
    }
}
