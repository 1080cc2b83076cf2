use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, Distortion, Intrinsics, Param, Pose};

/// Result of a calibration: camera model, one pose per frame, per-parameter
/// variances in `Param` order and the training reprojection RMS (px).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEstimate {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    pub extrinsics: Vec<Pose>,
    pub param_variance: [f64; 9],
    pub rms: f64,
}

impl CalibrationEstimate {
    pub fn model(&self) -> CameraModel {
        CameraModel::new(self.intrinsics, self.distortion)
    }

    /// Parameter values in `Param` order.
    pub fn params(&self) -> [f64; 9] {
        self.model().params()
    }

    pub fn value(&self, p: Param) -> f64 {
        self.params()[p.index()]
    }

    pub fn variance(&self, p: Param) -> f64 {
        self.param_variance[p.index()]
    }

    pub fn frame_count(&self) -> usize {
        self.extrinsics.len()
    }
}

/// Which of the nine camera parameters are held fixed during refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamMask {
    fixed: [bool; 9],
    tied_focal: bool,
}

impl ParamMask {
    pub const ALL_FREE: ParamMask = ParamMask {
        fixed: [false; 9],
        tied_focal: false,
    };

    /// Camera fixed; only poses move.
    pub const ALL_FIXED: ParamMask = ParamMask {
        fixed: [true; 9],
        tied_focal: false,
    };

    /// Only the focal scales are free: principal point and distortion stay put.
    pub const FOCAL_ONLY: ParamMask = ParamMask {
        fixed: [false, false, true, true, true, true, true, true, true],
        tied_focal: false,
    };

    /// Two-frame model: a common focal length plus `k1`, `k2`, `p1`, `p2`.
    /// Principal point and `k3` stay put.
    pub const TWO_VIEW: ParamMask = ParamMask {
        fixed: [false, false, true, true, false, false, true, false, false],
        tied_focal: true,
    };

    pub fn with_fixed(mut self, p: Param) -> Self {
        self.fixed[p.index()] = true;
        self
    }

    /// Moves `alpha` and `beta` together as a single focal length. Both
    /// must start equal for them to stay equal.
    pub fn with_tied_focal(mut self) -> Self {
        self.tied_focal = true;
        self
    }

    pub fn tied_focal(&self) -> bool {
        self.tied_focal && !self.fixed[0] && !self.fixed[1]
    }

    pub fn is_fixed(&self, p: Param) -> bool {
        self.fixed[p.index()]
    }

    /// Number of independent free parameters.
    pub fn free_count(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count() - usize::from(self.tied_focal())
    }

    pub(crate) fn as_array(&self) -> &[bool; 9] {
        &self.fixed
    }

    /// Fixed flags of the reduced problem, where a tied `beta` is folded
    /// into `alpha`.
    pub(crate) fn solver_fixed(&self) -> [bool; 9] {
        let mut f = self.fixed;
        if self.tied_focal() {
            f[1] = true;
        }
        f
    }
}
