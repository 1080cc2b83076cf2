use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoardSpec;

/// Minimum number of corners for homography estimation.
pub const MIN_CORNERS: usize = 4;

/// One detected corner: board corner id and its pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub id: usize,
    pub u: f64,
    pub v: f64,
}

/// Corners detected in one image of the calibration board.
///
/// Serialized as `{"board": {"cols", "rows", "square_size"}, "corners": [{"id", "u", "v"}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectedFrame {
    pub board: BoardSpec,
    #[serde(rename = "corners")]
    pub observations: Vec<Observation>,
}

impl DetectedFrame {
    /// Builds a frame, rejecting duplicate or out-of-range ids and non-finite
    /// coordinates.
    pub fn new(board: BoardSpec, observations: Vec<Observation>) -> Result<Self> {
        let frame = Self { board, observations };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.board.is_valid() {
            return Err(Error::InvalidInput(format!("invalid board {:?}", self.board)));
        }
        let mut seen = HashSet::with_capacity(self.observations.len());
        for o in &self.observations {
            if o.id >= self.board.corner_count() {
                return Err(Error::InvalidInput(format!("corner id {} out of range", o.id)));
            }
            if !seen.insert(o.id) {
                return Err(Error::InvalidInput(format!("duplicate corner id {}", o.id)));
            }
            if !(o.u.is_finite() && o.v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite coordinates for corner {}", o.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let frame: DetectedFrame =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("bad frame json: {e}")))?;
        frame.validate()?;
        Ok(frame)
    }
}
