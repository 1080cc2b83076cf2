pub mod calibration;
pub mod error;
pub mod geometry;
pub mod posegen;
pub mod search;
pub mod session;
pub mod simulator;

pub use error::{Error, Result};

#[cfg(test)]
mod test_support;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/camera-model.md")]
    mod camera_model {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/next-pose.md")]
    mod next_pose {}
    #[doc = include_str!("../../../book/src/guidance.md")]
    mod guidance {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
}
