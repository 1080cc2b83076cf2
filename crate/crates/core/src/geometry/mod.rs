//! Camera, lens and board models plus the pose parameterization.

mod board;
mod camera;
mod distortion;
mod pose;
mod rotation;

pub use board::{
    is_board_visible, project_board, project_board_with_margin, BoardProjection, BoardSpec, ProjectedCorner,
    DEFAULT_MARGIN,
};
pub use camera::{project, CameraModel, CameraTruth, ImageSize, Intrinsics, Param, ParamGroup};
pub use distortion::{Distortion, UndistortOptions};
pub use pose::{decompose_pose, Pose, PoseDegrees, MAX_ROTATION_DEG};
pub use rotation::{euler_rotation_derivatives, euler_to_rotation, rotation_to_euler, EulerAngles, GIMBAL_EPS};
