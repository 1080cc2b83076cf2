use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::camera::{CameraModel, ImageSize};
use super::pose::Pose;

/// Default distance (px) a visible corner must keep from the image border.
pub const DEFAULT_MARGIN: f64 = 10.0;

/// Planar chessboard-style target. `cols x rows` squares give
/// `(cols - 1) x (rows - 1)` interior corners, numbered row-major from the
/// top-left. The board frame has its origin at the board center and the
/// board in the `Z = 0` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoardSpec {
    pub cols: u32,
    pub rows: u32,
    /// Square edge length in millimeters.
    pub square_size: f64,
}

impl Default for BoardSpec {
    fn default() -> Self {
        Self {
            cols: 9,
            rows: 6,
            square_size: 28.0,
        }
    }
}

impl BoardSpec {
    pub fn corners_x(&self) -> usize {
        self.cols.saturating_sub(1) as usize
    }

    pub fn corners_y(&self) -> usize {
        self.rows.saturating_sub(1) as usize
    }

    pub fn corner_count(&self) -> usize {
        self.corners_x() * self.corners_y()
    }

    pub fn is_valid(&self) -> bool {
        self.cols >= 3 && self.rows >= 3 && self.square_size > 0.0 && self.square_size.is_finite()
    }

    /// Board-frame coordinates of corner `id`, or `None` if out of range.
    pub fn corner_point(&self, id: usize) -> Option<Vector3<f64>> {
        if id >= self.corner_count() {
            return None;
        }
        let nx = self.corners_x();
        let (c, r) = ((id % nx) as f64, (id / nx) as f64);
        let cx = (self.corners_x() as f64 - 1.0) / 2.0;
        let cy = (self.corners_y() as f64 - 1.0) / 2.0;
        Some(Vector3::new((c - cx) * self.square_size, (r - cy) * self.square_size, 0.0))
    }

    pub fn corner_points(&self) -> Vec<Vector3<f64>> {
        (0..self.corner_count()).filter_map(|id| self.corner_point(id)).collect()
    }

    /// Ids of the extreme corners: top-left, top-right, bottom-right, bottom-left.
    pub fn outer_corner_ids(&self) -> [usize; 4] {
        let nx = self.corners_x();
        let n = self.corner_count();
        [0, nx - 1, n - 1, n - nx]
    }

    /// Half extents of the corner grid (mm).
    pub fn grid_half_extent(&self) -> (f64, f64) {
        (
            (self.corners_x() as f64 - 1.0) * self.square_size / 2.0,
            (self.corners_y() as f64 - 1.0) * self.square_size / 2.0,
        )
    }

    /// Closed polyline along the physical board edge with `per_edge` segments
    /// per side.
    pub fn outline(&self, per_edge: usize) -> Vec<Vector3<f64>> {
        let per_edge = per_edge.max(1);
        let hw = self.cols as f64 * self.square_size / 2.0;
        let hh = self.rows as f64 * self.square_size / 2.0;
        let corners = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
        let mut pts = Vec::with_capacity(4 * per_edge + 1);
        for k in 0..4 {
            let (a, b) = (corners[k], corners[(k + 1) % 4]);
            for s in 0..per_edge {
                let t = s as f64 / per_edge as f64;
                pts.push(Vector3::new(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), 0.0));
            }
        }
        pts.push(pts[0]);
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedCorner {
    pub id: usize,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoardProjection {
    /// Corners in front of the camera, in id order.
    pub corners: Vec<ProjectedCorner>,
    pub visible: bool,
}

/// Projects every board corner. The board counts as visible when all corners
/// are in front of the camera, land inside the image with
/// [`DEFAULT_MARGIN`], and sit where the distortion model is locally
/// invertible.
pub fn project_board(board: &BoardSpec, pose: &Pose, model: &CameraModel, image: ImageSize) -> BoardProjection {
    project_board_with_margin(board, pose, model, image, DEFAULT_MARGIN)
}

pub fn project_board_with_margin(
    board: &BoardSpec,
    pose: &Pose,
    model: &CameraModel,
    image: ImageSize,
    margin: f64,
) -> BoardProjection {
    let r = pose.rotation();
    let t = pose.translation();
    let n = board.corner_count();
    let mut corners = Vec::with_capacity(n);
    let mut visible = n > 0;
    for id in 0..n {
        let q = board.corner_point(id).expect("id in range");
        let pc = r * q + t;
        if pc.z <= 0.0 {
            visible = false;
            continue;
        }
        let (x, y) = (pc.x / pc.z, pc.y / pc.z);
        let (xd, yd) = model.distortion.distort(x, y);
        let (u, v) = model.intrinsics.to_pixel(xd, yd);
        if !(u.is_finite() && v.is_finite())
            || !image.contains(u, v, margin)
            || !model.distortion.locally_invertible(x, y)
        {
            visible = false;
        }
        corners.push(ProjectedCorner { id, u, v });
    }
    BoardProjection { corners, visible }
}

pub fn is_board_visible(board: &BoardSpec, pose: &Pose, model: &CameraModel, image: ImageSize) -> bool {
    project_board(board, pose, model, image).visible
}
