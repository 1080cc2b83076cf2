//! Initial poses for the search: spread-angle poses for the projection
//! parameters, and poses over the most distorted image region for the
//! distortion coefficients.

use std::f64::consts::FRAC_PI_8;

use rand::Rng;

use crate::calibration::{
    extrinsics_from_homography, homography_from_points, refine_parameters, CalibrationEstimate, DetectedFrame,
    Observation, ParamMask, RefineOptions,
};
use crate::error::{Error, Result};
use crate::geometry::{BoardSpec, CameraModel, Distortion, ImageSize, Intrinsics, Param, Pose, MAX_ROTATION_DEG};
use crate::search::iod;

/// Tilt angles `-70, 70`, then each the mean of the previous two.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AngleSequence {
    emitted: Vec<f64>,
}

impl AngleSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next angle in degrees.
    pub fn next_angle(&mut self) -> f64 {
        let n = self.emitted.len();
        let theta = match n {
            0 => -MAX_ROTATION_DEG,
            1 => MAX_ROTATION_DEG,
            _ => (self.emitted[n - 1] + self.emitted[n - 2]) / 2.0,
        };
        self.emitted.push(theta);
        theta
    }

    pub fn emitted(&self) -> &[f64] {
        &self.emitted
    }
}

/// Independent angle sequences for the two tilt directions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TiltSequences {
    /// Tilts about the y axis, used for `alpha` and `u0`.
    pub horizontal: AngleSequence,
    /// Tilts about the x axis, used for `beta` and `v0`.
    pub vertical: AngleSequence,
}

/// Parameter with the largest index of dispersion; the lowest index wins
/// ties.
pub fn next_target_param(estimate: &CalibrationEstimate) -> Param {
    let values = estimate.params();
    let mut best = (Param::Alpha, f64::NEG_INFINITY);
    for p in Param::ALL {
        let d = iod(estimate.param_variance[p.index()], values[p.index()]);
        if d > best.1 || (best.1.is_nan() && !d.is_nan()) {
            best = (p, d);
        }
    }
    best.0
}

/// Spread-angle pose for a projection parameter at distance `z` (mm).
pub fn generate_pose_k(target: Param, sequences: &mut TiltSequences, z: f64) -> Result<Pose> {
    match target {
        Param::Alpha | Param::U0 => {
            let theta = sequences.horizontal.next_angle().to_radians();
            Ok(Pose::new(0.0, theta, FRAC_PI_8, 0.0, 0.0, z))
        }
        Param::Beta | Param::V0 => {
            let theta = sequences.vertical.next_angle().to_radians();
            Ok(Pose::new(theta, 0.0, FRAC_PI_8, 0.0, 0.0, z))
        }
        other => Err(Error::InvalidInput(format!("{} is not a projection parameter", other.name()))),
    }
}

/// Per-cell pixel displacement caused by distortion, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMap {
    pub cols: usize,
    pub rows: usize,
    /// Cell edge in pixels.
    pub cell: f64,
    pub values: Vec<f64>,
}

impl DistortionMap {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Cell with the largest value; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best % self.cols, best / self.cols)
    }
}

/// Displacement `|pixel(distort(n)) - pixel(n)|` at each cell center, where
/// `n` is the cell center mapped through the inverse camera matrix.
pub fn distortion_map(model: &CameraModel, image: ImageSize, cell: f64) -> DistortionMap {
    let cell = cell.max(1.0);
    let cols = (image.width as f64 / cell).ceil() as usize;
    let rows = (image.height as f64 / cell).ceil() as usize;
    let k = &model.intrinsics;
    let mut values = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let (u, v) = ((c as f64 + 0.5) * cell, (r as f64 + 0.5) * cell);
            let (x, y) = k.to_normalized(u, v);
            let (xd, yd) = model.distortion.distort(x, y);
            let (dx, dy) = (xd - x, yd - y);
            values.push((k.alpha * dx + k.gamma * dy).hypot(k.beta * dy));
        }
    }
    DistortionMap {
        cols,
        rows,
        cell,
        values,
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    /// Corners in the order top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (x0, y0, x1, y1) = (self.x, self.y, self.x + self.width, self.y + self.height);
        [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    }
}

/// Window of `size` pixels with the largest mean displacement over the
/// cells it covers (`size` rounded to whole cells). Placements are
/// cell-aligned; ties go to the top-left-most one in row-major order. The
/// returned rectangle keeps the requested size and is shifted back inside
/// the image where needed.
pub fn max_distortion_window(map: &DistortionMap, size: (f64, f64), image: ImageSize) -> Rect {
    let wc = ((size.0 / map.cell).round() as usize).clamp(1, map.cols);
    let hc = ((size.1 / map.cell).round() as usize).clamp(1, map.rows);
    let mut best = (0, 0, f64::NEG_INFINITY);
    for r in 0..=map.rows - hc {
        for c in 0..=map.cols - wc {
            let mut sum = 0.0;
            for rr in r..r + hc {
                sum += map.values[rr * map.cols + c..rr * map.cols + c + wc].iter().sum::<f64>();
            }
            if sum > best.2 {
                best = (c, r, sum);
            }
        }
    }
    let (w, h) = (size.0.min(image.width as f64), size.1.min(image.height as f64));
    Rect {
        x: (best.0 as f64 * map.cell).min(image.width as f64 - w),
        y: (best.1 as f64 * map.cell).min(image.height as f64 - h),
        width: w,
        height: h,
    }
}

/// Pixel size of the corner grid seen frontally at distance `z`.
pub fn frontal_grid_size(intrinsics: &Intrinsics, board: &BoardSpec, z: f64) -> (f64, f64) {
    let (hx, hy) = board.grid_half_extent();
    (intrinsics.alpha * 2.0 * hx / z, intrinsics.beta * 2.0 * hy / z)
}

/// Pose whose outer grid corners land on the corners of `rect`, ignoring
/// distortion, with angles clamped to the search bounds.
pub fn pose_for_window(rect: &Rect, intrinsics: &Intrinsics, board: &BoardSpec) -> Result<Pose> {
    Ok(pose_for_window_unclamped(rect, intrinsics, board)?.clamp_rotations(MAX_ROTATION_DEG))
}

/// As [`pose_for_window`] without the angle clamp.
pub fn pose_for_window_unclamped(rect: &Rect, intrinsics: &Intrinsics, board: &BoardSpec) -> Result<Pose> {
    if !(rect.width > 0.0 && rect.height > 0.0) {
        return Err(Error::Degenerate(format!("window {}x{} has no area", rect.width, rect.height)));
    }
    let ids = board.outer_corner_ids();
    let src: Vec<(f64, f64)> = ids
        .iter()
        .map(|&id| {
            let q = board.corner_point(id).expect("outer corner");
            (q.x, q.y)
        })
        .collect();
    let dst = rect.corners();
    let h = homography_from_points(&src, &dst)?;
    let start = extrinsics_from_homography(&h, intrinsics)?;
    let frame = DetectedFrame::new(
        *board,
        ids.iter()
            .zip(dst)
            .map(|(&id, (u, v))| Observation { id, u, v })
            .collect(),
    )?;
    let model = CameraModel::new(*intrinsics, Distortion::ZERO);
    let fit = refine_parameters(&[frame], &model, &[start], ParamMask::ALL_FIXED, &RefineOptions::default())?;
    Ok(fit.extrinsics[0])
}

/// Draws a pose uniformly from the search bounds: each angle within
/// `±MAX_ROTATION_DEG`, depth in `depth`, and the board center inside the
/// viewing frustum of `intrinsics` at that depth. Rejects draws until
/// `visible` accepts one; `None` after `max_tries` rejections.
pub fn random_pose<R: Rng, V: Fn(&Pose) -> bool>(
    rng: &mut R,
    intrinsics: &Intrinsics,
    image: ImageSize,
    depth: (f64, f64),
    visible: V,
    max_tries: usize,
) -> Option<Pose> {
    let half_x = 0.5 * image.width as f64 / intrinsics.alpha;
    let half_y = 0.5 * image.height as f64 / intrinsics.beta;
    (0..max_tries).find_map(|_| {
        let mut angle = || rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        let (xr, yr, zr) = (angle(), angle(), angle());
        let zt = rng.random_range(depth.0..=depth.1);
        let xt = rng.random_range(-half_x..=half_x) * zt;
        let yt = rng.random_range(-half_y..=half_y) * zt;
        let pose = Pose::from_degrees(xr, yr, zr, xt, yt, zt);
        visible(&pose).then_some(pose)
    })
}

/// Moves an invisible pose toward the optical axis and away from the camera
/// until `visible` accepts it, keeping the rotation.
pub fn pull_into_view<V: Fn(&Pose) -> bool>(pose: &Pose, visible: V) -> Option<Pose> {
    let mut p = *pose;
    for _ in 0..=PULL_STEPS {
        if visible(&p) {
            return Some(p);
        }
        p.xt *= 0.9;
        p.yt *= 0.9;
        p.zt *= 1.05;
    }
    None
}

const PULL_STEPS: usize = 40;

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::CameraTruth;

    fn estimate_with(variance: [f64; 9], values: [f64; 9]) -> CalibrationEstimate {
        let m = CameraTruth::default().model().with_params(&values);
        CalibrationEstimate {
            intrinsics: m.intrinsics,
            distortion: m.distortion,
            extrinsics: vec![],
            param_variance: variance,
            rms: 0.0,
        }
    }

    #[test]
    fn angle_sequence_follows_recurrence() {
        let mut s = AngleSequence::new();
        let got: Vec<f64> = (0..6).map(|_| s.next_angle()).collect();
        assert_eq!(got, [-70.0, 70.0, 0.0, 35.0, 17.5, 26.25]);
        for w in got.windows(3).skip(1) {
            assert!((w[2] - w[1]).abs() * 2.0 == (w[1] - w[0]).abs());
        }
    }

    #[test]
    fn target_param_is_largest_dispersion() {
        let mut v = [0.0; 9];
        v[0] = 1.0;
        assert_eq!(next_target_param(&estimate_with(v, [1.0; 9])), Param::Alpha);
        let mut c = [1.0; 9];
        c[0] = 1000.0;
        assert_eq!(next_target_param(&estimate_with([1.0; 9], c)), Param::Beta);
        assert_eq!(next_target_param(&estimate_with([1.0; 9], [1.0; 9])), Param::Alpha);
    }

    #[test]
    fn spread_angle_poses() {
        let mut seq = TiltSequences::default();
        let z = 900.0;
        let a1 = generate_pose_k(Param::Alpha, &mut seq, z).unwrap();
        assert_eq!(a1, Pose::new(0.0, (-70.0f64).to_radians(), FRAC_PI_8, 0.0, 0.0, z));
        let b1 = generate_pose_k(Param::Beta, &mut seq, z).unwrap();
        assert_eq!(b1.xr, (-70.0f64).to_radians());
        let b2 = generate_pose_k(Param::V0, &mut seq, z).unwrap();
        assert_eq!(b2, Pose::new(70.0f64.to_radians(), 0.0, FRAC_PI_8, 0.0, 0.0, z));
        generate_pose_k(Param::U0, &mut seq, z).unwrap();
        let a3 = generate_pose_k(Param::Alpha, &mut seq, z).unwrap();
        assert_eq!(a3.yr, 0.0);
        let a4 = generate_pose_k(Param::Alpha, &mut seq, z).unwrap();
        assert_eq!(a4.yr, 35.0f64.to_radians());
        assert!(generate_pose_k(Param::K1, &mut seq, z).is_err());
    }

    #[test]
    fn generated_poses_are_never_parallel_to_the_image() {
        let mut seq = TiltSequences::default();
        for i in 0..12 {
            let target = if i % 2 == 0 { Param::Alpha } else { Param::Beta };
            let p = generate_pose_k(target, &mut seq, 1000.0).unwrap();
            let normal = p.rotation().column(2).into_owned();
            let spread = normal.z.abs().acos();
            assert!(spread > 0.0 || p.zr != 0.0);
            assert!(p.rotations_within(MAX_ROTATION_DEG));
        }
    }

    #[test]
    fn zero_distortion_map_is_zero() {
        let model = CameraModel::new(CameraTruth::default().intrinsics, Distortion::ZERO);
        let map = distortion_map(&model, ImageSize::new(1280, 720), 16.0);
        assert_eq!((map.cols, map.rows), (80, 45));
        assert!(map.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn barrel_distortion_grows_with_radius() {
        let k = Intrinsics::new(1000.0, 1000.0, 640.0, 360.0);
        let model = CameraModel::new(k, Distortion::new(-0.2, 0.0, 0.0, 0.0, 0.0));
        let map = distortion_map(&model, ImageSize::new(1280, 720), 16.0);
        let mut cells: Vec<(f64, f64)> = (0..map.values.len())
            .map(|i| {
                let (c, r) = (i % map.cols, i / map.cols);
                let (u, v) = ((c as f64 + 0.5) * 16.0, (r as f64 + 0.5) * 16.0);
                ((u - 640.0).hypot(v - 360.0), map.values[i])
            })
            .collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in cells.windows(2) {
            if w[1].0 > w[0].0 + 1e-9 {
                assert!(w[1].1 >= w[0].1, "{w:?}");
            }
        }
    }

    #[test]
    fn reference_map_argmax_matches_scan() {
        let t = CameraTruth::default();
        let map = distortion_map(&t.model(), t.image, 16.0);
        let (mut bc, mut br, mut bv) = (0, 0, -1.0);
        for r in 0..map.rows {
            for c in 0..map.cols {
                let v = map.get(c, r);
                if v > bv {
                    (bc, br, bv) = (c, r, v);
                }
            }
        }
        assert_eq!(map.argmax(), (bc, br));
    }

    fn brute_force(map: &DistortionMap, wc: usize, hc: usize) -> (usize, usize) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for r in 0..=map.rows - hc {
            for c in 0..=map.cols - wc {
                let mut s = 0.0;
                for dr in 0..hc {
                    for dc in 0..wc {
                        s += map.get(c + dc, r + dr);
                    }
                }
                if s > best.2 {
                    best = (c, r, s);
                }
            }
        }
        (best.0, best.1)
    }

    fn map_from(cols: usize, rows: usize, values: Vec<f64>) -> DistortionMap {
        DistortionMap {
            cols,
            rows,
            cell: 1.0,
            values,
        }
    }

    #[test]
    fn uniform_map_picks_top_left() {
        let map = map_from(10, 8, vec![2.5; 80]);
        let r = max_distortion_window(&map, (3.0, 2.0), ImageSize::new(10, 8));
        assert_eq!((r.x, r.y, r.width, r.height), (0.0, 0.0, 3.0, 2.0));
    }

    #[test]
    fn single_hot_cell_is_covered_top_left_most() {
        let mut v = vec![0.0; 100];
        v[6 * 10 + 7] = 1.0;
        let r = max_distortion_window(&map_from(10, 10, v), (3.0, 3.0), ImageSize::new(10, 10));
        assert_eq!((r.x, r.y), (5.0, 4.0));
    }

    #[test]
    fn window_search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (cols, rows) = (rng.random_range(1..=64), rng.random_range(1..=64));
            // Multiples of 1/1024 keep every partial sum exact.
            let values = (0..cols * rows).map(|_| rng.random_range(0..4096) as f64 / 1024.0).collect();
            let map = map_from(cols, rows, values);
            let (wc, hc) = (rng.random_range(1..=cols), rng.random_range(1..=rows));
            let r = max_distortion_window(&map, (wc as f64, hc as f64), ImageSize::new(cols as u32, rows as u32));
            assert_eq!((r.x as usize, r.y as usize), brute_force(&map, wc, hc));
        }
    }

    fn corner_fit(rect: &Rect, pose: &Pose, k: &Intrinsics, board: &BoardSpec) -> f64 {
        let model = CameraModel::new(*k, Distortion::ZERO);
        board
            .outer_corner_ids()
            .iter()
            .zip(rect.corners())
            .map(|(&id, (u, v))| {
                let p = model.project(&board.corner_point(id).unwrap(), pose).unwrap();
                (p.0 - u).hypot(p.1 - v)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn full_image_window_is_near_frontal() {
        let k = Intrinsics::new(1070.0, 1070.0, 640.0, 360.0);
        let rect = Rect {
            x: 0.0,
            y: 0.0,
            width: 1280.0,
            height: 720.0,
        };
        let p = pose_for_window(&rect, &k, &BoardSpec::default()).unwrap();
        assert!(p.xr.abs() < 0.05 && p.yr.abs() < 0.05, "{p:?}");
    }

    #[test]
    fn top_left_window_shifts_the_board() {
        let k = CameraTruth::default().intrinsics;
        let board = BoardSpec::default();
        let (w, h) = frontal_grid_size(&k, &board, 1000.0);
        let rect = Rect {
            x: 20.0,
            y: 20.0,
            width: w,
            height: h,
        };
        let p = pose_for_window_unclamped(&rect, &k, &board).unwrap();
        assert!(p.xt < 0.0 && p.yt < 0.0, "{p:?}");
        assert!(corner_fit(&rect, &p, &k, &board) < 1.0);
    }

    #[test]
    fn window_poses_reproject_onto_the_window() {
        let k = CameraTruth::default().intrinsics;
        let board = BoardSpec::default();
        let t = CameraTruth::default();
        let map = distortion_map(&t.model(), t.image, 16.0);
        for z in [600.0, 1000.0, 1500.0] {
            let rect = max_distortion_window(&map, frontal_grid_size(&k, &board, z), t.image);
            let p = pose_for_window_unclamped(&rect, &k, &board).unwrap();
            assert!(corner_fit(&rect, &p, &k, &board) < 1.0, "{rect:?} {p:?}");
        }
    }

    #[test]
    fn empty_window_is_rejected() {
        let rect = Rect {
            x: 5.0,
            y: 5.0,
            width: 0.0,
            height: 10.0,
        };
        let k = CameraTruth::default().intrinsics;
        assert!(matches!(pose_for_window(&rect, &k, &BoardSpec::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn random_poses_are_bounded_and_visible() {
        let t = CameraTruth::default();
        let (board, model) = (BoardSpec::default(), t.model());
        let visible = |p: &Pose| crate::geometry::is_board_visible(&board, p, &model, t.image);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_pose(&mut rng, &t.intrinsics, t.image, (300.0, 3000.0), visible, 10_000).unwrap();
            assert!(visible(&p));
            assert!(p.rotations_within(MAX_ROTATION_DEG));
            assert!((300.0..=3000.0).contains(&p.zt));
        }
        assert!(random_pose(&mut rng, &t.intrinsics, t.image, (300.0, 3000.0), |_| false, 100).is_none());
    }

    #[test]
    fn pulling_brings_offset_board_into_view() {
        let t = CameraTruth::default();
        let (board, model) = (BoardSpec::default(), t.model());
        let visible = |p: &Pose| crate::geometry::is_board_visible(&board, p, &model, t.image);
        let off = Pose::from_degrees(10.0, -20.0, 5.0, 600.0, 300.0, 500.0);
        assert!(!visible(&off));
        let p = pull_into_view(&off, visible).unwrap();
        assert!(visible(&p));
        assert_eq!((p.xr, p.yr, p.zr), (off.xr, off.yr, off.zr));
        let ok = Pose::from_degrees(0.0, 0.0, 0.0, 0.0, 0.0, 1000.0);
        assert_eq!(pull_into_view(&ok, visible), Some(ok));
    }
}
