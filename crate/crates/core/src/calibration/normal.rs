//! Block-structured normal equations of the reprojection problem. Camera
//! parameters couple every frame; each frame's pose only couples to itself,
//! so the pose blocks are eliminated with a Schur complement.

use nalgebra::{Matrix6, SMatrix, SVector, Vector6};

use std::ops::AddAssign;

use super::estimate::ParamMask;
use super::frame::DetectedFrame;
use super::jacobian::{project_with_derivatives, project_with_finite_differences, JacobianMode, PoseFrame};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Vector9 = SVector<f64, 9>;
pub type Matrix9x6 = SMatrix<f64, 9, 6>;

pub(crate) struct Blocks {
    pub u: Matrix9,
    pub g_camera: Vector9,
    pub v: Vec<Matrix6<f64>>,
    pub w: Vec<Matrix9x6>,
    pub g_pose: Vec<Vector6<f64>>,
    pub sse: f64,
    pub n_obs: usize,
}

/// Sum of squared reprojection residuals.
pub(crate) fn sum_squared_error(frames: &[DetectedFrame], model: &CameraModel, poses: &[Pose]) -> Result<f64> {
    let mut sse = 0.0;
    for (frame, pose) in frames.iter().zip(poses) {
        let r = pose.rotation();
        let t = pose.translation();
        for o in &frame.observations {
            let q = frame.board.corner_point(o.id).expect("validated id");
            let pc = r * q + t;
            if pc.z <= 0.0 {
                return Err(Error::BehindCamera { depth: pc.z });
            }
            let (xd, yd) = model.distortion.distort(pc.x / pc.z, pc.y / pc.z);
            let (u, v) = model.intrinsics.to_pixel(xd, yd);
            sse += (o.u - u).powi(2) + (o.v - v).powi(2);
        }
    }
    Ok(sse)
}

pub(crate) fn observation_count(frames: &[DetectedFrame]) -> usize {
    frames.iter().map(|f| f.len()).sum()
}

/// `J^T J` and `J^T r` blocks for residuals `r = observed - projected`.
pub(crate) fn build(
    frames: &[DetectedFrame],
    model: &CameraModel,
    poses: &[Pose],
    mode: JacobianMode,
) -> Result<Blocks> {
    let mut b = Blocks {
        u: Matrix9::zeros(),
        g_camera: Vector9::zeros(),
        v: Vec::with_capacity(frames.len()),
        w: Vec::with_capacity(frames.len()),
        g_pose: Vec::with_capacity(frames.len()),
        sse: 0.0,
        n_obs: 0,
    };
    for (frame, pose) in frames.iter().zip(poses) {
        let pf = PoseFrame::new(pose);
        let mut v = Matrix6::zeros();
        let mut w = Matrix9x6::zeros();
        let mut gp = Vector6::zeros();
        for o in &frame.observations {
            let q = frame.board.corner_point(o.id).expect("validated id");
            let d = match mode {
                JacobianMode::Analytic => project_with_derivatives(&q, &pf, model)?,
                JacobianMode::FiniteDifference => project_with_finite_differences(&q, pose, model)?,
            };
            let r = nalgebra::Vector2::new(o.u - d.pixel.0, o.v - d.pixel.1);
            let jc_t = d.d_camera.transpose();
            let jp_t = d.d_pose.transpose();
            b.u += jc_t * d.d_camera;
            b.g_camera += jc_t * r;
            v += jp_t * d.d_pose;
            w += jc_t * d.d_pose;
            gp += jp_t * r;
            b.sse += r.norm_squared();
            b.n_obs += 1;
        }
        b.v.push(v);
        b.w.push(w);
        b.g_pose.push(gp);
    }
    Ok(b)
}

/// Replaces rows and columns of fixed camera parameters by identity so they
/// drop out of the solve.
fn pin_fixed(m: &mut Matrix9, fixed: &[bool; 9]) {
    for (i, &f) in fixed.iter().enumerate() {
        if f {
            m.row_mut(i).fill(0.0);
            m.column_mut(i).fill(0.0);
            m[(i, i)] = 1.0;
        }
    }
}

/// `T^T m T` for the map `(f, ...) -> (f, f, ...)` that ties `beta` to
/// `alpha`; the `beta` row and column are left for pinning.
fn tie_matrix(m: &Matrix9) -> Matrix9 {
    let mut t = *m;
    let row = t.row(1).into_owned();
    t.row_mut(0).add_assign(&row);
    let col = t.column(1).into_owned();
    t.column_mut(0).add_assign(&col);
    t
}

fn tie_rows<const C: usize>(m: &SMatrix<f64, 9, C>) -> SMatrix<f64, 9, C> {
    let mut t = *m;
    let row = t.row(1).into_owned();
    t.row_mut(0).add_assign(&row);
    t
}

fn damp6(m: &Matrix6<f64>, lambda: f64) -> Matrix6<f64> {
    let mut d = *m;
    let floor = 1e-12 * m.diagonal().max().max(1e-300);
    for i in 0..6 {
        d[(i, i)] += lambda * m[(i, i)].max(floor);
    }
    d
}

/// Solves the damped system `(J^T J + lambda D) delta = J^T r` via the Schur
/// complement on the camera block. Returns `None` if a block is not
/// positive definite.
pub(crate) fn solve_damped(b: &Blocks, mask: &ParamMask, lambda: f64) -> Option<(Vector9, Vec<Vector6<f64>>)> {
    let tied = mask.tied_focal();
    let fixed = &mask.solver_fixed();
    let (u, g_camera, w_all) = if tied {
        (tie_matrix(&b.u), tie_rows(&b.g_camera), b.w.iter().map(tie_rows).collect())
    } else {
        (b.u, b.g_camera, b.w.clone())
    };
    let mut s = u;
    let floor = 1e-12 * s.diagonal().max().max(1e-300);
    for i in 0..9 {
        s[(i, i)] += lambda * u[(i, i)].max(floor);
    }
    let mut rhs = g_camera;
    let mut v_inv = Vec::with_capacity(b.v.len());
    let mut w_masked = Vec::with_capacity(b.w.len());
    for ((v, w), gp) in b.v.iter().zip(&w_all).zip(&b.g_pose) {
        let vi = damp6(v, lambda).cholesky()?.inverse();
        let mut wm = *w;
        for (i, &f) in fixed.iter().enumerate() {
            if f {
                wm.row_mut(i).fill(0.0);
            }
        }
        let wv = wm * vi;
        s -= wv * wm.transpose();
        rhs -= wv * gp;
        v_inv.push(vi);
        w_masked.push(wm);
    }
    pin_fixed(&mut s, fixed);
    for (i, &f) in fixed.iter().enumerate() {
        if f {
            rhs[i] = 0.0;
        }
    }
    let mut dc = s.cholesky()?.solve(&rhs);
    if !dc.iter().all(|v| v.is_finite()) {
        return None;
    }
    let dp = v_inv
        .iter()
        .zip(&w_masked)
        .zip(&b.g_pose)
        .map(|((vi, wm), gp)| vi * (gp - wm.transpose() * dc))
        .collect();
    if tied {
        dc[1] = dc[0];
    }
    Some((dc, dp))
}

/// Undamped Schur complement of the camera block, with fixed parameters
/// pinned to identity.
pub(crate) fn camera_information(b: &Blocks, mask: &ParamMask) -> Result<Matrix9> {
    let mut s = b.u;
    for (v, w) in b.v.iter().zip(&b.w) {
        let vi = v
            .cholesky()
            .ok_or_else(|| Error::Unobservable("a frame pose is unconstrained".into()))?
            .inverse();
        s -= w * vi * w.transpose();
    }
    if mask.tied_focal() {
        s = tie_matrix(&s);
    }
    pin_fixed(&mut s, &mask.solver_fixed());
    Ok(s)
}
