//! Analytic derivatives of the pixel projection with respect to the nine
//! camera parameters and the six pose parameters.

use nalgebra::{SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{euler_rotation_derivatives, CameraModel, Distortion, Pose};

pub type CameraJacobian = SMatrix<f64, 2, 9>;
pub type PoseJacobian = SMatrix<f64, 2, 6>;

/// How refinement obtains the reprojection Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    #[default]
    Analytic,
    /// Central finite differences; for cross-checking only.
    FiniteDifference,
}

/// Pixel of `point` plus its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionDerivatives {
    pub pixel: (f64, f64),
    pub d_camera: CameraJacobian,
    pub d_pose: PoseJacobian,
}

/// Precomputed rotation and its angle derivatives for one pose.
#[derive(Debug, Clone, Copy)]
pub struct PoseFrame {
    pub rotation: nalgebra::Matrix3<f64>,
    pub d_rotation: [nalgebra::Matrix3<f64>; 3],
    pub translation: Vector3<f64>,
}

impl PoseFrame {
    pub fn new(pose: &Pose) -> Self {
        Self {
            rotation: pose.rotation(),
            d_rotation: euler_rotation_derivatives(pose.xr, pose.yr, pose.zr),
            translation: pose.translation(),
        }
    }
}

pub fn project_with_derivatives(
    point: &Vector3<f64>,
    frame: &PoseFrame,
    model: &CameraModel,
) -> Result<ProjectionDerivatives> {
    let pc = frame.rotation * point + frame.translation;
    if pc.z <= 0.0 {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    let iz = 1.0 / pc.z;
    let (x, y) = (pc.x * iz, pc.y * iz);
    let d = &model.distortion;
    let k = &model.intrinsics;
    let (xd, yd) = d.distort(x, y);
    let pixel = k.to_pixel(xd, yd);

    let mut d_camera = CameraJacobian::zeros();
    d_camera[(0, 0)] = xd;
    d_camera[(0, 2)] = 1.0;
    d_camera[(1, 1)] = yd;
    d_camera[(1, 3)] = 1.0;
    let dc = Distortion::coefficient_jacobian(x, y);
    for c in 0..5 {
        d_camera[(0, 4 + c)] = k.alpha * dc[0][c] + k.gamma * dc[1][c];
        d_camera[(1, 4 + c)] = k.beta * dc[1][c];
    }

    // d pixel / d (x, y) = A * d distort / d (x, y), A = [[alpha, gamma], [0, beta]].
    let jd = d.point_jacobian(x, y);
    let dpix = [
        [
            k.alpha * jd[0][0] + k.gamma * jd[1][0],
            k.alpha * jd[0][1] + k.gamma * jd[1][1],
        ],
        [k.beta * jd[1][0], k.beta * jd[1][1]],
    ];
    // d (x, y) / d pc.
    let dn = [[iz, 0.0, -x * iz], [0.0, iz, -y * iz]];
    let mut dpix_dpc = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            dpix_dpc[r][c] = dpix[r][0] * dn[0][c] + dpix[r][1] * dn[1][c];
        }
    }
    let mut d_pose = PoseJacobian::zeros();
    for a in 0..3 {
        let dp = frame.d_rotation[a] * point;
        for r in 0..2 {
            d_pose[(r, a)] = dpix_dpc[r][0] * dp.x + dpix_dpc[r][1] * dp.y + dpix_dpc[r][2] * dp.z;
            d_pose[(r, 3 + a)] = dpix_dpc[r][a];
        }
    }
    Ok(ProjectionDerivatives {
        pixel,
        d_camera,
        d_pose,
    })
}

/// Same derivatives by central differences on the full projection.
pub fn project_with_finite_differences(
    point: &Vector3<f64>,
    pose: &Pose,
    model: &CameraModel,
) -> Result<ProjectionDerivatives> {
    let pixel = model.project(point, pose)?;
    let params = model.params();
    let mut d_camera = CameraJacobian::zeros();
    for j in 0..9 {
        let h = 1e-6 * params[j].abs().max(1e-2);
        let (mut p, mut m) = (params, params);
        p[j] += h;
        m[j] -= h;
        let up = model.with_params(&p).project(point, pose)?;
        let um = model.with_params(&m).project(point, pose)?;
        d_camera[(0, j)] = (up.0 - um.0) / (2.0 * h);
        d_camera[(1, j)] = (up.1 - um.1) / (2.0 * h);
    }
    let pa = pose.to_array();
    let mut d_pose = PoseJacobian::zeros();
    for j in 0..6 {
        let h = if j < 3 { 1e-6 } else { 1e-6 * pa[j].abs().max(1.0) };
        let (mut p, mut m) = (pa, pa);
        p[j] += h;
        m[j] -= h;
        let up = model.project(point, &Pose::from_array(p))?;
        let um = model.project(point, &Pose::from_array(m))?;
        d_pose[(0, j)] = (up.0 - um.0) / (2.0 * h);
        d_pose[(1, j)] = (up.1 - um.1) / (2.0 * h);
    }
    Ok(ProjectionDerivatives {
        pixel,
        d_camera,
        d_pose,
    })
}
