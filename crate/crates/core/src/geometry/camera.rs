use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::distortion::Distortion;
use super::pose::Pose;
use crate::error::{Error, Result};

/// Pinhole intrinsics: focal scales, skew and principal point, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    pub u0: f64,
    pub v0: f64,
}

impl Intrinsics {
    pub fn new(alpha: f64, beta: f64, u0: f64, v0: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma: 0.0,
            u0,
            v0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.alpha > 0.0
            && self.beta > 0.0
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.gamma.is_finite()
            && self.u0.is_finite()
            && self.v0.is_finite()
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.alpha, self.gamma, self.u0, 0.0, self.beta, self.v0, 0.0, 0.0, 1.0)
    }

    /// Closed-form inverse of the upper-triangular camera matrix.
    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let (a, b, g, u0, v0) = (self.alpha, self.beta, self.gamma, self.u0, self.v0);
        Matrix3::new(
            1.0 / a,
            -g / (a * b),
            (g * v0 - u0 * b) / (a * b),
            0.0,
            1.0 / b,
            -v0 / b,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Maps a normalized (distorted) point to pixels.
    pub fn to_pixel(&self, xd: f64, yd: f64) -> (f64, f64) {
        (self.alpha * xd + self.gamma * yd + self.u0, self.beta * yd + self.v0)
    }

    /// Maps a pixel to normalized coordinates.
    pub fn to_normalized(&self, u: f64, v: f64) -> (f64, f64) {
        let y = (v - self.v0) / self.beta;
        ((u - self.u0 - self.gamma * y) / self.alpha, y)
    }
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn contains(&self, u: f64, v: f64, margin: f64) -> bool {
        u >= margin && v >= margin && u <= self.width as f64 - margin && v <= self.height as f64 - margin
    }
}

/// One of the nine calibrated camera parameters, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Alpha,
    Beta,
    U0,
    V0,
    K1,
    K2,
    K3,
    P1,
    P2,
}

/// Which pose-generation strategy constrains a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Focal scales and principal point.
    Projection,
    /// Distortion coefficients.
    Distortion,
}

impl Param {
    pub const ALL: [Param; 9] = [
        Param::Alpha,
        Param::Beta,
        Param::U0,
        Param::V0,
        Param::K1,
        Param::K2,
        Param::K3,
        Param::P1,
        Param::P2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Param> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        ["alpha", "beta", "u0", "v0", "k1", "k2", "k3", "p1", "p2"][self.index()]
    }

    pub fn group(self) -> ParamGroup {
        if self.index() < 4 {
            ParamGroup::Projection
        } else {
            ParamGroup::Distortion
        }
    }
}

/// Intrinsics plus distortion, with a nine-parameter vector view in the order
/// `(alpha, beta, u0, v0, k1, k2, k3, p1, p2)`. Skew is carried but is not
/// one of the nine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, distortion: Distortion) -> Self {
        Self { intrinsics, distortion }
    }

    pub fn params(&self) -> [f64; 9] {
        let i = &self.intrinsics;
        let d = &self.distortion;
        [i.alpha, i.beta, i.u0, i.v0, d.k1, d.k2, d.k3, d.p1, d.p2]
    }

    pub fn with_params(&self, p: &[f64; 9]) -> Self {
        Self {
            intrinsics: Intrinsics {
                alpha: p[0],
                beta: p[1],
                gamma: self.intrinsics.gamma,
                u0: p[2],
                v0: p[3],
            },
            distortion: Distortion::new(p[4], p[5], p[6], p[7], p[8]),
        }
    }

    pub fn project(&self, point: &Vector3<f64>, pose: &Pose) -> Result<(f64, f64)> {
        project(point, pose, &self.intrinsics, &self.distortion)
    }
}

/// Ground-truth camera for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraTruth {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    pub image: ImageSize,
}

impl CameraTruth {
    pub fn model(&self) -> CameraModel {
        CameraModel::new(self.intrinsics, self.distortion)
    }
}

impl Default for CameraTruth {
    /// The reference simulated camera: 1280x720 with strong tangential distortion.
    fn default() -> Self {
        Self {
            intrinsics: Intrinsics::new(1068.0, 1073.0, 635.0, 355.0),
            distortion: Distortion::new(-0.0031, -0.2059, -0.0028, -0.0038, 0.2478),
            image: ImageSize::new(1280, 720),
        }
    }
}

/// Projects a board-frame point (mm) into pixels: rigid transform, perspective
/// division, distortion, then the camera matrix.
pub fn project(point: &Vector3<f64>, pose: &Pose, intr: &Intrinsics, dist: &Distortion) -> Result<(f64, f64)> {
    let pc = pose.rotation() * point + pose.translation();
    if pc.z <= 0.0 {
        return Err(Error::BehindCamera { depth: pc.z });
    }
    let (xd, yd) = dist.distort(pc.x / pc.z, pc.y / pc.z);
    Ok(intr.to_pixel(xd, yd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    fn truth() -> CameraTruth {
        CameraTruth::default()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let t = truth();
        let pose = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 1000.0);
        let (u, v) = project(&Vector3::zeros(), &pose, &t.intrinsics, &Distortion::ZERO).unwrap();
        assert_eq!((u, v), (635.0, 355.0));
    }

    #[test]
    fn hand_evaluated_offset_point() {
        let t = truth();
        let pose = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, 1000.0);
        let (u, v) = project(&Vector3::new(28.0, 0.0, 0.0), &pose, &t.intrinsics, &Distortion::ZERO).unwrap();
        assert!((u - 664.904).abs() < 1e-9);
        assert!((v - 355.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_rejected() {
        let t = truth();
        let pose = Pose::new(0.0, 0.0, 0.0, 0.0, 0.0, -5.0);
        let err = project(&Vector3::new(1.0, 2.0, 0.0), &pose, &t.intrinsics, &t.distortion).unwrap_err();
        assert!(matches!(err, Error::BehindCamera { .. }));
    }

    #[test]
    fn chained_equals_homogeneous_form() {
        // Oracle: explicit 4x4 rigid transform, then focal/affine matrices.
        let t = truth();
        let mut intr = t.intrinsics;
        intr.gamma = 1.7;
        let pose = Pose::from_degrees(12.0, -25.0, 40.0, 35.0, -20.0, 800.0);
        let q = Vector3::new(-42.0, 28.0, 0.0);
        let mut rt = Matrix4::identity();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation());
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.translation());
        let pc = rt * Vector4::new(q.x, q.y, q.z, 1.0);
        let (xd, yd) = t.distortion.distort(pc.x / pc.z, pc.y / pc.z);
        let pix = intr.matrix() * Vector3::new(xd, yd, 1.0);
        let (u, v) = project(&q, &pose, &intr, &t.distortion).unwrap();
        assert!((u - pix.x).abs() < 1e-10 && (v - pix.y).abs() < 1e-10);
    }

    #[test]
    fn inverse_matrix_is_inverse() {
        let mut i = truth().intrinsics;
        i.gamma = 2.5;
        let e = i.matrix() * i.inverse_matrix() - Matrix3::identity();
        assert!(e.norm() < 1e-12);
        let (x, y) = i.to_normalized(700.0, 300.0);
        let (u, v) = i.to_pixel(x, y);
        assert!((u - 700.0).abs() < 1e-10 && (v - 300.0).abs() < 1e-10);
    }

    #[test]
    fn param_groups() {
        assert_eq!(Param::ALL.iter().filter(|p| p.group() == ParamGroup::Projection).count(), 4);
        assert_eq!(Param::ALL.iter().filter(|p| p.group() == ParamGroup::Distortion).count(), 5);
        assert_eq!(Param::from_index(6), Some(Param::K3));
    }
}
