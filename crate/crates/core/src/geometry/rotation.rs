//! Fixed-axis Euler rotations, `R = Rz(zr) * Ry(yr) * Rx(xr)`.
//!
//! With this ordering, zeroing the trailing angles of a pose leaves the
//! rotations that were applied first, so a pose can be reached one axis at a
//! time: X, then Y, then Z.

use nalgebra::Matrix3;

/// Threshold on `|R[2][0]|` above which the decomposition is treated as
/// gimbal-locked.
pub const GIMBAL_EPS: f64 = 1e-9;

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Builds `Rz(zr) * Ry(yr) * Rx(xr)` from angles in radians.
pub fn euler_to_rotation(xr: f64, yr: f64, zr: f64) -> Matrix3<f64> {
    rot_z(zr) * rot_y(yr) * rot_x(xr)
}

/// Partial derivatives of [`euler_to_rotation`] with respect to `xr`, `yr`, `zr`.
pub fn euler_rotation_derivatives(xr: f64, yr: f64, zr: f64) -> [Matrix3<f64>; 3] {
    let (rx, ry, rz) = (rot_x(xr), rot_y(yr), rot_z(zr));
    let (sx, cx) = xr.sin_cos();
    let (sy, cy) = yr.sin_cos();
    let (sz, cz) = zr.sin_cos();
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sx, -cx, 0.0, cx, -sx);
    let dry = Matrix3::new(-sy, 0.0, cy, 0.0, 0.0, 0.0, -cy, 0.0, -sy);
    let drz = Matrix3::new(-sz, -cz, 0.0, cz, -sz, 0.0, 0.0, 0.0, 0.0);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}

/// Result of [`rotation_to_euler`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub xr: f64,
    pub yr: f64,
    pub zr: f64,
    /// `|R[2][0]|` reached 1 within [`GIMBAL_EPS`]; `zr` was set to 0 and the
    /// remaining rotation folded into `xr`.
    pub gimbal_lock: bool,
}

/// Inverse of [`euler_to_rotation`]. `yr` lands in `[-pi/2, pi/2]`.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> EulerAngles {
    let r31 = r[(2, 0)].clamp(-1.0, 1.0);
    if r31.abs() >= 1.0 - GIMBAL_EPS {
        // sin(yr) = -r31 = +-1; with zr = 0, R[0][1] = sy*sx and R[0][2] = sy*cx.
        let sy = -r31.signum();
        let xr = (sy * r[(0, 1)]).atan2(sy * r[(0, 2)]);
        return EulerAngles {
            xr,
            yr: sy * std::f64::consts::FRAC_PI_2,
            zr: 0.0,
            gimbal_lock: true,
        };
    }
    EulerAngles {
        xr: r[(2, 1)].atan2(r[(2, 2)]),
        yr: (-r31).asin(),
        zr: r[(1, 0)].atan2(r[(0, 0)]),
        gimbal_lock: false,
    }
}
