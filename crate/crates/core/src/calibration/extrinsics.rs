use nalgebra::Matrix3;

use super::homography::Homography;
use crate::error::{Error, Result};
use crate::geometry::{rotation_to_euler, Intrinsics, Pose};

/// Nearest rotation matrix in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * v_t;
    }
    r
}

/// Recovers the board pose from `H = K [r1 r2 t]`. The result is independent
/// of the scale and sign of `H`; the sign is chosen so the board lies in
/// front of the camera.
pub fn extrinsics_from_homography(h: &Homography, intr: &Intrinsics) -> Result<Pose> {
    if !intr.is_valid() {
        return Err(Error::InvalidInput("invalid intrinsics".into()));
    }
    let kinv = intr.inverse_matrix();
    let m = h.matrix();
    let a1 = kinv * m.column(0);
    let a2 = kinv * m.column(1);
    let a3 = kinv * m.column(2);
    let n1 = a1.norm();
    if !(n1 > 0.0) || !a3.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("homography has a null first column".into()));
    }
    let mut lambda = 1.0 / n1;
    if a3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = a1 * lambda;
    let r2 = a2 * lambda;
    let t = a3 * lambda;
    let r3 = r1.cross(&r2);
    let r = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r3]));
    let e = rotation_to_euler(&r);
    Ok(Pose::new(e.xr, e.yr, e.zr, t.x, t.y, t.z))
}
