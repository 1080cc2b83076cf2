use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::euler_to_rotation;

/// Board pose relative to the camera: Euler angles `xr, yr, zr` (radians) and
/// translation `xt, yt, zt` (millimeters), mapping board coordinates into the
/// camera frame. Serializes through [`PoseDegrees`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseDegrees", from = "PoseDegrees")]
pub struct Pose {
    pub xr: f64,
    pub yr: f64,
    pub zr: f64,
    pub xt: f64,
    pub yt: f64,
    pub zt: f64,
}

/// Rotation bound for poses used as search solutions.
pub const MAX_ROTATION_DEG: f64 = 70.0;

impl Pose {
    pub fn new(xr: f64, yr: f64, zr: f64, xt: f64, yt: f64, zt: f64) -> Self {
        Self { xr, yr, zr, xt, yt, zt }
    }

    /// Builds a pose from angles in degrees and translation in millimeters.
    pub fn from_degrees(xr: f64, yr: f64, zr: f64, xt: f64, yt: f64, zt: f64) -> Self {
        Self::new(xr.to_radians(), yr.to_radians(), zr.to_radians(), xt, yt, zt)
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.xr, self.yr, self.zr, self.xt, self.yt, self.zt]
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        euler_to_rotation(self.xr, self.yr, self.zr)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.xt, self.yt, self.zt)
    }

    pub fn to_degrees(&self) -> PoseDegrees {
        PoseDegrees {
            xr: self.xr.to_degrees(),
            yr: self.yr.to_degrees(),
            zr: self.zr.to_degrees(),
            xt: self.xt,
            yt: self.yt,
            zt: self.zt,
        }
    }

    /// Clamps the three angles into `[-limit, limit]` degrees.
    pub fn clamp_rotations(&self, limit_deg: f64) -> Pose {
        let l = limit_deg.to_radians();
        Pose {
            xr: self.xr.clamp(-l, l),
            yr: self.yr.clamp(-l, l),
            zr: self.zr.clamp(-l, l),
            ..*self
        }
    }

    pub fn rotations_within(&self, limit_deg: f64) -> bool {
        let l = limit_deg.to_radians() + 1e-12;
        [self.xr, self.yr, self.zr].iter().all(|a| a.abs() <= l)
    }
}

/// External representation of a [`Pose`]: degrees and millimeters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDegrees {
    pub xr: f64,
    pub yr: f64,
    pub zr: f64,
    pub xt: f64,
    pub yt: f64,
    pub zt: f64,
}

impl From<Pose> for PoseDegrees {
    fn from(p: Pose) -> Self {
        p.to_degrees()
    }
}

impl From<PoseDegrees> for Pose {
    fn from(p: PoseDegrees) -> Self {
        Pose::from_degrees(p.xr, p.yr, p.zr, p.xt, p.yt, p.zt)
    }
}

/// Splits a pose into four intermediate poses: translation only, then the X
/// rotation added, then Y, then Z. The last step is the input itself.
pub fn decompose_pose(p: &Pose) -> [Pose; 4] {
    let translated = Pose {
        xr: 0.0,
        yr: 0.0,
        zr: 0.0,
        ..*p
    };
    let x_rotated = Pose { xr: p.xr, ..translated };
    let y_rotated = Pose { yr: p.yr, ..x_rotated };
    [translated, x_rotated, y_rotated, *p]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translation_only_pose_gives_identical_steps() {
        let p = Pose::new(0.0, 0.0, 0.0, 10.0, -5.0, 900.0);
        let steps = decompose_pose(&p);
        assert!(steps.iter().all(|s| *s == p));
    }

    #[test]
    fn steps_add_one_rotation_each() {
        let p = Pose::from_degrees(-30.0, 39.0, 22.0, 120.0, 0.0, 1000.0);
        let [p1, p2, p3, p4] = decompose_pose(&p);
        assert_eq!(p1.to_array(), [0.0, 0.0, 0.0, 120.0, 0.0, 1000.0]);
        assert_eq!(p2.to_array()[..3], [p.xr, 0.0, 0.0]);
        assert_eq!(p3.to_array()[..3], [p.xr, p.yr, 0.0]);
        assert_eq!(p4.to_array(), p.to_array());
    }

    #[test]
    fn degrees_round_trip() {
        let p = Pose::from_degrees(45.0, -10.0, 3.0, 1.0, 2.0, 3.0);
        let d = p.to_degrees();
        assert!((d.xr - 45.0).abs() < 1e-12 && (d.yr + 10.0).abs() < 1e-12);
        assert_eq!(Pose::from(d).zt, 3.0);
    }

    #[test]
    fn clamping() {
        let p = Pose::from_degrees(80.0, -90.0, 10.0, 0.0, 0.0, 1.0).clamp_rotations(70.0);
        assert!(p.rotations_within(70.0));
        assert!((p.xr.to_degrees() - 70.0).abs() < 1e-12);
        assert!((p.yr.to_degrees() + 70.0).abs() < 1e-12);
    }
}
