//! Brown-Conrady radial + tangential lens distortion on normalized image
//! coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-coefficient distortion model: radial `k1, k2, k3`, tangential `p1, p2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Convergence controls for [`Distortion::undistort`].
#[derive(Debug, Clone, Copy)]
pub struct UndistortOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for UndistortOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
        }
    }
}

impl Distortion {
    pub const ZERO: Distortion = Distortion {
        k1: 0.0,
        k2: 0.0,
        k3: 0.0,
        p1: 0.0,
        p2: 0.0,
    };

    pub fn new(k1: f64, k2: f64, k3: f64, p1: f64, p2: f64) -> Self {
        Self { k1, k2, k3, p1, p2 }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.k1, self.k2, self.k3, self.p1, self.p2]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    /// Applies the distortion to a normalized point `(x, y)`.
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xy = x * y;
        (
            x * radial + 2.0 * self.p1 * xy + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * xy,
        )
    }

    /// Jacobian of [`distort`](Self::distort) with respect to `(x, y)`, row-major
    /// `[[dxd/dx, dxd/dy], [dyd/dx, dyd/dy]]`.
    pub fn point_jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let dradial_dr2 = self.k1 + r2 * (2.0 * self.k2 + 3.0 * r2 * self.k3);
        let drx = 2.0 * x * dradial_dr2;
        let dry = 2.0 * y * dradial_dr2;
        [
            [
                radial + x * drx + 2.0 * self.p1 * y + 6.0 * self.p2 * x,
                x * dry + 2.0 * self.p1 * x + 2.0 * self.p2 * y,
            ],
            [
                y * drx + 2.0 * self.p1 * x + 2.0 * self.p2 * y,
                radial + y * dry + 6.0 * self.p1 * y + 2.0 * self.p2 * x,
            ],
        ]
    }

    /// Derivatives of the distorted point with respect to `(k1, k2, k3, p1, p2)`.
    pub fn coefficient_jacobian(x: f64, y: f64) -> [[f64; 5]; 2] {
        let r2 = x * x + y * y;
        let r4 = r2 * r2;
        let r6 = r4 * r2;
        let xy2 = 2.0 * x * y;
        [
            [x * r2, x * r4, x * r6, xy2, r2 + 2.0 * x * x],
            [y * r2, y * r4, y * r6, r2 + 2.0 * y * y, xy2],
        ]
    }

    /// True where the distortion map is locally orientation-preserving
    /// (positive Jacobian determinant). Outside this region the model folds
    /// over and points cannot be undistorted.
    pub fn locally_invertible(&self, x: f64, y: f64) -> bool {
        let j = self.point_jacobian(x, y);
        j[0][0] * j[1][1] - j[0][1] * j[1][0] > 0.0
    }

    /// Numerical inverse of [`distort`](Self::distort) by fixed-point iteration
    /// `x <- x' - (distort(x) - x)`.
    pub fn undistort(&self, xd: f64, yd: f64) -> Result<(f64, f64)> {
        self.undistort_with(xd, yd, UndistortOptions::default())
    }

    pub fn undistort_with(&self, xd: f64, yd: f64, opts: UndistortOptions) -> Result<(f64, f64)> {
        let (mut x, mut y) = (xd, yd);
        let mut residual = f64::INFINITY;
        for _ in 0..=opts.max_iterations {
            let (fx, fy) = self.distort(x, y);
            let (ex, ey) = (xd - fx, yd - fy);
            residual = ex.hypot(ey);
            if !residual.is_finite() {
                break;
            }
            if residual <= opts.tolerance {
                return Ok((x, y));
            }
            x += ex;
            y += ey;
        }
        Err(Error::UndistortNonConvergence {
            iterations: opts.max_iterations,
            residual,
        })
    }
}
