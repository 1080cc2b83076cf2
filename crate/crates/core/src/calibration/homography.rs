use nalgebra::{DMatrix, Matrix3, Vector3};

use super::frame::{DetectedFrame, MIN_CORNERS};
use crate::error::{Error, Result};

/// Plane-to-image projective map, defined up to scale. Stored with
/// `H[2][2] = 1` whenever that entry is not (numerically) zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.0 * Vector3::new(x, y, 1.0);
        (p.x / p.z, p.y / p.z)
    }

    fn normalized(m: Matrix3<f64>) -> Self {
        let s = m[(2, 2)];
        if s.abs() > 1e-12 * m.norm() {
            Homography(m / s)
        } else {
            Homography(m / m.norm())
        }
    }
}

/// Similarity moving the centroid to the origin with mean distance `sqrt(2)`.
fn hartley(pts: &[(f64, f64)]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (cx, cy) = (cx / n, cy / n);
    let mean = pts.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let s = if mean > 1e-12 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Normalized DLT for `dst ~ H * src`.
pub fn homography_from_points(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::InvalidInput("point lists differ in length".into()));
    }
    if src.len() < MIN_CORNERS {
        return Err(Error::TooSparse {
            needed: MIN_CORNERS,
            got: src.len(),
        });
    }
    let ts = hartley(src);
    let td = hartley(dst);
    let n = src.len();
    let mut a = DMatrix::<f64>::zeros((2 * n).max(9), 9);
    for (k, (s, d)) in src.iter().zip(dst).enumerate() {
        let p = ts * Vector3::new(s.0, s.1, 1.0);
        let q = td * Vector3::new(d.0, d.1, 1.0);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite correspondences".into()));
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("svd failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smax = svd.singular_values[order[order.len() - 1]];
    if svd.singular_values[order[1]] <= 1e-10 * smax {
        return Err(Error::Degenerate("correspondences do not determine a homography (collinear points?)".into()));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or_else(|| Error::Degenerate("normalization".into()))?;
    Ok(Homography::normalized(td_inv * hn * ts))
}

/// Homography mapping board-plane coordinates (mm) of the frame's corners to
/// their observed pixels.
pub fn estimate_homography(frame: &DetectedFrame) -> Result<Homography> {
    let mut src = Vec::with_capacity(frame.len());
    let mut dst = Vec::with_capacity(frame.len());
    for o in &frame.observations {
        let q = frame
            .board
            .corner_point(o.id)
            .ok_or_else(|| Error::InvalidInput(format!("corner id {} out of range", o.id)))?;
        src.push((q.x, q.y));
        dst.push((o.u, o.v));
    }
    homography_from_points(&src, &dst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_identity() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let h = homography_from_points(&sq, &sq).unwrap();
        assert!((h.0 - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let line = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        let img = [(5.0, 1.0), (6.0, 2.0), (7.0, 3.0), (8.0, 4.0)];
        assert!(matches!(homography_from_points(&line, &img), Err(Error::Degenerate(_))));
    }

    #[test]
    fn recovers_known_projective_map() {
        let truth = Matrix3::new(2.0, 0.3, 10.0, -0.2, 1.5, 4.0, 0.001, 0.002, 1.0);
        let h = Homography(truth);
        let src: Vec<_> = (0..12).map(|i| ((i % 4) as f64 * 10.0, (i / 4) as f64 * 7.0 + 1.0)).collect();
        let dst: Vec<_> = src.iter().map(|p| h.apply(p.0, p.1)).collect();
        let est = homography_from_points(&src, &dst).unwrap();
        assert!((est.0 - truth).abs().max() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let p = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)];
        assert!(matches!(homography_from_points(&p, &p), Err(Error::TooSparse { .. })));
    }
}
