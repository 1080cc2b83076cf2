//! Closed-form intrinsics from plane homographies via the image of the
//! absolute conic `B = K^-T K^-1`.

use nalgebra::{DMatrix, Matrix3};

use super::homography::Homography;
use crate::error::{Error, Result};
use crate::geometry::Intrinsics;

/// Pixel normalization `N` so that the conditioned camera `N K` has entries of
/// order one. Centered on the mean image of the board origins.
fn conditioning(hs: &[Homography]) -> (f64, f64, f64) {
    let n = hs.len() as f64;
    let (cx, cy) = hs.iter().fold((0.0, 0.0), |(a, b), h| {
        let m = h.matrix();
        (a + m[(0, 2)] / m[(2, 2)], b + m[(1, 2)] / m[(2, 2)])
    });
    let (cx, cy) = (cx / n, cy / n);
    let s = cx.hypot(cy).max(1.0);
    (cx, cy, s)
}

fn conditioned(hs: &[Homography], cx: f64, cy: f64, s: f64) -> Vec<Matrix3<f64>> {
    let n = Matrix3::new(1.0 / s, 0.0, -cx / s, 0.0, 1.0 / s, -cy / s, 0.0, 0.0, 1.0);
    hs.iter()
        .map(|h| {
            let m = n * h.matrix();
            m / m.norm()
        })
        .collect()
}

/// `v_ij` row built from columns `i` and `j` of `h`.
fn v_row(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 6] {
    let (a, b) = (h.column(i), h.column(j));
    [
        a[0] * b[0],
        a[0] * b[1] + a[1] * b[0],
        a[1] * b[1],
        a[2] * b[0] + a[0] * b[2],
        a[2] * b[1] + a[1] * b[2],
        a[2] * b[2],
    ]
}

/// Smallest right singular vector of `m` after checking that the null space
/// is one-dimensional.
fn null_vector(m: DMatrix<f64>, what: &str) -> Result<Vec<f64>> {
    let cols = m.ncols();
    let m = if m.nrows() < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(&m);
        padded
    } else {
        m
    };
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("svd failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smax = svd.singular_values[*order.last().unwrap()];
    if !(smax > 0.0) || svd.singular_values[order[1]] <= 1e-9 * smax {
        return Err(Error::Degenerate(format!("{what}: constraint system has a multi-dimensional null space")));
    }
    Ok(v_t.row(order[0]).iter().copied().collect())
}

/// Recovers the camera matrix from `b = [B11, B12, B22, B13, B23, B33]`.
fn intrinsics_from_b(b: &[f64]) -> Result<Intrinsics> {
    let sign = if b[0] < 0.0 { -1.0 } else { 1.0 };
    let (b11, b12, b22, b13, b23, b33) = (
        sign * b[0],
        sign * b[1],
        sign * b[2],
        sign * b[3],
        sign * b[4],
        sign * b[5],
    );
    let den = b11 * b22 - b12 * b12;
    if !(b11 > 0.0 && den > 0.0) {
        return Err(Error::Degenerate("conic matrix is not positive definite".into()));
    }
    let v0 = (b12 * b13 - b11 * b23) / den;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    if !(lambda / b11 > 0.0) {
        return Err(Error::Degenerate("negative focal scale".into()));
    }
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / den).sqrt();
    let gamma = -b12 * alpha * alpha * beta / lambda;
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;
    let k = Intrinsics {
        alpha,
        beta,
        gamma,
        u0,
        v0,
    };
    if !k.is_valid() {
        return Err(Error::Degenerate("non-finite intrinsics".into()));
    }
    Ok(k)
}

fn solve(hs: &[Homography], zero_skew: bool) -> Result<Intrinsics> {
    let (cx, cy, s) = conditioning(hs);
    let hc = conditioned(hs, cx, cy, s);
    let rows = 2 * hc.len() + usize::from(zero_skew);
    let mut v = DMatrix::<f64>::zeros(rows, 6);
    for (k, h) in hc.iter().enumerate() {
        let v12 = v_row(h, 0, 1);
        let v11 = v_row(h, 0, 0);
        let v22 = v_row(h, 1, 1);
        for c in 0..6 {
            v[(2 * k, c)] = v12[c];
            v[(2 * k + 1, c)] = v11[c] - v22[c];
        }
    }
    if zero_skew {
        let scale = v.norm() / (rows as f64).sqrt();
        v[(rows - 1, 1)] = scale.max(1e-12);
    }
    let b = null_vector(v, "closed-form intrinsics")?;
    let kc = intrinsics_from_b(&b)?;
    Ok(Intrinsics {
        alpha: kc.alpha * s,
        beta: kc.beta * s,
        gamma: kc.gamma * s,
        u0: kc.u0 * s + cx,
        v0: kc.v0 * s + cy,
    })
}

/// Closed-form intrinsics (with skew) from at least three homographies.
pub fn closed_form_intrinsics(hs: &[Homography]) -> Result<Intrinsics> {
    if hs.len() < 3 {
        return Err(Error::InsufficientFrames { needed: 3, got: hs.len() });
    }
    solve(hs, false)
}

/// Closed-form intrinsics with skew constrained to zero; two homographies
/// suffice.
pub fn closed_form_intrinsics_zero_skew(hs: &[Homography]) -> Result<Intrinsics> {
    if hs.len() < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: hs.len() });
    }
    let mut k = solve(hs, true)?;
    k.gamma = 0.0;
    Ok(k)
}

/// Common focal length `alpha = beta` with the principal point pinned at
/// `center`, zero skew and no distortion. Each homography contributes two
/// linear equations in `1/f^2`, solved in least squares.
pub fn restricted_intrinsics(hs: &[Homography], center: (f64, f64)) -> Result<Intrinsics> {
    if hs.is_empty() {
        return Err(Error::InsufficientFrames { needed: 1, got: 0 });
    }
    let (cx, cy) = center;
    let s = cx.hypot(cy).max(1.0);
    let (mut cc, mut cr, mut rr) = (0.0, 0.0, 0.0);
    for h in &conditioned(hs, cx, cy, s) {
        let (a, b) = (h.column(0), h.column(1));
        let eqs = [
            (a[0] * b[0] + a[1] * b[1], -a[2] * b[2]),
            (a[0] * a[0] - b[0] * b[0] + a[1] * a[1] - b[1] * b[1], b[2] * b[2] - a[2] * a[2]),
        ];
        for (c, r) in eqs {
            cc += c * c;
            cr += c * r;
            rr += r * r;
        }
    }
    if !(cc > 0.0 && rr.sqrt() > 1e-6 * cc.sqrt()) {
        return Err(Error::Degenerate("single-view focal length is unobservable (fronto-parallel board)".into()));
    }
    let inv_f2 = cr / cc;
    if !(inv_f2 > 0.0 && inv_f2.is_finite()) {
        return Err(Error::Degenerate("single-view focal solve gave non-positive scale".into()));
    }
    let f = s / inv_f2.sqrt();
    Ok(Intrinsics::new(f, f, cx, cy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::estimate_homography;
    use crate::geometry::{BoardSpec, CameraModel, CameraTruth, Distortion, Pose};
    use crate::test_support::{frame_at, spread_poses};

    fn pinhole() -> CameraModel {
        CameraModel::new(CameraTruth::default().intrinsics, Distortion::ZERO)
    }

    fn homographies(poses: &[Pose]) -> Vec<Homography> {
        poses
            .iter()
            .map(|p| estimate_homography(&frame_at(&BoardSpec::default(), p, &pinhole())).unwrap())
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn recovers_reference_intrinsics() {
        let k = closed_form_intrinsics(&homographies(&spread_poses()[..5])).unwrap();
        let t = CameraTruth::default().intrinsics;
        assert!(rel(k.alpha, t.alpha) < 1e-3, "{k:?}");
        assert!(rel(k.beta, t.beta) < 1e-3);
        assert!(rel(k.u0, t.u0) < 1e-3);
        assert!(rel(k.v0, t.v0) < 1e-3);
        assert!(k.gamma.abs() < 1e-6 * k.alpha, "gamma {}", k.gamma);
    }

    #[test]
    fn parallel_boards_are_degenerate() {
        let poses = [
            Pose::from_degrees(0.0, 0.0, 0.0, 0.0, 0.0, 800.0),
            Pose::from_degrees(0.0, 0.0, 30.0, 40.0, 20.0, 900.0),
            Pose::from_degrees(0.0, 0.0, -50.0, -30.0, 10.0, 700.0),
        ];
        assert!(matches!(closed_form_intrinsics(&homographies(&poses)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn needs_three_views_with_free_skew() {
        let hs = homographies(&spread_poses()[..2]);
        assert_eq!(
            closed_form_intrinsics(&hs),
            Err(Error::InsufficientFrames { needed: 3, got: 2 })
        );
        let k = closed_form_intrinsics_zero_skew(&hs).unwrap();
        assert!(rel(k.alpha, 1068.0) < 1e-3, "{k:?}");
        assert_eq!(k.gamma, 0.0);
    }

    #[test]
    fn restricted_solve_from_tilted_view() {
        let pose = Pose::from_degrees(45.0, 0.0, 0.0, 0.0, 0.0, 1000.0);
        let k = restricted_intrinsics(&homographies(&[pose]), (640.0, 360.0)).unwrap();
        assert_eq!((k.u0, k.v0, k.gamma), (640.0, 360.0, 0.0));
        // One axis tilt constrains a single focal length.
        assert!(rel(k.alpha, 1070.0) < 0.01, "{k:?}");
        assert_eq!(k.alpha, k.beta);
    }

    #[test]
    fn restricted_solve_rejects_frontal_view() {
        let pose = Pose::from_degrees(0.0, 0.0, 0.0, 0.0, 0.0, 1000.0);
        let hs = homographies(&[pose]);
        assert!(matches!(restricted_intrinsics(&hs, (635.0, 355.0)), Err(Error::Degenerate(_))));
    }
}
